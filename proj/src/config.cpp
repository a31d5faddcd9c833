#include "mwc/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <string>

#include "mwc/rng.hpp"

namespace mwc {

namespace {

double to_number(const std::string& value, const std::string& key, int line_no) {
    try {
        std::size_t pos = 0;
        double v = std::stod(value, &pos);
        while (pos < value.size() && std::isspace(static_cast<unsigned char>(value[pos])))
            ++pos;
        if (pos != value.size()) throw std::invalid_argument("trailing garbage");
        return v;
    } catch (const std::exception&) {
        throw FormatError("config line " + std::to_string(line_no) + ": key '" + key +
                          "' needs a numeric value, got '" + value + "'");
    }
}

}  // namespace

RunConfig load_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw FormatError("cannot open config file: " + file.string());

    RunConfig cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError("config line " + std::to_string(line_no) +
                              ": expected 'key = value'");
        auto trim = [](std::string s) {
            s.erase(0, s.find_first_not_of(" \t\r"));
            s.erase(s.find_last_not_of(" \t\r") + 1);
            return s;
        };
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        auto num = [&] { return to_number(value, key, line_no); };

        if (key == "grid.u_min_mm") cfg.grid.u_min = num();
        else if (key == "grid.u_max_mm") cfg.grid.u_max = num();
        else if (key == "grid.du_mm") cfg.grid.du = num();
        else if (key == "grid.tau_max_s") cfg.grid.tau_max = num();
        else if (key == "grid.dtau_s") cfg.grid.dtau = num();
        else if (key == "sim.rate_hz") cfg.sim.rate = num();
        else if (key == "sim.duration_s") cfg.sim.duration = num();
        else if (key == "sim.window_mm") cfg.sim.window = num();
        else if (key == "sim.seed") cfg.sim.seed = static_cast<std::uint64_t>(num());
        else if (key == "sim.contrast") cfg.sim.model.contrast = num();
        else if (key == "sim.wavelength_mm") cfg.sim.model.wave_number = two_pi / num();
        else if (key == "fit.mode") {
            if (value == "approx") cfg.fit_mode = FitMode::approx;
            else if (value == "exact") cfg.fit_mode = FitMode::exact;
            else
                throw FormatError("config line " + std::to_string(line_no) +
                                  ": fit.mode must be approx or exact");
        } else if (key == "fit.multi_start") cfg.fit_multi_start = static_cast<int>(num());
        else if (key == "fit.max_iterations")
            cfg.fit_max_iterations = static_cast<int>(num());
        else if (key == "fit.snap_tol") cfg.fit_snap_tol = num();
        else if (key == "fit.prune_tol") cfg.fit_prune_tol = num();
        else if (key == "fit.bound") cfg.fit_bound = static_cast<int>(num());
        else if (key == "reconstruct.phase_resolution_rad") cfg.phase_resolution = num();
        else if (key == "spectrum.threshold") cfg.spectrum_threshold = num();
        else if (key == "spectrum.coupling_rad") cfg.spectrum_coupling = num();
        else if (key == "attenuation.curve_path") cfg.attenuation_path = value;
        else if (key == "log_path") cfg.log_path = value;
        else
            throw FormatError("config line " + std::to_string(line_no) +
                              ": unknown key '" + key + "'");
    }
    return cfg;
}

RunConfig resolve_config(const std::string& flag_path) {
    if (!flag_path.empty()) return load_config(flag_path);
    if (const char* env = std::getenv("MWC_CONFIG"); env && *env)
        return load_config(env);
    return RunConfig{};
}

SimConfig scenario_preset(const std::string& name, std::uint64_t seed) {
    SimConfig cfg;
    cfg.rate = 5000.0;
    cfg.duration = 140.0;
    cfg.window = 8.0;
    cfg.seed = seed;

    if (name == "fig2") {
        cfg.model = make_fringe_model(0.629, 2.08);
        cfg.spectrum.components = {
            {two_pi * 6.0, 1.34 * pi, -0.33 * pi},
            {two_pi * 40.0, 0.93 * pi, -0.63 * pi},
        };
    } else if (name == "fig4") {
        cfg.model = make_fringe_model(0.629, 2.08);
        cfg.spectrum.components = {
            {two_pi * 20.0, 0.50 * pi, -0.21 * pi},
            {two_pi * 40.0, 0.52 * pi, 0.24 * pi},
        };
    } else if (name == "fig5") {
        cfg.model = make_fringe_model(0.613, 2.08);
        cfg.spectrum.components = {
            {two_pi * 6.0, 0.76 * pi, 0.01 * pi},
            {two_pi * 23.0, 1.01 * pi, 1.01 * pi},
            {two_pi * 40.0, 0.52 * pi, 0.01 * pi},
        };
    } else if (name == "fig6") {
        // Broad-band stand-in: 50 lines up to 150 Hz with seeded phases,
        // strong enough in aggregate to wash the time-averaged pattern out.
        cfg.model = make_fringe_model(0.634, 2.16);
        Rng rng(seed ^ 0xb0adb00d5ull);
        for (int j = 1; j <= 50; ++j)
            cfg.spectrum.components.push_back(
                {two_pi * 3.0 * static_cast<double>(j), 0.45, rng.angle()});
    } else {
        throw UsageError("unknown scenario '" + name + "' (fig2, fig4, fig5, fig6)");
    }
    cfg.validate();
    return cfg;
}

}  // namespace mwc
