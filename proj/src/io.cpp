#include "mwc/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

namespace mwc::io {

namespace {

std::ofstream open_out(const path& file) {
    std::ofstream out(file, std::ios::binary);  // binary: LF on every platform
    if (!out) throw FormatError("cannot open for writing: " + file.string());
    return out;
}

std::ifstream open_in(const path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw FormatError("cannot open: " + file.string());
    return in;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& s, const path& file, std::size_t line_no) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
        if (pos != s.size()) throw std::invalid_argument("trailing garbage");
        return v;
    } catch (const std::exception&) {
        throw FormatError(file.string() + ":" + std::to_string(line_no) +
                          ": not a number: '" + s + "'");
    }
}

// key=value headers used by the grid and sidecar formats
std::map<std::string, std::string> read_header(std::ifstream& in, const path& file,
                                               std::size_t& line_no) {
    std::map<std::string, std::string> kv;
    while (in.peek() == '#') {
        std::string line;
        std::getline(in, line);
        ++line_no;
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;  // comment line
        std::string key = line.substr(1, eq - 1);
        std::string val = line.substr(eq + 1);
        auto trim = [](std::string& s) {
            s.erase(0, s.find_first_not_of(" \t\r"));
            s.erase(s.find_last_not_of(" \t\r") + 1);
        };
        trim(key);
        trim(val);
        kv[key] = val;
    }
    return kv;
}

double header_num(const std::map<std::string, std::string>& kv, const std::string& key,
                  const path& file) {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(file.string() + ": missing header key " + key);
    return parse_double(it->second, file, 0);
}

}  // namespace

void write_events_csv(const path& file, const EventSet& events) {
    auto out = open_out(file);
    out << "t_s,y_mm\n";
    char buf[80];
    for (const auto& e : events.events) {
        std::snprintf(buf, sizeof(buf), "%.9f,%.9g\n", e.t, e.y);
        out << buf;
    }
}

EventSet read_events_csv(const path& file) {
    auto in = open_in(file);
    std::string line;
    std::size_t line_no = 0;

    EventSet set;
    std::getline(in, line);
    ++line_no;
    if (line.find("t_s") == std::string::npos)
        throw FormatError(file.string() + ":1: expected header 't_s,y_mm'");

    double prev = -1.0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto comma = line.find(',');
        if (comma == std::string::npos)
            throw FormatError(file.string() + ":" + std::to_string(line_no) +
                              ": expected 't,y' row");
        double t = parse_double(line.substr(0, comma), file, line_no);
        double y = parse_double(line.substr(comma + 1), file, line_no);
        if (t < prev)
            throw FormatError(file.string() + ":" + std::to_string(line_no) +
                              ": event times must be nondecreasing");
        prev = t;
        set.events.push_back(EventRecord{t, y});
    }

    // Window metadata is not part of the CSV: recover conservative values
    // from the data itself.
    double max_t = set.events.empty() ? 0.0 : set.events.back().t;
    double max_y = 0.0;
    for (const auto& e : set.events) max_y = std::max(max_y, std::abs(e.y));
    set.t_acq = std::max(max_t, 1e-9);
    set.window = std::max(2.0 * max_y, 1e-9);
    return set;
}

void write_truth_sidecar(const path& file, const SimConfig& config) {
    auto out = open_out(file);
    out << "# ground truth for simulated event stream\n";
    out << "rate_hz = " << fmt(config.rate) << "\n";
    out << "duration_s = " << fmt(config.duration) << "\n";
    out << "window_mm = " << fmt(config.window) << "\n";
    out << "seed = " << config.seed << "\n";
    out << "contrast = " << fmt(config.model.contrast) << "\n";
    out << "wavelength_mm = " << fmt(config.model.wavelength()) << "\n";
    out << "n_components = " << config.spectrum.size() << "\n";
    for (std::size_t j = 0; j < config.spectrum.size(); ++j) {
        const auto& c = config.spectrum.components[j];
        out << "component_" << j + 1 << "_freq_hz = " << fmt(c.omega / two_pi) << "\n";
        out << "component_" << j + 1 << "_phi_peak_rad = " << fmt(c.phi_peak) << "\n";
        out << "component_" << j + 1 << "_phase_rad = " << fmt(c.phase) << "\n";
    }
}

void write_grid(const path& file, const CorrelationGrid& grid) {
    auto header = [&](std::ofstream& out) {
        out << "# u_min=" << fmt(grid.spec.u_min) << "\n";
        out << "# u_max=" << fmt(grid.spec.u_max) << "\n";
        out << "# du=" << fmt(grid.spec.du) << "\n";
        out << "# tau_max=" << fmt(grid.spec.tau_max) << "\n";
        out << "# dtau=" << fmt(grid.spec.dtau) << "\n";
        out << "# M=" << grid.total_events << "\n";
        out << "# T=" << fmt(grid.t_acq) << "\n";
        out << "# Y=" << fmt(grid.window) << "\n";
    };

    auto out = open_out(file);
    header(out);
    const std::size_t nu = grid.spec.n_u();
    for (std::size_t it = 0; it < grid.spec.n_tau(); ++it) {
        for (std::size_t iu = 0; iu < nu; ++iu)
            out << (iu ? " " : "") << fmt(grid.at(it, iu));
        out << "\n";
    }

    if (!grid.counts.empty()) {
        auto cout_ = open_out(path(file.string() + ".counts"));
        header(cout_);
        for (std::size_t it = 0; it < grid.spec.n_tau(); ++it) {
            for (std::size_t iu = 0; iu < nu; ++iu)
                cout_ << (iu ? " " : "") << grid.counts[it * nu + iu];
            cout_ << "\n";
        }
    }
}

CorrelationGrid read_grid(const path& file) {
    auto in = open_in(file);
    std::size_t line_no = 0;
    auto kv = read_header(in, file, line_no);

    CorrelationGrid grid;
    grid.spec.u_min = header_num(kv, "u_min", file);
    grid.spec.u_max = header_num(kv, "u_max", file);
    grid.spec.du = header_num(kv, "du", file);
    grid.spec.tau_max = header_num(kv, "tau_max", file);
    grid.spec.dtau = header_num(kv, "dtau", file);
    grid.total_events = static_cast<std::uint64_t>(header_num(kv, "M", file));
    grid.t_acq = header_num(kv, "T", file);
    grid.window = header_num(kv, "Y", file);
    grid.spec.validate();

    const std::size_t nu = grid.spec.n_u();
    const std::size_t ntau = grid.spec.n_tau();
    grid.g2.reserve(nu * ntau);
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream row(line);
        double v;
        while (row >> v) grid.g2.push_back(v);
    }
    if (grid.g2.size() != nu * ntau)
        throw FormatError(file.string() + ": expected " + std::to_string(nu * ntau) +
                          " g2 values, got " + std::to_string(grid.g2.size()));

    path counts_file(file.string() + ".counts");
    if (std::filesystem::exists(counts_file)) {
        auto cin_ = open_in(counts_file);
        std::size_t cline = 0;
        read_header(cin_, counts_file, cline);
        grid.counts.reserve(nu * ntau);
        while (std::getline(cin_, line)) {
            if (line.empty()) continue;
            std::istringstream row(line);
            std::uint64_t c;
            while (row >> c) grid.counts.push_back(c);
        }
        if (grid.counts.size() != nu * ntau)
            throw FormatError(counts_file.string() + ": count matrix size mismatch");
    }
    return grid;
}

void write_fit_report(const path& file, const FitResult& result) {
    auto out = open_out(file);
    out << "# mwc fit report\n";
    out << "mode = " << (result.mode == FitMode::exact ? "exact" : "approx") << "\n";
    out << "converged = " << (result.converged ? 1 : 0) << "\n";
    out << "iterations = " << result.iterations << "\n";
    out << "residual_rms = " << fmt(result.residual_rms) << "\n";
    out << "contrast = " << fmt(result.model.contrast) << "\n";
    out << "wavelength_mm = " << fmt(result.model.wavelength()) << "\n";
    out << "phases_reported = " << (result.phases_reported ? 1 : 0) << "\n";
    out << "condition_number = " << fmt(result.condition_number) << "\n";
    out << "off_diagonal_weight = " << fmt(result.off_diagonal_weight) << "\n";
    out << "n_components = " << result.spectrum.size() << "\n";
    for (std::size_t j = 0; j < result.spectrum.size(); ++j) {
        const auto& c = result.spectrum.components[j];
        out << "component_" << j + 1 << "_freq_hz = " << fmt(c.omega / two_pi) << "\n";
        out << "component_" << j + 1 << "_phi_peak_rad = " << fmt(c.phi_peak) << "\n";
        if (result.phases_reported)
            out << "component_" << j + 1 << "_phase_rad = " << fmt(c.phase) << "\n";
    }
    for (std::size_t i = 0; i < result.uncertainties.size() &&
                            i < result.param_names.size(); ++i)
        out << "sigma_" << result.param_names[i] << " = " << fmt(result.uncertainties[i])
            << "\n";
}

FitResult read_fit_report(const path& file) {
    auto in = open_in(file);
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError(file.string() + ":" + std::to_string(line_no) +
                              ": expected 'key = value'");
        auto trim = [](std::string s) {
            s.erase(0, s.find_first_not_of(" \t\r"));
            s.erase(s.find_last_not_of(" \t\r") + 1);
            return s;
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }

    auto num = [&](const std::string& key) {
        auto it = kv.find(key);
        if (it == kv.end())
            throw FormatError(file.string() + ": missing key " + key);
        return parse_double(it->second, file, 0);
    };

    FitResult r;
    r.mode = kv.count("mode") && kv["mode"] == "exact" ? FitMode::exact : FitMode::approx;
    r.converged = num("converged") != 0.0;
    r.iterations = static_cast<int>(num("iterations"));
    r.residual_rms = num("residual_rms");
    r.model = make_fringe_model(num("contrast"), num("wavelength_mm"));
    r.phases_reported = num("phases_reported") != 0.0;
    if (kv.count("condition_number")) r.condition_number = num("condition_number");
    if (kv.count("off_diagonal_weight")) r.off_diagonal_weight = num("off_diagonal_weight");
    auto n = static_cast<std::size_t>(num("n_components"));
    for (std::size_t j = 1; j <= n; ++j) {
        PerturbationComponent c;
        c.omega = two_pi * num("component_" + std::to_string(j) + "_freq_hz");
        c.phi_peak = num("component_" + std::to_string(j) + "_phi_peak_rad");
        if (r.phases_reported)
            c.phase = num("component_" + std::to_string(j) + "_phase_rad");
        r.spectrum.components.push_back(c);
    }
    return r;
}

void write_attenuation(const path& file, const AttenuationCurve& curve) {
    auto out = open_out(file);
    out << "# mu-metal attenuation curve\n";
    out << "# fitted=" << (curve.fitted ? 1 : 0) << "\n";
    if (curve.fitted) {
        out << "# floor=" << fmt(curve.floor) << "\n";
        out << "# ceiling=" << fmt(curve.ceiling) << "\n";
        out << "# center=" << fmt(curve.center) << "\n";
        out << "# slope=" << fmt(curve.slope) << "\n";
        out << "# monotone=" << (curve.monotone_flag ? 1 : 0) << "\n";
    }
    out << "# columns: freq_hz attenuation clamped\n";
    for (const auto& s : curve.samples)
        out << fmt(s.omega / two_pi) << " " << fmt(s.attenuation) << " "
            << (s.clamped ? 1 : 0) << "\n";
}

AttenuationCurve read_attenuation(const path& file) {
    auto in = open_in(file);
    std::size_t line_no = 0;
    auto kv = read_header(in, file, line_no);
    AttenuationCurve curve;
    if (kv.count("fitted") && kv["fitted"] == "1") {
        curve.fitted = true;
        curve.floor = header_num(kv, "floor", file);
        curve.ceiling = header_num(kv, "ceiling", file);
        curve.center = header_num(kv, "center", file);
        curve.slope = header_num(kv, "slope", file);
        if (kv.count("monotone")) curve.monotone_flag = kv["monotone"] == "1";
    }
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream row(line);
        AttenuationCurve::Sample s;
        double freq_hz;
        int clamped = 0;
        if (!(row >> freq_hz >> s.attenuation))
            throw FormatError(file.string() + ":" + std::to_string(line_no) +
                              ": expected 'freq_hz attenuation'");
        row >> clamped;
        s.omega = two_pi * freq_hz;
        s.clamped = clamped != 0;
        curve.samples.push_back(s);
    }
    return curve;
}

void write_waveform_csv(const path& file, const Waveform& w) {
    auto out = open_out(file);
    out << "# sample_rate_hz=" << fmt(w.sample_rate) << "\n";
    for (double s : w.samples) out << fmt(s) << "\n";
}

Waveform read_waveform_csv(const path& file) {
    auto in = open_in(file);
    std::size_t line_no = 0;
    auto kv = read_header(in, file, line_no);
    Waveform w;
    w.sample_rate = header_num(kv, "sample_rate_hz", file);
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        // accept "value" or "t,value"
        auto comma = line.find(',');
        std::string field = comma == std::string::npos ? line : line.substr(comma + 1);
        w.samples.push_back(parse_double(field, file, line_no));
    }
    w.validate();
    return w;
}

void write_spectrum_file(const path& file, const PerturbationSpectrum& spectrum) {
    auto out = open_out(file);
    out << "# columns: freq_hz phi_peak_rad phase_rad\n";
    for (const auto& c : spectrum.components)
        out << fmt(c.omega / two_pi) << " " << fmt(c.phi_peak) << " " << fmt(c.phase)
            << "\n";
}

PerturbationSpectrum read_spectrum_file(const path& file) {
    auto in = open_in(file);
    PerturbationSpectrum spectrum;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream row(line);
        double freq_hz, phi, phase;
        if (!(row >> freq_hz >> phi >> phase))
            throw FormatError(file.string() + ":" + std::to_string(line_no) +
                              ": expected 'freq_hz phi_peak_rad phase_rad'");
        spectrum.components.push_back(
            PerturbationComponent{two_pi * freq_hz, phi, phase});
    }
    spectrum.validate();
    return spectrum;
}

void write_position_histogram(const path& file, const EventSet& events,
                              double bin_width_mm) {
    if (bin_width_mm <= 0.0) throw UsageError("histogram bin width must be > 0");
    auto out = open_out(file);
    if (events.events.empty()) {
        out << "# empty\n";
        return;
    }
    double lo = events.events.front().y, hi = lo;
    for (const auto& e : events.events) {
        lo = std::min(lo, e.y);
        hi = std::max(hi, e.y);
    }
    auto n = static_cast<std::size_t>(std::ceil((hi - lo) / bin_width_mm)) + 1;
    std::vector<std::uint64_t> counts(n, 0);
    for (const auto& e : events.events) {
        auto b = static_cast<std::size_t>((e.y - lo) / bin_width_mm);
        if (b >= n) b = n - 1;
        ++counts[b];
    }
    out << "# columns: y_mm count\n";
    for (std::size_t b = 0; b < n; ++b)
        out << fmt(lo + (static_cast<double>(b) + 0.5) * bin_width_mm) << " " << counts[b]
            << "\n";
}

void append_run_log(const path& file, const std::string& command, int exit_code,
                    const std::string& detail) {
    nlohmann::json entry{
        {"command", command},
        {"exit_code", exit_code},
        {"detail", detail},
        {"timestamp", static_cast<long>(std::time(nullptr))},
    };
    std::ofstream out(file, std::ios::binary | std::ios::app);
    if (!out) throw FormatError("cannot open run log: " + file.string());
    out << entry.dump() << "\n";
}

}  // namespace mwc::io
