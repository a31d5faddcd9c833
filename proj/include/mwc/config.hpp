#pragma once

#include <filesystem>
#include <string>

#include "mwc/correlate.hpp"
#include "mwc/fit.hpp"
#include "mwc/sim.hpp"

namespace mwc {

// Tool-wide defaults loaded from a "key = value" text file. Keys carry the
// unit as a suffix (_mm, _s, _hz, _rad); values are plain numbers. Lines
// starting with '#' are comments. Unknown keys are rejected. The config
// path comes from --config or the MWC_CONFIG environment variable.
//
// Recognized keys:
//   grid.u_min_mm grid.u_max_mm grid.du_mm grid.tau_max_s grid.dtau_s
//   sim.rate_hz sim.duration_s sim.window_mm sim.seed
//   sim.contrast sim.wavelength_mm
//   fit.mode (approx|exact) fit.multi_start fit.max_iterations
//   fit.snap_tol fit.prune_tol fit.bound
//   reconstruct.phase_resolution_rad
//   spectrum.threshold spectrum.coupling_rad
//   attenuation.curve_path
//   log_path
struct RunConfig {
    GridSpec grid;
    SimConfig sim;

    FitMode fit_mode = FitMode::approx;
    int fit_multi_start = 3;
    int fit_max_iterations = 300;
    double fit_snap_tol = 1e-3;
    double fit_prune_tol = 1e-11;
    int fit_bound = -1;

    double phase_resolution = pi / 50.0;

    double spectrum_threshold = 0.01;
    double spectrum_coupling = 1.0;  // rad per waveform unit

    std::string attenuation_path;
    std::string log_path;
};

// Parses the file; throws FormatError naming the offending line for unknown
// keys or malformed values.
RunConfig load_config(const std::filesystem::path& file);

// --config flag value wins; otherwise MWC_CONFIG; otherwise defaults.
RunConfig resolve_config(const std::string& flag_path);

// Published scenario presets: contrast, wavelength, perturbation spectrum,
// and acquisition parameters for the four reference measurements.
// Names: fig2, fig4, fig5, fig6.
SimConfig scenario_preset(const std::string& name, std::uint64_t seed);

}  // namespace mwc
