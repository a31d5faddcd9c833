#pragma once

#include <filesystem>
#include <string>

#include "mwc/attenuation.hpp"
#include "mwc/core.hpp"
#include "mwc/correlate.hpp"
#include "mwc/fit.hpp"
#include "mwc/sim.hpp"
#include "mwc/spectrum.hpp"

namespace mwc::io {

using std::filesystem::path;

// Event CSV: header "t_s,y_mm", one event per row, LF line ends. Reading
// enforces nondecreasing times and reports the offending row on failure.
void write_events_csv(const path& file, const EventSet& events);
EventSet read_events_csv(const path& file);

// Ground-truth sidecar emitted next to simulated data (key = value text).
void write_truth_sidecar(const path& file, const SimConfig& config);

// Correlation grid: "# key=value" header (u_min, u_max, du, tau_max, dtau,
// M, T, Y) then tau-major rows of g2. Raw counts go to <file>.counts with
// the same header. Round trip is bit-exact for counts, 1e-17-relative for g2.
void write_grid(const path& file, const CorrelationGrid& grid);
CorrelationGrid read_grid(const path& file);

// Fit report (key = value text, documented in the README).
void write_fit_report(const path& file, const FitResult& result);
FitResult read_fit_report(const path& file);

// Attenuation curve: fitted sigmoid parameters plus retained samples.
void write_attenuation(const path& file, const AttenuationCurve& curve);
AttenuationCurve read_attenuation(const path& file);

// Waveform CSV: "# sample_rate_hz=..." header then one sample per line
// (either "value" or "t_s,value"; times are redundant and ignored).
void write_waveform_csv(const path& file, const Waveform& w);
Waveform read_waveform_csv(const path& file);

// Perturbation spectrum file: rows "freq_hz phi_peak_rad phase_rad".
void write_spectrum_file(const path& file, const PerturbationSpectrum& spectrum);
PerturbationSpectrum read_spectrum_file(const path& file);

// Position histogram as gnuplot-ready columns "y_mm count".
void write_position_histogram(const path& file, const EventSet& events,
                              double bin_width_mm);

// JSON-lines run log for harness integration.
void append_run_log(const path& file, const std::string& command, int exit_code,
                    const std::string& detail);

}  // namespace mwc::io
