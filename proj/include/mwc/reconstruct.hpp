#pragma once

#include <limits>
#include <vector>

#include "mwc/core.hpp"

namespace mwc {

// Recipe for undoing the dephasing: remap each position by
// y_new = y - (lambda / 2 pi) sum_j phi_j cos(omega_j t + phase_j).
// Components whose phase could not be fitted are marked free and found by
// scanning for maximum contrast.
struct ReconstructionPlan {
    double lambda = 0.0;  // mm
    PerturbationSpectrum components;
    std::vector<bool> phase_free;          // per component; empty = all fixed
    double phase_resolution = pi / 50.0;   // scan step, rad

    // Also refine the frequencies of the scanned components by maximizing
    // contrast. A frequency error of even 1/(10 T) dephases the correction
    // across a long acquisition; the contrast objective over the full event
    // stream resolves frequency far beyond the correlation-grid fit.
    bool refine_frequencies = true;

    std::size_t free_count() const;
    void validate() const;
};

// Applies the position remap; times and window metadata are unchanged.
// Shifted positions may leave [-Y/2, Y/2]; they are kept, and the count of
// such events is reported through out_outside when non-null.
EventSet shift_positions(const EventSet& events, const ReconstructionPlan& plan,
                         std::size_t* out_outside = nullptr);

// Fringe contrast of an event set: histogram + least squares of
// a + b cos(k y + delta); contrast = b/a.
struct ContrastEstimate {
    double contrast = 0.0;
    double fringe_phase = 0.0;  // delta, rad
    double mean_level = 0.0;    // a, counts per bin
    double sigma = 0.0;         // statistical uncertainty of contrast
};

// Only bins fully inside the data (or the [y_lo, y_hi] restriction, when
// given) enter the fit: a partially exposed edge bin has enough leverage
// over a few fringe periods to bias the contrast by several percent.
ContrastEstimate contrast_of(const EventSet& events, double wave_number,
                             int bins_per_period = 32,
                             double y_lo = std::numeric_limits<double>::quiet_NaN(),
                             double y_hi = std::numeric_limits<double>::quiet_NaN());

// Exhaustive grid over the free phases at the plan resolution, followed by
// one golden-section pass per free phase. At most 3 free phases.
struct PhaseScanResult {
    ReconstructionPlan plan;            // phases filled in, none free
    ContrastEstimate best;
    std::vector<double> contrast_map;   // row-major over the scan grid
    std::vector<std::size_t> map_shape; // grid points per free axis
};

PhaseScanResult phase_scan(const EventSet& events, const ReconstructionPlan& plan,
                           double wave_number, int threads = 1);

}  // namespace mwc
