#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mwc/attenuation.hpp"
#include "mwc/core.hpp"
#include "mwc/correlate.hpp"

namespace mwc {

enum class FitMode { approx, exact };

// Parameter packing: [K, k, (omega_j, phi_j)_j] in approx mode,
// [K, k, (omega_j, phi_j, phase_j)_j] in exact mode; components by omega.
struct FitProblem {
    CorrelationGrid grid;
    int n_components = 0;
    FitMode mode = FitMode::approx;
    std::vector<double> seed;  // packed; empty = derive via initial_guess

    int multi_start = 3;  // total starts (first is the unperturbed seed)
    std::uint64_t rng_seed = 0x5eed;
    int max_iterations = 300;

    // Model the bin-averaged estimate rather than bin-center values. Turn
    // off when fitting a surface sampled pointwise.
    bool bin_average = true;

    // Frequency-ratio snapping for exact mode. Large multipliers only admit
    // the diagonal solution, so a spurious snap degrades gracefully.
    double snap_tol = 1e-3;
    long snap_p_max = 60;

    int bound = -1;           // Bessel truncation (-1 = automatic)
    double prune_tol = 1e-11; // drop tuple terms below this seed weight
};

struct FitResult {
    FringeModel model;  // fitted K and k (f0 = 1)
    PerturbationSpectrum spectrum;
    FitMode mode = FitMode::approx;

    // In approx/diagonal mode the perturbation phases are not identifiable
    // and are not reported; the phase fields in spectrum are meaningless then.
    bool phases_reported = false;

    bool converged = false;
    int iterations = 0;
    double residual_rms = 0.0;  // weighted rms residual

    std::vector<double> params;
    std::vector<double> uncertainties;
    std::vector<std::string> param_names;
    double condition_number = 0.0;
    double off_diagonal_weight = 0.0;  // 0 in approx mode
};

// Seed parameters from the grid alone: k from the dominant spatial
// frequency, K from the tau = 0 modulation amplitude, components by a
// greedy matched scan of the per-tau amplitude series. Throws
// NumericalError listing the components found when fewer than n exist.
std::vector<double> initial_guess(const CorrelationGrid& grid, int n_components);

// Weighted nonlinear least squares of the correlation theory against the
// grid, damped Gauss-Newton with a numerical Jacobian, multi-start.
FitResult fit_correlation(const FitProblem& problem);

// Two-parameter (K, k) fit of the product-form theory with a fixed, known
// perturbation spectrum (broad-band pipeline).
FitResult fit_broadband(const CorrelationGrid& grid, const PerturbationSpectrum& spectrum,
                        double seed_contrast, double seed_wave_number,
                        bool bin_average = true);

// Attenuation samples 1 - phi1(omega)/phi1(0) from single-frequency fits.
AttenuationCurve attenuation_points(const std::vector<std::pair<double, FitResult>>& fits,
                                    double reference_phi);

// Least-squares fit of the monotone log-frequency sigmoid to the samples.
AttenuationCurve fit_attenuation(AttenuationCurve curve);

}  // namespace mwc
