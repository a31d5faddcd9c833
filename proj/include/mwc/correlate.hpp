#pragma once

#include <cstdint>
#include <vector>

#include "mwc/core.hpp"

namespace mwc {

// Binning of the (u, tau) plane. tau bins span [0, tau_max) only: pairs are
// ordered later-minus-earlier, u keeps both signs.
struct GridSpec {
    double u_min = -4.0, u_max = 4.0;  // mm
    double du = 0.05;                  // mm
    double tau_max = 0.25;             // s
    double dtau = 1e-3;                // s

    std::size_t n_u() const;
    std::size_t n_tau() const;
    double u_center(std::size_t i) const { return u_min + (static_cast<double>(i) + 0.5) * du; }
    double tau_center(std::size_t i) const { return (static_cast<double>(i) + 0.5) * dtau; }
    void validate() const;
};

// Raw pair counts M_{u,tau}, tau-major layout.
struct PairHistogram {
    GridSpec spec;
    std::vector<std::uint64_t> counts;    // n_tau rows of n_u
    std::uint64_t dropped_outside_u = 0;  // pairs with u outside [u_min, u_max)

    std::uint64_t& at(std::size_t itau, std::size_t iu) { return counts[itau * spec.n_u() + iu]; }
    std::uint64_t at(std::size_t itau, std::size_t iu) const {
        return counts[itau * spec.n_u() + iu];
    }
    std::uint64_t total() const;
};

// Normalized correlation estimate with the metadata it was derived from.
struct CorrelationGrid {
    GridSpec spec;
    std::vector<double> g2;               // tau-major, n_tau x n_u
    std::vector<std::uint64_t> counts;    // matching raw counts (may be empty)
    std::uint64_t total_events = 0;       // M
    double t_acq = 0.0;                   // T, s
    double window = 0.0;                  // Y, mm

    double& at(std::size_t itau, std::size_t iu) { return g2[itau * spec.n_u() + iu]; }
    double at(std::size_t itau, std::size_t iu) const { return g2[itau * spec.n_u() + iu]; }
    std::uint64_t count_at(std::size_t itau, std::size_t iu) const {
        return counts.empty() ? 0 : counts[itau * spec.n_u() + iu];
    }
};

// Counts ordered pairs with t_i - t_j in [0, tau_max) via a two-pointer
// sweep over the time-sorted events: O(M w) with w the mean occupancy of a
// tau_max window. Parallel chunks merge by integer addition, so the result
// is bit-identical to the serial run.
PairHistogram pair_histogram(const EventSet& events, const GridSpec& spec, int threads = 1);

// Finite-window-corrected normalization evaluated at bin centers:
// g2 = (T Y)/(M^2 dtau du) * M_{u,tau} / [(1 - tau/T)(1 - |u|/Y)].
CorrelationGrid normalize(const PairHistogram& hist, std::uint64_t total_events,
                          double t_acq, double window);

// Per-tau-row least squares of g2 = offset + amp cos(k u + phase).
struct AmplitudeEstimate {
    double amplitude = 0.0;  // >= 0
    double phase = 0.0;      // rad, (-pi, pi]
    double offset = 0.0;
    double sigma = 0.0;      // 1-sigma uncertainty of amplitude
    bool valid = false;      // false when fewer than 3 populated u bins
};

std::vector<AmplitudeEstimate> amplitude_series(const CorrelationGrid& grid,
                                                double wave_number);

}  // namespace mwc
