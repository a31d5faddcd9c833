#pragma once

// Independent reference implementations used only by the tests. These are
// deliberately written from first principles (series, brute force, direct
// quadrature) rather than reusing the library code they check.

#include <cmath>
#include <cstdint>
#include <vector>

#include "mwc/core.hpp"

namespace oracle {

// J_n(x) by the alternating power series sum_m (-1)^m (x/2)^(n+2m) / (m! (n+m)!).
// Converges for the moderate arguments used in the tests.
inline double bessel_series(int n, double x) {
    bool negate = false;
    if (n < 0) {
        n = -n;
        negate = n % 2 == 1;
    }
    if (x < 0.0) {
        x = -x;
        if (n % 2 == 1) negate = !negate;
    }
    const double half = 0.5 * x;
    // term_0 = (x/2)^n / n!
    double term = 1.0;
    for (int i = 1; i <= n; ++i) term *= half / static_cast<double>(i);
    double sum = term;
    for (int m = 1; m < 200; ++m) {
        term *= -half * half / (static_cast<double>(m) * static_cast<double>(n + m));
        sum += term;
        if (std::abs(term) < 1e-18 * (std::abs(sum) + 1e-30)) break;
    }
    return negate ? -sum : sum;
}

// g2(u, tau) by direct time integration of the defining ensemble average:
// the y-average of f(y,t) f(y+u, t+tau) over whole fringe periods gives
// f0^2 [1 + (K^2/2) cos(k u + phi(t+tau) - phi(t))], which is then averaged
// over `periods` base periods with the midpoint rule (spectrally accurate
// for a periodic integrand).
inline double g2_time_integral(const mwc::FringeModel& model,
                               const mwc::PerturbationSpectrum& spectrum, double u,
                               double tau, double base_period, int periods,
                               int steps_per_period = 64) {
    const long n = static_cast<long>(periods) * steps_per_period;
    const double dt = base_period / steps_per_period;
    double acc = 0.0;
    for (long i = 0; i < n; ++i) {
        double t = (static_cast<double>(i) + 0.5) * dt;
        double dphi = mwc::phase_shift(spectrum, t + tau) - mwc::phase_shift(spectrum, t);
        acc += std::cos(model.wave_number * u + dphi);
    }
    double k2 = model.contrast * model.contrast;
    return 1.0 + 0.5 * k2 * acc / static_cast<double>(n);
}

// All-pairs reference for the coincidence histogram.
struct BruteHistogram {
    std::vector<std::uint64_t> counts;
    std::uint64_t dropped = 0;
};

inline BruteHistogram brute_pairs(const std::vector<mwc::EventRecord>& events,
                                  double u_min, double u_max, double du, double tau_max,
                                  double dtau) {
    const auto nu = static_cast<std::size_t>(std::lround((u_max - u_min) / du));
    const auto ntau = static_cast<std::size_t>(std::lround(tau_max / dtau));
    BruteHistogram out;
    out.counts.assign(nu * ntau, 0);
    for (std::size_t j = 0; j < events.size(); ++j) {
        for (std::size_t i = 0; i < events.size(); ++i) {
            if (i == j) continue;
            double dt = events[i].t - events[j].t;
            if (dt < 0.0 || dt >= tau_max) continue;
            double u = events[i].y - events[j].y;
            if (u < u_min || u >= u_max) {
                ++out.dropped;
                continue;
            }
            auto itau = static_cast<std::size_t>(dt / dtau);
            auto iu = static_cast<std::size_t>((u - u_min) / du);
            if (itau >= ntau) itau = ntau - 1;
            if (iu >= nu) iu = nu - 1;
            ++out.counts[itau * nu + iu];
        }
    }
    return out;
}

// The correlation surface only determines the perturbation waveform up to
// time translation and to the combined sign flip + time reversal
// phi(t) -> -phi(-t + t0): both leave the ensemble of phase increments
// phi(t+tau) - phi(t) unchanged. In component phases the two branches read
// phase_j -> phase_j + p_j * theta and phase_j -> -phase_j + pi + p_j * theta.
// Returns the worst per-component mismatch after removing the best branch
// and theta.
inline double phase_gauge_residual(const std::vector<long>& multipliers,
                                   const std::vector<double>& fitted,
                                   const std::vector<double>& truth) {
    const std::size_t n = multipliers.size();
    // theta candidates from the smallest multiplier (fewest branches)
    std::size_t j0 = 0;
    for (std::size_t j = 1; j < n; ++j)
        if (multipliers[j] < multipliers[j0]) j0 = j;
    double best = 1e300;
    for (int sign : {1, -1}) {
        std::vector<double> dphi(n);
        for (std::size_t j = 0; j < n; ++j) {
            double base = sign > 0 ? truth[j] : -truth[j] + 3.14159265358979323846;
            dphi[j] = fitted[j] - base;
        }
        for (long k = 0; k < multipliers[j0]; ++k) {
            double theta = (dphi[j0] + mwc::two_pi * static_cast<double>(k)) /
                           static_cast<double>(multipliers[j0]);
            double worst = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                double r =
                    mwc::wrap_phase(dphi[j] - static_cast<double>(multipliers[j]) * theta);
                worst = std::max(worst, std::abs(r));
            }
            best = std::min(best, worst);
        }
    }
    return best;
}

}  // namespace oracle
