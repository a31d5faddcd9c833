#include "mwc/reconstruct.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "mwc/parallel.hpp"
#include "lsq3.hpp"

namespace mwc {

std::size_t ReconstructionPlan::free_count() const {
    std::size_t n = 0;
    for (bool f : phase_free)
        if (f) ++n;
    return n;
}

void ReconstructionPlan::validate() const {
    if (lambda <= 0.0) throw UsageError("ReconstructionPlan: lambda must be > 0");
    if (phase_resolution <= 0.0 || phase_resolution > two_pi)
        throw UsageError("ReconstructionPlan: bad phase resolution");
    if (!phase_free.empty() && phase_free.size() != components.size())
        throw UsageError("ReconstructionPlan: phase_free size mismatch");
    components.validate();
}

EventSet shift_positions(const EventSet& events, const ReconstructionPlan& plan,
                         std::size_t* out_outside) {
    plan.validate();
    if (plan.free_count() > 0)
        throw UsageError("shift_positions: plan still has free phases");
    EventSet out = events;
    const double scale = plan.lambda / two_pi;
    const double half = 0.5 * events.window;
    std::size_t outside = 0;
    for (auto& e : out.events) {
        e.y -= scale * phase_shift(plan.components, e.t);
        if (e.y < -half || e.y > half) ++outside;
    }
    if (out_outside) *out_outside = outside;
    return out;
}

namespace {

struct HistogramFrame {
    double lo = 0.0;
    double bin_width = 0.0;
    std::size_t n_bins = 0;
};

ContrastEstimate contrast_from_counts(const std::vector<double>& counts,
                                      const HistogramFrame& frame, double k) {
    std::array<std::array<double, 3>, 3> xtx{};
    std::array<double, 3> xty{};
    for (std::size_t b = 0; b < frame.n_bins; ++b) {
        double y = frame.lo + (static_cast<double>(b) + 0.5) * frame.bin_width;
        const double x[3] = {1.0, std::cos(k * y), std::sin(k * y)};
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) xtx[r][c] += x[r] * x[c];
            xty[r] += x[r] * counts[b];
        }
    }
    std::array<double, 3> p{};
    ContrastEstimate est;
    if (!detail::solve3(xtx, xty, p) || p[0] <= 0.0)
        throw NumericalError("contrast_of: degenerate histogram fit");
    double b_amp = std::hypot(p[1], p[2]);
    est.mean_level = p[0];
    est.contrast = b_amp / p[0];
    est.fringe_phase = b_amp > 0.0 ? std::atan2(-p[2], p[1]) : 0.0;

    std::array<std::array<double, 3>, 3> cov{};
    if (detail::invert3(xtx, cov)) {
        double rss = 0.0;
        for (std::size_t b = 0; b < frame.n_bins; ++b) {
            double y = frame.lo + (static_cast<double>(b) + 0.5) * frame.bin_width;
            double m = p[0] + p[1] * std::cos(k * y) + p[2] * std::sin(k * y);
            rss += (counts[b] - m) * (counts[b] - m);
        }
        double s2 = rss / static_cast<double>(std::max<std::size_t>(frame.n_bins - 3, 1));
        double var_b = b_amp > 1e-30
                           ? (p[1] * p[1] * cov[1][1] + p[2] * p[2] * cov[2][2] +
                              2.0 * p[1] * p[2] * cov[1][2]) /
                                 (b_amp * b_amp)
                           : std::max(cov[1][1], cov[2][2]);
        // contrast = b/a: combine amplitude and mean-level variances
        double rel2 = var_b * s2 / std::max(b_amp * b_amp, 1e-30) +
                      cov[0][0] * s2 / (p[0] * p[0]);
        est.sigma = est.contrast * std::sqrt(std::max(rel2, 0.0));
        if (b_amp < 1e-12) est.sigma = std::sqrt(var_b * s2) / p[0];
    }
    return est;
}

}  // namespace

ContrastEstimate contrast_of(const EventSet& events, double wave_number,
                             int bins_per_period, double y_lo, double y_hi) {
    if (events.events.empty()) throw UsageError("contrast_of: empty event set");
    if (wave_number <= 0.0) throw UsageError("contrast_of: wave_number must be > 0");
    if (bins_per_period < 16)
        throw UsageError("contrast_of: need at least 16 bins per period");

    double lo, hi;
    if (std::isnan(y_lo) || std::isnan(y_hi)) {
        lo = events.events.front().y;
        hi = lo;
        for (const auto& e : events.events) {
            lo = std::min(lo, e.y);
            hi = std::max(hi, e.y);
        }
    } else {
        lo = y_lo;
        hi = y_hi;
    }
    HistogramFrame frame;
    frame.bin_width = two_pi / wave_number / static_cast<double>(bins_per_period);
    frame.lo = lo;
    // only bins fully inside [lo, hi]; the partial tail is discarded
    frame.n_bins = static_cast<std::size_t>(std::floor((hi - lo) / frame.bin_width));
    if (frame.n_bins < 3) throw NumericalError("contrast_of: position spread below one bin");

    std::vector<double> counts(frame.n_bins, 0.0);
    for (const auto& e : events.events) {
        if (e.y < frame.lo) continue;
        auto b = static_cast<std::size_t>((e.y - frame.lo) / frame.bin_width);
        if (b >= frame.n_bins) continue;
        counts[b] += 1.0;
    }
    return contrast_from_counts(counts, frame, wave_number);
}

PhaseScanResult phase_scan(const EventSet& events, const ReconstructionPlan& plan,
                           double wave_number, int threads) {
    plan.validate();
    if (events.events.empty()) throw UsageError("phase_scan: empty event set");
    const std::size_t n_free = plan.free_count();
    if (n_free > 3)
        throw CostGuardError("phase_scan: more than 3 free phases; use an exact-mode "
                             "correlation fit for the phases instead");

    PhaseScanResult out;
    out.plan = plan;
    out.plan.phase_free.assign(plan.components.size(), false);

    if (n_free == 0) {
        std::size_t outside = 0;
        EventSet shifted = shift_positions(events, out.plan, &outside);
        double lo = events.events.front().y, hi = lo;
        for (const auto& e : events.events) {
            lo = std::min(lo, e.y);
            hi = std::max(hi, e.y);
        }
        double ms = plan.lambda / two_pi * plan.components.total_phi();
        out.best = contrast_of(shifted, wave_number, 32, lo + ms, hi - ms);
        out.contrast_map = {out.best.contrast};
        out.map_shape = {};
        return out;
    }

    // Precompute the fixed part of the shift and, per free component, the
    // cos/sin of omega t so each scan point is a few fused multiplies.
    const double scale = plan.lambda / two_pi;
    const std::size_t m = events.size();
    std::vector<double> y_base(m);
    std::vector<std::size_t> free_idx;
    for (std::size_t j = 0; j < plan.components.size(); ++j)
        if (plan.phase_free[j]) free_idx.push_back(j);

    PerturbationSpectrum fixed;
    for (std::size_t j = 0; j < plan.components.size(); ++j)
        if (!plan.phase_free[j]) fixed.components.push_back(plan.components[j]);
    for (std::size_t i = 0; i < m; ++i)
        y_base[i] = events.events[i].y - scale * phase_shift(fixed, events.events[i].t);

    // Scan phases are referenced to mid-acquisition: with the correction
    // written as phi cos(omega (t - t_mid) + psi), a small frequency error
    // barely moves the optimal psi, which keeps the later frequency
    // refinement well conditioned.
    const double t_mid = 0.5 * (events.events.front().t + events.events.back().t);
    std::vector<double> omega_free(n_free);
    std::vector<std::vector<double>> ac(n_free, std::vector<double>(m));
    std::vector<std::vector<double>> as(n_free, std::vector<double>(m));
    double max_shift = 0.0;
    auto rebuild_trig = [&](std::size_t f) {
        const double amp = scale * plan.components[free_idx[f]].phi_peak;
        for (std::size_t i = 0; i < m; ++i) {
            double arg = omega_free[f] * (events.events[i].t - t_mid);
            ac[f][i] = amp * std::cos(arg);
            as[f][i] = amp * std::sin(arg);
        }
    };
    for (std::size_t f = 0; f < n_free; ++f) {
        omega_free[f] = plan.components[free_idx[f]].omega;
        max_shift += scale * plan.components[free_idx[f]].phi_peak;
        rebuild_trig(f);
    }
    for (const auto& c : fixed.components) max_shift += scale * c.phi_peak;

    double lo = events.events.front().y, hi = lo;
    for (const auto& e : events.events) {
        lo = std::min(lo, e.y);
        hi = std::max(hi, e.y);
    }
    // Score only the region whose exposure stays uniform for every phase
    // choice: within max_shift of the detector edges the shifted density
    // tapers off, which would bias the contrast objective.
    HistogramFrame frame;
    frame.bin_width = two_pi / wave_number / 32.0;
    frame.lo = lo + max_shift;
    const double core_hi = hi - max_shift;
    if (core_hi - frame.lo < 3.0 * frame.bin_width)
        throw NumericalError("phase_scan: window too small for the shift amplitude");
    frame.n_bins =
        static_cast<std::size_t>(std::floor((core_hi - frame.lo) / frame.bin_width));

    auto contrast_at = [&](const std::array<double, 3>& phases) {
        std::vector<double> counts(frame.n_bins, 0.0);
        std::array<double, 3> cp{}, sp{};
        for (std::size_t f = 0; f < n_free; ++f) {
            cp[f] = std::cos(phases[f]);
            sp[f] = std::sin(phases[f]);
        }
        for (std::size_t i = 0; i < m; ++i) {
            double y = y_base[i];
            for (std::size_t f = 0; f < n_free; ++f)
                y -= ac[f][i] * cp[f] - as[f][i] * sp[f];
            if (y < frame.lo) continue;
            auto b = static_cast<std::size_t>((y - frame.lo) / frame.bin_width);
            if (b >= frame.n_bins) continue;
            counts[b] += 1.0;
        }
        return contrast_from_counts(counts, frame, wave_number);
    };

    const auto steps = static_cast<std::size_t>(std::lround(two_pi / plan.phase_resolution));
    std::size_t total = 1;
    for (std::size_t f = 0; f < n_free; ++f) total *= steps;
    out.map_shape.assign(n_free, steps);
    out.contrast_map.assign(total, 0.0);

    if (threads < 1) threads = default_thread_count();
    parallel_chunks(total, threads, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t g = begin; g < end; ++g) {
            std::array<double, 3> phases{};
            std::size_t rem = g;
            for (std::size_t f = n_free; f-- > 0;) {
                phases[f] = -pi + static_cast<double>(rem % steps) * plan.phase_resolution;
                rem /= steps;
            }
            out.contrast_map[g] = contrast_at(phases).contrast;
        }
    });

    std::size_t best_g =
        static_cast<std::size_t>(std::max_element(out.contrast_map.begin(),
                                                  out.contrast_map.end()) -
                                 out.contrast_map.begin());
    std::array<double, 3> best_phases{};
    {
        std::size_t rem = best_g;
        for (std::size_t f = n_free; f-- > 0;) {
            best_phases[f] = -pi + static_cast<double>(rem % steps) * plan.phase_resolution;
            rem /= steps;
        }
    }

    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    auto golden_max = [&](double a, double b, auto eval) {
        double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
        double f1 = eval(x1), f2 = eval(x2);
        for (int it = 0; it < 24; ++it) {
            if (f1 > f2) {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - gr * (b - a);
                f1 = eval(x1);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + gr * (b - a);
                f2 = eval(x2);
            }
        }
        return 0.5 * (a + b);
    };

    // golden-section polish per free phase around the grid optimum
    auto polish_phase = [&](std::size_t f, double halfwidth) {
        best_phases[f] = golden_max(best_phases[f] - halfwidth,
                                    best_phases[f] + halfwidth, [&](double v) {
                                        auto ph = best_phases;
                                        ph[f] = v;
                                        return contrast_at(ph).contrast;
                                    });
    };
    for (std::size_t f = 0; f < n_free; ++f) polish_phase(f, plan.phase_resolution);

    if (plan.refine_frequencies) {
        // Per component, scan the frequency over a few correlation-fit error
        // bars, rebuilding the trig tables each step, then re-polish the
        // phase; repeat once since the components interact weakly.
        const double t_span = events.events.back().t - events.events.front().t;
        for (int round = 0; round < 2; ++round) {
            for (std::size_t f = 0; f < n_free; ++f) {
                const double phi = plan.components[free_idx[f]].phi_peak;
                // contrast falls off once phi * domega * t_span / 2 ~ pi
                const double width = 4.0 * two_pi / (t_span * std::max(phi, 0.5));
                const double w0 = omega_free[f];
                auto eval = [&](double w) {
                    omega_free[f] = w;
                    rebuild_trig(f);
                    return contrast_at(best_phases).contrast;
                };
                double best_w = w0, best_c = eval(w0);
                const int steps_w = 25;
                for (int s = 0; s <= steps_w; ++s) {
                    double w = w0 - width + 2.0 * width * s / steps_w;
                    if (w <= 0.0) continue;
                    double c = eval(w);
                    if (c > best_c) {
                        best_c = c;
                        best_w = w;
                    }
                }
                best_w = golden_max(best_w - 2.0 * width / steps_w,
                                    best_w + 2.0 * width / steps_w, eval);
                omega_free[f] = best_w;
                rebuild_trig(f);
                polish_phase(f, 4.0 * plan.phase_resolution);
            }
        }
    }

    for (std::size_t f = 0; f < n_free; ++f) {
        auto& c = out.plan.components[free_idx[f]];
        c.omega = omega_free[f];
        c.phase = wrap_phase(best_phases[f] - omega_free[f] * t_mid);
    }
    out.best = contrast_at(best_phases);
    return out;
}

}  // namespace mwc
