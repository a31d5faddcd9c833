#include "mwc/correlate.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "mwc/parallel.hpp"
#include "lsq3.hpp"

namespace mwc {

using detail::invert3;
using detail::solve3;

std::size_t GridSpec::n_u() const {
    return static_cast<std::size_t>(std::lround((u_max - u_min) / du));
}

std::size_t GridSpec::n_tau() const {
    return static_cast<std::size_t>(std::lround(tau_max / dtau));
}

void GridSpec::validate() const {
    if (du <= 0.0) throw UsageError("GridSpec: du must be > 0");
    if (dtau <= 0.0) throw UsageError("GridSpec: dtau must be > 0");
    if (u_min >= u_max) throw UsageError("GridSpec: u_min must be < u_max");
    if (tau_max <= 0.0) throw UsageError("GridSpec: tau_max must be > 0");
    if (n_u() == 0 || n_tau() == 0) throw UsageError("GridSpec: empty grid");
}

std::uint64_t PairHistogram::total() const {
    std::uint64_t s = 0;
    for (auto c : counts) s += c;
    return s;
}

PairHistogram pair_histogram(const EventSet& events, const GridSpec& spec, int threads) {
    spec.validate();
    events.validate();
    if (spec.tau_max > events.t_acq / 10.0)
        throw UsageError("pair_histogram: tau_max must be <= t_acq/10");

    const std::size_t m = events.size();
    const std::size_t nu = spec.n_u();
    const std::size_t ntau = spec.n_tau();
    PairHistogram out;
    out.spec = spec;
    out.counts.assign(nu * ntau, 0);
    if (m < 2) return out;

    const auto* ev = events.events.data();
    const double inv_dtau = 1.0 / spec.dtau;
    const double inv_du = 1.0 / spec.du;

    if (threads < 1) threads = default_thread_count();
    std::size_t workers =
        std::min<std::size_t>(static_cast<std::size_t>(threads), (m + 4095) / 4096);
    if (workers == 0) workers = 1;

    std::vector<PairHistogram> partial(workers);
    for (auto& p : partial) {
        p.spec = spec;
        p.counts.assign(nu * ntau, 0);
    }

    // Each chunk owns the earlier index j; the forward scan may read past the
    // chunk end, so partial results are disjoint over pairs.
    parallel_chunks(m, static_cast<int>(workers), [&](std::size_t w, std::size_t begin,
                                                      std::size_t end) {
        auto& hist = partial[w];
        auto* counts = hist.counts.data();
        std::size_t hi = begin;
        for (std::size_t j = begin; j < end; ++j) {
            const double tj = ev[j].t;
            const double yj = ev[j].y;
            if (hi < j + 1) hi = j + 1;
            while (hi < m && ev[hi].t - tj < spec.tau_max) ++hi;
            for (std::size_t i = j + 1; i < hi; ++i) {
                const double dt = ev[i].t - tj;
                const double u = ev[i].y - yj;
                if (u < spec.u_min || u >= spec.u_max) {
                    ++hist.dropped_outside_u;
                    continue;
                }
                auto itau = static_cast<std::size_t>(dt * inv_dtau);
                auto iu = static_cast<std::size_t>((u - spec.u_min) * inv_du);
                if (itau >= ntau) itau = ntau - 1;  // fp edge of the last bin
                if (iu >= nu) iu = nu - 1;
                ++counts[itau * nu + iu];
            }
        }
    });

    for (const auto& p : partial) {
        for (std::size_t b = 0; b < out.counts.size(); ++b) out.counts[b] += p.counts[b];
        out.dropped_outside_u += p.dropped_outside_u;
    }
    return out;
}

CorrelationGrid normalize(const PairHistogram& hist, std::uint64_t total_events,
                          double t_acq, double window) {
    const auto& spec = hist.spec;
    spec.validate();
    if (t_acq <= 0.0 || window <= 0.0)
        throw UsageError("normalize: t_acq and window must be > 0");
    if (total_events == 0) throw UsageError("normalize: total_events must be > 0");
    if (spec.tau_max > t_acq)
        throw UsageError("normalize: tau range exceeds acquisition time");

    CorrelationGrid grid;
    grid.spec = spec;
    grid.counts = hist.counts;
    grid.total_events = total_events;
    grid.t_acq = t_acq;
    grid.window = window;
    grid.g2.assign(hist.counts.size(), 0.0);

    const double md = static_cast<double>(total_events);
    const double norm = t_acq * window / (md * md * spec.dtau * spec.du);
    const std::size_t nu = spec.n_u();
    for (std::size_t it = 0; it < spec.n_tau(); ++it) {
        const double tau = spec.tau_center(it);
        for (std::size_t iu = 0; iu < nu; ++iu) {
            const double u = spec.u_center(iu);
            if (std::abs(u) >= window)
                throw UsageError("normalize: |u| bin center reaches the window size");
            const double corr = (1.0 - tau / t_acq) * (1.0 - std::abs(u) / window);
            grid.g2[it * nu + iu] =
                norm * static_cast<double>(hist.counts[it * nu + iu]) / corr;
        }
    }
    return grid;
}

std::vector<AmplitudeEstimate> amplitude_series(const CorrelationGrid& grid,
                                                double wave_number) {
    if (wave_number <= 0.0) throw UsageError("amplitude_series: wave_number must be > 0");
    const auto& spec = grid.spec;
    const std::size_t nu = spec.n_u();
    const bool have_counts = !grid.counts.empty();

    std::vector<double> cu(nu), su(nu);
    for (std::size_t iu = 0; iu < nu; ++iu) {
        cu[iu] = std::cos(wave_number * spec.u_center(iu));
        su[iu] = std::sin(wave_number * spec.u_center(iu));
    }

    std::vector<AmplitudeEstimate> out(spec.n_tau());
    for (std::size_t it = 0; it < spec.n_tau(); ++it) {
        std::array<std::array<double, 3>, 3> xtx{};
        std::array<double, 3> xty{};
        std::size_t used = 0;
        for (std::size_t iu = 0; iu < nu; ++iu) {
            std::uint64_t c = grid.count_at(it, iu);
            if (have_counts && c == 0) continue;
            double g = grid.at(it, iu);
            double w = 1.0;
            if (have_counts) {
                double sigma = std::max(g, 1e-3) / std::sqrt(static_cast<double>(c));
                w = 1.0 / (sigma * sigma);
            }
            const double x[3] = {1.0, cu[iu], su[iu]};
            for (int r = 0; r < 3; ++r) {
                for (int k = 0; k < 3; ++k) xtx[r][k] += w * x[r] * x[k];
                xty[r] += w * x[r] * g;
            }
            ++used;
        }
        auto& est = out[it];
        if (used < 3) continue;  // marked missing
        std::array<double, 3> p{};
        if (!solve3(xtx, xty, p)) continue;
        est.offset = p[0];
        est.amplitude = std::hypot(p[1], p[2]);
        est.phase = est.amplitude > 0.0 ? std::atan2(-p[2], p[1]) : 0.0;

        std::array<std::array<double, 3>, 3> cov{};
        if (invert3(xtx, cov)) {
            double scale = 1.0;
            if (!have_counts) {
                // no per-bin sigmas: estimate from residuals
                double rss = 0.0;
                for (std::size_t iu = 0; iu < nu; ++iu) {
                    double r = grid.at(it, iu) - (p[0] + p[1] * cu[iu] + p[2] * su[iu]);
                    rss += r * r;
                }
                scale = rss / static_cast<double>(std::max<std::size_t>(used - 3, 1));
            } else {
                // pairs sharing an event are correlated, so pure counting
                // errors are optimistic; rescale by the observed chi^2/dof
                double chi2 = 0.0;
                for (std::size_t iu = 0; iu < nu; ++iu) {
                    std::uint64_t c = grid.count_at(it, iu);
                    if (c == 0) continue;
                    double g = grid.at(it, iu);
                    double r = g - (p[0] + p[1] * cu[iu] + p[2] * su[iu]);
                    double sigma = std::max(g, 1e-3) / std::sqrt(static_cast<double>(c));
                    chi2 += r * r / (sigma * sigma);
                }
                scale = std::max(
                    1.0, chi2 / static_cast<double>(std::max<std::size_t>(used - 3, 1)));
            }
            double a2 = est.amplitude * est.amplitude;
            double var;
            if (a2 > 1e-30) {
                var = (p[1] * p[1] * cov[1][1] + p[2] * p[2] * cov[2][2] +
                       2.0 * p[1] * p[2] * cov[1][2]) /
                      a2;
            } else {
                var = std::max(cov[1][1], cov[2][2]);
            }
            est.sigma = std::sqrt(std::max(0.0, var * scale));
        }
        est.valid = true;
    }
    return out;
}

}  // namespace mwc
