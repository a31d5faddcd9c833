#include "mwc/fit.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "mwc/rng.hpp"
#include "mwc/theory.hpp"
#include "levmar.hpp"

namespace mwc {

namespace {

double sinc(double x) {
    if (std::abs(x) < 1e-8) return 1.0 - x * x / 6.0;
    return std::sin(x) / x;
}

struct Bin {
    double u, g2, w;  // w = 1/sigma
};

struct GridData {
    std::vector<double> tau;             // row centers
    std::vector<std::vector<Bin>> rows;  // kept bins per row
    std::size_t n_bins = 0;
    double du = 0.0, dtau = 0.0;
    double window = 0.0;    // detector length Y
    bool measured = false;  // counted pair data (vs a sampled model surface)
};

GridData extract(const CorrelationGrid& grid) {
    GridData d;
    const auto& spec = grid.spec;
    const bool have_counts = !grid.counts.empty() &&
                             std::any_of(grid.counts.begin(), grid.counts.end(),
                                         [](std::uint64_t c) { return c > 0; });
    d.du = spec.du;
    d.dtau = spec.dtau;
    d.window = grid.window;
    d.measured = have_counts;
    for (std::size_t it = 0; it < spec.n_tau(); ++it) {
        std::vector<Bin> row;
        for (std::size_t iu = 0; iu < spec.n_u(); ++iu) {
            double g = grid.at(it, iu);
            if (have_counts) {
                std::uint64_t c = grid.count_at(it, iu);
                if (c == 0) continue;  // no Poisson estimate for empty bins
                double sigma = std::max(g, 1e-3) / std::sqrt(static_cast<double>(c));
                row.push_back(Bin{spec.u_center(iu), g, 1.0 / sigma});
            } else {
                row.push_back(Bin{spec.u_center(iu), g, 1.0});
            }
        }
        d.n_bins += row.size();
        d.tau.push_back(spec.tau_center(it));
        d.rows.push_back(std::move(row));
    }
    if (d.n_bins == 0) throw UsageError("fit: grid has no populated bins");
    return d;
}

// Gauss-Legendre 3-point average over [-h/2, h/2]
constexpr double kGaussX[3] = {-0.7745966692414834, 0.0, 0.7745966692414834};
constexpr double kGaussW[3] = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};

// One factor of the product-form amplitude at unit contrast:
// J_0(phi)^2 + 2 sum_n J_n(phi)^2 cos(n omega tau).
struct AmplitudeFactor {
    double omega = 0.0;
    std::vector<double> jn2;  // J_n(phi)^2, n = 0..bound

    AmplitudeFactor(double omega_, double phi, int bound) : omega(omega_) {
        auto row = bessel_row(bound, std::abs(phi));
        jn2.resize(row.size());
        for (std::size_t n = 0; n < row.size(); ++n) jn2[n] = row[n] * row[n];
    }
    double operator()(double tau) const {
        double f = jn2[0];
        for (std::size_t n = 1; n < jn2.size(); ++n)
            f += 2.0 * jn2[n] * std::cos(static_cast<double>(n) * omega * tau);
        return f;
    }
};

double product_amplitude(const std::vector<AmplitudeFactor>& factors, double tau) {
    double p = 1.0;
    for (const auto& f : factors) p *= f(tau);
    return p;
}

double binned_product_amplitude(const std::vector<AmplitudeFactor>& factors, double tau,
                                double dtau) {
    if (dtau <= 0.0) return product_amplitude(factors, tau);
    double a = 0.0;
    for (int g = 0; g < 3; ++g)
        a += kGaussW[g] * product_amplitude(factors, tau + 0.5 * dtau * kGaussX[g]);
    return a;
}

int factor_bound(double phi) { return static_cast<int>(std::ceil(std::abs(phi))) + 10; }

// phi values reordered to match the ascending frequency list.
std::vector<double> order_matched_phis(const std::vector<double>& omegas,
                                       const std::vector<double>& phis,
                                       const std::vector<double>& sorted) {
    std::vector<double> out;
    out.reserve(sorted.size());
    for (double w : sorted) {
        auto it = std::find(omegas.begin(), omegas.end(), w);
        out.push_back(phis[static_cast<std::size_t>(it - omegas.begin())]);
    }
    return out;
}

struct Packed {
    double contrast = 0.0, wave_number = 0.0;
    PerturbationSpectrum spectrum;
};

Packed unpack(const Eigen::VectorXd& p, int n, bool with_phases) {
    Packed out;
    out.contrast = p[0];
    out.wave_number = p[1];
    const int stride = with_phases ? 3 : 2;
    for (int j = 0; j < n; ++j) {
        PerturbationComponent c;
        c.omega = p[2 + stride * j];
        c.phi_peak = p[3 + stride * j];
        c.phase = with_phases ? p[4 + stride * j] : 0.0;
        out.spectrum.components.push_back(c);
    }
    return out;
}

// Mean fringe factor over the overlap region of the pair estimator:
// (1 / (yhi - ylo)) int_{ylo}^{yhi} e^{iky} dy with
// [ylo, yhi] = [-Y/2, Y/2] intersected with [-Y/2 - u, Y/2 - u].
std::complex<double> overlap_mean(double k, double window, double u) {
    double ylo = std::max(-0.5 * window, -0.5 * window - u);
    double yhi = std::min(0.5 * window, 0.5 * window - u);
    if (yhi <= ylo) return {0.0, 0.0};
    std::complex<double> ik{0.0, k};
    return (std::exp(ik * yhi) - std::exp(ik * ylo)) / (ik * (yhi - ylo));
}

// Expectation of the counted-pair estimator over a finite detector. When the
// time-averaged fringe survives (<e^{i phi(t)}> != 0) the estimator deviates
// from the ideal g2 by single-event edge terms and a density renormalization:
//   E[g2_hat] = (g2_ideal + K Re[Phi C(u) (1 + e^{iku})]) / D^2,
//   D = 1 + K Re[Phi C(0)],
// with C(u) the overlap mean above and Phi = <e^{i phi(t)}>. Sampled model
// surfaces (no counts) are ideal, so the correction stays inactive there.
struct EdgeCorrection {
    bool active = false;
    double contrast = 0.0, k = 0.0, window = 0.0;
    std::complex<double> phi{0.0, 0.0};
    double inv_d2 = 1.0;

    EdgeCorrection() = default;
    EdgeCorrection(double contrast_, double k_, double window_,
                   std::complex<double> phi_static)
        : active(true), contrast(contrast_), k(k_), window(window_), phi(phi_static) {
        double d = 1.0 + contrast * (phi * overlap_mean(k, window, 0.0)).real();
        inv_d2 = 1.0 / (d * d);
    }

    double edge(double u) const {
        std::complex<double> c = overlap_mean(k, window, u);
        std::complex<double> e{1.0 + std::cos(k * u), std::sin(k * u)};
        return contrast * (phi * c * e).real();
    }

    double apply(double ideal, double u, double du) const {
        if (!active) return ideal;
        double e = 0.0;
        if (du > 0.0)
            for (int g = 0; g < 3; ++g) e += kGaussW[g] * edge(u + 0.5 * du * kGaussX[g]);
        else
            e = edge(u);
        return (ideal + e) * inv_d2;
    }
};

// Weighted residuals of the product-form (diagonal) model.
Eigen::VectorXd approx_residual(const GridData& d, const Eigen::VectorXd& p, int n,
                                bool bin_average) {
    Packed m = unpack(p, n, false);
    std::vector<AmplitudeFactor> factors;
    factors.reserve(m.spectrum.size());
    for (const auto& c : m.spectrum.components)
        factors.emplace_back(c.omega, c.phi_peak, factor_bound(c.phi_peak));

    const double half_k2 = 0.5 * m.contrast * m.contrast;
    const double su = bin_average ? sinc(0.5 * m.wave_number * d.du) : 1.0;
    EdgeCorrection edge;
    if (d.measured) {
        double j0 = 1.0;
        for (const auto& c : m.spectrum.components)
            j0 *= std::cyl_bessel_j(0, std::abs(c.phi_peak));
        edge = EdgeCorrection(std::abs(m.contrast), std::abs(m.wave_number), d.window,
                              {j0, 0.0});
    }
    Eigen::VectorXd r(static_cast<Eigen::Index>(d.n_bins));
    Eigen::Index idx = 0;
    for (std::size_t it = 0; it < d.rows.size(); ++it) {
        double a = half_k2 * binned_product_amplitude(factors, d.tau[it],
                                                      bin_average ? d.dtau : 0.0);
        for (const auto& b : d.rows[it]) {
            double model = 1.0 + a * su * std::cos(m.wave_number * b.u);
            model = edge.apply(model, b.u, bin_average ? d.du : 0.0);
            r[idx++] = b.w * (model - b.g2);
        }
    }
    return r;
}

Eigen::VectorXd exact_residual(const GridData& d, ExactEvaluator& eval,
                               const Eigen::VectorXd& p, int n, bool bin_average) {
    Packed m = unpack(p, n, true);
    FringeModel fm{std::abs(m.contrast), std::abs(m.wave_number), 1.0};
    eval.set(fm, m.spectrum);
    const double half_k2 = 0.5 * fm.contrast * fm.contrast;
    const double su = bin_average ? sinc(0.5 * fm.wave_number * d.du) : 1.0;
    EdgeCorrection edge;
    if (d.measured)
        edge = EdgeCorrection(fm.contrast, fm.wave_number, d.window, eval.phi_static());
    Eigen::VectorXd r(static_cast<Eigen::Index>(d.n_bins));
    Eigen::Index idx = 0;
    for (std::size_t it = 0; it < d.rows.size(); ++it) {
        std::complex<double> a = eval.a_plus(d.tau[it], bin_average ? d.dtau : 0.0);
        for (const auto& b : d.rows[it]) {
            double ku = fm.wave_number * b.u;
            double mod = std::cos(ku) * a.real() + std::sin(ku) * a.imag();
            double model = 1.0 + half_k2 * su * mod;
            model = edge.apply(model, b.u, bin_average ? d.du : 0.0);
            r[idx++] = b.w * (model - b.g2);
        }
    }
    return r;
}

// --- initial guess helpers ---------------------------------------------

double dominant_wave_number(const CorrelationGrid& grid) {
    const auto& spec = grid.spec;
    const std::size_t nu = spec.n_u();
    const std::size_t ntau = spec.n_tau();
    const double span = spec.u_max - spec.u_min;
    const double k_lo = two_pi / span;
    const double k_hi = pi / spec.du;

    auto power = [&](double k) {
        double total = 0.0;
        for (std::size_t it = 0; it < ntau; ++it) {
            std::complex<double> acc{0.0, 0.0};
            for (std::size_t iu = 0; iu < nu; ++iu) {
                double u = spec.u_center(iu);
                acc += (grid.at(it, iu) - 1.0) *
                       std::exp(std::complex<double>(0.0, -k * u));
            }
            total += std::norm(acc);
        }
        return total;
    };

    const double step = k_lo / 4.0;
    double best_k = k_lo, best_p = -1.0;
    for (double k = k_lo; k <= k_hi; k += step) {
        double p = power(k);
        if (p > best_p) {
            best_p = p;
            best_k = k;
        }
    }

    // The periodogram peak is biased by the negative-frequency image on coarse
    // u grids, so the polish minimizes the residual of a per-row three-parameter
    // cosine fit instead; that criterion is exact at the true wave number.
    auto misfit = [&](double k) {
        double rss = 0.0;
        for (std::size_t it = 0; it < ntau; ++it) {
            Eigen::Matrix3d xtx = Eigen::Matrix3d::Zero();
            Eigen::Vector3d xty = Eigen::Vector3d::Zero();
            for (std::size_t iu = 0; iu < nu; ++iu) {
                double u = spec.u_center(iu);
                Eigen::Vector3d x{1.0, std::cos(k * u), std::sin(k * u)};
                xtx += x * x.transpose();
                xty += x * grid.at(it, iu);
            }
            Eigen::Vector3d p = xtx.ldlt().solve(xty);
            for (std::size_t iu = 0; iu < nu; ++iu) {
                double u = spec.u_center(iu);
                double r = grid.at(it, iu) -
                           (p[0] + p[1] * std::cos(k * u) + p[2] * std::sin(k * u));
                rss += r * r;
            }
        }
        return rss;
    };

    double a = std::max(k_lo, best_k - step), b = std::min(k_hi, best_k + step);
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
    double f1 = misfit(x1), f2 = misfit(x2);
    for (int i = 0; i < 60; ++i) {
        if (f1 > f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + gr * (b - a);
            f2 = misfit(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - gr * (b - a);
            f1 = misfit(x1);
        }
    }
    return 0.5 * (a + b);
}

struct ComponentGuess {
    double omega = 0.0, phi = 0.0;
};

// Matched beam search: components are multiplied into the product model one
// at a time, each chosen to minimize the weighted misfit of the signed
// amplitude series. Plain periodogram peak picking fails here once the peak
// phase deviations are large, because cross-beat lines outgrow the
// fundamentals; a purely greedy pick fails too, because a single factor with
// a large phase excursion can mimic two smaller ones. Several leading
// candidates are therefore carried forward and the cheapest completed set
// wins. Each candidate is polished by a small least-squares pass so that
// scan-grid quantization does not misalign the higher harmonics.
std::vector<ComponentGuess> greedy_components(const std::vector<double>& tau,
                                              const std::vector<double>& a_signed,
                                              const std::vector<double>& w, int n,
                                              double dtau, double& scale_out) {
    const std::size_t rows = tau.size();

    struct State {
        std::vector<ComponentGuess> picks;
        std::vector<double> base;  // product of picked factors per row
        double cost = 0.0;
    };

    auto fit_scale_cost = [&](const std::vector<double>& base,
                              const std::vector<double>& cand, double& scale) {
        double num = 0.0, den = 0.0;
        for (std::size_t it = 0; it < rows; ++it) {
            double shape = (base.empty() ? 1.0 : base[it]) *
                           (cand.empty() ? 1.0 : cand[it]);
            num += w[it] * shape * a_signed[it];
            den += w[it] * shape * shape;
        }
        scale = den > 0.0 ? num / den : 0.0;
        double cost = 0.0;
        for (std::size_t it = 0; it < rows; ++it) {
            double shape = (base.empty() ? 1.0 : base[it]) *
                           (cand.empty() ? 1.0 : cand[it]);
            double r = a_signed[it] - scale * shape;
            cost += w[it] * r * r;
        }
        return cost;
    };

    // (scale, omega, phi) refinement of one candidate on top of a fixed base
    auto polish = [&](const std::vector<double>& base, ComponentGuess g,
                      std::vector<double>& values, double& cost) {
        Eigen::VectorXd p(3);
        double s0;
        {
            AmplitudeFactor factor(g.omega, g.phi, factor_bound(g.phi));
            std::vector<double> cand(rows);
            for (std::size_t it = 0; it < rows; ++it) cand[it] = factor(tau[it]);
            fit_scale_cost(base, cand, s0);
        }
        p << (std::abs(s0) > 1e-6 ? s0 : 1e-3), g.omega, g.phi;
        auto residual = [&](const Eigen::VectorXd& q) {
            AmplitudeFactor factor(q[1], q[2], factor_bound(q[2]));
            Eigen::VectorXd r(static_cast<Eigen::Index>(rows));
            for (std::size_t it = 0; it < rows; ++it) {
                double shape = (base.empty() ? 1.0 : base[it]) * factor(tau[it]);
                r[static_cast<Eigen::Index>(it)] =
                    std::sqrt(w[it]) * (q[0] * shape - a_signed[it]);
            }
            return r;
        };
        detail::LevMarOptions opt;
        opt.max_iterations = 40;
        opt.project = [](Eigen::VectorXd& q) {
            q[1] = std::clamp(q[1], 1e-3, 1e6);
            q[2] = std::clamp(q[2], -30.0, 30.0);  // keep Bessel arguments sane
        };
        auto res = detail::levmar(residual, p, opt);
        g.omega = std::abs(res.params[1]);
        g.phi = std::abs(res.params[2]);
        AmplitudeFactor factor(g.omega, g.phi, factor_bound(g.phi));
        values.resize(rows);
        for (std::size_t it = 0; it < rows; ++it) values[it] = factor(tau[it]);
        double s;
        cost = fit_scale_cost(base, values, s);
        return g;
    };

    State root;
    {
        double s;
        root.cost = fit_scale_cost({}, {}, s);
    }
    const double tau_range = tau.back() - tau.front() + dtau;
    const double f_lo = 0.4 / tau_range;
    const double f_hi = 0.45 / dtau;
    const double f_step = 0.15 / tau_range;
    const int beam_width[3] = {6, 3, 1};

    // The phi landscape at fixed frequency is multimodal (Bessel), and the
    // true valley can be narrower than the scan step while a large-phi comb
    // fits broadly but wrong. Keep the few best phi local minima per
    // frequency and polish each branch.
    struct Cand {
        double omega = 0.0;
        std::vector<double> phis;  // local-minimum branches, best first
        double cost = 0.0;         // of the best branch
    };
    std::vector<double> phi_grid;
    for (double phi = 0.15; phi <= 8.0; phi += 0.2) phi_grid.push_back(phi);

    // scan for one more factor on top of a fixed base, keeping the best few
    // candidates at well-separated frequencies
    auto scan_top = [&](const std::vector<double>& base, double cost_now, int width) {
        std::vector<Cand> top;
        std::vector<double> cand_values(rows), phi_cost;
        for (double f = f_lo; f <= f_hi; f += f_step) {
            const double omega = two_pi * f;
            phi_cost.clear();
            for (double phi : phi_grid) {
                AmplitudeFactor factor(omega, phi, factor_bound(phi));
                for (std::size_t it = 0; it < rows; ++it)
                    cand_values[it] = factor(tau[it]);
                double s;
                phi_cost.push_back(fit_scale_cost(base, cand_values, s));
            }
            struct Branch {
                double phi, cost;
            };
            std::vector<Branch> branches;
            for (std::size_t i = 0; i < phi_grid.size(); ++i) {
                bool is_min = (i == 0 || phi_cost[i] <= phi_cost[i - 1]) &&
                              (i + 1 == phi_grid.size() || phi_cost[i] <= phi_cost[i + 1]);
                if (is_min && phi_cost[i] < cost_now)
                    branches.push_back({phi_grid[i], phi_cost[i]});
            }
            if (branches.empty()) continue;
            std::sort(branches.begin(), branches.end(),
                      [](const Branch& a, const Branch& b) { return a.cost < b.cost; });
            if (branches.size() > 3) branches.resize(3);
            Cand best;
            best.omega = omega;
            best.cost = branches.front().cost;
            for (const auto& b : branches) best.phis.push_back(b.phi);
            // merge into the top list, enforcing frequency separation
            bool placed = false;
            for (auto& t : top) {
                if (std::abs(t.omega - best.omega) < two_pi * 3.0 * f_step) {
                    if (best.cost < t.cost) t = best;
                    placed = true;
                    break;
                }
            }
            if (!placed) top.push_back(std::move(best));
        }
        std::sort(top.begin(), top.end(),
                  [](const auto& a, const auto& b) { return a.cost < b.cost; });
        if (top.size() > static_cast<std::size_t>(width))
            top.resize(static_cast<std::size_t>(width));
        return top;
    };

    std::vector<State> beam{root};
    for (int pick = 0; pick < n; ++pick) {
        std::vector<State> next;
        for (const auto& state : beam) {
            // a state that already explains the series cannot justify more
            // factors; carry it forward unchanged so it can still win
            if (state.cost <= 1e-9 * root.cost) {
                next.push_back(state);
                continue;
            }
            const int width = beam_width[std::min(pick, 2)];
            auto top = scan_top(state.base, state.cost, width);

            bool extended = false;
            for (const auto& cand : top) {
                for (double phi0 : cand.phis) {
                    State child = state;
                    std::vector<double> values;
                    double cost;
                    ComponentGuess g = polish(state.base, {cand.omega, phi0}, values, cost);
                    if (cost > 0.995 * state.cost) continue;  // no real gain
                    child.picks.push_back(g);
                    child.cost = cost;
                    if (child.base.empty()) {
                        child.base = std::move(values);
                    } else {
                        for (std::size_t it = 0; it < rows; ++it)
                            child.base[it] *= values[it];
                    }
                    next.push_back(std::move(child));
                    extended = true;
                }
            }
            // no factor helps: keep the state as-is so a shorter but better
            // explanation is not lost to longer, worse ones
            if (!extended) next.push_back(state);
        }
        if (next.empty()) break;  // nothing left to extract
        std::sort(next.begin(), next.end(),
                  [](const auto& a, const auto& b) { return a.cost < b.cost; });
        if (std::getenv("MWC_DEBUG_BEAM")) {
            std::fprintf(stderr, "pick %d:\n", pick);
            for (const auto& s : next) {
                std::fprintf(stderr, "  cost %.6e:", s.cost);
                for (const auto& g : s.picks)
                    std::fprintf(stderr, " (%.3f Hz, %.3f)", g.omega / two_pi, g.phi);
                std::fprintf(stderr, "\n");
            }
        }
        const int keep = beam_width[std::min(pick, 2)];
        if (next.size() > static_cast<std::size_t>(keep))
            next.resize(static_cast<std::size_t>(keep));
        beam = std::move(next);
    }

    // joint least squares of (scale, omega_j, phi_j) on the series
    auto joint_polish = [&](std::vector<ComponentGuess>& comps, double& scale) {
        if (comps.empty()) return fit_scale_cost({}, {}, scale);
        std::vector<double> shape(rows);
        {
            std::vector<AmplitudeFactor> factors;
            for (const auto& g : comps)
                factors.emplace_back(g.omega, g.phi, factor_bound(g.phi));
            for (std::size_t it = 0; it < rows; ++it)
                shape[it] = product_amplitude(factors, tau[it]);
        }
        fit_scale_cost(shape, {}, scale);
        Eigen::VectorXd p(1 + 2 * comps.size());
        p[0] = std::max(scale, 1e-4);
        for (std::size_t j = 0; j < comps.size(); ++j) {
            p[1 + 2 * j] = comps[j].omega;
            p[2 + 2 * j] = comps[j].phi;
        }
        auto residual = [&](const Eigen::VectorXd& q) {
            std::vector<AmplitudeFactor> factors;
            for (std::size_t j = 0; j < comps.size(); ++j)
                factors.emplace_back(q[1 + 2 * j], q[2 + 2 * j],
                                     factor_bound(q[2 + 2 * j]));
            Eigen::VectorXd r(static_cast<Eigen::Index>(rows));
            for (std::size_t it = 0; it < rows; ++it)
                r[static_cast<Eigen::Index>(it)] =
                    std::sqrt(w[it]) *
                    (q[0] * product_amplitude(factors, tau[it]) - a_signed[it]);
            return r;
        };
        detail::LevMarOptions opt;
        opt.max_iterations = 80;
        const std::size_t nc = comps.size();
        opt.project = [nc](Eigen::VectorXd& q) {
            for (std::size_t j = 0; j < nc; ++j) {
                q[1 + 2 * j] = std::clamp(q[1 + 2 * j], 1e-3, 1e6);
                q[2 + 2 * j] = std::clamp(q[2 + 2 * j], -30.0, 30.0);
            }
        };
        auto res = detail::levmar(residual, p, opt);
        scale = res.params[0];
        for (std::size_t j = 0; j < comps.size(); ++j) {
            comps[j].omega = std::abs(res.params[1 + 2 * j]);
            comps[j].phi = std::abs(res.params[2 + 2 * j]);
        }
        return res.cost;
    };

    std::vector<ComponentGuess> found = beam.front().picks;
    double scale = 0.0;
    double cost = joint_polish(found, scale);

    // Backfit sweeps: with several strong components the first beam pick is
    // matched against the bare series and can lock onto a wrong comb that no
    // later pick undoes. Re-scan each factor against the product of the
    // others and keep any replacement that lowers the joint misfit.
    if (found.size() > 1 && cost > 1e-9 * root.cost) {
        for (int sweep = 0; sweep < 3; ++sweep) {
            bool improved = false;
            for (std::size_t j = 0; j < found.size(); ++j) {
                std::vector<double> others(rows, 1.0);
                for (std::size_t l = 0; l < found.size(); ++l) {
                    if (l == j) continue;
                    AmplitudeFactor factor(found[l].omega, found[l].phi,
                                           factor_bound(found[l].phi));
                    for (std::size_t it = 0; it < rows; ++it)
                        others[it] *= factor(tau[it]);
                }
                double base_cost;
                {
                    double s;
                    base_cost = fit_scale_cost(others, {}, s);
                }
                for (const auto& cand : scan_top(others, base_cost, 2)) {
                    for (double phi0 : cand.phis) {
                        std::vector<double> values;
                        double cand_cost;
                        ComponentGuess g =
                            polish(others, {cand.omega, phi0}, values, cand_cost);
                        auto trial = found;
                        trial[j] = g;
                        double trial_scale;
                        double trial_cost = joint_polish(trial, trial_scale);
                        if (trial_cost < 0.999 * cost) {
                            if (std::getenv("MWC_DEBUG_BEAM"))
                                std::fprintf(stderr,
                                             "backfit %d/%zu: %.6e -> %.6e (%.3f Hz, %.3f)\n",
                                             sweep, j, cost, trial_cost,
                                             g.omega / two_pi, g.phi);
                            found = std::move(trial);
                            cost = trial_cost;
                            scale = trial_scale;
                            improved = true;
                        }
                    }
                }
            }
            if (!improved) break;
        }
    }

    scale_out = scale;
    std::sort(found.begin(), found.end(),
              [](const auto& a, const auto& b) { return a.omega < b.omega; });
    return found;
}

void canonicalize(Packed& m, bool with_phases) {
    m.contrast = std::clamp(std::abs(m.contrast), 0.0, 1.0);
    m.wave_number = std::abs(m.wave_number);
    for (auto& c : m.spectrum.components) {
        c.omega = std::abs(c.omega);
        if (c.phi_peak < 0.0) {
            c.phi_peak = -c.phi_peak;
            if (with_phases) c.phase += pi;
        }
        c.phase = with_phases ? wrap_phase(c.phase) : 0.0;
    }
    std::sort(m.spectrum.components.begin(), m.spectrum.components.end(),
              [](const auto& a, const auto& b) { return a.omega < b.omega; });
}

void finish_result(FitResult& out, const detail::LevMarResult& lm, int n_par) {
    out.converged = lm.converged;
    out.iterations = lm.iterations;
    long dof = lm.residual_count - n_par;
    out.residual_rms = std::sqrt(2.0 * lm.cost / std::max<long>(lm.residual_count, 1));
    double s2 = dof > 0 ? 2.0 * lm.cost / static_cast<double>(dof) : 1.0;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(lm.jtj);
    const auto& ev = eig.eigenvalues();
    double vmax = ev.maxCoeff();
    double vmin = std::max(ev.minCoeff(), 0.0);
    out.condition_number = vmin > 0.0 ? vmax / vmin : std::numeric_limits<double>::infinity();

    // pseudo-inverse of JtJ for the per-parameter variances
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(n_par, n_par);
    for (int i = 0; i < n_par; ++i) {
        if (ev[i] > vmax * 1e-12) {
            cov += eig.eigenvectors().col(i) * eig.eigenvectors().col(i).transpose() / ev[i];
        }
    }
    out.uncertainties.resize(n_par);
    for (int i = 0; i < n_par; ++i)
        out.uncertainties[i] = std::sqrt(std::max(0.0, s2 * cov(i, i)));
}

std::vector<std::string> param_names(int n, bool with_phases) {
    std::vector<std::string> names{"contrast", "wave_number"};
    for (int j = 1; j <= n; ++j) {
        names.push_back("omega_" + std::to_string(j));
        names.push_back("phi_peak_" + std::to_string(j));
        if (with_phases) names.push_back("phase_" + std::to_string(j));
    }
    return names;
}

}  // namespace

std::vector<double> initial_guess(const CorrelationGrid& grid, int n_components) {
    if (n_components < 0) throw UsageError("initial_guess: n_components must be >= 0");
    double k = dominant_wave_number(grid);
    auto series = amplitude_series(grid, k);

    std::vector<double> tau, a_signed, sig;
    for (std::size_t it = 0; it < series.size(); ++it) {
        if (!series[it].valid) continue;
        tau.push_back(grid.spec.tau_center(it));
        a_signed.push_back(series[it].amplitude * std::cos(series[it].phase));
        sig.push_back(series[it].sigma > 0.0 ? series[it].sigma : 1.0);
    }
    // On near-noiseless grids the estimated sigmas are round-off scatter over
    // orders of magnitude; floor them relative to the signal amplitude (making
    // such grids uniform-weight) so no single row dominates the misfit.
    std::vector<double> w;
    {
        double a_max = 0.0;
        for (double a : a_signed) a_max = std::max(a_max, std::abs(a));
        auto sorted = sig;
        std::sort(sorted.begin(), sorted.end());
        double floor = std::max(0.3 * sorted[sorted.size() / 2], 1e-7 * a_max);
        for (double s : sig) {
            double eff = std::max(s, floor);
            w.push_back(1.0 / (eff * eff));
        }
    }
    if (tau.size() < 8) throw NumericalError("initial_guess: too few usable tau rows");

    double scale = 0.0;
    auto comps = greedy_components(tau, a_signed, w, n_components, grid.spec.dtau, scale);
    double contrast = std::clamp(std::sqrt(2.0 * std::max(scale, 0.0)), 0.0, 1.0);

    if (static_cast<int>(comps.size()) < n_components) {
        std::ostringstream msg;
        msg << "initial_guess: requested " << n_components
            << " components but only found " << comps.size() << ":";
        for (const auto& c : comps)
            msg << " (" << c.omega / two_pi << " Hz, phi=" << c.phi / pi << " pi)";
        throw NumericalError(msg.str());
    }

    std::vector<double> seed{contrast, k};
    for (const auto& c : comps) {
        seed.push_back(c.omega);
        seed.push_back(c.phi);
    }
    return seed;
}

FitResult fit_correlation(const FitProblem& problem) {
    const int n = problem.n_components;
    if (n < 0) throw UsageError("fit_correlation: n_components must be >= 0");
    GridData data = extract(problem.grid);

    std::vector<double> seed = problem.seed;
    const bool exact_requested = problem.mode == FitMode::exact && n > 0;
    const int stride = exact_requested ? 3 : 2;
    if (seed.empty()) {
        seed = initial_guess(problem.grid, n);
        if (exact_requested) {
            // append phase seeds of 0
            std::vector<double> s{seed[0], seed[1]};
            for (int j = 0; j < n; ++j) {
                s.push_back(seed[2 + 2 * j]);
                s.push_back(seed[3 + 2 * j]);
                s.push_back(0.0);
            }
            seed = std::move(s);
        }
    }
    if (static_cast<int>(seed.size()) != 2 + stride * n)
        throw UsageError("fit_correlation: seed length does not match mode/components");

    // Exact mode needs an integer frequency structure; spectra that do not
    // snap (or snap to a diagonal-only tuple set) fall back to the product
    // form, where the perturbation phases are not identifiable.
    ExactEvaluator evaluator;
    bool tuple_path = false;
    std::vector<long> initial_multipliers;
    if (exact_requested) {
        std::vector<double> omegas, phis;
        for (int j = 0; j < n; ++j) {
            omegas.push_back(seed[2 + 3 * j]);
            phis.push_back(seed[3 + 3 * j]);
        }
        auto order = omegas;  // commensurate() wants sorted input
        std::sort(order.begin(), order.end());
        auto freqs = commensurate(order, problem.snap_tol, problem.snap_p_max);
        if (freqs.exact) {
            int bound = problem.bound;
            if (bound < 0) {
                double max_phi = *std::max_element(phis.begin(), phis.end());
                bound = static_cast<int>(std::ceil(max_phi)) + 10;
            }
            evaluator = ExactEvaluator(freqs, order_matched_phis(omegas, phis, order),
                                       bound, problem.prune_tol);
            tuple_path = !evaluator.diagonal_only();
            initial_multipliers = freqs.multipliers;
        }
    }

    const bool with_phases = exact_requested;
    auto residual = [&](const Eigen::VectorXd& p) {
        if (with_phases && tuple_path) return exact_residual(data, evaluator, p, n,
                                                             problem.bin_average);
        if (with_phases) {
            // diagonal path: phases have no effect; evaluate the product form
            Eigen::VectorXd q(2 + 2 * n);
            q[0] = p[0];
            q[1] = p[1];
            for (int j = 0; j < n; ++j) {
                q[2 + 2 * j] = p[2 + 3 * j];
                q[3 + 2 * j] = p[3 + 3 * j];
            }
            return approx_residual(data, q, n, problem.bin_average);
        }
        return approx_residual(data, p, n, problem.bin_average);
    };

    detail::LevMarOptions opt;
    opt.max_iterations = problem.max_iterations;
    opt.project = [n, stride](Eigen::VectorXd& p) {
        p[0] = std::clamp(p[0], 1e-4, 1.5);   // contrast
        p[1] = std::max(p[1], 1e-9);          // wave number
        for (int j = 0; j < n; ++j) {
            p[2 + stride * j] = std::clamp(p[2 + stride * j], 1e-3, 1e9);
            p[3 + stride * j] = std::clamp(p[3 + stride * j], -30.0, 30.0);
        }
    };

    auto run_starts = [&](const Eigen::VectorXd& base0, int starts) {
        Rng rng(problem.rng_seed);
        detail::LevMarResult best;
        bool have_best = false;
        for (int start = 0; start < std::max(starts, 1); ++start) {
            Eigen::VectorXd p0 = base0;
            if (start > 0) {
                p0[0] *= 1.0 + 0.1 * (2.0 * rng.uniform() - 1.0);
                p0[1] *= 1.0 + 0.01 * (2.0 * rng.uniform() - 1.0);
                for (int j = 0; j < n; ++j) {
                    p0[2 + stride * j] *= 1.0 + 0.005 * (2.0 * rng.uniform() - 1.0);
                    p0[3 + stride * j] *= 1.0 + 0.1 * (2.0 * rng.uniform() - 1.0);
                    if (with_phases) p0[4 + stride * j] = rng.angle();
                }
            }
            auto res = detail::levmar(residual, p0, opt);
            if (!have_best || res.cost < best.cost) {
                best = std::move(res);
                have_best = true;
            }
        }
        return best;
    };

    // Rebuild the evaluator from a set of frequencies. Returns false when no
    // integer relation holds (the diagonal product form stays in effect).
    auto snap_to = [&](const std::vector<double>& omegas, const std::vector<double>& phis,
                       std::vector<long>& multipliers) {
        auto order = omegas;  // commensurate() wants sorted input
        std::sort(order.begin(), order.end());
        auto freqs = commensurate(order, problem.snap_tol, problem.snap_p_max);
        if (!freqs.exact) {
            tuple_path = false;
            multipliers.clear();
            return false;
        }
        int bound = problem.bound;
        if (bound < 0)
            bound = static_cast<int>(
                        std::ceil(*std::max_element(phis.begin(), phis.end()))) + 10;
        evaluator = ExactEvaluator(freqs, order_matched_phis(omegas, phis, order), bound,
                                   problem.prune_tol);
        tuple_path = !evaluator.diagonal_only();
        multipliers = freqs.multipliers;
        return true;
    };

    // One full optimization from a base vector: multi-start, then a re-snap
    // pass when the converged frequencies imply a different integer structure
    // than the base did (a perturbed seed often hides the true one).
    auto pipeline = [&](const Eigen::VectorXd& base0, int starts) {
        if (exact_requested) {
            std::vector<double> omegas, phis;
            for (int j = 0; j < n; ++j) {
                omegas.push_back(std::abs(base0[2 + 3 * j]));
                phis.push_back(std::abs(base0[3 + 3 * j]));
            }
            snap_to(omegas, phis, initial_multipliers);
        }
        auto best = run_starts(base0, starts);
        if (exact_requested) {
            std::vector<double> base_omegas, base_phis;
            for (int j = 0; j < n; ++j) {
                base_omegas.push_back(std::abs(base0[2 + 3 * j]));
                base_phis.push_back(std::abs(base0[3 + 3 * j]));
            }
            std::vector<double> omegas, phis;
            for (int j = 0; j < n; ++j) {
                omegas.push_back(std::abs(best.params[2 + 3 * j]));
                phis.push_back(std::abs(best.params[3 + 3 * j]));
            }
            std::vector<long> multipliers;
            const bool was_tuple = tuple_path;
            if (snap_to(omegas, phis, multipliers) && multipliers != initial_multipliers) {
                auto refit = run_starts(best.params, starts);
                // data-misfit costs are comparable across model branches
                if (tuple_path != was_tuple || refit.cost < best.cost) {
                    best = std::move(refit);
                } else {
                    // keep the original structure the winner was fit under
                    snap_to(base_omegas, base_phis, initial_multipliers);
                }
            } else if (!tuple_path && was_tuple) {
                // converged frequencies drifted off any integer relation;
                // restore the structure the result was actually fit under
                snap_to(base_omegas, base_phis, initial_multipliers);
            }
        }
        return best;
    };

    // Candidate bases: the seed itself, plus (when the seed was supplied by
    // the caller) a blind data-driven guess and a hybrid taking the guess
    // frequencies with the seeded amplitudes. A supplied seed can sit in the
    // basin of a wrong frequency minimum; the final cost arbitrates.
    Eigen::VectorXd base = Eigen::Map<const Eigen::VectorXd>(seed.data(), seed.size());
    std::vector<std::pair<Eigen::VectorXd, int>> bases{{base, problem.multi_start}};
    if (!problem.seed.empty() && n > 0) {
        try {
            std::vector<double> g = initial_guess(problem.grid, n);
            Eigen::VectorXd guess(2 + stride * n), hybrid = base;
            guess[0] = g[0];
            guess[1] = g[1];
            for (int j = 0; j < n; ++j) {
                guess[2 + stride * j] = g[2 + 2 * j];
                guess[3 + stride * j] = g[3 + 2 * j];
                if (with_phases) guess[4 + stride * j] = 0.0;
                hybrid[2 + stride * j] = g[2 + 2 * j];
            }
            bases.emplace_back(std::move(guess), problem.multi_start);
            bases.emplace_back(std::move(hybrid), problem.multi_start);
        } catch (const std::exception&) {
            // grid does not support blind seeding; rely on the given seed
        }
    }

    detail::LevMarResult best;
    ExactEvaluator best_evaluator;
    bool best_tuple = false, have_best = false;
    for (const auto& [b, starts] : bases) {
        auto res = pipeline(b, starts);
        if (std::getenv("MWC_DEBUG_FIT")) {
            std::fprintf(stderr, "[fit] base f=(");
            for (int j = 0; j < n; ++j)
                std::fprintf(stderr, "%s%.3f", j ? "," : "", b[2 + stride * j] / two_pi);
            std::fprintf(stderr, ") -> cost=%.6g tuple=%d f=(", res.cost, (int)tuple_path);
            for (int j = 0; j < n; ++j)
                std::fprintf(stderr, "%s%.3f", j ? "," : "",
                             res.params[2 + stride * j] / two_pi);
            std::fprintf(stderr, ")\n");
        }
        if (!have_best || res.cost < best.cost) {
            best = std::move(res);
            best_evaluator = evaluator;
            best_tuple = tuple_path;
            have_best = true;
        }
    }
    evaluator = std::move(best_evaluator);
    tuple_path = best_tuple;

    FitResult out;
    out.mode = problem.mode;
    Packed m = unpack(best.params, n, with_phases);
    canonicalize(m, with_phases && tuple_path);
    out.model = FringeModel{m.contrast, m.wave_number, 1.0};
    out.spectrum = m.spectrum;
    out.phases_reported = with_phases && tuple_path;
    out.params.assign(best.params.data(), best.params.data() + best.params.size());
    out.param_names = param_names(n, with_phases);
    if (tuple_path) evaluator.set(out.model, m.spectrum, problem.bound);
    out.off_diagonal_weight = tuple_path ? evaluator.off_diagonal_weight() : 0.0;
    finish_result(out, best, static_cast<int>(best.params.size()));
    return out;
}

FitResult fit_broadband(const CorrelationGrid& grid, const PerturbationSpectrum& spectrum,
                        double seed_contrast, double seed_wave_number, bool bin_average) {
    spectrum.validate();
    GridData data = extract(grid);

    std::vector<AmplitudeFactor> factors;
    for (const auto& c : spectrum.components)
        factors.emplace_back(c.omega, c.phi_peak, factor_bound(c.phi_peak));
    std::vector<double> shape(data.rows.size());
    for (std::size_t it = 0; it < data.rows.size(); ++it)
        shape[it] = binned_product_amplitude(factors, data.tau[it],
                                             bin_average ? data.dtau : 0.0);

    auto residual = [&](const Eigen::VectorXd& p) {
        const double half_k2 = 0.5 * p[0] * p[0];
        const double su = bin_average ? sinc(0.5 * p[1] * data.du) : 1.0;
        Eigen::VectorXd r(static_cast<Eigen::Index>(data.n_bins));
        Eigen::Index idx = 0;
        for (std::size_t it = 0; it < data.rows.size(); ++it) {
            double a = half_k2 * shape[it];
            for (const auto& b : data.rows[it])
                r[idx++] = b.w * (1.0 + a * su * std::cos(p[1] * b.u) - b.g2);
        }
        return r;
    };

    detail::LevMarOptions opt;
    opt.project = [](Eigen::VectorXd& p) {
        p[0] = std::clamp(p[0], 1e-4, 1.5);
        p[1] = std::max(p[1], 1e-9);
    };
    Eigen::VectorXd p0(2);
    p0 << seed_contrast, seed_wave_number;
    auto res = detail::levmar(residual, p0, opt);

    FitResult out;
    out.mode = FitMode::approx;
    out.model = FringeModel{std::clamp(std::abs(res.params[0]), 0.0, 1.0),
                            std::abs(res.params[1]), 1.0};
    out.spectrum = spectrum;
    out.phases_reported = false;
    out.params = {res.params[0], res.params[1]};
    out.param_names = {"contrast", "wave_number"};
    finish_result(out, res, 2);
    return out;
}

AttenuationCurve attenuation_points(const std::vector<std::pair<double, FitResult>>& fits,
                                    double reference_phi) {
    if (reference_phi <= 0.0)
        throw UsageError("attenuation_points: reference phi1(0) must be > 0");
    AttenuationCurve curve;
    for (const auto& [omega, fit] : fits) {
        if (!fit.converged)
            throw UsageError("attenuation_points: fit at " + std::to_string(omega / two_pi) +
                             " Hz did not converge");
        if (fit.spectrum.size() != 1)
            throw UsageError("attenuation_points: fits must have exactly one component");
        double raw = 1.0 - fit.spectrum.components[0].phi_peak / reference_phi;
        AttenuationCurve::Sample s;
        s.omega = omega;
        s.attenuation = std::clamp(raw, 0.0, 1.0);
        s.clamped = raw < 0.0 || raw > 1.0;
        curve.samples.push_back(s);
    }
    std::sort(curve.samples.begin(), curve.samples.end(),
              [](const auto& a, const auto& b) { return a.omega < b.omega; });
    return curve;
}

AttenuationCurve fit_attenuation(AttenuationCurve curve) {
    if (curve.samples.size() < 4)
        throw UsageError("fit_attenuation: need at least 4 samples");
    std::sort(curve.samples.begin(), curve.samples.end(),
              [](const auto& a, const auto& b) { return a.omega < b.omega; });

    double lo = 1.0, hi = 0.0;
    for (const auto& s : curve.samples) {
        lo = std::min(lo, s.attenuation);
        hi = std::max(hi, s.attenuation);
    }
    // monotonicity check beyond a noise allowance
    curve.monotone_flag = true;
    double run_max = 0.0;
    for (const auto& s : curve.samples) {
        if (s.attenuation < run_max - 0.05) curve.monotone_flag = false;
        run_max = std::max(run_max, s.attenuation);
    }

    if (hi - lo < 1e-12) {
        // degenerate flat data; report the flat curve and flag it
        curve.fitted = true;
        curve.floor = curve.ceiling = lo;
        curve.center = std::log(std::max(curve.samples.front().omega, 1e-9));
        curve.slope = 0.0;
        curve.monotone_flag = false;
        return curve;
    }

    double half = 0.5 * (lo + hi);
    double center0 = std::log(curve.samples.back().omega);
    for (const auto& s : curve.samples) {
        if (s.attenuation >= half) {
            center0 = std::log(std::max(s.omega, 1e-9));
            break;
        }
    }

    auto residual = [&](const Eigen::VectorXd& p) {
        Eigen::VectorXd r(static_cast<Eigen::Index>(curve.samples.size()));
        for (std::size_t i = 0; i < curve.samples.size(); ++i) {
            const auto& s = curve.samples[i];
            double v = p[0] + (p[1] - p[0]) /
                                  (1.0 + std::exp(-p[3] * (std::log(s.omega) - p[2])));
            r[static_cast<Eigen::Index>(i)] = v - s.attenuation;
        }
        return r;
    };
    detail::LevMarOptions opt;
    opt.project = [](Eigen::VectorXd& p) {
        p[0] = std::clamp(p[0], 0.0, 1.0);
        p[1] = std::clamp(p[1], p[0], 1.0);
        p[3] = std::max(p[3], 0.0);
    };
    Eigen::VectorXd p0(4);
    p0 << std::max(lo, 0.0), std::min(hi, 1.0), center0, 1.5;
    auto res = detail::levmar(residual, p0, opt);

    curve.fitted = true;
    curve.floor = res.params[0];
    curve.ceiling = res.params[1];
    curve.center = res.params[2];
    curve.slope = res.params[3];
    return curve;
}

}  // namespace mwc
