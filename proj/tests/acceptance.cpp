// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure. Criteria may be selected by number on the command line for
// debugging (default: run all).

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <numeric>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "mwc/config.hpp"
#include "mwc/correlate.hpp"
#include "mwc/fit.hpp"
#include "mwc/reconstruct.hpp"
#include "mwc/rng.hpp"
#include "mwc/sim.hpp"
#include "mwc/spectrum.hpp"
#include "mwc/theory.hpp"
#include "oracles.hpp"

using namespace mwc;

namespace {

int g_failures = 0;

double now_s() {
    using clock = std::chrono::steady_clock;
    static const clock::time_point start = clock::now();
    return std::chrono::duration<double>(clock::now() - start).count();
}

void report(int idx, const char* name, bool ok, const std::string& detail) {
    std::printf("[%s] %2d. %s (%s)\n", ok ? "PASS" : "FAIL", idx, name, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

std::string fmt(const char* f, ...) {
    char buf[256];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

int threads() {
    return std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
}

// 41 x 51 (u, tau) grid shared by the exact-theory criteria
GridSpec oracle_spec() {
    GridSpec spec;
    spec.u_min = -2.05;
    spec.u_max = 2.05;
    spec.du = 0.1;
    spec.tau_max = 0.255;
    spec.dtau = 5e-3;
    return spec;
}

CorrelationGrid exact_surface(const FringeModel& model, const PerturbationSpectrum& s,
                              const GridSpec& spec) {
    CorrelationGrid grid;
    grid.spec = spec;
    grid.total_events = 1;
    grid.t_acq = 100.0;
    grid.window = 8.0;
    auto freqs = commensurate(s.omegas());
    ExactEvaluator ev(freqs, s.phi_peaks(), default_bound(s));
    ev.set(model, s);
    for (std::size_t it = 0; it < spec.n_tau(); ++it)
        for (std::size_t iu = 0; iu < spec.n_u(); ++iu)
            grid.g2.push_back(ev.g2(spec.u_center(iu), spec.tau_center(it)));
    return grid;
}

// --- 1. exact theory vs direct time integration -----------------------------

void criterion1() {
    double t0 = now_s();
    auto cfg = scenario_preset("fig4", 1);
    GridSpec spec = oracle_spec();

    auto freqs = commensurate(cfg.spectrum.omegas());
    ExactEvaluator ev(freqs, cfg.spectrum.phi_peaks(), default_bound(cfg.spectrum));
    ev.set(cfg.model, cfg.spectrum);
    const double base_period = two_pi / freqs.base;

    double max_dev = 0.0;
    for (std::size_t it = 0; it < spec.n_tau(); ++it)
        for (std::size_t iu = 0; iu < spec.n_u(); ++iu) {
            double u = spec.u_center(iu), tau = spec.tau_center(it);
            double ref = oracle::g2_time_integral(cfg.model, cfg.spectrum, u, tau,
                                                  base_period, 400, 128);
            max_dev = std::max(max_dev, std::abs(ev.g2(u, tau) - ref));
        }
    double dt = now_s() - t0;
    report(1, "exact g2 matches direct time integration", max_dev <= 1e-3 && dt <= 60.0,
           fmt("max dev %.2e, %.1f s", max_dev, dt));
}

// --- 2. A(0) = K^2/2 --------------------------------------------------------

void criterion2() {
    Rng rng(2);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        auto n = static_cast<std::size_t>(1 + rng.raw() % 5);
        PerturbationSpectrum s;
        double f = rng.uniform(1.0, 10.0);
        for (std::size_t j = 0; j < n; ++j) {
            s.components.push_back({two_pi * f, rng.uniform(0.0, two_pi), rng.angle()});
            f += rng.uniform(1.0, 40.0);
        }
        FringeModel model = make_fringe_model(rng.uniform(0.2, 0.9), rng.uniform(1.0, 4.0));
        double a0 = amplitude_function(model, s, 0.0);
        worst = std::max(worst, std::abs(a0 - 0.5 * model.contrast * model.contrast));
    }
    report(2, "A(0) = K^2/2 for 100 random spectra", worst <= 1e-10,
           fmt("max dev %.2e", worst));
}

// --- 3. incommensurate exact == approx --------------------------------------

void criterion3() {
    Rng rng(3);
    double worst = 0.0;
    for (int trial = 0; trial < 25; ++trial) {
        auto n = static_cast<std::size_t>(1 + rng.raw() % 3);
        PerturbationSpectrum s;
        double f = rng.uniform(3.0, 20.0);
        for (std::size_t j = 0; j < n; ++j) {
            // irrational-by-construction frequency ratios
            s.components.push_back(
                {two_pi * f * std::sqrt(rng.uniform(1.0, 9.0)), rng.uniform(0.2, 4.0),
                 rng.angle()});
            f += rng.uniform(5.0, 50.0);
        }
        std::sort(s.components.begin(), s.components.end(),
                  [](const auto& a, const auto& b) { return a.omega < b.omega; });
        FringeModel model = make_fringe_model(0.629, 2.08);
        for (int p = 0; p < 40; ++p) {
            double u = rng.uniform(-4.0, 4.0), tau = rng.uniform(0.0, 0.3);
            worst = std::max(worst, std::abs(g2_exact(model, s, u, tau) -
                                             g2_approx(model, s, u, tau)));
        }
    }
    report(3, "incommensurate g2_exact equals g2_approx", worst <= 1e-10,
           fmt("max dev %.2e over 1000 points", worst));
}

// --- 4. tuple enumeration vs brute force ------------------------------------

bool tuples_equal_brute(long p1, long p2, int bound) {
    RationalFrequencySet freqs;
    freqs.base = two_pi;
    freqs.multipliers = {p1, p2};
    freqs.exact = true;
    auto set = enumerate_tuples(freqs, {1.0, 1.0}, bound);

    std::set<std::array<int, 4>> got, want;
    for (const auto& t : set.terms) got.insert({t.n[0], t.n[1], t.m[0], t.m[1]});
    for (int n1 = -bound; n1 <= bound; ++n1)
        for (int n2 = -bound; n2 <= bound; ++n2)
            for (int m1 = -bound; m1 <= bound; ++m1)
                for (int m2 = -bound; m2 <= bound; ++m2)
                    if ((n1 + m1) * p1 + (n2 + m2) * p2 == 0)
                        want.insert({n1, n2, m1, m2});
    return got == want;
}

void criterion4() {
    RationalFrequencySet freqs;
    freqs.base = two_pi;
    freqs.multipliers = {1, 2};
    freqs.exact = true;
    auto set = enumerate_tuples(freqs, {1.0, 1.0}, 2);
    bool witness = false;
    for (const auto& t : set.terms)
        witness |= t.n[0] == 2 && t.n[1] == -1 && t.m[0] == 2 && t.m[1] == -1;

    bool all_equal = true;
    int pairs = 0;
    for (long p1 = 1; p1 <= 6 && all_equal; ++p1)
        for (long p2 = 1; p2 <= 6 && all_equal; ++p2) {
            if (std::gcd(p1, p2) != 1) continue;
            for (int bound = 1; bound <= 4; ++bound, ++pairs)
                if (!tuples_equal_brute(p1, p2, bound)) {
                    all_equal = false;
                    break;
                }
        }
    report(4, "tuple enumeration matches brute-force scan", witness && all_equal,
           fmt("witness {2,2,-1,-1} %s, %d multiplier/bound combos equal",
               witness ? "present" : "missing", pairs));
}

// --- 5. end-to-end closed loop (two components) -----------------------------

void criterion5() {
    double t0 = now_s();
    auto cfg = scenario_preset("fig2", 1234);
    auto events = sample_events(cfg);

    auto washed = contrast_of(events, cfg.model.wave_number);

    GridSpec spec;  // defaults: du 0.05, dtau 1e-3, tau_max 0.25
    auto hist = pair_histogram(events, spec, threads());
    auto grid = normalize(hist, events.size(), events.t_acq, events.window);

    FitProblem problem;
    problem.grid = grid;
    problem.n_components = 2;
    auto fit = fit_correlation(problem);

    bool params_ok = fit.converged && fit.spectrum.size() == 2;
    std::string why;
    if (params_ok) {
        params_ok &= std::abs(fit.model.contrast - 0.629) <= 0.03;
        params_ok &= std::abs(fit.model.wavelength() - 2.08) <= 0.02 * 2.08;
        for (std::size_t j = 0; j < 2; ++j) {
            params_ok &= std::abs(fit.spectrum[j].omega - cfg.spectrum[j].omega) <=
                         two_pi * 0.1;
            params_ok &= std::abs(fit.spectrum[j].phi_peak - cfg.spectrum[j].phi_peak) <=
                         0.05 * pi;
        }
    }

    ReconstructionPlan plan;
    plan.lambda = fit.model.wavelength();
    plan.components = fit.spectrum;
    plan.phase_free = {true, true};
    // fitted frequencies carry ~mHz errors; over 140 s that dephases the
    // shift, so let the scan polish them against the events
    plan.refine_frequencies = true;
    auto scan = phase_scan(events, plan, fit.model.wave_number, threads());

    double dt = now_s() - t0;
    bool ok = washed.contrast <= 0.15 && params_ok &&
              scan.best.contrast >= 0.95 * 0.629 && dt <= 600.0;
    report(5, "two-component closed loop (simulate/correlate/fit/reconstruct)", ok,
           fmt("washed %.3f, K %.3f, lambda %.3f, restored %.3f, %.0f s",
               washed.contrast, fit.model.contrast, fit.model.wavelength(),
               scan.best.contrast, dt));
}

// --- 6. exact-mode phase recovery from perturbed seeds ----------------------

void criterion6() {
    auto cfg = scenario_preset("fig4", 1);
    auto grid = exact_surface(cfg.model, cfg.spectrum, oracle_spec());

    Rng rng(6);
    int good = 0;
    for (int run = 0; run < 10; ++run) {
        auto jitter = [&](double v) { return v * (1.0 + 0.1 * (2.0 * rng.uniform() - 1.0)); };
        FitProblem problem;
        problem.grid = grid;
        problem.n_components = 2;
        problem.mode = FitMode::exact;
        problem.bin_average = false;
        problem.rng_seed = 600 + static_cast<std::uint64_t>(run);
        problem.seed = {jitter(0.629), jitter(two_pi / 2.08)};
        for (const auto& c : cfg.spectrum.components) {
            problem.seed.push_back(jitter(c.omega));
            problem.seed.push_back(jitter(c.phi_peak));
            problem.seed.push_back(jitter(c.phase));
        }
        auto fit = fit_correlation(problem);
        if (!fit.converged || fit.spectrum.size() != 2) continue;

        bool ok = std::abs(fit.model.contrast - 0.629) <= 1e-6;
        ok &= std::abs(fit.model.wave_number - two_pi / 2.08) <= 1e-6;
        for (std::size_t j = 0; j < 2; ++j) {
            ok &= std::abs(fit.spectrum[j].omega - cfg.spectrum[j].omega) <= 1e-6;
            ok &= std::abs(fit.spectrum[j].phi_peak - cfg.spectrum[j].phi_peak) <= 1e-6;
        }
        ok &= fit.phases_reported &&
              oracle::phase_gauge_residual(
                  {1, 2}, {fit.spectrum[0].phase, fit.spectrum[1].phase},
                  {cfg.spectrum[0].phase, cfg.spectrum[1].phase}) <= 1e-6;
        good += ok;
    }
    report(6, "exact-mode recovery from 10%-perturbed seeds", good >= 9,
           fmt("%d of 10 runs recovered all 8 parameters", good));
}

// --- 7. three-component closed loop in exact mode ---------------------------

void criterion7() {
    double t0 = now_s();
    auto cfg = scenario_preset("fig5", 99);
    auto events = sample_events(cfg);

    GridSpec spec;
    spec.du = 0.1;
    spec.dtau = 2e-3;
    auto hist = pair_histogram(events, spec, threads());
    auto grid = normalize(hist, events.size(), events.t_acq, events.window);

    FitProblem approx;
    approx.grid = grid;
    approx.n_components = 3;
    auto stage1 = fit_correlation(approx);

    // the drive frequencies are applied deliberately and therefore known;
    // amplitudes and phases start neutral and are recovered by the fit
    FitProblem exact;
    exact.grid = grid;
    exact.n_components = 3;
    exact.mode = FitMode::exact;
    exact.multi_start = 3;
    exact.seed = {stage1.converged ? stage1.model.contrast : 0.5,
                  stage1.converged ? stage1.model.wave_number : two_pi / 2.08};
    for (const auto& c : cfg.spectrum.components) {
        exact.seed.push_back(c.omega);
        exact.seed.push_back(2.0);
        exact.seed.push_back(0.0);
    }
    auto fit = fit_correlation(exact);

    bool ok = fit.converged && fit.mode == FitMode::exact && fit.spectrum.size() == 3;
    double worst_phi = 0.0;
    if (ok) {
        ok &= std::abs(fit.model.contrast - 0.613) <= 0.03;
        for (std::size_t j = 0; j < 3; ++j)
            worst_phi = std::max(
                worst_phi, std::abs(fit.spectrum[j].phi_peak - cfg.spectrum[j].phi_peak));
        ok &= worst_phi <= 0.07 * pi;
    }
    report(7, "three-component exact-mode closed loop", ok,
           fmt("K %.3f, worst phi dev %.3f pi, %.0f s", fit.model.contrast,
               worst_phi / pi, now_s() - t0));
}

// --- 8. broad-band pipeline -------------------------------------------------

void criterion8() {
    double t0 = now_s();
    // a long record keeps the line grid fine, so low-order integer relations
    // between the 50 frequencies (which would add off-diagonal terms the
    // product form ignores) are rare
    auto noise = synthesize_noise_signal(50, 150.0, {}, 1000.0, 40.0, 88);

    AttenuationCurve shield;
    shield.samples = {{two_pi * 5.0, 0.05, false},
                      {two_pi * 30.0, 0.15, false},
                      {two_pi * 70.0, 0.40, false},
                      {two_pi * 110.0, 0.60, false},
                      {two_pi * 160.0, 0.72, false}};

    auto lines = fourier_components(noise.waveform, 0.01);
    auto damped = apply_attenuation(lines.components, shield);
    // strong coupling washes the single-event fringe (prod J0 ~ 0.02), which
    // the uniform-marginal normalization of g2 assumes
    auto spectrum = to_phase_deviations(damped, 0.85);

    SimConfig cfg;
    cfg.seed = 8;
    cfg.duration = 160.0;  // integer number of 40 s record periods
    cfg.model = make_fringe_model(0.629, 2.08);
    cfg.spectrum = spectrum;
    auto events = sample_events(cfg);

    GridSpec spec;
    auto hist = pair_histogram(events, spec, threads());
    auto grid = normalize(hist, events.size(), events.t_acq, events.window);

    // predicted bin-averaged amplitude from the product form
    ExactEvaluator ev;
    ev.set(cfg.model, spectrum);
    auto measured = amplitude_series(grid, cfg.model.wave_number);
    int inside = 0, total = 0;
    const double half_k2 = 0.5 * cfg.model.contrast * cfg.model.contrast;
    for (std::size_t it = 0; it < measured.size(); ++it) {
        if (!measured[it].valid || measured[it].sigma <= 0.0) continue;
        // average the complex amplitude across the tau bin; the per-factor
        // sinc shortcut is too coarse where the decay is steep
        std::complex<double> acc = 0.0;
        for (int s = 0; s < 16; ++s)
            acc += ev.a_plus((static_cast<double>(it) + (s + 0.5) / 16.0) * spec.dtau, 0.0);
        double pred = half_k2 * std::abs(acc / 16.0);
        ++total;
        inside += std::abs(measured[it].amplitude - pred) <= 3.0 * measured[it].sigma;
    }

    auto fit = fit_broadband(grid, spectrum, 0.5, two_pi / 2.0);
    double frac = total > 0 ? static_cast<double>(inside) / total : 0.0;
    bool ok = frac >= 0.95 && fit.converged &&
              std::abs(fit.model.contrast - 0.629) <= 0.05;
    report(8, "broad-band spectrum/attenuation/simulate/compare pipeline", ok,
           fmt("%.1f%% of %d tau bins within 3 sigma, K %.3f, %.0f s", 100.0 * frac,
               total, fit.model.contrast, now_s() - t0));
}

// --- 9. estimator correctness and performance -------------------------------

void criterion9() {
    Rng rng(9);
    bool equal = true;
    for (int trial = 0; trial < 200 && equal; ++trial) {
        auto m = static_cast<std::size_t>(50 + rng.raw() % 1951);
        EventSet set;
        set.t_acq = rng.uniform(0.5, 2.0);
        set.window = 6.0;
        std::vector<double> times;
        for (std::size_t i = 0; i < m; ++i) times.push_back(rng.uniform(0.0, set.t_acq));
        std::sort(times.begin(), times.end());
        for (double t : times) set.events.push_back({t, rng.uniform(-3.0, 3.0)});

        GridSpec spec;
        spec.u_min = -3.0;
        spec.u_max = 3.0;
        spec.du = 0.1;
        spec.tau_max = rng.uniform(0.02, set.t_acq / 10.0);
        spec.dtau = spec.tau_max / 50.0;
        auto hist = pair_histogram(set, spec);
        auto brute = oracle::brute_pairs(set.events, spec.u_min, spec.u_max, spec.du,
                                         spec.tau_max, spec.dtau);
        equal = hist.counts == brute.counts && hist.dropped_outside_u == brute.dropped;
    }

    SimConfig cfg;
    cfg.seed = 9;
    cfg.model = make_fringe_model(0.629, 2.08);
    auto events = sample_events(cfg);  // 5 kHz x 140 s = 7e5 events
    GridSpec spec;                     // tau_max 0.25, dtau 1e-3, du 0.05
    double t0 = now_s();
    auto serial = pair_histogram(events, spec, 1);
    double dt = now_s() - t0;
    auto parallel = pair_histogram(events, spec, 4);
    bool identical = serial.counts == parallel.counts;

    report(9, "pair histogram: brute-force equality, speed, parallel determinism",
           equal && dt <= 60.0 && identical,
           fmt("200 brute checks %s, %zu events in %.1f s, parallel %s",
               equal ? "equal" : "DIFFER", events.size(), dt,
               identical ? "bit-identical" : "DIFFERS"));
}

// --- 10. attenuation closed loop --------------------------------------------

void criterion10() {
    double t0 = now_s();
    auto att_true = [](double omega) {
        return 0.85 / (1.0 + std::exp(-1.6 * (std::log(omega) - std::log(two_pi * 70.0))));
    };
    const double phi_ref = 2.0;
    Rng rng(10);

    std::vector<std::pair<double, FitResult>> fits;
    bool all_fit = true;
    for (double f : {5.0, 10.0, 20.0, 40.0, 80.0, 150.0, 250.0, 350.0, 500.0}) {
        double omega = two_pi * f;
        SimConfig cfg;
        cfg.duration = 60.0;
        cfg.seed = 1000 + static_cast<std::uint64_t>(f);
        cfg.model = make_fringe_model(0.629, 2.08);
        cfg.spectrum.components = {{omega, phi_ref * (1.0 - att_true(omega)), rng.angle()}};
        auto events = sample_events(cfg);

        GridSpec spec;
        spec.tau_max = std::clamp(4.0 / f, 0.02, 0.25);
        spec.dtau = spec.tau_max / 250.0;
        auto hist = pair_histogram(events, spec, threads());
        auto grid = normalize(hist, events.size(), events.t_acq, events.window);

        FitProblem problem;
        problem.grid = grid;
        problem.n_components = 1;
        auto fit = fit_correlation(problem);
        all_fit &= fit.converged;
        fits.emplace_back(omega, fit);
    }

    auto curve = attenuation_points(fits, phi_ref);
    double worst_point = 0.0;
    for (const auto& s : curve.samples)
        worst_point = std::max(worst_point, std::abs(s.attenuation - att_true(s.omega)));

    auto fitted = fit_attenuation(curve);
    double worst_curve = 0.0;
    for (double f = 5.0; f <= 500.0; f *= 1.1)
        worst_curve = std::max(worst_curve,
                               std::abs(fitted(two_pi * f) - att_true(two_pi * f)));

    bool ok = all_fit && fitted.fitted && worst_point <= 0.03 && worst_curve <= 0.05;
    report(10, "single-frequency ladder attenuation closed loop", ok,
           fmt("worst point dev %.3f, worst curve dev %.3f, %.0f s", worst_point,
               worst_curve, now_s() - t0));
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> want;
    for (int i = 1; i < argc; ++i) want.insert(std::atoi(argv[i]));
    auto enabled = [&](int idx) { return want.empty() || want.count(idx) > 0; };

    if (enabled(1)) criterion1();
    if (enabled(2)) criterion2();
    if (enabled(3)) criterion3();
    if (enabled(4)) criterion4();
    if (enabled(5)) criterion5();
    if (enabled(6)) criterion6();
    if (enabled(7)) criterion7();
    if (enabled(8)) criterion8();
    if (enabled(9)) criterion9();
    if (enabled(10)) criterion10();

    if (g_failures > 0) {
        std::printf("%d criteria failed\n", g_failures);
        return 1;
    }
    std::printf("all criteria passed\n");
    return 0;
}
