#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mwc/reconstruct.hpp"
#include "mwc/sim.hpp"

using namespace mwc;

namespace {

// deterministic event set drawn from the fringe density 1 + K cos(k y + delta)
// by inverse-CDF sampling at stratified quantiles
EventSet fringe_events(double contrast, double wave_number, double delta,
                       double window, std::size_t count) {
    EventSet set;
    set.t_acq = 1.0;
    set.window = window;
    const double half = 0.5 * window;
    auto cdf = [&](double y) {
        // integral of 1 + K cos(k y + delta) from -half to y, unnormalized
        return (y + half) + contrast / wave_number *
                                (std::sin(wave_number * y + delta) -
                                 std::sin(-wave_number * half + delta));
    };
    const double total = cdf(half);
    for (std::size_t i = 0; i < count; ++i) {
        double target = total * (static_cast<double>(i) + 0.5) / static_cast<double>(count);
        double lo = -half, hi = half;
        for (int it = 0; it < 60; ++it) {
            double mid = 0.5 * (lo + hi);
            (cdf(mid) < target ? lo : hi) = mid;
        }
        set.events.push_back({set.t_acq * static_cast<double>(i) /
                                  static_cast<double>(count),
                              0.5 * (lo + hi)});
    }
    return set;
}

}  // namespace

TEST_CASE("shift_positions applies the phase-to-position remap") {
    ReconstructionPlan plan;
    plan.lambda = 2.0;
    plan.components.components = {{two_pi * 5.0, 1.2, 0.4}};

    EventSet set;
    set.t_acq = 1.0;
    set.window = 8.0;
    set.events = {{0.0, 0.5}, {0.13, -1.25}};

    std::size_t outside = 123;
    auto shifted = shift_positions(set, plan, &outside);
    REQUIRE(shifted.size() == 2);
    CHECK(outside == 0);
    for (std::size_t i = 0; i < 2; ++i) {
        double expect = set.events[i].y -
                        2.0 / two_pi * 1.2 * std::cos(two_pi * 5.0 * set.events[i].t + 0.4);
        CHECK(shifted.events[i].t == set.events[i].t);
        CHECK(shifted.events[i].y == doctest::Approx(expect).epsilon(1e-14));
    }
}

TEST_CASE("an opposite-phase plan inverts the shift") {
    ReconstructionPlan plan;
    plan.lambda = 2.08;
    plan.components.components = {{two_pi * 6.0, 2.3, 0.9}, {two_pi * 40.0, 1.1, -2.0}};

    SimConfig cfg;
    cfg.rate = 2000.0;
    cfg.duration = 3.0;
    cfg.seed = 11;
    cfg.model = make_fringe_model(0.5, 2.08);
    auto events = sample_events(cfg);

    ReconstructionPlan inverse = plan;
    for (auto& c : inverse.components.components) c.phase = wrap_phase(c.phase + pi);

    auto round_trip = shift_positions(shift_positions(events, plan), inverse);
    REQUIRE(round_trip.size() == events.size());
    for (std::size_t i = 0; i < events.size(); ++i)
        CHECK(round_trip.events[i].y == doctest::Approx(events.events[i].y).epsilon(1e-12));
}

TEST_CASE("plan validation and free-phase guards") {
    ReconstructionPlan plan;
    plan.lambda = 2.0;
    plan.components.components = {{two_pi * 5.0, 1.0, 0.0}};

    EventSet set;
    set.t_acq = 1.0;
    set.window = 8.0;
    set.events = {{0.0, 0.0}, {0.5, 1.0}, {0.9, -1.0}};

    SUBCASE("negative wavelength") {
        plan.lambda = -1.0;
        CHECK_THROWS_AS(shift_positions(set, plan), UsageError);
    }
    SUBCASE("phase_free size mismatch") {
        plan.phase_free = {true, false};
        CHECK_THROWS_AS(shift_positions(set, plan), UsageError);
    }
    SUBCASE("free phases block a direct shift") {
        plan.phase_free = {true};
        CHECK_THROWS_AS(shift_positions(set, plan), UsageError);
    }
    SUBCASE("more than three free phases is refused") {
        plan.components.components = {{two_pi * 5.0, 1.0, 0.0},
                                      {two_pi * 10.0, 1.0, 0.0},
                                      {two_pi * 15.0, 1.0, 0.0},
                                      {two_pi * 20.0, 1.0, 0.0}};
        plan.phase_free = {true, true, true, true};
        CHECK_THROWS_AS(phase_scan(set, plan, two_pi / 2.0), CostGuardError);
    }
}

TEST_CASE("contrast_of recovers contrast and fringe phase") {
    const double k = two_pi / 2.08;
    auto set = fringe_events(0.42, k, 0.8, 8.0, 200000);
    auto est = contrast_of(set, k);
    CHECK(est.contrast == doctest::Approx(0.42).epsilon(2e-3));
    CHECK(std::abs(wrap_phase(est.fringe_phase - 0.8)) < 5e-3);
    CHECK(est.mean_level > 0.0);
    CHECK(est.sigma < 0.01);

    SUBCASE("explicit window restriction") {
        auto core = contrast_of(set, k, 32, -3.0, 3.0);
        CHECK(core.contrast == doctest::Approx(0.42).epsilon(5e-3));
    }
    SUBCASE("guards") {
        CHECK_THROWS_AS(contrast_of(set, 0.0), UsageError);
        CHECK_THROWS_AS(contrast_of(set, k, 8), UsageError);
        CHECK_THROWS_AS(contrast_of(EventSet{}, k), UsageError);
        // restriction narrower than three histogram bins
        CHECK_THROWS_AS(contrast_of(set, k, 32, 0.0, 0.1), NumericalError);
    }
}

TEST_CASE("phase scan recovers the correction phase of a simulated stream") {
    SimConfig cfg;
    cfg.rate = 3000.0;
    cfg.duration = 40.0;
    cfg.seed = 21;
    cfg.model = make_fringe_model(0.629, 2.08);
    cfg.spectrum.components = {{two_pi * 10.0, 0.8 * pi, 0.7}};
    auto events = sample_events(cfg);

    // dephased before correction
    auto washed = contrast_of(events, cfg.model.wave_number);
    CHECK(washed.contrast < 0.15);

    ReconstructionPlan plan;
    plan.lambda = 2.08;
    plan.components.components = {{two_pi * 10.0, 0.8 * pi, 0.0}};
    plan.phase_free = {true};

    auto scan = phase_scan(events, plan, cfg.model.wave_number, 2);
    REQUIRE(scan.map_shape.size() == 1);
    CHECK(scan.map_shape[0] == 100);
    CHECK(scan.contrast_map.size() == 100);
    CHECK(scan.plan.free_count() == 0);

    // the remap subtracts the correction, so the recovered phase sits at
    // truth + pi
    double found = scan.plan.components[0].phase;
    CHECK(std::abs(wrap_phase(found - (0.7 + pi))) < 0.05);
    CHECK(scan.plan.components[0].omega == doctest::Approx(two_pi * 10.0).epsilon(1e-4));
    CHECK(scan.best.contrast > 0.55);

    SUBCASE("applying the scanned plan restores the fringes") {
        auto fixed = shift_positions(events, scan.plan);
        double shift = plan.lambda / two_pi * plan.components.total_phi();
        auto est = contrast_of(fixed, cfg.model.wave_number, 32, -4.0 + shift, 4.0 - shift);
        CHECK(est.contrast > 0.55);
    }
}

TEST_CASE("fully specified plans skip the scan but score the shifted stream") {
    SimConfig cfg;
    cfg.rate = 2000.0;
    cfg.duration = 20.0;
    cfg.seed = 33;
    cfg.model = make_fringe_model(0.6, 2.0);
    auto events = sample_events(cfg);

    ReconstructionPlan plan;
    plan.lambda = 2.0;
    plan.components.components = {{two_pi * 8.0, 0.3, 1.1}};
    auto scan = phase_scan(events, plan, cfg.model.wave_number);
    CHECK(scan.map_shape.empty());
    REQUIRE(scan.contrast_map.size() == 1);
    CHECK(scan.contrast_map[0] == scan.best.contrast);
    // the unperturbed stream loses contrast when a bogus correction is applied
    CHECK(scan.best.contrast < 0.6);
}

TEST_CASE("scan refuses a window swamped by the shift amplitude") {
    SimConfig cfg;
    cfg.rate = 500.0;
    cfg.duration = 5.0;
    cfg.seed = 3;
    cfg.window = 2.0;
    cfg.model = make_fringe_model(0.5, 2.0);
    auto events = sample_events(cfg);

    ReconstructionPlan plan;
    plan.lambda = 2.0;
    plan.components.components = {{two_pi * 10.0, 4.0, 0.0}};  // shift ~ 1.3 mm each way
    plan.phase_free = {true};
    CHECK_THROWS_AS(phase_scan(events, plan, two_pi / 2.0), NumericalError);
}
