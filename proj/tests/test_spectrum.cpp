#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mwc/spectrum.hpp"

using namespace mwc;

namespace {

Waveform two_tone(double rate, std::size_t n) {
    // bin-aligned tones plus a DC offset the analysis must ignore
    Waveform w;
    w.sample_rate = rate;
    const double f1 = 10.0 * rate / static_cast<double>(n);
    const double f2 = 37.0 * rate / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        double t = static_cast<double>(i) / rate;
        w.samples.push_back(0.25 + 1.4 * std::cos(two_pi * f1 * t + 0.6) +
                            0.5 * std::cos(two_pi * f2 * t - 1.9));
    }
    return w;
}

}  // namespace

TEST_CASE("fourier_components recovers bin-aligned lines and skips DC") {
    const double rate = 2000.0;
    const std::size_t n = 4000;
    auto w = two_tone(rate, n);
    auto fr = fourier_components(w, 0.01);
    REQUIRE(fr.components.size() == 2);
    CHECK(fr.parseval_residual < 1e-9);

    const double df = rate / static_cast<double>(n);
    CHECK(fr.components[0].omega == doctest::Approx(two_pi * 10.0 * df).epsilon(1e-12));
    CHECK(fr.components[0].amplitude == doctest::Approx(1.4).epsilon(1e-9));
    CHECK(std::abs(wrap_phase(fr.components[0].phase - 0.6)) < 1e-9);
    CHECK(fr.components[1].omega == doctest::Approx(two_pi * 37.0 * df).epsilon(1e-12));
    CHECK(fr.components[1].amplitude == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(std::abs(wrap_phase(fr.components[1].phase + 1.9)) < 1e-9);
}

TEST_CASE("threshold controls which lines are kept") {
    auto w = two_tone(2000.0, 4000);
    // 0.5/1.4 = 0.357: a 40% threshold drops the weaker line
    auto fr = fourier_components(w, 0.4);
    REQUIRE(fr.components.size() == 1);
    CHECK(fr.components[0].amplitude == doctest::Approx(1.4).epsilon(1e-9));
    // dropping a real line shows up as missing power
    CHECK(fr.parseval_residual > 0.05);

    CHECK(fourier_components(w, 1.0).components.empty());
}

TEST_CASE("fourier guards") {
    Waveform w;
    CHECK_THROWS_AS(fourier_components(w), UsageError);
    w.sample_rate = 100.0;
    CHECK_THROWS_AS(fourier_components(w), UsageError);
    w.samples.assign((std::size_t{1} << 20) + 1, 0.0);
    CHECK_THROWS_AS(fourier_components(w), CostGuardError);
}

TEST_CASE("apply_attenuation scales amplitudes via the curve") {
    AttenuationCurve curve;
    curve.samples = {{two_pi * 10.0, 0.2, false},
                     {two_pi * 100.0, 0.6, false},
                     {two_pi * 500.0, 0.9, false}};

    std::vector<SpectralComponent> comps = {{two_pi * 10.0, 2.0, 0.1},
                                            {two_pi * 55.0, 1.0, 0.2},
                                            {two_pi * 5.0, 1.0, 0.3}};
    auto out = apply_attenuation(comps, curve);
    REQUIRE(out.size() == 3);
    CHECK(out[0].amplitude == doctest::Approx(2.0 * 0.8).epsilon(1e-12));
    // linear interpolation between the 10 and 100 Hz samples
    double expect = 0.2 + (55.0 - 10.0) / (100.0 - 10.0) * 0.4;
    CHECK(out[1].amplitude == doctest::Approx(1.0 - expect).epsilon(1e-12));
    // below the first sample: interpolate down to the implicit (0, 0)
    CHECK(out[2].amplitude == doctest::Approx(1.0 - 0.2 * 5.0 / 10.0).epsilon(1e-12));
    // phases and frequencies carried through
    CHECK(out[0].phase == 0.1);
    CHECK(out[2].omega == two_pi * 5.0);

    SUBCASE("beyond the sampled domain") {
        comps.push_back({two_pi * 600.0, 1.0, 0.0});
        CHECK_THROWS_AS(apply_attenuation(comps, curve), UsageError);
    }
}

TEST_CASE("fitted attenuation curve evaluates the sigmoid") {
    AttenuationCurve curve;
    curve.fitted = true;
    curve.floor = 0.0;
    curve.ceiling = 0.8;
    curve.center = std::log(two_pi * 50.0);
    curve.slope = 2.0;
    CHECK(curve(0.0) == 0.0);
    CHECK(curve(two_pi * 50.0) == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(curve(two_pi * 5000.0) == doctest::Approx(0.8).epsilon(1e-3));
    CHECK(curve(two_pi * 0.5) < 0.01);
}

TEST_CASE("to_phase_deviations couples and sorts") {
    std::vector<SpectralComponent> comps = {{two_pi * 40.0, 0.5, 4.0},
                                            {two_pi * 6.0, 1.2, -0.3}};
    auto spectrum = to_phase_deviations(comps, 2.5);
    REQUIRE(spectrum.size() == 2);
    CHECK(spectrum[0].omega == two_pi * 6.0);
    CHECK(spectrum[0].phi_peak == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(spectrum[0].phase == -0.3);
    CHECK(spectrum[1].omega == two_pi * 40.0);
    CHECK(spectrum[1].phi_peak == doctest::Approx(1.25).epsilon(1e-12));
    // phases come back wrapped to (-pi, pi]
    CHECK(spectrum[1].phase == doctest::Approx(4.0 - two_pi).epsilon(1e-12));

    CHECK_THROWS_AS(to_phase_deviations(comps, 0.0), UsageError);
}
