#include "mwc/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>

namespace mwc {

void Waveform::validate() const {
    if (sample_rate <= 0.0) throw UsageError("Waveform: sample_rate must be > 0");
    if (samples.empty()) throw UsageError("Waveform: no samples");
}

FourierResult fourier_components(const Waveform& w, double threshold) {
    w.validate();
    FourierResult out;
    if (threshold >= 1.0) return out;  // flagged empty: nothing can pass
    const std::size_t n = w.samples.size();
    if (n > (std::size_t{1} << 20))
        throw CostGuardError("fourier_components: waveform too long for direct DFT");

    const double df = w.sample_rate / static_cast<double>(n);
    const std::size_t n_bins = n / 2;  // positive frequencies, DC excluded

    double mean = 0.0;
    for (double s : w.samples) mean += s;
    mean /= static_cast<double>(n);

    std::vector<SpectralComponent> all;
    all.reserve(n_bins);
    double max_amp = 0.0;
    for (std::size_t k = 1; k <= n_bins; ++k) {
        std::complex<double> x{0.0, 0.0};
        const double step = -two_pi * static_cast<double>(k) / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
            x += w.samples[i] * std::exp(std::complex<double>(0.0, step * double(i)));
        double amp = (2 * k == n ? 1.0 : 2.0) * std::abs(x) / static_cast<double>(n);
        all.push_back(SpectralComponent{two_pi * df * static_cast<double>(k), amp,
                                        std::arg(x)});
        max_amp = std::max(max_amp, amp);
    }

    double kept_power = 0.0;
    for (const auto& c : all) {
        if (c.amplitude > threshold * max_amp) {
            out.components.push_back(c);
            kept_power += 0.5 * c.amplitude * c.amplitude;
        }
    }
    double signal_power = 0.0;
    for (double s : w.samples) signal_power += (s - mean) * (s - mean);
    signal_power /= static_cast<double>(n);
    out.parseval_residual =
        signal_power > 0.0 ? std::abs(signal_power - kept_power) / signal_power : 0.0;
    return out;
}

std::vector<SpectralComponent> apply_attenuation(std::vector<SpectralComponent> components,
                                                 const AttenuationCurve& curve) {
    const double max_omega = curve.max_omega();
    for (auto& c : components) {
        if (c.omega > max_omega)
            throw UsageError("apply_attenuation: component at " +
                             std::to_string(c.omega / two_pi) +
                             " Hz beyond the attenuation curve domain");
        c.amplitude *= 1.0 - curve(c.omega);
    }
    return components;
}

PerturbationSpectrum to_phase_deviations(const std::vector<SpectralComponent>& components,
                                         double coupling) {
    if (coupling <= 0.0) throw UsageError("to_phase_deviations: coupling must be > 0");
    PerturbationSpectrum spectrum;
    spectrum.components.reserve(components.size());
    for (const auto& c : components)
        spectrum.components.push_back(
            PerturbationComponent{c.omega, coupling * c.amplitude, wrap_phase(c.phase)});
    std::sort(spectrum.components.begin(), spectrum.components.end(),
              [](const auto& a, const auto& b) { return a.omega < b.omega; });
    spectrum.validate();
    return spectrum;
}

}  // namespace mwc
