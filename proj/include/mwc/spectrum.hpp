#pragma once

#include <vector>

#include "mwc/attenuation.hpp"
#include "mwc/core.hpp"

namespace mwc {

// Uniformly sampled real signal.
struct Waveform {
    std::vector<double> samples;
    double sample_rate = 0.0;  // Hz

    double duration() const {
        return sample_rate > 0.0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
    }
    void validate() const;
};

// One spectral line of a measured noise waveform.
struct SpectralComponent {
    double omega = 0.0;      // rad/s
    double amplitude = 0.0;  // waveform units
    double phase = 0.0;      // rad
};

// Discrete Fourier decomposition; keeps components whose amplitude exceeds
// threshold * max amplitude. The DC term is never returned (it shifts the
// pattern but does not dephase). parseval_residual records the relative
// power mismatch between the kept lines and the waveform.
struct FourierResult {
    std::vector<SpectralComponent> components;
    double parseval_residual = 0.0;
};

FourierResult fourier_components(const Waveform& w, double threshold = 0.01);

// amplitude_j -> amplitude_j * (1 - attenuation(omega_j)); throws UsageError
// when a component lies beyond the curve's sampled domain.
std::vector<SpectralComponent> apply_attenuation(std::vector<SpectralComponent> components,
                                                 const AttenuationCurve& curve);

// phi_j = coupling * amplitude_j (rad per waveform unit); omega and phase
// carried through. Components are returned sorted by omega.
PerturbationSpectrum to_phase_deviations(const std::vector<SpectralComponent>& components,
                                         double coupling);

}  // namespace mwc
