#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "mwc/core.hpp"
#include "mwc/spectrum.hpp"

namespace mwc {

struct SimConfig {
    double rate = 5000.0;    // mean events/s
    double duration = 140.0; // s
    double window = 8.0;     // detector window Y, mm
    std::uint64_t seed = 1;
    FringeModel model;
    PerturbationSpectrum spectrum;

    void validate() const;

    // True when some perturbation frequency reaches the mean count rate;
    // such components cannot be resolved by the correlation analysis.
    bool undersampled() const;
};

// Homogeneous Poisson arrivals: exponential gaps with mean 1/rate, sorted,
// all < duration.
std::vector<double> sample_arrival_times(double rate, double duration, std::uint64_t seed);

// Draws an event stream from the perturbed fringe density via rejection
// sampling with the flat envelope f0 (1 + K); acceptance is >= 1/2.
// Bit-reproducible for a fixed seed.
EventSet sample_events(const SimConfig& config);

struct NoiseSignal {
    Waveform waveform;
    // Ground truth at unit coupling: phi_peak holds the waveform amplitude.
    PerturbationSpectrum truth;
};

// Sum of component_count cosines at distinct FFT-bin-aligned frequencies in
// (0, cutoff_hz], random phases uniform in (-pi, pi]. amplitude_profile maps
// frequency in Hz to amplitude (empty = flat 1.0).
NoiseSignal synthesize_noise_signal(std::size_t component_count, double cutoff_hz,
                                    const std::function<double(double)>& amplitude_profile,
                                    double sample_rate, double duration, std::uint64_t seed);

}  // namespace mwc
