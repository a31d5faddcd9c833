#pragma once

#include <cstddef>
#include <numbers>
#include <vector>

#include "mwc/errors.hpp"

namespace mwc {

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

// One detector hit: arrival time in seconds, impact position in mm.
struct EventRecord {
    double t = 0.0;
    double y = 0.0;
};

// A full acquisition: events ordered by time, with the acquisition window
// metadata needed by the finite-window correlation estimator.
struct EventSet {
    std::vector<EventRecord> events;
    double t_acq = 0.0;   // acquisition time T, s
    double window = 0.0;  // detector window Y, mm (positions in [-Y/2, Y/2])

    std::size_t size() const { return events.size(); }

    // Throws UsageError if the time ordering or window metadata is broken.
    void validate() const;
};

// Unperturbed fringe pattern f(y) = f0 (1 + K cos(k y)).
struct FringeModel {
    double contrast = 0.0;     // K, in [0, 1]
    double wave_number = 1.0;  // k, rad/mm
    double f0 = 1.0;           // normalization, 1/(mm s)

    double wavelength() const { return two_pi / wave_number; }
    void validate() const;
};

inline FringeModel make_fringe_model(double contrast, double wavelength_mm, double f0 = 1.0) {
    return FringeModel{contrast, two_pi / wavelength_mm, f0};
}

// One harmonic dephasing component: phase excursion phi_peak * cos(omega t + phase).
struct PerturbationComponent {
    double omega = 0.0;     // rad/s
    double phi_peak = 0.0;  // peak phase deviation, rad, >= 0
    double phase = 0.0;     // perturbation phase at t = 0, rad, in (-pi, pi]
};

// Superposition of N harmonic components; N = 0 means unperturbed.
struct PerturbationSpectrum {
    std::vector<PerturbationComponent> components;

    std::size_t size() const { return components.size(); }
    bool empty() const { return components.empty(); }
    PerturbationComponent& operator[](std::size_t j) { return components[j]; }
    const PerturbationComponent& operator[](std::size_t j) const { return components[j]; }

    // Checks phi_peak >= 0 and strictly increasing omegas.
    void validate() const;

    std::vector<double> omegas() const;
    std::vector<double> phi_peaks() const;
    double total_phi() const;  // sum of phi_peak, bounds |phase_shift|
};

// Collective fringe phase at time t: sum_j phi_j cos(omega_j t + phase_j).
double phase_shift(const PerturbationSpectrum& spectrum, double t);

// Impact probability density f(y, t) = f0 (1 + K cos(k y + phase_shift(t))).
double intensity(const FringeModel& model, const PerturbationSpectrum& spectrum,
                 double y, double t);

// Wraps an angle to (-pi, pi].
double wrap_phase(double phase);

}  // namespace mwc
