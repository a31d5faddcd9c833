#include "mwc/core.hpp"

#include <cmath>
#include <string>

namespace mwc {

void EventSet::validate() const {
    if (t_acq <= 0.0) throw UsageError("EventSet: t_acq must be > 0");
    if (window <= 0.0) throw UsageError("EventSet: window must be > 0");
    double prev = 0.0;
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto& e = events[i];
        if (e.t < prev)
            throw UsageError("EventSet: events out of time order at index " + std::to_string(i));
        if (e.t > t_acq)
            throw UsageError("EventSet: event time beyond t_acq at index " + std::to_string(i));
        prev = e.t;
    }
}

void FringeModel::validate() const {
    if (contrast < 0.0 || contrast > 1.0)
        throw UsageError("FringeModel: contrast must be in [0, 1]");
    if (wave_number <= 0.0) throw UsageError("FringeModel: wave_number must be > 0");
    if (f0 <= 0.0) throw UsageError("FringeModel: f0 must be > 0");
}

void PerturbationSpectrum::validate() const {
    double prev = 0.0;
    for (std::size_t j = 0; j < components.size(); ++j) {
        const auto& c = components[j];
        if (c.phi_peak < 0.0)
            throw UsageError("PerturbationSpectrum: phi_peak must be >= 0");
        if (j > 0 && c.omega <= prev)
            throw UsageError("PerturbationSpectrum: omegas must be strictly increasing");
        prev = c.omega;
    }
}

std::vector<double> PerturbationSpectrum::omegas() const {
    std::vector<double> w;
    w.reserve(components.size());
    for (const auto& c : components) w.push_back(c.omega);
    return w;
}

std::vector<double> PerturbationSpectrum::phi_peaks() const {
    std::vector<double> p;
    p.reserve(components.size());
    for (const auto& c : components) p.push_back(c.phi_peak);
    return p;
}

double PerturbationSpectrum::total_phi() const {
    double s = 0.0;
    for (const auto& c : components) s += c.phi_peak;
    return s;
}

double phase_shift(const PerturbationSpectrum& spectrum, double t) {
    double phi = 0.0;
    for (const auto& c : spectrum.components)
        phi += c.phi_peak * std::cos(c.omega * t + c.phase);
    return phi;
}

double intensity(const FringeModel& model, const PerturbationSpectrum& spectrum,
                 double y, double t) {
    return model.f0 *
           (1.0 + model.contrast * std::cos(model.wave_number * y + phase_shift(spectrum, t)));
}

double wrap_phase(double phase) {
    double p = std::remainder(phase, two_pi);  // (-pi, pi], remainder gives [-pi, pi]
    if (p <= -pi) p += two_pi;
    return p;
}

}  // namespace mwc
