#include "mwc/attenuation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mwc {

double AttenuationCurve::operator()(double omega) const {
    if (omega <= 0.0) return 0.0;  // 0 Hz reference is unshielded by definition
    if (fitted) {
        double v = floor + (ceiling - floor) / (1.0 + std::exp(-slope * (std::log(omega) - center)));
        return std::clamp(v, 0.0, 1.0);
    }
    // no fit yet: piecewise-linear through the samples (assumed sorted)
    if (samples.empty()) return 0.0;
    if (omega <= samples.front().omega) {
        // interpolate down to the implicit (0, 0) reference
        return samples.front().attenuation * omega / samples.front().omega;
    }
    for (std::size_t i = 1; i < samples.size(); ++i) {
        if (omega <= samples[i].omega) {
            const auto& a = samples[i - 1];
            const auto& b = samples[i];
            double f = (omega - a.omega) / (b.omega - a.omega);
            return a.attenuation + f * (b.attenuation - a.attenuation);
        }
    }
    return samples.back().attenuation;
}

double AttenuationCurve::max_omega() const {
    if (samples.empty()) return std::numeric_limits<double>::infinity();
    double m = 0.0;
    for (const auto& s : samples) m = std::max(m, s.omega);
    return m;
}

}  // namespace mwc
