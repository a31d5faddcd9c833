#pragma once

#include <vector>

#include "mwc/core.hpp"

namespace mwc {

// Frequency-dependent shield attenuation 1 - phi1(omega)/phi1(0), as
// measured samples plus an optional fitted monotone sigmoid in log-frequency.
struct AttenuationCurve {
    struct Sample {
        double omega = 0.0;        // rad/s
        double attenuation = 0.0;  // in [0, 1]
        bool clamped = false;      // raw value fell outside [0, 1]
    };

    std::vector<Sample> samples;

    bool fitted = false;
    double floor = 0.0;    // low-frequency asymptote
    double ceiling = 0.0;  // high-frequency asymptote
    double center = 0.0;   // ln(omega) at the midpoint
    double slope = 0.0;    // >= 0 for a monotone curve
    bool monotone_flag = true;  // false when the data is non-monotone beyond noise

    // Fitted curve value; attenuation(0) = 0 by construction (the 0 Hz
    // reference point is unshielded).
    double operator()(double omega) const;

    double max_omega() const;
};

}  // namespace mwc
