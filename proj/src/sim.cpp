#include "mwc/sim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mwc/rng.hpp"

namespace mwc {

void SimConfig::validate() const {
    if (rate <= 0.0) throw UsageError("SimConfig: rate must be > 0");
    if (duration < 0.0) throw UsageError("SimConfig: duration must be >= 0");
    if (window <= 0.0) throw UsageError("SimConfig: window must be > 0");
    model.validate();
    spectrum.validate();
}

bool SimConfig::undersampled() const {
    for (const auto& c : spectrum.components)
        if (c.omega / two_pi >= rate) return true;
    return false;
}

std::vector<double> sample_arrival_times(double rate, double duration, std::uint64_t seed) {
    if (rate <= 0.0) throw UsageError("sample_arrival_times: rate must be > 0");
    std::vector<double> times;
    if (duration <= 0.0) return times;
    times.reserve(static_cast<std::size_t>(rate * duration * 1.1) + 16);
    Rng rng(seed);
    double t = rng.exponential(1.0 / rate);
    while (t < duration) {
        times.push_back(t);
        t += rng.exponential(1.0 / rate);
    }
    return times;
}

EventSet sample_events(const SimConfig& config) {
    config.validate();
    EventSet set;
    set.t_acq = std::max(config.duration, 1e-12);
    set.window = config.window;
    if (config.duration <= 0.0) return set;

    // Times and positions from one RNG stream: arrival draws first, then the
    // per-event rejection draws, in event order.
    Rng rng(config.seed);
    std::vector<double> times;
    times.reserve(static_cast<std::size_t>(config.rate * config.duration * 1.1) + 16);
    {
        double t = rng.exponential(1.0 / config.rate);
        while (t < config.duration) {
            times.push_back(t);
            t += rng.exponential(1.0 / config.rate);
        }
    }

    const double k = config.model.wave_number;
    const double contrast = config.model.contrast;
    const double half = 0.5 * config.window;
    set.events.reserve(times.size());
    for (double t : times) {
        const double phi = phase_shift(config.spectrum, t);
        double y;
        for (;;) {
            y = rng.uniform(-half, half);
            const double accept = (1.0 + contrast * std::cos(k * y + phi)) / (1.0 + contrast);
            if (rng.uniform() < accept) break;
        }
        set.events.push_back(EventRecord{t, y});
    }
    return set;
}

NoiseSignal synthesize_noise_signal(std::size_t component_count, double cutoff_hz,
                                    const std::function<double(double)>& amplitude_profile,
                                    double sample_rate, double duration, std::uint64_t seed) {
    if (sample_rate <= 0.0 || duration <= 0.0)
        throw UsageError("synthesize_noise_signal: sample_rate and duration must be > 0");
    if (cutoff_hz >= 0.5 * sample_rate)
        throw UsageError("synthesize_noise_signal: cutoff must be below Nyquist (" +
                         std::to_string(0.5 * sample_rate) + " Hz)");

    NoiseSignal out;
    out.waveform.sample_rate = sample_rate;
    const auto n_samples = static_cast<std::size_t>(std::llround(sample_rate * duration));
    out.waveform.samples.assign(n_samples, 0.0);
    if (component_count == 0) return out;

    // Frequencies sit on the DFT bin grid of the full record so a rectangular
    // window recovers them without leakage.
    const double df = 1.0 / duration;
    const auto max_bin = static_cast<std::size_t>(std::floor(cutoff_hz / df));
    if (max_bin < component_count)
        throw UsageError("synthesize_noise_signal: fewer than component_count distinct "
                         "bins below cutoff; increase duration");

    Rng rng(seed);
    std::vector<std::size_t> bins(max_bin);
    for (std::size_t i = 0; i < max_bin; ++i) bins[i] = i + 1;  // skip DC
    // partial Fisher-Yates: pick component_count distinct bins
    for (std::size_t i = 0; i < component_count; ++i) {
        std::size_t j = i + static_cast<std::size_t>(rng.uniform() * double(bins.size() - i));
        std::swap(bins[i], bins[j]);
    }
    bins.resize(component_count);
    std::sort(bins.begin(), bins.end());

    out.truth.components.reserve(component_count);
    for (std::size_t b : bins) {
        const double f = static_cast<double>(b) * df;
        const double amp = amplitude_profile ? amplitude_profile(f) : 1.0;
        out.truth.components.push_back(PerturbationComponent{two_pi * f, amp, rng.angle()});
    }
    for (std::size_t i = 0; i < n_samples; ++i) {
        const double t = static_cast<double>(i) / sample_rate;
        double s = 0.0;
        for (const auto& c : out.truth.components)
            s += c.phi_peak * std::cos(c.omega * t + c.phase);
        out.waveform.samples[i] = s;
    }
    return out;
}

}  // namespace mwc
