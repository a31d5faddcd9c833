#include "mwc/theory.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <string>
#include <unordered_map>
#include <unordered_set>

namespace mwc {

namespace {

double sinc(double x) {
    if (std::abs(x) < 1e-8) return 1.0 - x * x / 6.0;
    return std::sin(x) / x;
}

// i^p for integer p
std::complex<double> i_pow(long p) {
    switch (((p % 4) + 4) % 4) {
        case 0: return {1.0, 0.0};
        case 1: return {0.0, 1.0};
        case 2: return {-1.0, 0.0};
        default: return {0.0, -1.0};
    }
}

// J_|n|(phi) for n in [-bound, bound] per component, sign handled by caller.
std::vector<std::vector<double>> bessel_tables(const std::vector<double>& phi_peaks, int bound) {
    std::vector<std::vector<double>> tables;
    tables.reserve(phi_peaks.size());
    for (double phi : phi_peaks) tables.push_back(bessel_row(bound, phi));
    return tables;
}

double table_j(const std::vector<double>& row, int n) {
    double v = row[static_cast<std::size_t>(std::abs(n))];
    return (n < 0 && (n & 1)) ? -v : v;
}

}  // namespace

double bessel_j(int n, double x) {
    if (std::abs(x) >= 50.0)
        throw UsageError("bessel_j: |x| must be < 50 (got " + std::to_string(x) + ")");
    double sign = 1.0;
    if (x < 0.0) {
        x = -x;
        if (n & 1) sign = -sign;
    }
    if (n < 0) {
        n = -n;
        if (n & 1) sign = -sign;
    }
    return sign * std::cyl_bessel_j(static_cast<double>(n), x);
}

std::vector<double> bessel_row(int n_max, double x) {
    std::vector<double> row(static_cast<std::size_t>(n_max) + 1);
    for (int n = 0; n <= n_max; ++n) row[static_cast<std::size_t>(n)] = bessel_j(n, x);
    return row;
}

int default_bound(const PerturbationSpectrum& spectrum) {
    double max_phi = 0.0;
    for (const auto& c : spectrum.components) max_phi = std::max(max_phi, c.phi_peak);
    return static_cast<int>(std::ceil(max_phi)) + 10;
}

RationalFrequencySet commensurate(const std::vector<double>& omegas, double rel_tol,
                                  long p_max) {
    RationalFrequencySet out;
    if (omegas.empty()) {
        out.exact = true;
        return out;
    }
    for (std::size_t j = 0; j < omegas.size(); ++j) {
        if (omegas[j] <= 0.0) throw UsageError("commensurate: frequencies must be > 0");
        if (j > 0 && omegas[j] <= omegas[j - 1])
            throw UsageError("commensurate: frequencies must be strictly increasing");
    }
    // Try base = omega_1 / q for growing q; accept the first q for which all
    // ratios are integers within tolerance and multipliers stay <= p_max.
    for (long q = 1; q <= p_max; ++q) {
        double base = omegas[0] / static_cast<double>(q);
        std::vector<long> mult(omegas.size());
        bool ok = true;
        for (std::size_t j = 0; j < omegas.size(); ++j) {
            double r = omegas[j] / base;
            long p = std::lround(r);
            if (p < 1 || p > p_max || std::abs(r - static_cast<double>(p)) >
                                          rel_tol * static_cast<double>(p)) {
                ok = false;
                break;
            }
            mult[j] = p;
        }
        if (!ok) continue;
        long g = 0;
        for (long p : mult) g = std::gcd(g, p);
        if (g > 1) {
            for (auto& p : mult) p /= g;
            base *= static_cast<double>(g);
        }
        out.base = base;
        out.multipliers = std::move(mult);
        out.exact = true;
        return out;
    }
    out.exact = false;
    return out;
}

TupleSet enumerate_tuples(const RationalFrequencySet& freqs,
                          const std::vector<double>& phi_peaks, int bound,
                          std::size_t term_cap) {
    if (!freqs.exact) throw UsageError("enumerate_tuples: frequency set is incommensurate");
    if (bound < 1) throw UsageError("enumerate_tuples: bound must be >= 1");
    const std::size_t n_comp = freqs.multipliers.size();
    if (phi_peaks.size() != n_comp)
        throw UsageError("enumerate_tuples: phi_peaks/multipliers size mismatch");

    TupleSet set;
    set.bound = bound;
    if (n_comp == 0) {
        set.terms.push_back(TupleTerm{{}, {}, 1.0, {1.0, 0.0}, 0.0});
        return set;
    }

    // Suffix bounds for pruning the search over s_j = n_j + m_j.
    std::vector<long> suffix(n_comp + 1, 0);
    for (std::size_t j = n_comp; j-- > 0;)
        suffix[j] = suffix[j + 1] + 2L * bound * freqs.multipliers[j];

    std::vector<std::vector<long>> s_solutions;
    std::vector<long> s(n_comp, 0);
    auto dfs = [&](auto&& self, std::size_t j, long partial) -> void {
        if (j == n_comp) {
            if (partial == 0) s_solutions.push_back(s);
            return;
        }
        for (long sj = -2L * bound; sj <= 2L * bound; ++sj) {
            long next = partial + sj * freqs.multipliers[j];
            if (std::abs(next) > suffix[j + 1]) continue;
            s[j] = sj;
            self(self, j + 1, next);
        }
    };
    dfs(dfs, 0, 0);

    // Cost guard before expanding s-vectors into (n, m) pairs.
    std::size_t total = 0;
    for (const auto& sv : s_solutions) {
        std::size_t prod = 1;
        for (std::size_t j = 0; j < n_comp; ++j) {
            long span = 2L * bound + 1 - std::abs(sv[j]);
            prod *= static_cast<std::size_t>(span);
            if (prod > term_cap) break;
        }
        total += prod;
        if (total > term_cap)
            throw CostGuardError("enumerate_tuples: term count exceeds cap of " +
                                 std::to_string(term_cap));
    }

    auto tables = bessel_tables(phi_peaks, bound);
    set.diagonal_only = true;
    for (const auto& sv : s_solutions) {
        bool off_diagonal = std::any_of(sv.begin(), sv.end(), [](long v) { return v != 0; });
        if (off_diagonal) set.diagonal_only = false;
        // Expand each s_j into admissible (n_j, m_j = s_j - n_j) pairs.
        std::vector<int> n(n_comp), m(n_comp);
        auto expand = [&](auto&& self, std::size_t j, double jprod) -> void {
            if (j == n_comp) {
                TupleTerm term;
                term.n = n;
                term.m = m;
                term.bessel_product = jprod;
                long pdiff = 0;
                double beat = 0.0;
                for (std::size_t c = 0; c < n_comp; ++c) {
                    pdiff += n[c] - m[c];
                    beat += static_cast<double>(m[c]) *
                            (static_cast<double>(freqs.multipliers[c]) * freqs.base);
                }
                term.weight = jprod * i_pow(pdiff);
                term.beat = beat;
                set.terms.push_back(std::move(term));
                return;
            }
            int lo = static_cast<int>(std::max<long>(-bound, sv[j] - bound));
            int hi = static_cast<int>(std::min<long>(bound, sv[j] + bound));
            for (int nj = lo; nj <= hi; ++nj) {
                n[j] = nj;
                m[j] = static_cast<int>(sv[j]) - nj;
                double f = table_j(tables[j], n[j]) * table_j(tables[j], m[j]);
                self(self, j + 1, jprod * f);
            }
        };
        expand(expand, 0, 1.0);
    }
    return set;
}

double amplitude_function(const FringeModel& model, const PerturbationSpectrum& spectrum,
                          double tau, int bound) {
    if (bound < 0) bound = default_bound(spectrum);
    double prod = 1.0;
    for (const auto& c : spectrum.components) {
        auto row = bessel_row(bound, c.phi_peak);
        double f = row[0] * row[0];
        for (int n = 1; n <= bound; ++n)
            f += 2.0 * row[static_cast<std::size_t>(n)] * row[static_cast<std::size_t>(n)] *
                 std::cos(n * c.omega * tau);
        prod *= f;
    }
    return 0.5 * model.contrast * model.contrast * prod;
}

double g2_approx(const FringeModel& model, const PerturbationSpectrum& spectrum,
                 double u, double tau, int bound) {
    return 1.0 + amplitude_function(model, spectrum, tau, bound) *
                     std::cos(model.wave_number * u);
}

double g2_exact(const FringeModel& model, const PerturbationSpectrum& spectrum,
                double u, double tau, int bound) {
    if (model.contrast == 0.0) return 1.0;
    if (bound < 0) bound = default_bound(spectrum);
    auto freqs = commensurate(spectrum.omegas());
    if (!freqs.exact || spectrum.empty())
        return g2_approx(model, spectrum, u, tau, bound);
    ExactEvaluator eval(freqs, spectrum.phi_peaks(), bound);
    eval.set(model, spectrum, bound);
    return eval.g2(u, tau);
}

ExactEvaluator::ExactEvaluator(const RationalFrequencySet& freqs,
                               const std::vector<double>& phi_peaks, int bound,
                               double prune_tol, std::size_t term_cap) {
    TupleSet set = enumerate_tuples(freqs, phi_peaks, bound, term_cap);
    tuple_mode_ = true;
    diagonal_only_ = set.diagonal_only;
    bound_ = bound;
    if (prune_tol > 0.0) {
        for (auto& t : set.terms)
            if (std::abs(t.bessel_product) >= prune_tol) terms_.push_back(std::move(t));
    } else {
        terms_ = std::move(set.terms);
    }
}

void ExactEvaluator::set(const FringeModel& model, const PerturbationSpectrum& spectrum,
                         int bound) {
    model_ = model;
    spectrum_ = spectrum;
    if (bound >= 0) bound_ = bound;
    if (bound_ == 0) bound_ = default_bound(spectrum);
    off_diagonal_weight_ = 0.0;
    lines_.clear();
    phi_static_ = {1.0, 0.0};
    for (const auto& c : spectrum.components)
        phi_static_ *= std::cyl_bessel_j(0, std::abs(c.phi_peak));
    if (!tuple_mode_) return;

    const std::size_t n_comp = spectrum.size();
    auto tables = bessel_tables(spectrum.phi_peaks(), bound_);

    // <e^{i phi(t)}> picks up every integer relation sum_j q_j omega_j = 0;
    // the q vectors are exactly the distinct s = n + m sums of the tuple set.
    if (n_comp <= 8) {
        std::complex<double> acc{0.0, 0.0};
        std::unordered_set<std::uint64_t> seen;
        for (const auto& t : terms_) {
            std::uint64_t key = 0;
            bool in_range = true;
            for (std::size_t c = 0; c < n_comp; ++c) {
                int s = t.n[c] + t.m[c];
                if (std::abs(s) > bound_) in_range = false;
                key = (key << 8) | static_cast<std::uint8_t>(s + 128);
            }
            if (!seen.insert(key).second) continue;
            if (!in_range) continue;  // J_s negligible at these amplitudes
            std::complex<double> w{1.0, 0.0};
            for (std::size_t c = 0; c < n_comp; ++c) {
                int s = t.n[c] + t.m[c];
                double phase = s * (spectrum.components[c].phase + 0.5 * pi);
                w *= table_j(tables[c], s) * std::exp(std::complex<double>(0.0, phase));
            }
            acc += w;
        }
        if (!terms_.empty()) phi_static_ = acc;
    }

    // Aggregate terms with identical m-vector (hence identical beat) into
    // single complex lines so a_plus is one exp per distinct beat.
    std::unordered_map<std::uint64_t, Line> agg;
    agg.reserve(terms_.size() / 4 + 8);
    for (const auto& t : terms_) {
        double jprod = 1.0;
        double phase = 0.0;
        double beat = 0.0;
        bool diagonal = true;
        for (std::size_t c = 0; c < n_comp; ++c) {
            jprod *= table_j(tables[c], t.n[c]) * table_j(tables[c], t.m[c]);
            const auto& comp = spectrum.components[c];
            phase += t.n[c] * (comp.phase + 0.5 * pi) + t.m[c] * (comp.phase - 0.5 * pi);
            beat += t.m[c] * comp.omega;
            if (t.m[c] != -t.n[c]) diagonal = false;
        }
        std::complex<double> w = jprod * std::exp(std::complex<double>(0.0, phase));
        if (!diagonal) off_diagonal_weight_ += std::abs(w);
        std::uint64_t key;
        static_assert(sizeof(key) == sizeof(beat));
        std::memcpy(&key, &beat, sizeof(key));
        auto [it, fresh] = agg.try_emplace(key, Line{beat, {0.0, 0.0}});
        it->second.weight += w;
    }
    lines_.reserve(agg.size());
    for (auto& [key, line] : agg) lines_.push_back(line);
    std::sort(lines_.begin(), lines_.end(),
              [](const Line& a, const Line& b) { return a.beat < b.beat; });
}

std::complex<double> ExactEvaluator::a_plus(double tau, double dtau) const {
    if (!tuple_mode_) {
        // Diagonal product form; real by symmetry of the n sum. Bin averaging
        // applies a sinc per harmonic of each factor.
        double prod = 1.0;
        for (const auto& c : spectrum_.components) {
            auto row = bessel_row(bound_, c.phi_peak);
            double f = row[0] * row[0];
            for (int n = 1; n <= bound_; ++n) {
                double w = n * c.omega;
                double line = 2.0 * row[static_cast<std::size_t>(n)] *
                              row[static_cast<std::size_t>(n)] * std::cos(w * tau);
                if (dtau > 0.0) line *= sinc(0.5 * w * dtau);
                f += line;
            }
            prod *= f;
        }
        return {prod, 0.0};
    }
    std::complex<double> a{0.0, 0.0};
    for (const auto& line : lines_) {
        std::complex<double> e = std::exp(std::complex<double>(0.0, line.beat * tau));
        if (dtau > 0.0) e *= sinc(0.5 * line.beat * dtau);
        a += line.weight * e;
    }
    return a;
}

double ExactEvaluator::g2(double u, double tau, double du, double dtau) const {
    std::complex<double> a = a_plus(tau, dtau);
    double k = model_.wave_number;
    // bracket = e^{-iku} A_+ + e^{iku} conj(A_+); real part times K^2/4
    double mod = std::real(std::exp(std::complex<double>(0.0, -k * u)) * a);
    if (du > 0.0) mod *= sinc(0.5 * k * du);
    return 1.0 + 0.5 * model_.contrast * model_.contrast * mod;
}

}  // namespace mwc
