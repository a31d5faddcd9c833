#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "mwc/core.hpp"

namespace mwc {

// Bessel function of the first kind J_n(x), integer order, |x| < 50.
// Negative orders and arguments via J_{-n}(x) = (-1)^n J_n(x).
double bessel_j(int n, double x);

// J_0(x) .. J_{n_max}(x) in one call.
std::vector<double> bessel_row(int n_max, double x);

// Truncation order for the Bessel sums: ceil(max phi_peak) + 10. The tail
// beyond that is bounded by the super-exponential decay (x/2)^n / n!.
int default_bound(const PerturbationSpectrum& spectrum);

// Outcome of the commensurability test: omega_j = multipliers[j] * base
// with gcd(multipliers) = 1, or exact = false when no integer relation
// with multipliers <= p_max exists within tolerance.
struct RationalFrequencySet {
    double base = 0.0;  // omega_0, rad/s
    std::vector<long> multipliers;
    bool exact = false;
};

RationalFrequencySet commensurate(const std::vector<double>& omegas,
                                  double rel_tol = 1e-9, long p_max = 1000);

// One term of the double Bessel sum: integer vectors n, m with
// sum_j (n_j + m_j) p_j = 0 exactly.
struct TupleTerm {
    std::vector<int> n, m;
    double bessel_product = 0.0;       // prod_j J_{n_j}(phi_j) J_{m_j}(phi_j)
    std::complex<double> weight{0.0};  // bessel_product * chi^+ at all phases = 0
    double beat = 0.0;                 // sum_j m_j omega_j, rad/s
};

struct TupleSet {
    std::vector<TupleTerm> terms;
    int bound = 0;
    bool diagonal_only = true;  // every solution has m_j = -n_j
};

// All integer duplets {n_j, m_j} with |n_j|, |m_j| <= bound satisfying the
// commensurability constraint, by meet-in-the-middle over the per-component
// sums s_j = n_j + m_j. Aborts with CostGuardError beyond term_cap terms.
TupleSet enumerate_tuples(const RationalFrequencySet& freqs,
                          const std::vector<double>& phi_peaks, int bound,
                          std::size_t term_cap = 10'000'000);

// Amplitude A(tau) of the product-form correlation:
// (K^2/2) prod_j [J_0(phi_j)^2 + 2 sum_n J_n(phi_j)^2 cos(n omega_j tau)].
double amplitude_function(const FringeModel& model, const PerturbationSpectrum& spectrum,
                          double tau, int bound = -1);

// Approximate (diagonal) correlation function 1 + A(tau) cos(k u).
double g2_approx(const FringeModel& model, const PerturbationSpectrum& spectrum,
                 double u, double tau, int bound = -1);

// Exact correlation function. Commensurate spectra go through the full
// tuple sum; incommensurate ones reduce to the diagonal product form.
double g2_exact(const FringeModel& model, const PerturbationSpectrum& spectrum,
                double u, double tau, int bound = -1);

// Reusable evaluator for repeated (u, tau) sweeps and fitting. The tuple
// structure (n, m lists) is fixed at construction from the integer
// multipliers; set() recomputes weights for a concrete parameter set, so
// frequencies may drift continuously off the exact ratios during a fit.
class ExactEvaluator {
public:
    // Diagonal (product-form) evaluator, used when no integer relation holds.
    ExactEvaluator() = default;

    // Tuple-sum evaluator. prune_phi/prune_tol drop terms whose Bessel
    // product at the reference amplitudes stays below prune_tol (0 = keep all).
    ExactEvaluator(const RationalFrequencySet& freqs, const std::vector<double>& phi_peaks,
                   int bound, double prune_tol = 0.0, std::size_t term_cap = 10'000'000);

    bool tuple_mode() const { return tuple_mode_; }
    bool diagonal_only() const { return diagonal_only_; }
    std::size_t term_count() const { return terms_.size(); }

    // Total |weight| over off-diagonal terms at the current parameters;
    // diagnostic for phase identifiability.
    double off_diagonal_weight() const { return off_diagonal_weight_; }

    // Time-averaged fringe factor <e^{i phi(t)}>: prod_j J_0(phi_j) for a
    // diagonal structure, plus integer-relation terms in tuple mode. The
    // single-particle fringe of the time-integrated pattern has contrast
    // K |phi_static|.
    std::complex<double> phi_static() const { return phi_static_; }

    // Bind model parameters. Must be called before evaluation.
    void set(const FringeModel& model, const PerturbationSpectrum& spectrum, int bound = -1);

    // A_+(tau); with dtau > 0 each beat line is averaged over the tau bin
    // (analytic sinc factor), matching a binned estimate at the bin center.
    std::complex<double> a_plus(double tau, double dtau = 0.0) const;

    // g2(u, tau) = 1 + (K^2/2) Re[e^{-iku} A_+]; du/dtau > 0 bin-average.
    double g2(double u, double tau, double du = 0.0, double dtau = 0.0) const;

private:
    struct Line {
        double beat = 0.0;  // rad/s
        std::complex<double> weight{0.0};
    };

    bool tuple_mode_ = false;
    bool diagonal_only_ = true;
    std::vector<TupleTerm> terms_;  // structure only; weights recomputed in set()

    // state bound by set()
    FringeModel model_;
    PerturbationSpectrum spectrum_;
    int bound_ = 0;
    std::vector<Line> lines_;  // aggregated by beat frequency (tuple mode)
    double off_diagonal_weight_ = 0.0;
    std::complex<double> phi_static_{1.0, 0.0};
};

}  // namespace mwc
