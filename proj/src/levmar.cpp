#include "levmar.hpp"

#include <cmath>

namespace mwc::detail {

namespace {

Eigen::MatrixXd numeric_jacobian(const ResidualFn& residual, const Eigen::VectorXd& p,
                                 long n_res, const LevMarOptions& opt) {
    Eigen::MatrixXd jac(n_res, p.size());
    for (Eigen::Index c = 0; c < p.size(); ++c) {
        double h = std::max(opt.jac_rel_step * std::abs(p[c]), opt.jac_abs_floor);
        Eigen::VectorXd lo = p, hi = p;
        lo[c] -= h;
        hi[c] += h;
        if (opt.project) {
            opt.project(lo);
            opt.project(hi);
        }
        double span = hi[c] - lo[c];
        if (span == 0.0) {
            jac.col(c).setZero();
            continue;
        }
        jac.col(c) = (residual(hi) - residual(lo)) / span;
    }
    return jac;
}

}  // namespace

LevMarResult levmar(const ResidualFn& residual, Eigen::VectorXd start,
                    const LevMarOptions& opt) {
    LevMarResult out;
    if (opt.project) opt.project(start);
    Eigen::VectorXd p = start;
    Eigen::VectorXd r = residual(p);
    double cost = 0.5 * r.squaredNorm();
    out.residual_count = r.size();

    double lambda = 1e-3;
    Eigen::MatrixXd jac;
    bool need_jacobian = true;
    int iter = 0;
    for (; iter < opt.max_iterations; ++iter) {
        if (need_jacobian) {
            jac = numeric_jacobian(residual, p, r.size(), opt);
            need_jacobian = false;
        }
        Eigen::MatrixXd jtj = jac.transpose() * jac;
        Eigen::VectorXd g = jac.transpose() * r;

        bool accepted = false;
        for (int attempt = 0; attempt < 40; ++attempt) {
            Eigen::MatrixXd a = jtj;
            // Marquardt scaling plus an absolute floor so exactly flat
            // (gauge) directions stay bounded.
            for (Eigen::Index d = 0; d < a.rows(); ++d)
                a(d, d) += lambda * (jtj(d, d) + 1e-12);
            Eigen::VectorXd step = a.ldlt().solve(-g);
            if (!step.allFinite()) {
                lambda *= 10.0;
                continue;
            }
            Eigen::VectorXd cand = p + step;
            if (opt.project) opt.project(cand);
            Eigen::VectorXd rc = residual(cand);
            double cost_c = 0.5 * rc.squaredNorm();
            if (cost_c <= cost) {
                double drop = cost - cost_c;
                double step_rel = (cand - p).norm() / (p.norm() + 1e-30);
                p = cand;
                r = rc;
                cost = cost_c;
                lambda = std::max(lambda * 0.3, 1e-14);
                need_jacobian = true;
                accepted = true;
                if (drop <= opt.ftol * std::max(cost, 1e-300) || step_rel <= opt.xtol) {
                    out.converged = true;
                    iter = iter + 1;
                    goto done;
                }
                break;
            }
            lambda *= 4.0;
        }
        if (!accepted) {
            // no downhill step found at any damping: local minimum
            out.converged = true;
            break;
        }
    }
done:
    out.params = p;
    out.cost = cost;
    out.iterations = iter;
    if (need_jacobian) jac = numeric_jacobian(residual, p, r.size(), opt);
    out.jtj = jac.transpose() * jac;
    return out;
}

}  // namespace mwc::detail
