#pragma once

// Internal damped Gauss-Newton (Levenberg-Marquardt) driver with a
// central-difference Jacobian. Small problems only; solves the normal
// equations directly.

#include <Eigen/Dense>
#include <functional>

namespace mwc::detail {

struct LevMarOptions {
    int max_iterations = 300;
    double ftol = 1e-15;  // relative cost decrease
    double xtol = 1e-13;  // relative step size
    double jac_rel_step = 1e-6;
    double jac_abs_floor = 1e-8;
    // Clamp parameters back into their feasible region after each step.
    std::function<void(Eigen::VectorXd&)> project;
};

struct LevMarResult {
    Eigen::VectorXd params;
    double cost = 0.0;  // 0.5 * sum of squared residuals
    bool converged = false;
    int iterations = 0;
    Eigen::MatrixXd jtj;  // at the solution
    long residual_count = 0;
};

using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

LevMarResult levmar(const ResidualFn& residual, Eigen::VectorXd start,
                    const LevMarOptions& opt = {});

}  // namespace mwc::detail
