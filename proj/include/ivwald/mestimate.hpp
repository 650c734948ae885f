#ifndef IVWALD_MESTIMATE_HPP
#define IVWALD_MESTIMATE_HPP

#include "ivwald/common.hpp"
#include "ivwald/dataset.hpp"

#include <functional>
#include <string>

namespace ivwald {

// A stacked estimating-equation system P_n m(O; theta) = 0. The residual
// callback writes the q-vector m(O_i; theta) for sample i; it must be a
// deterministic function of (i, theta).
struct EstimatingSystem {
    Index dim = 0;
    std::string label;
    std::function<void(Index i, const VectorXd& theta, Eigen::Ref<VectorXd> out)> residual;
};

struct SolveOptions {
    double tol = 1e-9;        // sup-norm of P_n m at the root
    int max_iterations = 500;
    double fd_step = 1e-6;    // central-difference Jacobian, scaled by |theta|
    int max_halvings = 40;
};

struct SolveResult {
    VectorXd theta;
    double residual_norm = std::numeric_limits<double>::quiet_NaN();
    MatrixXd jacobian;  // P_n dm/dtheta at the returned point
    bool converged = false;
    int iterations = 0;
};

// Damped Newton with finite-difference Jacobian and halving line search on
// the residual norm; one restart from init + 0.1 per coordinate on stall;
// Levenberg damping (1e-8 escalating x10 up to 1e2) when the Jacobian is
// singular. Throws NonConvergenceError (best iterate attached) on failure.
SolveResult solve(const EstimatingSystem& sys, const Dataset& ds, const VectorXd& init,
                  const SolveOptions& opts = {});

// Weighted empirical average P_n m(O; theta), pairwise-reduced in index
// order.
VectorXd average_residual(const EstimatingSystem& sys, const Dataset& ds, const VectorXd& theta);

// Sandwich covariance (1/n) A^{-1} B A^{-T} with A = P_n dm/dtheta (central
// finite differences) and B = P_n m m^T, symmetrized before return. theta
// must solve the stacked system. Throws NumericError when A is singular.
MatrixXd sandwich_variance(const EstimatingSystem& sys, const Dataset& ds, const VectorXd& theta,
                           double fd_step = 1e-6);

}  // namespace ivwald

#endif
