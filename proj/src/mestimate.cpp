#include "ivwald/mestimate.hpp"

#include <cmath>

namespace ivwald {

VectorXd average_residual(const EstimatingSystem& sys, const Dataset& ds, const VectorXd& theta) {
    const Index n = ds.n();
    VectorXd sum = pairwise_sum_vec(n, sys.dim, [&](Index i, VectorXd& buf) {
        sys.residual(i, theta, buf);
        buf *= ds.w[i];
    });
    return sum / static_cast<double>(n);
}

namespace {

MatrixXd fd_jacobian(const EstimatingSystem& sys, const Dataset& ds, const VectorXd& theta,
                     double step) {
    const Index q = sys.dim;
    MatrixXd jac(q, theta.size());
    VectorXd probe = theta;
    for (Index k = 0; k < theta.size(); ++k) {
        const double h = std::max(step, step * std::abs(theta[k]));
        probe[k] = theta[k] + h;
        const VectorXd up = average_residual(sys, ds, probe);
        probe[k] = theta[k] - h;
        const VectorXd down = average_residual(sys, ds, probe);
        probe[k] = theta[k];
        jac.col(k) = (up - down) / (2.0 * h);
    }
    return jac;
}

// Newton direction, falling back to escalating Levenberg damping when the
// Jacobian solve is unusable.
VectorXd newton_step(const MatrixXd& jac, const VectorXd& g) {
    Eigen::FullPivLU<MatrixXd> lu(jac);
    if (lu.isInvertible()) {
        VectorXd s = lu.solve(-g);
        if (s.allFinite()) return s;
    }
    const MatrixXd jtj = jac.transpose() * jac;
    const VectorXd jtg = jac.transpose() * g;
    for (double lambda = 1e-8; lambda <= 1e2; lambda *= 10.0) {
        MatrixXd damped = jtj;
        damped.diagonal().array() += lambda;
        Eigen::LDLT<MatrixXd> ldlt(damped);
        if (ldlt.info() != Eigen::Success) continue;
        VectorXd s = ldlt.solve(-jtg);
        if (s.allFinite() && s.norm() > 0.0) return s;
    }
    throw NumericError("estimating-equation Jacobian is singular beyond Levenberg damping");
}

}  // namespace

SolveResult solve(const EstimatingSystem& sys, const Dataset& ds, const VectorXd& init,
                  const SolveOptions& opts) {
    if (sys.dim != init.size())
        throw DomainError("solve: init dimension " + std::to_string(init.size()) +
                          " does not match system dimension " + std::to_string(sys.dim));
    if (!init.allFinite()) throw DomainError("solve: init must be finite");

    VectorXd best_theta = init;
    double best_norm = std::numeric_limits<double>::infinity();

    for (int attempt = 0; attempt < 2; ++attempt) {
        VectorXd theta = init;
        if (attempt == 1) theta.array() += 0.1;  // single perturbed restart
        VectorXd g = average_residual(sys, ds, theta);
        double gnorm = g.lpNorm<Eigen::Infinity>();

        SolveResult res;
        for (res.iterations = 0; res.iterations < opts.max_iterations; ++res.iterations) {
            if (!std::isfinite(gnorm)) break;
            if (gnorm < best_norm) {
                best_norm = gnorm;
                best_theta = theta;
            }
            if (gnorm < opts.tol) {
                res.theta = theta;
                res.residual_norm = gnorm;
                res.converged = true;
                res.jacobian = fd_jacobian(sys, ds, theta, opts.fd_step);
                return res;
            }
            const MatrixXd jac = fd_jacobian(sys, ds, theta, opts.fd_step);
            VectorXd step;
            try {
                step = newton_step(jac, g);
            } catch (const NumericError&) {
                break;  // stall; try the perturbed restart
            }
            double t = 1.0;
            bool improved = false;
            for (int half = 0; half < opts.max_halvings; ++half, t *= 0.5) {
                const VectorXd trial = theta + t * step;
                const VectorXd gt = average_residual(sys, ds, trial);
                const double tn = gt.lpNorm<Eigen::Infinity>();
                if (std::isfinite(tn) && tn < gnorm) {
                    theta = trial;
                    g = gt;
                    gnorm = tn;
                    improved = true;
                    break;
                }
            }
            if (!improved) break;  // line search stalled
        }
    }
    throw NonConvergenceError("estimating-equation solve failed for '" + sys.label +
                                  "' (best residual sup-norm " + format_g17(best_norm) + ")",
                              best_theta, best_norm);
}

MatrixXd sandwich_variance(const EstimatingSystem& sys, const Dataset& ds, const VectorXd& theta,
                           double fd_step) {
    const Index n = ds.n();
    const Index q = sys.dim;
    const MatrixXd bread = fd_jacobian(sys, ds, theta, fd_step);

    // B = P_n m m^T, accumulated in index order.
    MatrixXd meat = MatrixXd::Zero(q, q);
    {
        // Pairwise reduction over vec(m m^T) for determinism and accuracy.
        VectorXd flat = pairwise_sum_vec(n, q * q, [&](Index i, VectorXd& buf) {
            VectorXd m(q);
            sys.residual(i, theta, m);
            Eigen::Map<MatrixXd>(buf.data(), q, q) = ds.w[i] * (m * m.transpose());
        });
        meat = Eigen::Map<MatrixXd>(flat.data(), q, q) / static_cast<double>(n);
    }

    Eigen::FullPivLU<MatrixXd> lu(bread);
    if (!lu.isInvertible())
        throw NumericError(
            "sandwich bread matrix is singular; consider bootstrap standard errors");
    const MatrixXd binv = lu.inverse();
    MatrixXd cov = (binv * meat * binv.transpose()) / static_cast<double>(n);
    cov = 0.5 * (cov + cov.transpose().eval());
    return cov;
}

}  // namespace ivwald
