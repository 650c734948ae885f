#include "ivwald/nuisance.hpp"

#include <cmath>
#include <functional>

namespace ivwald {

namespace {

double clamp_prob(double p) {
    if (p < kProbClamp) return kProbClamp;
    if (p > 1.0 - kProbClamp) return 1.0 - kProbClamp;
    return p;
}

void check_full_rank(const MatrixXd& x, const VectorXd& w, const std::string& what) {
    MatrixXd scaled = w.array().sqrt().matrix().asDiagonal() * x;
    Eigen::ColPivHouseholderQR<MatrixXd> qr(scaled);
    if (qr.rank() < x.cols())
        throw NumericError(what + ": design matrix is rank deficient (singular information)");
}

// Damped Newton ascent on an exact log-likelihood with analytic gradient
// and a finite-difference Hessian of that gradient. Starts at zero.
NuisanceFit maximize_loglik(const std::string& tag, Index dim,
                            const std::function<double(const VectorXd&, VectorXd*)>& loglik,
                            double tol = 1e-8, int max_iterations = 200) {
    VectorXd theta = VectorXd::Zero(dim);
    VectorXd grad(dim);
    double value = loglik(theta, &grad);
    if (!std::isfinite(value))
        throw NumericError(tag + ": log-likelihood not finite at the starting point");

    NuisanceFit fit;
    fit.model_tag = tag;
    VectorXd best_theta = theta;
    double best_value = value;
    double best_gnorm = grad.lpNorm<Eigen::Infinity>();

    auto fd_hessian = [&](const VectorXd& at) {
        MatrixXd hess(dim, dim);
        VectorXd probe = at, gup(dim), gdown(dim);
        for (Index k = 0; k < dim; ++k) {
            const double h = 1e-6 * std::max(1.0, std::abs(at[k]));
            probe[k] = at[k] + h;
            loglik(probe, &gup);
            probe[k] = at[k] - h;
            loglik(probe, &gdown);
            probe[k] = at[k];
            hess.col(k) = (gup - gdown) / (2.0 * h);
        }
        return MatrixXd(0.5 * (hess + hess.transpose()));
    };

    for (fit.iterations = 0; fit.iterations < max_iterations; ++fit.iterations) {
        const double gnorm = grad.lpNorm<Eigen::Infinity>();
        if (gnorm < best_gnorm) {
            best_gnorm = gnorm;
            best_theta = theta;
            best_value = value;
        }
        if (gnorm < tol) {
            fit.coefficients = theta;
            fit.converged = true;
            fit.final_gradient_norm = gnorm;
            fit.log_likelihood = value;
            return fit;
        }
        if (theta.lpNorm<Eigen::Infinity>() > 1e4)
            throw NonConvergenceError(
                tag + ": coefficients diverging (possible perfect separation)", best_theta,
                best_gnorm);

        const MatrixXd hess = fd_hessian(theta);
        VectorXd step;
        bool have_step = false;
        for (double lambda = 0.0; lambda <= 1e6; lambda = (lambda == 0.0 ? 1e-8 : lambda * 10.0)) {
            MatrixXd a = -hess;
            a.diagonal().array() += lambda;
            Eigen::LDLT<MatrixXd> ldlt(a);
            if (ldlt.info() != Eigen::Success) continue;
            VectorXd s = ldlt.solve(grad);
            if (!s.allFinite()) continue;
            if (s.dot(grad) > 0.0) {  // ascent direction
                step = s;
                have_step = true;
                break;
            }
        }
        if (!have_step)
            throw NonConvergenceError(tag + ": no ascent direction found", best_theta, best_gnorm);

        double t = 1.0;
        bool improved = false;
        for (int half = 0; half < 50; ++half, t *= 0.5) {
            const VectorXd trial = theta + t * step;
            VectorXd gt(dim);
            const double vt = loglik(trial, &gt);
            if (std::isfinite(vt) && vt > value) {
                theta = trial;
                value = vt;
                grad = gt;
                improved = true;
                break;
            }
        }
        if (!improved)
            throw NonConvergenceError(tag + ": line search stalled (gradient sup-norm " +
                                          format_g17(grad.lpNorm<Eigen::Infinity>()) + ")",
                                      best_theta, best_gnorm);
    }
    throw NonConvergenceError(tag + ": no convergence after " + std::to_string(max_iterations) +
                                  " iterations (best gradient sup-norm " + format_g17(best_gnorm) +
                                  ")",
                              best_theta, best_gnorm);
}

}  // namespace

double propensity_loglik(const Dataset& ds, const MatrixXd& xg, const VectorXd& gamma,
                         VectorXd* grad) {
    const Index n = ds.n();
    const VectorXd lin = xg * gamma;
    if (grad) grad->setZero();
    double value = pairwise_sum(n, [&](Index i) {
        const double pi = 1.0 / (1.0 + std::exp(-lin[i]));
        const double p = clamp_prob(pi);
        return ds.w[i] * (ds.z[i] ? std::log(p) : std::log1p(-p));
    });
    if (grad) {
        *grad = pairwise_sum_vec(n, gamma.size(), [&](Index i, VectorXd& buf) {
            const double pi = 1.0 / (1.0 + std::exp(-lin[i]));
            buf = ds.w[i] * (static_cast<double>(ds.z[i]) - pi) * xg.row(i).transpose();
        });
    }
    return value;
}

double treatment_loglik(const Dataset& ds, const MatrixXd& xb, const MatrixXd& xe, DeltaLink link,
                        const VectorXd& theta, VectorXd* grad) {
    const Index pb = xb.cols(), pe = xe.cols();
    const VectorXd beta = theta.head(pb), eta = theta.tail(pe);
    const VectorXd lb = xb * beta, le = xe * eta;
    const Index n = ds.n();

    double value = 0.0;
    if (grad) *grad = VectorXd::Zero(pb + pe);
    VectorXd acc = pairwise_sum_vec(n, 1 + (grad ? pb + pe : 0), [&](Index i, VectorXd& buf) {
        const double dd = clamp_risk_difference(link_delta(link, lb[i]));
        const double op = link_op(le[i]);
        const auto bg = solve_baseline_prob_grad(dd, op);
        const double p = clamp_prob(bg.p0 + ds.z[i] * dd);
        const double di = ds.d[i];
        buf[0] = ds.w[i] * (di ? std::log(p) : std::log1p(-p));
        if (grad) {
            const double dl_dp = ds.w[i] * (di ? 1.0 / p : -1.0 / (1.0 - p));
            const double dp_dlb = (bg.d_delta + ds.z[i]) * link_delta_deriv(link, lb[i]);
            const double dp_dle = bg.d_op * op;
            buf.segment(1, pb) = dl_dp * dp_dlb * xb.row(i).transpose();
            buf.segment(1 + pb, pe) = dl_dp * dp_dle * xe.row(i).transpose();
        }
    });
    value = acc[0];
    if (grad) *grad = acc.tail(pb + pe);
    return value;
}

double outcome_loglik(const Dataset& ds, const MatrixXd& xa, const MatrixXd& xz,
                      const VectorXd& delta_d_by_row, const VectorXd& theta, VectorXd* grad) {
    const Index pa = xa.cols(), pz = xz.cols();
    const VectorXd alpha = theta.head(pa), zeta = theta.tail(pz);
    const VectorXd la = xa * alpha, lz = xz * zeta;
    const Index n = ds.n();

    VectorXd acc = pairwise_sum_vec(n, 1 + (grad ? pa + pz : 0), [&](Index i, VectorXd& buf) {
        const double delta = std::tanh(la[i]);
        const double dy = clamp_risk_difference(delta * delta_d_by_row[i]);
        const double op = link_op(lz[i]);
        const auto bg = solve_baseline_prob_grad(dy, op);
        const double p = clamp_prob(bg.p0 + ds.z[i] * dy);
        const double yi = ds.y[i];
        buf[0] = ds.w[i] * (yi != 0.0 ? std::log(p) : std::log1p(-p));
        if (grad) {
            const double dl_dp = ds.w[i] * (yi != 0.0 ? 1.0 / p : -1.0 / (1.0 - p));
            const double ddy_dla = delta_d_by_row[i] * (1.0 - delta * delta);
            const double dp_dla = (bg.d_delta + ds.z[i]) * ddy_dla;
            const double dp_dlz = bg.d_op * op;
            buf.segment(1, pa) = dl_dp * dp_dla * xa.row(i).transpose();
            buf.segment(1 + pa, pz) = dl_dp * dp_dlz * xz.row(i).transpose();
        }
    });
    if (grad) *grad = acc.tail(pa + pz);
    return acc[0];
}

PropensityFit fit_propensity(const Dataset& ds, const std::vector<Index>& design) {
    PropensityFit out;
    out.cols = design;
    const MatrixXd xg = design_matrix(ds, design);
    check_full_rank(xg, ds.w, "fit_propensity");
    out.info = maximize_loglik("gamma", xg.cols(), [&](const VectorXd& g, VectorXd* grad) {
        return propensity_loglik(ds, xg, g, grad);
    });
    out.gamma = out.info.coefficients;
    out.prob = (1.0 / (1.0 + (-(xg * out.gamma)).array().exp())).matrix();
    return out;
}

TreatmentFit fit_treatment_2mle(const Dataset& ds, const std::vector<Index>& design_delta_d,
                                const std::vector<Index>& design_op_d, DeltaLink link) {
    if (link == DeltaLink::Identity)
        throw DomainError("fit_treatment_2mle: delta^D link must be tanh or expit");
    TreatmentFit out;
    out.link = link;
    out.cols_delta_d = design_delta_d;
    out.cols_op_d = design_op_d;
    const MatrixXd xb = design_matrix(ds, design_delta_d);
    const MatrixXd xe = design_matrix(ds, design_op_d);
    check_full_rank(xb, ds.w, "fit_treatment_2mle(delta_d)");
    check_full_rank(xe, ds.w, "fit_treatment_2mle(op_d)");
    out.info = maximize_loglik(
        "beta_eta", xb.cols() + xe.cols(), [&](const VectorXd& theta, VectorXd* grad) {
            return treatment_loglik(ds, xb, xe, link, theta, grad);
        });
    out.beta = out.info.coefficients.head(xb.cols());
    out.eta = out.info.coefficients.tail(xe.cols());

    const Index n = ds.n();
    out.delta_d.resize(n);
    out.p0d.resize(n);
    const VectorXd lb = xb * out.beta, le = xe * out.eta;
    for (Index i = 0; i < n; ++i) {
        out.delta_d[i] = clamp_risk_difference(link_delta(link, lb[i]));
        out.p0d[i] = solve_baseline_prob(out.delta_d[i], link_op(le[i]));
    }
    return out;
}

OutcomeFit fit_outcome_2mle(const Dataset& ds, const TreatmentFit& treatment,
                            const std::vector<Index>& design_delta,
                            const std::vector<Index>& design_op_y) {
    if (!ds.binary_outcome)
        throw ValidationError("fit_outcome_2mle: outcome must be binary (dichotomize first)");
    OutcomeFit out;
    out.cols_delta = design_delta;
    out.cols_op_y = design_op_y;
    const MatrixXd xa = design_matrix(ds, design_delta);
    const MatrixXd xz = design_matrix(ds, design_op_y);
    check_full_rank(xa, ds.w, "fit_outcome_2mle(delta)");
    check_full_rank(xz, ds.w, "fit_outcome_2mle(op_y)");
    out.info = maximize_loglik(
        "alpha_zeta", xa.cols() + xz.cols(), [&](const VectorXd& theta, VectorXd* grad) {
            return outcome_loglik(ds, xa, xz, treatment.delta_d, theta, grad);
        });
    out.alpha = out.info.coefficients.head(xa.cols());
    out.zeta = out.info.coefficients.tail(xz.cols());

    const Index n = ds.n();
    out.delta.resize(n);
    out.p0y.resize(n);
    const VectorXd la = xa * out.alpha, lz = xz * out.zeta;
    for (Index i = 0; i < n; ++i) {
        out.delta[i] = std::tanh(la[i]);
        const double dy = clamp_risk_difference(out.delta[i] * treatment.delta_d[i]);
        out.p0y[i] = solve_baseline_prob(dy, link_op(lz[i]));
    }
    return out;
}

VectorXd weighted_least_squares(const MatrixXd& x, const VectorXd& y, const VectorXd& w) {
    const VectorXd sw = w.array().sqrt();
    const MatrixXd xs = sw.asDiagonal() * x;
    const VectorXd ys = sw.asDiagonal() * y;
    Eigen::ColPivHouseholderQR<MatrixXd> qr(xs);
    if (qr.rank() < x.cols())
        throw NumericError("weighted_least_squares: design matrix is rank deficient");
    return qr.solve(ys);
}

LinearNuisances fit_linear_nuisances(const Dataset& ds, const std::vector<Index>& design_delta_d,
                                     const std::vector<Index>& design_op_d,
                                     const std::vector<Index>& design_p0y, DeltaLink link) {
    if (ds.binary_outcome)
        throw ValidationError(
            "fit_linear_nuisances: outcome is binary; use the odds-product nuisances");
    LinearNuisances out;
    out.theta = fit_treatment_2mle(ds, design_delta_d, design_op_d, link);
    out.theta.info.model_tag = "theta";
    out.cols_p0y = design_p0y;

    // E[Y | Z=0, X] by least squares within the Z=0 arm.
    const MatrixXd xi = design_matrix(ds, design_p0y);
    std::vector<Index> rows;
    for (Index i = 0; i < ds.n(); ++i)
        if (ds.z[i] == 0) rows.push_back(i);
    if (rows.empty()) throw ValidationError("fit_linear_nuisances: Z=0 arm is empty");
    MatrixXd x0(static_cast<Index>(rows.size()), xi.cols());
    VectorXd y0(static_cast<Index>(rows.size())), w0(static_cast<Index>(rows.size()));
    for (size_t k = 0; k < rows.size(); ++k) {
        x0.row(static_cast<Index>(k)) = xi.row(rows[k]);
        y0[static_cast<Index>(k)] = ds.y[rows[k]];
        w0[static_cast<Index>(k)] = ds.w[rows[k]];
    }
    out.iota = weighted_least_squares(x0, y0, w0);
    out.iota_info.model_tag = "iota";
    out.iota_info.coefficients = out.iota;
    out.iota_info.converged = true;
    out.iota_info.final_gradient_norm = 0.0;
    out.p0y = xi * out.iota;
    return out;
}

EnsembleFit fit_propensity_ensemble(const Dataset& ds,
                                    const std::vector<std::vector<Index>>& candidate_designs) {
    if (candidate_designs.empty())
        throw DomainError("fit_propensity_ensemble: need at least one candidate design");
    EnsembleFit out;
    for (const auto& design : candidate_designs)
        out.candidates.push_back(fit_propensity(ds, design));

    const Index n = ds.n();
    const Index j_count = static_cast<Index>(out.candidates.size());
    out.info.model_tag = "ensemble";
    out.info.converged = true;
    out.info.iterations = 0;
    out.info.final_gradient_norm = 0.0;

    if (j_count == 1) {
        out.weights = VectorXd::Ones(1);
        out.prob = out.candidates[0].prob;
    } else {
        MatrixXd pmat(n, j_count);
        for (Index j = 0; j < j_count; ++j) pmat.col(j) = out.candidates[j].prob;
        // No-intercept regression of Z on the fitted probability columns,
        // ridge-stabilized because candidates can coincide on the data.
        MatrixXd gram = MatrixXd::Zero(j_count, j_count);
        VectorXd rhs = VectorXd::Zero(j_count);
        for (Index i = 0; i < n; ++i) {
            gram.noalias() += ds.w[i] * pmat.row(i).transpose() * pmat.row(i);
            rhs.noalias() += ds.w[i] * static_cast<double>(ds.z[i]) * pmat.row(i).transpose();
        }
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(gram);
        const double emin = es.eigenvalues().minCoeff();
        const double emax = es.eigenvalues().maxCoeff();
        out.collinearity_warning = !(emin > 1e-8 * std::max(emax, 1.0));
        gram.diagonal().array() += 1e-8;
        out.weights = Eigen::LDLT<MatrixXd>(gram).solve(rhs);
        out.prob = pmat * out.weights;
    }
    for (Index i = 0; i < n; ++i)
        out.prob[i] = std::min(1.0 - kEnsembleClamp, std::max(kEnsembleClamp, out.prob[i]));
    out.info.coefficients = out.weights;
    return out;
}

}  // namespace ivwald
