// Stacked estimating systems: every nuisance score/equation an estimator
// consumed, plus its Delta-defining moment, jointly. M-estimation theory
// then gives the sandwich variance of Delta with nuisance uncertainty
// propagated through the bread matrix.

#include "estimators_internal.hpp"

#include <cmath>

namespace ivwald {

namespace {

double expit(double t) { return 1.0 / (1.0 + std::exp(-t)); }

double clamp_prob_local(double p) {
    if (p < kProbClamp) return kProbClamp;
    if (p > 1.0 - kProbClamp) return 1.0 - kProbClamp;
    return p;
}

// Per-sample (unweighted) score of the Z logistic likelihood.
void gamma_score(const Dataset& ds, const MatrixXd& xg, const VectorXd& gamma, Index i,
                 Eigen::Ref<VectorXd> out) {
    out = (static_cast<double>(ds.z[i]) - expit(xg.row(i).dot(gamma))) * xg.row(i).transpose();
}

// Per-sample score of the D | Z, X likelihood at (beta, eta).
void d_score(const Dataset& ds, const MatrixXd& xb, const MatrixXd& xe, DeltaLink link,
             const VectorXd& beta, const VectorXd& eta, Index i, Eigen::Ref<VectorXd> out) {
    const double lb = xb.row(i).dot(beta);
    const double dd = clamp_risk_difference(link_delta(link, lb));
    const double op = link_op(xe.row(i).dot(eta));
    const auto bg = solve_baseline_prob_grad(dd, op);
    const double p = clamp_prob_local(bg.p0 + ds.z[i] * dd);
    const double dl_dp = ds.d[i] ? 1.0 / p : -1.0 / (1.0 - p);
    out.head(xb.cols()) =
        dl_dp * (bg.d_delta + ds.z[i]) * link_delta_deriv(link, lb) * xb.row(i).transpose();
    out.tail(xe.cols()) = dl_dp * bg.d_op * op * xe.row(i).transpose();
}

// Per-sample score of the Y | Z, X likelihood at (alpha, zeta), with the
// plugged delta^D supplied by the caller (a function of the stacked beta).
void y_score(const Dataset& ds, const MatrixXd& xa, const MatrixXd& xz, double delta_d_i,
             const VectorXd& alpha, const VectorXd& zeta, Index i, Eigen::Ref<VectorXd> out) {
    const double la = xa.row(i).dot(alpha);
    const double delta = std::tanh(la);
    const double dy = clamp_risk_difference(delta * delta_d_i);
    const double op = link_op(xz.row(i).dot(zeta));
    const auto bg = solve_baseline_prob_grad(dy, op);
    const double p = clamp_prob_local(bg.p0 + ds.z[i] * dy);
    const double dl_dp = ds.y[i] != 0.0 ? 1.0 / p : -1.0 / (1.0 - p);
    out.head(xa.cols()) = dl_dp * (bg.d_delta + ds.z[i]) * delta_d_i * (1.0 - delta * delta) *
                          xa.row(i).transpose();
    out.tail(xz.cols()) = dl_dp * bg.d_op * op * xz.row(i).transpose();
}

struct ScratchReport : EstimateReport {};

}  // namespace

StackedSystem stacked_system(FitBundle& fb, const std::string& tag) {
    const Dataset& ds = fb.data();
    const EstimatorConfig& cfg = fb.config();
    const bool binary = ds.binary_outcome;
    const DeltaLink dlink = fb.delta_link();
    const DeltaLink ddlink = cfg.delta_d_link;

    const MatrixXd xg = design_matrix(ds, cfg.design_f);
    const MatrixXd xb = design_matrix(ds, cfg.design_delta_d);
    const MatrixXd xe = design_matrix(ds, cfg.design_op_d);
    const MatrixXd xa = design_matrix(ds, cfg.design_delta);
    const Index pg = xg.cols(), pb = xb.cols(), pe = xe.cols(), pa = xa.cols();

    StackedSystem st;

    if (tag == "b-reg") {
        if (!binary) throw ValidationError("b-reg stack requires a binary outcome");
        const MatrixXd xz = design_matrix(ds, cfg.design_op_y);
        const Index pz = xz.cols();
        const TreatmentFit& tf = fb.treatment();
        const OutcomeFit& of = fb.outcome();
        const Index dim = pb + pe + pa + pz + 1;
        st.theta_hat.resize(dim);
        st.theta_hat << tf.info.coefficients, of.info.coefficients,
            detail::weighted_mean(ds, of.delta);
        st.system.dim = dim;
        st.system.label = "b-reg stacked system";
        st.system.residual = [=, &ds](Index i, const VectorXd& th, Eigen::Ref<VectorXd> out) {
            const VectorXd beta = th.segment(0, pb), eta = th.segment(pb, pe);
            const VectorXd alpha = th.segment(pb + pe, pa), zeta = th.segment(pb + pe + pa, pz);
            d_score(ds, xb, xe, ddlink, beta, eta, i, out.segment(0, pb + pe));
            const double dd = clamp_risk_difference(link_delta(ddlink, xb.row(i).dot(beta)));
            y_score(ds, xa, xz, dd, alpha, zeta, i, out.segment(pb + pe, pa + pz));
            out[dim - 1] = std::tanh(xa.row(i).dot(alpha)) - th[dim - 1];
        };
        return st;
    }

    if (tag == "ipw" || tag == "b-ipw") {
        ScratchReport scratch;
        const detail::IpwParts parts = detail::ipw_parts(fb, scratch);
        const VectorXd gamma = fb.propensity().gamma;
        const MatrixXd h1 = detail::index_rows(ds, xb, cfg.h1, "h1");

        if (tag == "ipw") {
            const Index dim = pg + pb + 1;
            st.theta_hat.resize(dim);
            st.theta_hat << gamma, parts.beta_solve.theta,
                detail::weighted_mean(ds, parts.ht_ratio);
            st.system.dim = dim;
            st.system.label = "ipw stacked system";
            st.system.residual = [=, &ds](Index i, const VectorXd& th, Eigen::Ref<VectorXd> out) {
                const VectorXd g = th.segment(0, pg), beta = th.segment(pg, pb);
                gamma_score(ds, xg, g, i, out.segment(0, pg));
                const double pi = expit(xg.row(i).dot(g));
                const double iv = (2.0 * ds.z[i] - 1.0) / (ds.z[i] ? pi : 1.0 - pi);
                const double dd = link_delta(ddlink, xb.row(i).dot(beta));
                out.segment(pg, pb) = h1.row(i).transpose() * (ds.d[i] * iv - dd);
                out[dim - 1] = ds.y[i] / dd * iv - th[dim - 1];
            };
            return st;
        }

        const MatrixXd xw = design_matrix(ds, cfg.design_bipw);
        const MatrixXd h2 = detail::index_rows(ds, xw, cfg.h2, "h2");
        const Index pw = xw.cols();
        // Re-solve the working-model projection at the fitted target.
        EstimatingSystem proj;
        proj.dim = pw;
        proj.label = "b-ipw working-model projection";
        const VectorXd target = parts.ht_ratio;
        proj.residual = [&target, xw, h2, dlink](Index i, const VectorXd& a,
                                                 Eigen::Ref<VectorXd> out) {
            out = h2.row(i).transpose() * (target[i] - link_delta(dlink, xw.row(i).dot(a)));
        };
        const SolveResult wsol = solve(proj, ds, VectorXd::Zero(pw));
        VectorXd fitted(ds.n());
        for (Index i = 0; i < ds.n(); ++i)
            fitted[i] = link_delta(dlink, xw.row(i).dot(wsol.theta));

        const Index dim = pg + pb + pw + 1;
        st.theta_hat.resize(dim);
        st.theta_hat << gamma, parts.beta_solve.theta, wsol.theta,
            detail::weighted_mean(ds, fitted);
        st.system.dim = dim;
        st.system.label = "b-ipw stacked system";
        st.system.residual = [=, &ds](Index i, const VectorXd& th, Eigen::Ref<VectorXd> out) {
            const VectorXd g = th.segment(0, pg), beta = th.segment(pg, pb);
            const VectorXd aw = th.segment(pg + pb, pw);
            gamma_score(ds, xg, g, i, out.segment(0, pg));
            const double pi = expit(xg.row(i).dot(g));
            const double iv = (2.0 * ds.z[i] - 1.0) / (ds.z[i] ? pi : 1.0 - pi);
            const double dd = link_delta(ddlink, xb.row(i).dot(beta));
            const double dw = link_delta(dlink, xw.row(i).dot(aw));
            out.segment(pg, pb) = h1.row(i).transpose() * (ds.d[i] * iv - dd);
            out.segment(pg + pb, pw) = h2.row(i).transpose() * (ds.y[i] / dd * iv - dw);
            out[dim - 1] = dw - th[dim - 1];
        };
        return st;
    }

    if (tag == "g") {
        // g's alpha solve, repeated here so the stack owns its equations.
        const PropensityFit& f = fb.propensity();
        const MatrixXd h3 = detail::index_rows(ds, xa, cfg.h3, "h3");
        EstimatingSystem ge;
        ge.dim = pa;
        ge.label = "g-estimation equation";
        ge.residual = [&ds, &f, xa, h3, dlink](Index i, const VectorXd& a,
                                               Eigen::Ref<VectorXd> out) {
            const double delta = link_delta(dlink, xa.row(i).dot(a));
            const double iv = (2.0 * ds.z[i] - 1.0) / f.density(ds.z[i], i);
            out = h3.row(i).transpose() * ((ds.y[i] - ds.d[i] * delta) * iv);
        };
        const SolveResult asol = solve(ge, ds, VectorXd::Zero(pa));
        VectorXd fitted(ds.n());
        for (Index i = 0; i < ds.n(); ++i)
            fitted[i] = link_delta(dlink, xa.row(i).dot(asol.theta));

        const Index dim = pg + pa + 1;
        st.theta_hat.resize(dim);
        st.theta_hat << f.gamma, asol.theta, detail::weighted_mean(ds, fitted);
        st.system.dim = dim;
        st.system.label = "g stacked system";
        st.system.residual = [=, &ds](Index i, const VectorXd& th, Eigen::Ref<VectorXd> out) {
            const VectorXd g = th.segment(0, pg), alpha = th.segment(pg, pa);
            gamma_score(ds, xg, g, i, out.segment(0, pg));
            const double pi = expit(xg.row(i).dot(g));
            const double iv = (2.0 * ds.z[i] - 1.0) / (ds.z[i] ? pi : 1.0 - pi);
            const double delta = link_delta(dlink, xa.row(i).dot(alpha));
            out.segment(pg, pa) = h3.row(i).transpose() * ((ds.y[i] - ds.d[i] * delta) * iv);
            out[dim - 1] = delta - th[dim - 1];
        };
        return st;
    }

    if (tag == "mr" || tag == "b-mr") {
        ScratchReport scratch;
        const VectorXd gamma = fb.propensity().gamma;
        const MatrixXd h = detail::index_rows(ds, xb, cfg.h, "h");
        const detail::DrParts dr = detail::dr_beta(fb, scratch);
        const bool bounded = (tag == "b-mr");
        const MatrixXd g_rows = bounded ? detail::bounded_g_rows(fb, xa, dr.delta_d_dr)
                                        : detail::index_rows(ds, xa, cfg.g, "g");
        const SolveResult asol = detail::dr_alpha(fb, xa, g_rows, scratch, "alpha_dr");

        // Delta at the solved point.
        const PropensityFit& f = fb.propensity();
        const VectorXd& p0d_plug = fb.plugin_p0d();
        const VectorXd& p0y_plug = fb.plugin_p0y();
        VectorXd stat(ds.n());
        for (Index i = 0; i < ds.n(); ++i) {
            const double delta = link_delta(dlink, xa.row(i).dot(asol.theta));
            if (bounded) {
                stat[i] = delta;
            } else {
                const double iv = (2.0 * ds.z[i] - 1.0) / f.density(ds.z[i], i);
                stat[i] = (ds.y[i] - ds.d[i] * delta - p0y_plug[i] + p0d_plug[i] * delta) * iv /
                              dr.delta_d_dr[i] +
                          delta;
            }
        }
        const double delta_hat = detail::weighted_mean(ds, stat);

        // Which slot of g carries 1/delta^D in the bounded construction;
        // a user-supplied g override is left untouched.
        const bool dynamic_slot = bounded && !cfg.g;
        Index g_slot = 0;
        for (size_t j = 0; j < cfg.design_delta.size(); ++j)
            if (cfg.design_delta[j] == 0) g_slot = static_cast<Index>(j);

        if (binary) {
            const MatrixXd xz = design_matrix(ds, cfg.design_op_y);
            const Index pz = xz.cols();
            const TreatmentFit& tf = fb.treatment();
            const OutcomeFit& of = fb.outcome();
            const Index dim = pg + pb + pe + pa + pz + pb + pa + 1;
            st.theta_hat.resize(dim);
            st.theta_hat << gamma, tf.info.coefficients, of.info.coefficients, dr.beta_dr.theta,
                asol.theta, delta_hat;
            st.system.dim = dim;
            st.system.label = tag + " stacked system";
            st.system.residual = [=, &ds](Index i, const VectorXd& th, Eigen::Ref<VectorXd> out) {
                Index off = 0;
                const VectorXd g = th.segment(off, pg);
                off += pg;
                const VectorXd b2 = th.segment(off, pb), e2 = th.segment(off + pb, pe);
                off += pb + pe;
                const VectorXd a2 = th.segment(off, pa), z2 = th.segment(off + pa, pz);
                off += pa + pz;
                const VectorXd bdr = th.segment(off, pb);
                off += pb;
                const VectorXd adr = th.segment(off, pa);
                off += pa;
                const double delta_cur = th[off];

                Index o = 0;
                gamma_score(ds, xg, g, i, out.segment(o, pg));
                o += pg;
                d_score(ds, xb, xe, ddlink, b2, e2, i, out.segment(o, pb + pe));
                o += pb + pe;
                const double dd2 = clamp_risk_difference(link_delta(ddlink, xb.row(i).dot(b2)));
                y_score(ds, xa, xz, dd2, a2, z2, i, out.segment(o, pa + pz));
                o += pa + pz;

                const double p0d = solve_baseline_prob(dd2, link_op(xe.row(i).dot(e2)));
                const double dy2 = clamp_risk_difference(std::tanh(xa.row(i).dot(a2)) * dd2);
                const double p0y = solve_baseline_prob(dy2, link_op(xz.row(i).dot(z2)));
                const double pi = expit(xg.row(i).dot(g));
                const double iv = (2.0 * ds.z[i] - 1.0) / (ds.z[i] ? pi : 1.0 - pi);
                const double dddr = link_delta(ddlink, xb.row(i).dot(bdr));
                out.segment(o, pb) =
                    h.row(i).transpose() * ((ds.d[i] - dddr * ds.z[i] - p0d) * iv);
                o += pb;
                const double deltadr = std::tanh(xa.row(i).dot(adr));
                const double resid =
                    (ds.y[i] - ds.d[i] * deltadr - p0y + p0d * deltadr) * iv;
                VectorXd grow = g_rows.row(i).transpose();
                if (dynamic_slot) grow[g_slot] = 1.0 / dddr;
                out.segment(o, pa) = grow * resid;
                o += pa;
                out[o] = bounded ? (deltadr - delta_cur) : (resid / dddr + deltadr - delta_cur);
            };
            return st;
        }

        // Continuous outcome: iota moment replaces the (alpha, zeta) score.
        const MatrixXd xi = design_matrix(ds, cfg.design_p0y);
        const Index pi_dim = xi.cols();
        const LinearNuisances& lin = fb.linear();
        const Index dim = pg + pb + pe + pi_dim + pb + pa + 1;
        st.theta_hat.resize(dim);
        st.theta_hat << gamma, lin.theta.info.coefficients, lin.iota, dr.beta_dr.theta, asol.theta,
            delta_hat;
        st.system.dim = dim;
        st.system.label = tag + " stacked system";
        st.system.residual = [=, &ds](Index i, const VectorXd& th, Eigen::Ref<VectorXd> out) {
            Index off = 0;
            const VectorXd g = th.segment(off, pg);
            off += pg;
            const VectorXd b2 = th.segment(off, pb), e2 = th.segment(off + pb, pe);
            off += pb + pe;
            const VectorXd iota = th.segment(off, pi_dim);
            off += pi_dim;
            const VectorXd bdr = th.segment(off, pb);
            off += pb;
            const VectorXd adr = th.segment(off, pa);
            off += pa;
            const double delta_cur = th[off];

            Index o = 0;
            gamma_score(ds, xg, g, i, out.segment(o, pg));
            o += pg;
            d_score(ds, xb, xe, ddlink, b2, e2, i, out.segment(o, pb + pe));
            o += pb + pe;
            const double p0y = xi.row(i).dot(iota);
            out.segment(o, pi_dim) =
                (ds.z[i] == 0 ? (ds.y[i] - p0y) : 0.0) * xi.row(i).transpose();
            o += pi_dim;

            const double dd2 = clamp_risk_difference(link_delta(ddlink, xb.row(i).dot(b2)));
            const double p0d = solve_baseline_prob(dd2, link_op(xe.row(i).dot(e2)));
            const double pi = expit(xg.row(i).dot(g));
            const double iv = (2.0 * ds.z[i] - 1.0) / (ds.z[i] ? pi : 1.0 - pi);
            const double dddr = link_delta(ddlink, xb.row(i).dot(bdr));
            out.segment(o, pb) = h.row(i).transpose() * ((ds.d[i] - dddr * ds.z[i] - p0d) * iv);
            o += pb;
            const double deltadr = xa.row(i).dot(adr);
            const double resid = (ds.y[i] - ds.d[i] * deltadr - p0y + p0d * deltadr) * iv;
            VectorXd grow = g_rows.row(i).transpose();
            if (dynamic_slot) grow[g_slot] = 1.0 / dddr;
            out.segment(o, pa) = grow * resid;
            o += pa;
            out[o] = bounded ? (deltadr - delta_cur) : (resid / dddr + deltadr - delta_cur);
        };
        return st;
    }

    throw DomainError("stacked system not available for estimator '" + tag + "'");
}

}  // namespace ivwald
