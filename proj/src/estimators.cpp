#include "ivwald/estimators.hpp"

#include "estimators_internal.hpp"

#include <algorithm>
#include <cmath>

namespace ivwald {

namespace {

std::vector<Index> resolved(const std::vector<Index>& cols, const Dataset& ds) {
    return cols.empty() ? all_columns(ds) : cols;
}

void check_propensity_positivity(const PropensityFit& f, const EstimatorConfig& cfg,
                                 EstimateReport& rep) {
    double mn = 1.0;
    for (Index i = 0; i < f.prob.size(); ++i)
        mn = std::min(mn, std::min(f.prob[i], 1.0 - f.prob[i]));
    if (!(mn > 0.0)) throw NumericError("positivity violation: fitted f(z|x) reaches 0");
    if (mn < cfg.positivity_warn_f)
        rep.warnings.push_back("positivity: min fitted f(z|x) = " + format_g17(mn) + " < " +
                               format_g17(cfg.positivity_warn_f));
}

double min_abs(const VectorXd& v) {
    double mn = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < v.size(); ++i) mn = std::min(mn, std::abs(v[i]));
    return mn;
}

void collect_plugin_fits(FitBundle& fb, EstimateReport& rep) {
    rep.nuisance_fits.push_back(fb.propensity().info);
    if (fb.data().binary_outcome) {
        rep.nuisance_fits.push_back(fb.treatment().info);
        rep.nuisance_fits.push_back(fb.outcome().info);
    } else {
        rep.nuisance_fits.push_back(fb.linear().theta.info);
        rep.nuisance_fits.push_back(fb.linear().iota_info);
    }
}

void attach_sandwich_se(FitBundle& fb, const std::string& tag, EstimateReport& rep) {
    auto st = stacked_system(fb, tag);
    const MatrixXd cov = sandwich_variance(st.system, fb.data(), st.theta_hat);
    rep.se = std::sqrt(cov(cov.rows() - 1, cov.cols() - 1));
}

}  // namespace

namespace detail {

NuisanceFit from_solve(const std::string& tag, const SolveResult& res) {
    NuisanceFit fit;
    fit.model_tag = tag;
    fit.coefficients = res.theta;
    fit.converged = res.converged;
    fit.iterations = res.iterations;
    fit.final_gradient_norm = res.residual_norm;
    return fit;
}

MatrixXd index_rows(const Dataset& ds, const MatrixXd& fallback,
                    const EstimatorConfig::IndexFn& fn, const char* what) {
    if (!fn) return fallback;
    MatrixXd rows(ds.n(), fallback.cols());
    for (Index i = 0; i < ds.n(); ++i) {
        const VectorXd v = fn(ds.x.row(i).transpose());
        if (v.size() != fallback.cols())
            throw DomainError(std::string(what) + ": index function dimension " +
                              std::to_string(v.size()) + " does not match parameter dimension " +
                              std::to_string(fallback.cols()));
        rows.row(i) = v.transpose();
    }
    return rows;
}

double weighted_mean(const Dataset& ds, const VectorXd& values) {
    const Index n = ds.n();
    return pairwise_sum(n, [&](Index i) { return ds.w[i] * values[i]; }) / static_cast<double>(n);
}

IpwParts ipw_parts(FitBundle& fb, EstimateReport& rep) {
    const Dataset& ds = fb.data();
    const EstimatorConfig& cfg = fb.config();
    const PropensityFit& f = fb.propensity();
    rep.nuisance_fits.push_back(f.info);
    check_propensity_positivity(f, cfg, rep);

    const MatrixXd xb = design_matrix(ds, cfg.design_delta_d);
    const MatrixXd h1 = index_rows(ds, xb, cfg.h1, "h1");
    const DeltaLink link = cfg.delta_d_link;

    EstimatingSystem sys;
    sys.dim = xb.cols();
    sys.label = "ipw delta^D equation";
    sys.residual = [&ds, &f, xb, h1, link](Index i, const VectorXd& beta,
                                           Eigen::Ref<VectorXd> out) {
        const double dd = link_delta(link, xb.row(i).dot(beta));
        const double iv = (2.0 * ds.z[i] - 1.0) / f.density(ds.z[i], i);
        out = h1.row(i).transpose() * (ds.d[i] * iv - dd);
    };

    IpwParts parts;
    parts.beta_solve = solve(sys, ds, VectorXd::Zero(sys.dim));
    rep.nuisance_fits.push_back(from_solve("beta_ipw", parts.beta_solve));

    const Index n = ds.n();
    parts.delta_d.resize(n);
    parts.ht_ratio.resize(n);
    for (Index i = 0; i < n; ++i) {
        parts.delta_d[i] = link_delta(link, xb.row(i).dot(parts.beta_solve.theta));
        if (parts.delta_d[i] == 0.0)
            throw NumericError("positivity violation: fitted delta^D(x) is exactly 0");
        parts.ht_ratio[i] =
            ds.y[i] / parts.delta_d[i] * (2.0 * ds.z[i] - 1.0) / f.density(ds.z[i], i);
    }
    const double mn = min_abs(parts.delta_d);
    if (mn < cfg.positivity_warn_delta_d)
        rep.warnings.push_back("positivity: min |delta^D(x)| = " + format_g17(mn) + " < " +
                               format_g17(cfg.positivity_warn_delta_d));
    return parts;
}

DrParts dr_beta(FitBundle& fb, EstimateReport& rep) {
    const Dataset& ds = fb.data();
    const EstimatorConfig& cfg = fb.config();
    const PropensityFit& f = fb.propensity();
    const VectorXd& p0d = fb.plugin_p0d();

    const MatrixXd xb = design_matrix(ds, cfg.design_delta_d);
    const MatrixXd h = index_rows(ds, xb, cfg.h, "h");
    const DeltaLink link = cfg.delta_d_link;

    EstimatingSystem sys;
    sys.dim = xb.cols();
    sys.label = "doubly robust delta^D equation";
    sys.residual = [&ds, &f, &p0d, xb, h, link](Index i, const VectorXd& beta,
                                                Eigen::Ref<VectorXd> out) {
        const double dd = link_delta(link, xb.row(i).dot(beta));
        const double iv = (2.0 * ds.z[i] - 1.0) / f.density(ds.z[i], i);
        out = h.row(i).transpose() * ((ds.d[i] - dd * ds.z[i] - p0d[i]) * iv);
    };
    DrParts parts;
    parts.beta_dr = solve(sys, ds, VectorXd::Zero(sys.dim));
    rep.nuisance_fits.push_back(from_solve("beta_dr", parts.beta_dr));

    parts.delta_d_dr.resize(ds.n());
    for (Index i = 0; i < ds.n(); ++i)
        parts.delta_d_dr[i] = link_delta(link, xb.row(i).dot(parts.beta_dr.theta));
    const double mn = min_abs(parts.delta_d_dr);
    if (mn < cfg.positivity_warn_delta_d)
        rep.warnings.push_back("positivity: min |delta^D(x; beta_dr)| = " + format_g17(mn) +
                               " < " + format_g17(cfg.positivity_warn_delta_d));
    if (mn < 1e-6)
        rep.warnings.push_back(
            "instability: |delta^D(x; beta_dr)| < 1e-6 at some x; mr may be erratic");
    return parts;
}

SolveResult dr_alpha(FitBundle& fb, const MatrixXd& xa, const MatrixXd& g_rows,
                     EstimateReport& rep, const char* tag) {
    const Dataset& ds = fb.data();
    const PropensityFit& f = fb.propensity();
    const VectorXd& p0d = fb.plugin_p0d();
    const VectorXd& p0y = fb.plugin_p0y();
    const DeltaLink link = fb.delta_link();

    EstimatingSystem sys;
    sys.dim = xa.cols();
    sys.label = "doubly robust delta equation";
    sys.residual = [&ds, &f, &p0d, &p0y, xa, g_rows, link](Index i, const VectorXd& alpha,
                                                           Eigen::Ref<VectorXd> out) {
        const double delta = link_delta(link, xa.row(i).dot(alpha));
        const double iv = (2.0 * ds.z[i] - 1.0) / f.density(ds.z[i], i);
        out = g_rows.row(i).transpose() *
              ((ds.y[i] - ds.d[i] * delta - p0y[i] + p0d[i] * delta) * iv);
    };
    const SolveResult sol = solve(sys, ds, VectorXd::Zero(sys.dim));
    rep.nuisance_fits.push_back(from_solve(tag, sol));
    return sol;
}

MatrixXd bounded_g_rows(FitBundle& fb, const MatrixXd& xa, const VectorXd& delta_d_dr) {
    const EstimatorConfig& cfg = fb.config();
    MatrixXd g_rows = index_rows(fb.data(), xa, cfg.g, "g");
    if (cfg.g) return g_rows;
    Index slot = 0;
    for (size_t j = 0; j < cfg.design_delta.size(); ++j)
        if (cfg.design_delta[j] == 0) slot = static_cast<Index>(j);
    for (Index i = 0; i < fb.data().n(); ++i) g_rows(i, slot) = 1.0 / delta_d_dr[i];
    return g_rows;
}

}  // namespace detail

FitBundle::FitBundle(const Dataset& ds, EstimatorConfig cfg) : ds_(&ds), cfg_(std::move(cfg)) {
    ds.validate();
    cfg_.design_delta = resolved(cfg_.design_delta, ds);
    cfg_.design_delta_d = resolved(cfg_.design_delta_d, ds);
    cfg_.design_op_d = resolved(cfg_.design_op_d, ds);
    cfg_.design_op_y = resolved(cfg_.design_op_y, ds);
    cfg_.design_f = resolved(cfg_.design_f, ds);
    cfg_.design_p0y = resolved(cfg_.design_p0y, ds);
    if (cfg_.design_bipw.empty()) cfg_.design_bipw = cfg_.design_delta_d;
}

DeltaLink FitBundle::delta_link() const {
    return ds_->binary_outcome ? DeltaLink::Tanh : DeltaLink::Identity;
}

const PropensityFit& FitBundle::propensity() {
    if (!propensity_) propensity_ = fit_propensity(*ds_, cfg_.design_f);
    return *propensity_;
}

const TreatmentFit& FitBundle::treatment() {
    if (!treatment_)
        treatment_ =
            fit_treatment_2mle(*ds_, cfg_.design_delta_d, cfg_.design_op_d, cfg_.delta_d_link);
    return *treatment_;
}

const OutcomeFit& FitBundle::outcome() {
    if (!outcome_)
        outcome_ = fit_outcome_2mle(*ds_, treatment(), cfg_.design_delta, cfg_.design_op_y);
    return *outcome_;
}

const LinearNuisances& FitBundle::linear() {
    if (!linear_)
        linear_ = fit_linear_nuisances(*ds_, cfg_.design_delta_d, cfg_.design_op_d,
                                       cfg_.design_p0y, cfg_.delta_d_link);
    return *linear_;
}

const VectorXd& FitBundle::plugin_p0d() {
    return ds_->binary_outcome ? treatment().p0d : linear().theta.p0d;
}

const VectorXd& FitBundle::plugin_p0y() {
    return ds_->binary_outcome ? outcome().p0y : linear().p0y;
}

// --- estimators --------------------------------------------------------------

EstimateReport estimate_b_reg(FitBundle& fb) {
    const Dataset& ds = fb.data();
    if (!ds.binary_outcome)
        throw ValidationError("b-reg requires a binary outcome (dichotomize first)");
    EstimateReport rep;
    rep.estimator = "b-reg";
    rep.nuisance_fits.push_back(fb.treatment().info);
    rep.nuisance_fits.push_back(fb.outcome().info);
    rep.delta_hat = detail::weighted_mean(ds, fb.outcome().delta);
    rep.in_bounds = std::abs(rep.delta_hat) <= 1.0;
    rep.converged = true;
    if (fb.config().sandwich_se) attach_sandwich_se(fb, "b-reg", rep);
    return rep;
}

EstimateReport estimate_ipw(FitBundle& fb) {
    EstimateReport rep;
    rep.estimator = "ipw";
    const detail::IpwParts parts = detail::ipw_parts(fb, rep);
    rep.delta_hat = detail::weighted_mean(fb.data(), parts.ht_ratio);
    rep.in_bounds = std::abs(rep.delta_hat) <= 1.0;
    rep.converged = true;
    if (fb.config().sandwich_se) attach_sandwich_se(fb, "ipw", rep);
    return rep;
}

EstimateReport estimate_b_ipw(FitBundle& fb) {
    const Dataset& ds = fb.data();
    const EstimatorConfig& cfg = fb.config();
    EstimateReport rep;
    rep.estimator = "b-ipw";
    const detail::IpwParts parts = detail::ipw_parts(fb, rep);

    const MatrixXd xw = design_matrix(ds, cfg.design_bipw);
    const MatrixXd h2 = detail::index_rows(ds, xw, cfg.h2, "h2");
    const DeltaLink link = fb.delta_link();
    const VectorXd& target = parts.ht_ratio;

    EstimatingSystem sys;
    sys.dim = xw.cols();
    sys.label = "b-ipw working-model projection";
    sys.residual = [&target, xw, h2, link](Index i, const VectorXd& alpha,
                                           Eigen::Ref<VectorXd> out) {
        out = h2.row(i).transpose() * (target[i] - link_delta(link, xw.row(i).dot(alpha)));
    };
    const SolveResult sol = solve(sys, ds, VectorXd::Zero(sys.dim));
    rep.nuisance_fits.push_back(detail::from_solve("alpha_working", sol));

    VectorXd fitted(ds.n());
    for (Index i = 0; i < ds.n(); ++i) fitted[i] = link_delta(link, xw.row(i).dot(sol.theta));
    rep.delta_hat = detail::weighted_mean(ds, fitted);
    rep.in_bounds = std::abs(rep.delta_hat) <= 1.0;
    rep.converged = true;
    if (cfg.sandwich_se) attach_sandwich_se(fb, "b-ipw", rep);
    return rep;
}

EstimateReport estimate_g(FitBundle& fb) {
    const Dataset& ds = fb.data();
    const EstimatorConfig& cfg = fb.config();
    EstimateReport rep;
    rep.estimator = "g";
    const PropensityFit& f = fb.propensity();
    rep.nuisance_fits.push_back(f.info);
    check_propensity_positivity(f, cfg, rep);

    const MatrixXd xa = design_matrix(ds, cfg.design_delta);
    const MatrixXd h3 = detail::index_rows(ds, xa, cfg.h3, "h3");
    const DeltaLink link = fb.delta_link();

    EstimatingSystem sys;
    sys.dim = xa.cols();
    sys.label = "g-estimation equation";
    sys.residual = [&ds, &f, xa, h3, link](Index i, const VectorXd& alpha,
                                           Eigen::Ref<VectorXd> out) {
        const double delta = link_delta(link, xa.row(i).dot(alpha));
        const double iv = (2.0 * ds.z[i] - 1.0) / f.density(ds.z[i], i);
        out = h3.row(i).transpose() * ((ds.y[i] - ds.d[i] * delta) * iv);
    };
    const SolveResult sol = solve(sys, ds, VectorXd::Zero(sys.dim));
    rep.nuisance_fits.push_back(detail::from_solve("alpha_g", sol));

    VectorXd fitted(ds.n());
    for (Index i = 0; i < ds.n(); ++i) fitted[i] = link_delta(link, xa.row(i).dot(sol.theta));
    rep.delta_hat = detail::weighted_mean(ds, fitted);
    rep.in_bounds = std::abs(rep.delta_hat) <= 1.0;
    rep.converged = true;
    if (cfg.sandwich_se) attach_sandwich_se(fb, "g", rep);
    return rep;
}

EstimateReport estimate_mr(FitBundle& fb) {
    const Dataset& ds = fb.data();
    const EstimatorConfig& cfg = fb.config();
    EstimateReport rep;
    rep.estimator = "mr";
    collect_plugin_fits(fb, rep);
    check_propensity_positivity(fb.propensity(), cfg, rep);

    const detail::DrParts dr = detail::dr_beta(fb, rep);
    const MatrixXd xa = design_matrix(ds, cfg.design_delta);
    const MatrixXd g_rows = detail::index_rows(ds, xa, cfg.g, "g");
    const SolveResult alpha = detail::dr_alpha(fb, xa, g_rows, rep, "alpha_dr");

    const PropensityFit& f = fb.propensity();
    const VectorXd& p0d = fb.plugin_p0d();
    const VectorXd& p0y = fb.plugin_p0y();
    const DeltaLink link = fb.delta_link();

    const Index n = ds.n();
    VectorXd summand(n);
    for (Index i = 0; i < n; ++i) {
        const double delta = link_delta(link, xa.row(i).dot(alpha.theta));
        const double iv = (2.0 * ds.z[i] - 1.0) / f.density(ds.z[i], i);
        summand[i] =
            (ds.y[i] - ds.d[i] * delta - p0y[i] + p0d[i] * delta) * iv / dr.delta_d_dr[i] + delta;
    }
    rep.delta_hat = detail::weighted_mean(ds, summand);
    rep.in_bounds = std::abs(rep.delta_hat) <= 1.0;
    rep.converged = true;
    VectorXd influence(n);
    for (Index i = 0; i < n; ++i) influence[i] = summand[i] - rep.delta_hat;
    rep.influence = std::move(influence);
    if (cfg.sandwich_se) attach_sandwich_se(fb, "mr", rep);
    return rep;
}

EstimateReport estimate_b_mr(FitBundle& fb) {
    const Dataset& ds = fb.data();
    const EstimatorConfig& cfg = fb.config();
    EstimateReport rep;
    rep.estimator = "b-mr";
    collect_plugin_fits(fb, rep);
    check_propensity_positivity(fb.propensity(), cfg, rep);

    const detail::DrParts dr = detail::dr_beta(fb, rep);
    const MatrixXd xa = design_matrix(ds, cfg.design_delta);
    const MatrixXd g_rows = detail::bounded_g_rows(fb, xa, dr.delta_d_dr);
    const SolveResult alpha = detail::dr_alpha(fb, xa, g_rows, rep, "alpha_dr_bounded");

    const DeltaLink link = fb.delta_link();
    VectorXd fitted(ds.n());
    for (Index i = 0; i < ds.n(); ++i) fitted[i] = link_delta(link, xa.row(i).dot(alpha.theta));
    rep.delta_hat = detail::weighted_mean(ds, fitted);
    rep.in_bounds = std::abs(rep.delta_hat) <= 1.0;
    rep.converged = true;
    if (cfg.sandwich_se) attach_sandwich_se(fb, "b-mr", rep);
    return rep;
}

EstimateReport estimate_crude(const Dataset& ds) {
    ds.validate();
    EstimateReport rep;
    rep.estimator = "crude";
    double w1 = 0.0, w0 = 0.0, y1 = 0.0, y0 = 0.0;
    for (Index i = 0; i < ds.n(); ++i) {
        if (ds.d[i]) {
            w1 += ds.w[i];
            y1 += ds.w[i] * ds.y[i];
        } else {
            w0 += ds.w[i];
            y0 += ds.w[i] * ds.y[i];
        }
    }
    if (!(w1 > 0.0) || !(w0 > 0.0))
        throw ValidationError("crude estimator: one treatment arm is empty");
    rep.delta_hat = y1 / w1 - y0 / w0;
    rep.in_bounds = std::abs(rep.delta_hat) <= 1.0;
    rep.converged = true;
    return rep;
}

EstimateReport estimate_2sls(const Dataset& ds, const EstimatorConfig& cfg) {
    ds.validate();
    EstimateReport rep;
    rep.estimator = "2sls";
    const MatrixXd x = design_matrix(ds, resolved(cfg.design_delta, ds));
    const Index n = ds.n(), p = x.cols();

    MatrixXd first(n, p + 1);
    first.leftCols(p) = x;
    first.col(p) = ds.z.cast<double>();
    const VectorXd pi = weighted_least_squares(first, ds.d.cast<double>(), ds.w);
    const VectorXd dhat = first * pi;

    MatrixXd second(n, p + 1);
    second.col(0) = dhat;
    second.rightCols(p) = x;
    const VectorXd coef = weighted_least_squares(second, ds.y, ds.w);
    rep.delta_hat = coef[0];
    rep.in_bounds = std::abs(rep.delta_hat) <= 1.0;
    rep.converged = true;
    return rep;
}

LateEtt estimate_late_ett_plugin(FitBundle& fb) {
    const Dataset& ds = fb.data();
    if (!ds.binary_outcome)
        throw ValidationError("late/ett plug-in requires the binary-outcome two-step fits");
    const TreatmentFit& tf = fb.treatment();
    const OutcomeFit& of = fb.outcome();

    const Index n = ds.n();
    double num = 0.0, den = 0.0, ett_num = 0.0, ett_den = 0.0;
    for (Index i = 0; i < n; ++i) {
        num += ds.w[i] * of.delta[i] * tf.delta_d[i];
        den += ds.w[i] * tf.delta_d[i];
        if (ds.d[i]) {
            ett_num += ds.w[i] * of.delta[i];
            ett_den += ds.w[i];
        }
    }
    if (den == 0.0) throw NumericError("late plug-in: P_n delta^D(x) is 0");
    if (!(ett_den > 0.0)) throw ValidationError("ett plug-in: treated arm is empty");
    return LateEtt{num / den, ett_num / ett_den};
}

EstimateReport estimate_b_reg(const Dataset& ds, const EstimatorConfig& cfg) {
    FitBundle fb(ds, cfg);
    return estimate_b_reg(fb);
}
EstimateReport estimate_ipw(const Dataset& ds, const EstimatorConfig& cfg) {
    FitBundle fb(ds, cfg);
    return estimate_ipw(fb);
}
EstimateReport estimate_b_ipw(const Dataset& ds, const EstimatorConfig& cfg) {
    FitBundle fb(ds, cfg);
    return estimate_b_ipw(fb);
}
EstimateReport estimate_g(const Dataset& ds, const EstimatorConfig& cfg) {
    FitBundle fb(ds, cfg);
    return estimate_g(fb);
}
EstimateReport estimate_mr(const Dataset& ds, const EstimatorConfig& cfg) {
    FitBundle fb(ds, cfg);
    return estimate_mr(fb);
}
EstimateReport estimate_b_mr(const Dataset& ds, const EstimatorConfig& cfg) {
    FitBundle fb(ds, cfg);
    return estimate_b_mr(fb);
}
LateEtt estimate_late_ett_plugin(const Dataset& ds, const EstimatorConfig& cfg) {
    FitBundle fb(ds, cfg);
    return estimate_late_ett_plugin(fb);
}

const std::vector<std::string>& estimator_registry() {
    static const std::vector<std::string> tags = {"b-reg", "ipw",   "b-ipw", "g",       "mr",
                                                  "b-mr",  "crude", "2sls",  "late-ett"};
    return tags;
}

namespace {

std::vector<EstimateReport> run_one(FitBundle& fb, const std::string& tag) {
    if (tag == "b-reg") return {estimate_b_reg(fb)};
    if (tag == "ipw") return {estimate_ipw(fb)};
    if (tag == "b-ipw") return {estimate_b_ipw(fb)};
    if (tag == "g") return {estimate_g(fb)};
    if (tag == "mr") return {estimate_mr(fb)};
    if (tag == "b-mr") return {estimate_b_mr(fb)};
    if (tag == "crude") return {estimate_crude(fb.data())};
    if (tag == "2sls") return {estimate_2sls(fb.data(), fb.config())};
    if (tag == "late-ett") {
        const LateEtt le = estimate_late_ett_plugin(fb);
        EstimateReport late, ett;
        late.estimator = "late";
        late.delta_hat = le.late;
        late.in_bounds = std::abs(le.late) <= 1.0;
        late.converged = true;
        ett.estimator = "ett";
        ett.delta_hat = le.ett;
        ett.in_bounds = std::abs(le.ett) <= 1.0;
        ett.converged = true;
        return {late, ett};
    }
    throw DomainError("unknown estimator '" + tag + "'");
}

}  // namespace

std::vector<EstimateReport> run_estimator(const Dataset& ds, const std::string& tag,
                                          const EstimatorConfig& cfg) {
    FitBundle fb(ds, cfg);
    return run_one(fb, tag);
}

std::vector<EstimateReport> estimate_all(const Dataset& ds, const std::vector<std::string>& tags,
                                         const EstimatorConfig& cfg) {
    FitBundle fb(ds, cfg);
    std::vector<EstimateReport> out;
    for (const auto& tag : tags) {
        try {
            auto reps = run_one(fb, tag);
            out.insert(out.end(), reps.begin(), reps.end());
        } catch (const Error& e) {
            EstimateReport failed;
            failed.estimator = tag;
            failed.converged = false;
            failed.warnings.push_back(e.what());
            out.push_back(std::move(failed));
        }
    }
    return out;
}

std::string reports_to_csv(const std::vector<EstimateReport>& reports) {
    std::string out = "estimator,delta_hat,se,ci_lo,ci_hi,in_bounds,converged\n";
    for (const auto& r : reports) {
        out += r.estimator + ",";
        out += std::isnan(r.delta_hat) ? "" : format_g17(r.delta_hat);
        out += ",";
        out += r.se ? format_g17(*r.se) : "";
        out += ",";
        out += r.ci ? format_g17(r.ci->first) : "";
        out += ",";
        out += r.ci ? format_g17(r.ci->second) : "";
        out += ",";
        out += r.in_bounds ? "true" : "false";
        out += ",";
        out += r.converged ? "true" : "false";
        out += "\n";
    }
    return out;
}

}  // namespace ivwald
