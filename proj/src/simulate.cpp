#include "ivwald/simulate.hpp"

#include "estimators_internal.hpp"
#include "ivwald/rng.hpp"

#include <algorithm>
#include <cmath>

namespace ivwald {

double true_average_wald() {
    // integral of tanh(a + b x) is log(cosh(a + b x)) / b; density is 1 on
    // the two unit-length intervals.
    const double a = dgp::kAlpha0, b = dgp::kAlpha1;
    auto anti = [&](double x) { return std::log(std::cosh(a + b * x)) / b; };
    return (anti(-0.5) - anti(-1.0)) + (anti(1.0) - anti(0.5));
}

GeneratedData generate(Index n, std::uint64_t seed, std::uint64_t stream_id, double kappa) {
    if (n < 1) throw DomainError("generate: n must be >= 1");
    CounterRng rng(seed, stream_id);

    GeneratedData out;
    Dataset& ds = out.data;
    ds.z.resize(n);
    ds.d.resize(n);
    ds.y.resize(n);
    ds.w = VectorXd::Ones(n);
    ds.x.resize(n, 3);
    ds.column_names = {"(intercept)", "x2", "x_dagger"};
    ds.binary_outcome = true;
    out.u.resize(n);
    out.delta_x.resize(n);

    for (Index i = 0; i < n; ++i) {
        const double mag = rng.uniform(0.5, 1.0);
        const double x2 = rng.bernoulli(0.5) ? mag : -mag;
        const int u = rng.bernoulli(0.5) ? 1 : 0;
        const double x_dagger = rng.normal();

        const double pi_z = 1.0 / (1.0 + std::exp(-(dgp::kGamma0 + dgp::kGamma1 * x2)));
        const double delta_d = std::tanh(dgp::kBeta0 + dgp::kBeta1 * x2);
        const double op_d = std::exp(dgp::kEta0 + dgp::kEta1 * x2);
        const double p0d = solve_baseline_prob(delta_d, op_d);
        const double delta = std::tanh(dgp::kAlpha0 + dgp::kAlpha1 * x2);
        const double op_y = std::exp(dgp::kZeta0 + dgp::kZeta1 * x2);
        const double delta_y = delta * delta_d;
        const double p0y = solve_baseline_prob(delta_y, op_y);

        const int z = rng.bernoulli(pi_z) ? 1 : 0;
        const double p_d = p0d + z * delta_d + kappa * (2 * u - 1);
        const double p_y = p0y + z * delta_y + kappa * (2 * u - 1);
        if (!(p_d >= 0.0 && p_d <= 1.0 && p_y >= 0.0 && p_y <= 1.0))
            throw NumericError("DGP integrity: conditional probability outside [0, 1]");

        ds.x(i, 0) = 1.0;
        ds.x(i, 1) = x2;
        ds.x(i, 2) = x_dagger;
        ds.z[i] = z;
        ds.d[i] = rng.bernoulli(p_d) ? 1 : 0;
        ds.y[i] = rng.bernoulli(p_y) ? 1.0 : 0.0;
        out.u[i] = u;
        out.delta_x[i] = delta;
    }
    ds.validate();
    return out;
}

const std::vector<Index>& correct_design() {
    static const std::vector<Index> cols = {0, 1};
    return cols;
}

const std::vector<Index>& decoy_design() {
    static const std::vector<Index> cols = {0, 2};
    return cols;
}

ScenarioSpec ScenarioSpec::named(const std::string& name) {
    ScenarioSpec spec;
    auto set = [&spec](bool delta, bool delta_d, bool f, bool op) {
        spec.delta_correct = delta;
        spec.delta_d_correct = delta_d;
        spec.f_correct = f;
        spec.op_correct = op;
    };
    if (name == "all-correct") {
        set(true, true, true, true);
    } else if (name == "m1-correct") {
        set(true, true, false, true);
    } else if (name == "m2-correct") {
        set(false, true, true, false);
    } else if (name == "m3-correct") {
        set(true, false, true, false);
    } else if (name == "all-wrong") {
        set(false, false, false, false);
    } else if (name.rfind("grid=", 0) == 0 && name.size() == 9) {
        auto flag = [&name](size_t k) {
            const char c = name[5 + k];
            if (c != 'T' && c != 'F')
                throw DomainError("scenario grid flags must be T or F: '" + name + "'");
            return c == 'T';
        };
        set(flag(0), flag(1), flag(2), flag(3));
    } else {
        throw DomainError(
            "unknown scenario '" + name +
            "' (use all-correct, m1-correct, m2-correct, m3-correct, all-wrong, or grid=TTTT)");
    }
    return spec;
}

std::string ScenarioSpec::scenario_name() const {
    const bool d = delta_correct, dd = delta_d_correct, f = f_correct, op = op_correct;
    if (d && dd && f && op) return "all-correct";
    if (d && dd && !f && op) return "m1-correct";
    if (!d && dd && f && !op) return "m2-correct";
    if (d && !dd && f && !op) return "m3-correct";
    if (!d && !dd && !f && !op) return "all-wrong";
    std::string grid = "grid=";
    for (bool b : {d, dd, f, op}) grid += b ? 'T' : 'F';
    return grid;
}

EstimatorConfig ScenarioSpec::estimator_config() const {
    EstimatorConfig cfg;
    cfg.design_delta = delta_correct ? correct_design() : decoy_design();
    cfg.design_delta_d = delta_d_correct ? correct_design() : decoy_design();
    cfg.design_f = f_correct ? correct_design() : decoy_design();
    cfg.design_op_d = op_correct ? correct_design() : decoy_design();
    cfg.design_op_y = op_correct ? correct_design() : decoy_design();
    cfg.design_p0y = delta_correct ? correct_design() : decoy_design();
    return cfg;
}

namespace {

// The alternative-parameterization functional, with delta^Y supplied by a
// directly fitted model rather than the delta * delta^D composition.
double eq16_value(FitBundle& fb, const std::vector<Index>& design_dy) {
    const Dataset& ds = fb.data();
    EstimateReport scratch;
    const detail::DrParts dr = detail::dr_beta(fb, scratch);
    const PropensityFit& f = fb.propensity();
    const VectorXd& p0d = fb.plugin_p0d();
    const VectorXd& p0y = fb.plugin_p0y();

    // Direct delta^Y fit: project the instrument-weighted outcome contrast
    // onto tanh(a' x_dy).
    const MatrixXd xdy = design_matrix(ds, design_dy);
    EstimatingSystem sys;
    sys.dim = xdy.cols();
    sys.label = "direct delta^Y projection";
    sys.residual = [&ds, &f, xdy](Index i, const VectorXd& a, Eigen::Ref<VectorXd> out) {
        const double iv = (2.0 * ds.z[i] - 1.0) / f.density(ds.z[i], i);
        out = xdy.row(i).transpose() * (ds.y[i] * iv - std::tanh(xdy.row(i).dot(a)));
    };
    const SolveResult sol = solve(sys, ds, VectorXd::Zero(sys.dim));

    VectorXd summand(ds.n());
    for (Index i = 0; i < ds.n(); ++i) {
        const double dy = std::tanh(xdy.row(i).dot(sol.theta));
        const double dd = dr.delta_d_dr[i];
        const double iv = (2.0 * ds.z[i] - 1.0) / f.density(ds.z[i], i);
        summand[i] = iv * (ds.y[i] - p0y[i] - (ds.d[i] - p0d[i]) * dy / dd) / dd + dy / dd;
    }
    return detail::weighted_mean(ds, summand);
}

double run_tag(FitBundle& fb, const std::string& tag, const ScenarioSpec& spec) {
    if (tag == "b-reg") return estimate_b_reg(fb).delta_hat;
    if (tag == "ipw") return estimate_ipw(fb).delta_hat;
    if (tag == "b-ipw") return estimate_b_ipw(fb).delta_hat;
    if (tag == "g") return estimate_g(fb).delta_hat;
    if (tag == "mr") return estimate_mr(fb).delta_hat;
    if (tag == "b-mr") return estimate_b_mr(fb).delta_hat;
    if (tag == "crude") return estimate_crude(fb.data()).delta_hat;
    if (tag == "2sls") return estimate_2sls(fb.data(), fb.config()).delta_hat;
    if (tag == "eq16")
        return eq16_value(fb, spec.eq16_dy_correct ? correct_design() : decoy_design());
    throw DomainError("unknown Monte Carlo estimator '" + tag + "'");
}

}  // namespace

MonteCarloResult run_monte_carlo(const ScenarioSpec& spec) {
    if (spec.reps < 1) throw DomainError("run_monte_carlo: reps must be >= 1");
    const auto n_est = spec.estimators.size();
    MonteCarloResult result;
    result.spec = spec;
    result.replicate_values.assign(n_est, std::vector<double>(
                                              spec.reps, std::numeric_limits<double>::quiet_NaN()));
    result.sandwich_se_values.assign(
        spec.sandwich_for.size(),
        std::vector<double>(spec.reps, std::numeric_limits<double>::quiet_NaN()));

    const EstimatorConfig cfg = spec.estimator_config();
    parallel_tasks(spec.reps, spec.threads, [&](Index r) {
        const GeneratedData gen = generate(spec.n, spec.seed, static_cast<std::uint64_t>(r));
        FitBundle fb(gen.data, cfg);
        for (size_t e = 0; e < n_est; ++e) {
            try {
                result.replicate_values[e][r] = run_tag(fb, spec.estimators[e], spec);
            } catch (const Error&) {
                // stays NaN; counted as failed
            }
        }
        for (size_t s = 0; s < spec.sandwich_for.size(); ++s) {
            try {
                auto st = stacked_system(fb, spec.sandwich_for[s]);
                const MatrixXd cov = sandwich_variance(st.system, gen.data, st.theta_hat);
                result.sandwich_se_values[s][r] = std::sqrt(cov(cov.rows() - 1, cov.cols() - 1));
            } catch (const Error&) {
            }
        }
    });

    const double truth = true_average_wald();
    for (size_t e = 0; e < n_est; ++e) {
        EstimatorSummary s;
        s.estimator = spec.estimators[e];
        std::vector<double> vals;
        for (double v : result.replicate_values[e])
            if (std::isnan(v))
                ++s.n_failed;
            else
                vals.push_back(v);
        s.n_converged = static_cast<int>(vals.size());
        if (!vals.empty()) {
            double mean = 0.0, rmse = 0.0, oob = 0.0;
            for (double v : vals) {
                mean += v;
                rmse += (v - truth) * (v - truth);
                oob += std::abs(v) > 1.0 ? 1.0 : 0.0;
            }
            mean /= vals.size();
            s.bias = mean - truth;
            s.rmse = std::sqrt(rmse / vals.size());
            s.frac_out_of_bounds = oob / vals.size();
            double var = 0.0;
            for (double v : vals) var += (v - mean) * (v - mean);
            if (vals.size() > 1) {
                var /= (vals.size() - 1);
                s.mc_se = std::sqrt(var / vals.size());
            }
            std::vector<double> sorted = vals;
            std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
            const double hi = sorted[sorted.size() / 2];
            if (sorted.size() % 2 == 1) {
                s.median_bias = hi - truth;
            } else {
                std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2 - 1,
                                 sorted.end());
                s.median_bias = 0.5 * (sorted[sorted.size() / 2 - 1] + hi) - truth;
            }
        }
        const auto sw = std::find(spec.sandwich_for.begin(), spec.sandwich_for.end(),
                                  spec.estimators[e]);
        if (sw != spec.sandwich_for.end()) {
            const auto& ses = result.sandwich_se_values[sw - spec.sandwich_for.begin()];
            double sum = 0.0;
            int count = 0;
            for (double v : ses)
                if (!std::isnan(v)) {
                    sum += v;
                    ++count;
                }
            if (count > 0) s.mean_sandwich_se = sum / count;
        }
        result.summaries.push_back(std::move(s));
    }
    return result;
}

MonteCarloResult eq16_negative_fixture(const ScenarioSpec& spec) {
    ScenarioSpec fixture = spec;
    fixture.estimators = {"b-mr", "mr", "eq16"};
    return run_monte_carlo(fixture);
}

const EstimatorSummary& MonteCarloResult::summary(const std::string& estimator) const {
    for (const auto& s : summaries)
        if (s.estimator == estimator) return s;
    throw DomainError("no summary for estimator '" + estimator + "'");
}

std::string MonteCarloResult::summary_csv() const {
    std::string out =
        "scenario,estimator,n,reps,converged,failed,bias,mc_se,median_bias,rmse,"
        "frac_out_of_bounds,mean_sandwich_se\n";
    for (const auto& s : summaries) {
        out += spec.scenario_name() + "," + s.estimator + "," + std::to_string(spec.n) + "," +
               std::to_string(spec.reps) + "," + std::to_string(s.n_converged) + "," +
               std::to_string(s.n_failed);
        for (double v : {s.bias, s.mc_se, s.median_bias, s.rmse, s.frac_out_of_bounds,
                         s.mean_sandwich_se}) {
            out += ",";
            if (!std::isnan(v)) out += format_g17(v);
        }
        out += "\n";
    }
    return out;
}

std::string MonteCarloResult::replicates_csv() const {
    std::string out = "replicate";
    for (const auto& tag : spec.estimators) out += "," + tag;
    out += "\n";
    for (int r = 0; r < spec.reps; ++r) {
        out += std::to_string(r);
        for (size_t e = 0; e < spec.estimators.size(); ++e) {
            out += ",";
            const double v = replicate_values[e][r];
            if (!std::isnan(v)) out += format_g17(v);
        }
        out += "\n";
    }
    return out;
}

}  // namespace ivwald
