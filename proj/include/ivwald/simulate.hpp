#ifndef IVWALD_SIMULATE_HPP
#define IVWALD_SIMULATE_HPP

#include "ivwald/estimators.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ivwald {

// Data-generating process for the Monte Carlo study. Covariates are an
// intercept and X2 uniform on (-1,-0.5) U (0.5,1); a standard-normal decoy
// column is carried alongside for the misspecification scenarios. A binary
// confounder U shifts both the treatment and outcome probabilities by
// +/- kappa.
namespace dgp {
inline constexpr double kAlpha0 = 0.1, kAlpha1 = 0.5;   // delta(X) = tanh
inline constexpr double kBeta0 = 0.0, kBeta1 = -0.5;    // delta^D(X) = tanh
inline constexpr double kGamma0 = 0.1, kGamma1 = -0.5;  // P(Z=1|X) = expit
inline constexpr double kZeta0 = 0.0, kZeta1 = -1.0;    // OP^Y(X) = exp
inline constexpr double kEta0 = -0.5, kEta1 = 1.0;      // OP^D(X) = exp
inline constexpr double kKappa = 0.1;
}  // namespace dgp

// E[ delta(X) ] under the DGP, in closed form (the tanh antiderivative
// log cosh over the two-interval support). Approximately 0.0868.
double true_average_wald();

struct GeneratedData {
    Dataset data;      // covariate columns: (intercept), x2, x_dagger
    VectorXi u;        // hidden confounder
    VectorXd delta_x;  // true delta(x) per row
};

// Draw n units from stream (seed, stream_id). kappa is the confounder
// shift; the default is the study value, 0 removes the confounding.
GeneratedData generate(Index n, std::uint64_t seed, std::uint64_t stream_id = 0,
                       double kappa = dgp::kKappa);

// Design column indices inside generated datasets.
const std::vector<Index>& correct_design();  // (intercept, x2)
const std::vector<Index>& decoy_design();    // (intercept, x_dagger)

struct ScenarioSpec {
    Index n = 500;
    int reps = 1000;
    std::uint64_t seed = 0;
    // Which model blocks use the correct covariates: delta(X), delta^D(X),
    // f(Z|X), and the odds products (OP^Y, OP^D) as one block. All 16
    // combinations are expressible; the five named scenarios are
    // projections of this grid.
    bool delta_correct = true;
    bool delta_d_correct = true;
    bool f_correct = true;
    bool op_correct = true;

    std::vector<std::string> estimators = {"b-reg", "b-ipw", "g", "mr", "b-mr"};
    std::vector<std::string> sandwich_for;  // also collect stacked sandwich SEs
    bool eq16_dy_correct = false;  // design of the "eq16" fixture's direct delta^Y model
    int threads = 1;

    // Named scenarios: all-correct, m1-correct, m2-correct, m3-correct,
    // all-wrong; or grid=TFTF in block order (delta, delta_d, f, op).
    static ScenarioSpec named(const std::string& name);
    std::string scenario_name() const;

    EstimatorConfig estimator_config() const;
};

struct EstimatorSummary {
    std::string estimator;
    int n_converged = 0;
    int n_failed = 0;
    double bias = std::numeric_limits<double>::quiet_NaN();
    double mc_se = std::numeric_limits<double>::quiet_NaN();          // sd / sqrt(converged)
    double median_bias = std::numeric_limits<double>::quiet_NaN();
    double rmse = std::numeric_limits<double>::quiet_NaN();
    double frac_out_of_bounds = std::numeric_limits<double>::quiet_NaN();  // |value| > 1
    double mean_sandwich_se = std::numeric_limits<double>::quiet_NaN();
};

struct MonteCarloResult {
    ScenarioSpec spec;
    std::vector<EstimatorSummary> summaries;
    // replicate values per estimator (spec.estimators order); NaN = failed.
    std::vector<std::vector<double>> replicate_values;
    // sandwich SEs per spec.sandwich_for entry; NaN = not computed.
    std::vector<std::vector<double>> sandwich_se_values;

    const EstimatorSummary& summary(const std::string& estimator) const;
    std::string summary_csv() const;
    std::string replicates_csv() const;
};

// Run the scenario; deterministic given the spec. Supports the pseudo-tag
// "eq16" (the alternative-parameterization functional) in spec.estimators.
MonteCarloResult run_monte_carlo(const ScenarioSpec& spec);

// The alternative-parameterization fixture: runs the scenario with
// estimators {b-mr, mr, eq16}. The eq16 functional plugs in a directly
// fitted delta^Y model instead of the delta * delta^D composition, which
// breaks its robustness exactly where the primary estimator keeps it.
MonteCarloResult eq16_negative_fixture(const ScenarioSpec& spec);

}  // namespace ivwald

#endif
