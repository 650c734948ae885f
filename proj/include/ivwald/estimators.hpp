#ifndef IVWALD_ESTIMATORS_HPP
#define IVWALD_ESTIMATORS_HPP

#include "ivwald/mestimate.hpp"
#include "ivwald/nuisance.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ivwald {

// Per-model-block design columns. Empty vectors resolve to all covariate
// columns of the dataset (intercept included).
struct EstimatorConfig {
    std::vector<Index> design_delta;    // delta(X; alpha)
    std::vector<Index> design_delta_d;  // delta^D(X; beta)
    std::vector<Index> design_op_d;     // OP^D(X; eta)
    std::vector<Index> design_op_y;     // OP^Y(X; zeta)
    std::vector<Index> design_f;        // f(Z|X; gamma)
    std::vector<Index> design_p0y;      // p0^Y(X; iota), continuous outcomes
    std::vector<Index> design_bipw;     // b-ipw working model; empty: delta^D's

    DeltaLink delta_d_link = DeltaLink::Tanh;

    // Optional index-function overrides, evaluated on the full covariate
    // row. Defaults are the matching design rows.
    using IndexFn = std::function<VectorXd(const VectorXd&)>;
    IndexFn h1, h2, h3, h, g;

    double positivity_warn_f = 0.01;
    double positivity_warn_delta_d = 0.01;

    // Fill the standard error from the stacked estimating-equation
    // sandwich (supported for b-reg, ipw, b-ipw, g, mr, b-mr).
    bool sandwich_se = false;
};

struct EstimateReport {
    std::string estimator;
    double delta_hat = std::numeric_limits<double>::quiet_NaN();
    bool in_bounds = false;  // |delta_hat| <= 1; meaningful for binary Y
    bool converged = false;
    std::vector<NuisanceFit> nuisance_fits;
    std::optional<double> se;
    std::optional<std::pair<double, double>> ci;
    std::optional<VectorXd> influence;  // estimated influence values (mr)
    std::vector<std::string> warnings;
};

// Shared, lazily-computed nuisance fits for one (dataset, config) pair, so
// a run over several estimators fits gamma and the two-step MLE once.
class FitBundle {
   public:
    FitBundle(const Dataset& ds, EstimatorConfig cfg);

    const Dataset& data() const { return *ds_; }
    const EstimatorConfig& config() const { return cfg_; }
    DeltaLink delta_link() const;  // tanh for binary Y, identity otherwise

    const PropensityFit& propensity();
    const TreatmentFit& treatment();         // (beta, eta) two-step MLE
    const OutcomeFit& outcome();             // (alpha, zeta), binary Y only
    const LinearNuisances& linear();         // theta/iota, continuous Y only
    const VectorXd& plugin_p0d();            // per-row p0^D plug-in
    const VectorXd& plugin_p0y();            // per-row p0^Y plug-in

   private:
    const Dataset* ds_;
    EstimatorConfig cfg_;
    std::optional<PropensityFit> propensity_;
    std::optional<TreatmentFit> treatment_;
    std::optional<OutcomeFit> outcome_;
    std::optional<LinearNuisances> linear_;
};

// --- the estimators --------------------------------------------------------

EstimateReport estimate_b_reg(FitBundle& fb);
EstimateReport estimate_ipw(FitBundle& fb);
EstimateReport estimate_b_ipw(FitBundle& fb);
EstimateReport estimate_g(FitBundle& fb);
EstimateReport estimate_mr(FitBundle& fb);
EstimateReport estimate_b_mr(FitBundle& fb);
EstimateReport estimate_crude(const Dataset& ds);
EstimateReport estimate_2sls(const Dataset& ds, const EstimatorConfig& cfg = {});

struct LateEtt {
    double late;
    double ett;
};
LateEtt estimate_late_ett_plugin(FitBundle& fb);

// Convenience one-shot wrappers.
EstimateReport estimate_b_reg(const Dataset& ds, const EstimatorConfig& cfg = {});
EstimateReport estimate_ipw(const Dataset& ds, const EstimatorConfig& cfg = {});
EstimateReport estimate_b_ipw(const Dataset& ds, const EstimatorConfig& cfg = {});
EstimateReport estimate_g(const Dataset& ds, const EstimatorConfig& cfg = {});
EstimateReport estimate_mr(const Dataset& ds, const EstimatorConfig& cfg = {});
EstimateReport estimate_b_mr(const Dataset& ds, const EstimatorConfig& cfg = {});
LateEtt estimate_late_ett_plugin(const Dataset& ds, const EstimatorConfig& cfg = {});

// Fixed registry of estimator names accepted by the CLI and bindings.
const std::vector<std::string>& estimator_registry();

// Run one registered estimator ("late-ett" yields rows "late" and "ett").
std::vector<EstimateReport> run_estimator(const Dataset& ds, const std::string& tag,
                                          const EstimatorConfig& cfg = {});

// Run several estimators sharing one nuisance bundle.
std::vector<EstimateReport> estimate_all(const Dataset& ds, const std::vector<std::string>& tags,
                                         const EstimatorConfig& cfg = {});

// Stacked estimating system (all nuisance equations plus the Delta-defining
// equation) for a converged estimator; used for sandwich variances. The
// last coordinate of the returned theta is Delta.
struct StackedSystem {
    EstimatingSystem system;
    VectorXd theta_hat;
};
StackedSystem stacked_system(FitBundle& fb, const std::string& tag);

// CSV serialization of reports: header + one row per report with columns
// estimator, delta_hat, se, ci_lo, ci_hi, in_bounds, converged.
std::string reports_to_csv(const std::vector<EstimateReport>& reports);

}  // namespace ivwald

#endif
