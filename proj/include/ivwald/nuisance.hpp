#ifndef IVWALD_NUISANCE_HPP
#define IVWALD_NUISANCE_HPP

#include "ivwald/dataset.hpp"
#include "ivwald/wald_param.hpp"

#include <string>
#include <vector>

namespace ivwald {

// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] inside
// likelihoods to keep log terms finite.
inline constexpr double kProbClamp = 1e-10;

struct NuisanceFit {
    std::string model_tag;
    VectorXd coefficients;
    bool converged = false;
    int iterations = 0;
    double final_gradient_norm = std::numeric_limits<double>::quiet_NaN();
    double log_likelihood = std::numeric_limits<double>::quiet_NaN();
};

// --- weighted log-likelihoods, with analytic scores -----------------------
// Each returns sum_i w_i * loglik_i and, when grad is non-null, fills the
// analytic score (exact derivative of the returned value away from the
// probability clamp).

// Bernoulli Z with P(Z=1|x) = expit(gamma' x).
double propensity_loglik(const Dataset& ds, const MatrixXd& xg, const VectorXd& gamma,
                         VectorXd* grad = nullptr);

// Bernoulli D with p_z^D built from delta_d = link(beta' xb) and
// OP^D = exp(eta' xe) through the closed-form baseline solve. theta packs
// (beta, eta).
double treatment_loglik(const Dataset& ds, const MatrixXd& xb, const MatrixXd& xe, DeltaLink link,
                        const VectorXd& theta, VectorXd* grad = nullptr);

// Bernoulli Y with p_z^Y built from delta = tanh(alpha' xa), the fixed
// per-row delta_d, and OP^Y = exp(zeta' xz). theta packs (alpha, zeta).
double outcome_loglik(const Dataset& ds, const MatrixXd& xa, const MatrixXd& xz,
                      const VectorXd& delta_d_by_row, const VectorXd& theta,
                      VectorXd* grad = nullptr);

// --- fitted nuisance bundles ----------------------------------------------

struct PropensityFit {
    NuisanceFit info;  // tag "gamma"
    VectorXd gamma;
    std::vector<Index> cols;
    VectorXd prob;  // fitted P(Z=1|x_i)

    // f(z|x_i) under the fitted model.
    double density(int z, Index i) const { return z ? prob[i] : 1.0 - prob[i]; }
};

// Logistic MLE of Z on the design columns.
PropensityFit fit_propensity(const Dataset& ds, const std::vector<Index>& design);

struct TreatmentFit {
    NuisanceFit info;  // tag "beta_eta"
    VectorXd beta, eta;
    DeltaLink link = DeltaLink::Tanh;
    std::vector<Index> cols_delta_d, cols_op_d;
    VectorXd delta_d;  // fitted delta^D(x_i)
    VectorXd p0d;      // fitted P(D=1|Z=0,x_i)
};

// Step one of the two-step MLE: maximize the likelihood of D | Z, X in
// (beta, eta).
TreatmentFit fit_treatment_2mle(const Dataset& ds, const std::vector<Index>& design_delta_d,
                                const std::vector<Index>& design_op_d,
                                DeltaLink link = DeltaLink::Tanh);

struct OutcomeFit {
    NuisanceFit info;  // tag "alpha_zeta"
    VectorXd alpha, zeta;
    std::vector<Index> cols_delta, cols_op_y;
    VectorXd delta;  // fitted delta(x_i)
    VectorXd p0y;    // fitted P(Y=1|Z=0,x_i)
};

// Step two: maximize the likelihood of Y | Z, X at the step-one beta.
// Binary outcomes only.
OutcomeFit fit_outcome_2mle(const Dataset& ds, const TreatmentFit& treatment,
                            const std::vector<Index>& design_delta,
                            const std::vector<Index>& design_op_y);

struct LinearNuisances {
    TreatmentFit theta;     // p0^D model, same two-step MLE (D stays binary)
    NuisanceFit iota_info;  // tag "iota"
    VectorXd iota;
    std::vector<Index> cols_p0y;
    VectorXd p0y;  // iota' x_i
};

// Continuous-outcome nuisances: theta by the binary-D MLE, iota by weighted
// least squares of Y on the design within the Z=0 arm.
LinearNuisances fit_linear_nuisances(const Dataset& ds, const std::vector<Index>& design_delta_d,
                                     const std::vector<Index>& design_op_d,
                                     const std::vector<Index>& design_p0y,
                                     DeltaLink link = DeltaLink::Tanh);

struct EnsembleFit {
    NuisanceFit info;  // tag "ensemble"; coefficients are the mixture weights
    std::vector<PropensityFit> candidates;
    VectorXd weights;
    VectorXd prob;  // combined P(Z=1|x_i), clamped to [eps, 1-eps]
    bool collinearity_warning = false;

    double density(int z, Index i) const { return z ? prob[i] : 1.0 - prob[i]; }
};

inline constexpr double kEnsembleClamp = 1e-6;

// Mixture propensity: per-candidate MLE, then a weighted no-intercept
// linear regression of Z on the fitted probability columns (ridge 1e-8).
EnsembleFit fit_propensity_ensemble(const Dataset& ds,
                                    const std::vector<std::vector<Index>>& candidate_designs);

// Weighted least squares; throws NumericError on rank deficiency.
VectorXd weighted_least_squares(const MatrixXd& x, const VectorXd& y, const VectorXd& w);

}  // namespace ivwald

#endif
