#ifndef IVWALD_WALD_PARAM_HPP
#define IVWALD_WALD_PARAM_HPP

#include "ivwald/common.hpp"

namespace ivwald {

// Variation-independent parameter block at one covariate value:
// the conditional Wald estimand delta, the instrument-treatment risk
// difference delta_d, and the two odds products. The implied
// instrument-outcome risk difference is delta * delta_d.
struct WaldParams {
    double delta;    // in (-1, 1)
    double delta_d;  // in (-1, 1)
    double op_d;     // in (0, inf)
    double op_y;     // in (0, inf)
};

// The four conditional cell probabilities
// P(D=1|Z=0,x), P(D=1|Z=1,x), P(Y=1|Z=0,x), P(Y=1|Z=1,x).
struct CellProbs {
    double p0_d;
    double p1_d;
    double p0_y;
    double p1_y;
};

// Solve for p0 in  p0 (p0 + delta) = op (1 - p0)(1 - p0 - delta),
// i.e. the baseline-arm probability with risk difference delta and odds
// product op. Equivalent quadratic: (1-op) p0^2 + (delta + op(2-delta)) p0
// - op(1-delta) = 0, evaluated through the root form that stays stable as
// op -> 1 (where the quadratic degenerates to linear and the textbook root
// is 0/0). Requires delta in (-1,1), op > 0; returns p0 with both p0 and
// p0 + delta in (0,1).
double solve_baseline_prob(double delta, double op);

// Partial derivatives of solve_baseline_prob via implicit differentiation
// of the defining equation; valid on the whole domain including op = 1.
struct BaselineProbGrad {
    double p0;
    double d_delta;  // dp0 / ddelta
    double d_op;     // dp0 / dop
};
BaselineProbGrad solve_baseline_prob_grad(double delta, double op);

// Closed-form map from (delta, delta_d, op_d, op_y) to the cell
// probabilities. Throws DomainError outside the domain.
CellProbs map_forward(const WaldParams& wp);

// Inverse map. Throws DomainError off (0,1)^4 and ValidationError when
// p1_d == p0_d (instrument relevance fails, delta undefined).
WaldParams map_inverse(const CellProbs& cp);

// Link functions for the regression models.
enum class DeltaLink { Tanh, Expit, Identity };

double link_delta(DeltaLink kind, double eta);
double link_delta_deriv(DeltaLink kind, double eta);

// exp link for odds products, with the linear predictor clamped to
// +/- kOpLinkClamp so downstream quadratics cannot overflow.
inline constexpr double kOpLinkClamp = 150.0;
double link_op(double eta);

// Pull a risk difference strictly inside (-1, 1); tanh rounds to exactly
// +/-1 for |arg| > ~19 and the quadratic solve needs the open interval.
inline double clamp_risk_difference(double d) {
    constexpr double lim = 1.0 - 1e-12;
    return d > lim ? lim : (d < -lim ? -lim : d);
}

}  // namespace ivwald

#endif
