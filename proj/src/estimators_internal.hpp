#ifndef IVWALD_ESTIMATORS_INTERNAL_HPP
#define IVWALD_ESTIMATORS_INTERNAL_HPP

#include "ivwald/estimators.hpp"

namespace ivwald::detail {

NuisanceFit from_solve(const std::string& tag, const SolveResult& res);

MatrixXd index_rows(const Dataset& ds, const MatrixXd& fallback,
                    const EstimatorConfig::IndexFn& fn, const char* what);

double weighted_mean(const Dataset& ds, const VectorXd& values);

struct IpwParts {
    SolveResult beta_solve;
    VectorXd delta_d;   // link(beta' xb)
    VectorXd ht_ratio;  // y / delta_d * (2z-1) / f(z|x)
};
IpwParts ipw_parts(FitBundle& fb, EstimateReport& rep);

struct DrParts {
    SolveResult beta_dr;
    VectorXd delta_d_dr;  // link(beta_dr' xb)
};
DrParts dr_beta(FitBundle& fb, EstimateReport& rep);

SolveResult dr_alpha(FitBundle& fb, const MatrixXd& xa, const MatrixXd& g_rows,
                     EstimateReport& rep, const char* tag);

// b-mr index function: the delta design with its intercept slot replaced by
// 1 / delta^D(x; beta_dr).
MatrixXd bounded_g_rows(FitBundle& fb, const MatrixXd& xa, const VectorXd& delta_d_dr);

}  // namespace ivwald::detail

#endif
