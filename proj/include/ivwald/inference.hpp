#ifndef IVWALD_INFERENCE_HPP
#define IVWALD_INFERENCE_HPP

#include "ivwald/estimators.hpp"

#include <cstdint>
#include <functional>

namespace ivwald {

struct BootstrapConfig {
    int replicates = 1000;
    std::uint64_t seed = 0;
    double ci_level = 0.95;
    enum class FailurePolicy { DropAndReport, Abort } failure_policy = FailurePolicy::DropAndReport;
    int threads = 1;
};

// Type-7 quantile (linear interpolation between order statistics).
double quantile_type7(std::vector<double> values, double q);

// Resample n rows with replacement (weights kept, then renormalized to
// mean 1), keyed by stream (seed, replicate).
Dataset resample(const Dataset& ds, std::uint64_t seed, std::uint64_t replicate);

struct BootstrapResult {
    std::pair<double, double> ci;
    std::vector<double> replicate_values;  // converged replicates, replicate order
    int failures = 0;
};

// Percentile bootstrap of an arbitrary statistic.
BootstrapResult bootstrap_statistic(const Dataset& ds,
                                    const std::function<double(const Dataset&)>& statistic,
                                    const BootstrapConfig& cfg);

// Runs a registry estimator on the full data, then fills its CI from the
// percentile bootstrap of the same statistic. "late-ett" is not supported
// here (two statistics); bootstrap each via bootstrap_statistic instead.
EstimateReport bootstrap_ci(const Dataset& ds, const std::string& estimator_tag,
                            const BootstrapConfig& cfg, const EstimatorConfig& est_cfg = {});

}  // namespace ivwald

#endif
