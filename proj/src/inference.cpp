#include "ivwald/inference.hpp"

#include "ivwald/rng.hpp"

#include <algorithm>
#include <cmath>

namespace ivwald {

double quantile_type7(std::vector<double> values, double q) {
    if (values.empty()) throw DomainError("quantile of empty input");
    if (!(q >= 0.0 && q <= 1.0)) throw DomainError("quantile level must be in [0, 1]");
    std::sort(values.begin(), values.end());
    const auto m = values.size();
    const double h = q * static_cast<double>(m - 1);
    const auto lo = static_cast<size_t>(std::floor(h));
    if (lo + 1 >= m) return values[m - 1];
    return values[lo] + (h - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

Dataset resample(const Dataset& ds, std::uint64_t seed, std::uint64_t replicate) {
    CounterRng rng(seed, replicate);
    const Index n = ds.n();
    Dataset out = ds;
    for (Index i = 0; i < n; ++i) {
        const Index j = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
        out.z[i] = ds.z[j];
        out.d[i] = ds.d[j];
        out.y[i] = ds.y[j];
        out.w[i] = ds.w[j];
        out.x.row(i) = ds.x.row(j);
    }
    const double mean = out.w.mean();
    if (std::abs(mean - 1.0) > 1e-12) out.w /= mean;
    return out;
}

BootstrapResult bootstrap_statistic(const Dataset& ds,
                                    const std::function<double(const Dataset&)>& statistic,
                                    const BootstrapConfig& cfg) {
    if (cfg.replicates < 1) throw DomainError("bootstrap needs at least one replicate");
    if (!(cfg.ci_level > 0.0 && cfg.ci_level < 1.0))
        throw DomainError("bootstrap ci_level must be in (0, 1)");

    const Index reps = cfg.replicates;
    std::vector<double> values(reps, std::numeric_limits<double>::quiet_NaN());
    std::vector<char> ok(reps, 0);
    std::vector<std::string> first_error(reps);

    parallel_tasks(reps, cfg.threads, [&](Index r) {
        try {
            const Dataset boot = resample(ds, cfg.seed, static_cast<std::uint64_t>(r));
            values[r] = statistic(boot);
            ok[r] = 1;
        } catch (const Error& e) {
            first_error[r] = e.what();
        }
    });

    BootstrapResult out;
    for (Index r = 0; r < reps; ++r) {
        if (ok[r]) {
            out.replicate_values.push_back(values[r]);
        } else {
            ++out.failures;
            if (cfg.failure_policy == BootstrapConfig::FailurePolicy::Abort)
                throw NumericError("bootstrap replicate " + std::to_string(r) +
                                   " failed: " + first_error[r]);
        }
    }
    if (out.failures > 0 &&
        static_cast<double>(out.failures) > 0.2 * static_cast<double>(cfg.replicates))
        throw NumericError("estimate unstable: " + std::to_string(out.failures) + " of " +
                           std::to_string(cfg.replicates) + " bootstrap replicates failed");

    const double a = (1.0 - cfg.ci_level) / 2.0;
    out.ci = {quantile_type7(out.replicate_values, a),
              quantile_type7(out.replicate_values, 1.0 - a)};
    return out;
}

EstimateReport bootstrap_ci(const Dataset& ds, const std::string& estimator_tag,
                            const BootstrapConfig& cfg, const EstimatorConfig& est_cfg) {
    auto reports = run_estimator(ds, estimator_tag, est_cfg);
    if (reports.size() != 1)
        throw DomainError("bootstrap_ci supports single-statistic estimators; got '" +
                          estimator_tag + "'");
    EstimateReport rep = std::move(reports.front());

    const auto statistic = [&estimator_tag, &est_cfg](const Dataset& boot) {
        return run_estimator(boot, estimator_tag, est_cfg).front().delta_hat;
    };
    const BootstrapResult bs = bootstrap_statistic(ds, statistic, cfg);
    rep.ci = bs.ci;
    if (bs.failures > 0)
        rep.warnings.push_back(std::to_string(bs.failures) + " of " +
                               std::to_string(cfg.replicates) +
                               " bootstrap replicates failed and were dropped");
    return rep;
}

}  // namespace ivwald
