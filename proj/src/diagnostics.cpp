#include "ivwald/diagnostics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>

namespace ivwald {

namespace {

Index find_covariate(const Dataset& ds, const std::string& name) {
    auto it = std::find(ds.column_names.begin(), ds.column_names.end(), name);
    if (it == ds.column_names.end())
        throw SchemaError("stratification column '" + name + "' not found");
    return static_cast<Index>(it - ds.column_names.begin());
}

// Map each row to a stratum key.
std::vector<std::string> stratum_keys(const Dataset& ds, const Stratification& strat) {
    const Index n = ds.n();
    std::vector<std::string> keys(n);
    switch (strat.kind) {
        case Stratification::Kind::None:
            for (Index i = 0; i < n; ++i) keys[i] = "(all)";
            break;
        case Stratification::Kind::Columns: {
            std::vector<Index> cols;
            for (const auto& c : strat.columns) cols.push_back(find_covariate(ds, c));
            for (Index i = 0; i < n; ++i) {
                std::string k;
                for (Index c : cols) {
                    if (!k.empty()) k += "|";
                    k += format_g17(ds.x(i, c));
                }
                keys[i] = k;
            }
            break;
        }
        case Stratification::Kind::QuantileBins: {
            const Index c = find_covariate(ds, strat.bin_column);
            if (strat.bins < 1) throw DomainError("quantile bins must be >= 1");
            std::vector<double> cuts;
            for (int b = 1; b < strat.bins; ++b)
                cuts.push_back(
                    weighted_quantile(ds.x.col(c), ds.w, static_cast<double>(b) / strat.bins));
            for (Index i = 0; i < n; ++i) {
                int bin = 0;
                while (bin < static_cast<int>(cuts.size()) && ds.x(i, c) > cuts[bin]) ++bin;
                keys[i] = strat.bin_column + " bin " + std::to_string(bin + 1);
            }
            break;
        }
    }
    return keys;
}

}  // namespace

IvInequalityReport test_iv_inequalities(const Dataset& ds, const Stratification& strat) {
    ds.validate();
    if (!ds.binary_outcome)
        throw ValidationError("instrumental inequalities require a binary outcome");

    const auto keys = stratum_keys(ds, strat);
    // Per stratum and instrument arm: weight totals, squared weights and
    // the four (y, d) cell weights.
    struct Arm {
        double w = 0.0, w2 = 0.0;
        double cell[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
    };
    std::map<std::string, std::array<Arm, 2>> table;
    double total_weight = 0.0;
    for (Index i = 0; i < ds.n(); ++i) {
        Arm& arm = table[keys[i]][ds.z[i]];
        arm.w += ds.w[i];
        arm.w2 += ds.w[i] * ds.w[i];
        arm.cell[static_cast<int>(ds.y[i])][ds.d[i]] += ds.w[i];
        total_weight += ds.w[i];
    }

    IvInequalityReport report;
    for (const auto& [key, arms] : table) {
        IvInequalityStratum s;
        s.stratum_id = key;
        s.weight = (arms[0].w + arms[1].w) / total_weight;
        if (!(arms[0].w > 0.0) || !(arms[1].w > 0.0)) {
            s.skipped = true;
            ++report.skipped_strata;
            report.strata.push_back(std::move(s));
            continue;
        }
        // Kish effective sizes for the binomial tolerance.
        const double neff1 = arms[1].w * arms[1].w / arms[1].w2;
        const double neff0 = arms[0].w * arms[0].w / arms[0].w2;
        int cell_idx = 0;
        s.max_slack = -std::numeric_limits<double>::infinity();
        for (int y = 0; y <= 1; ++y) {
            for (int d = 0; d <= 1; ++d, ++cell_idx) {
                const double p1 = arms[1].cell[y][d] / arms[1].w;
                const double p0 = arms[0].cell[1 - y][d] / arms[0].w;
                const double lhs = p1 + p0;
                const double var = p1 * (1.0 - p1) / neff1 + p0 * (1.0 - p0) / neff0;
                const double tol = 2.0 * std::sqrt(std::max(var, 0.0));
                s.lhs[cell_idx] = lhs;
                s.tolerance[cell_idx] = tol;
                s.max_slack = std::max(s.max_slack, lhs - 1.0);
                if (lhs > 1.0 + tol) s.violated = true;
            }
        }
        report.any_violation = report.any_violation || s.violated;
        report.strata.push_back(std::move(s));
    }
    return report;
}

std::pair<double, double> feasibility_band(double p1y, double p0y, double p1d, double p0d) {
    for (double p : {p1y, p0y, p1d, p0d})
        if (!(p >= 0.0 && p <= 1.0))
            throw DomainError("feasibility_band inputs must lie in [0, 1]");
    const double lo = std::max(p1y - p0y - p0d, p1d - 1.0);
    const double hi = std::min(1.0 - p0d, p1y + p1d - p0y);
    if (lo > hi + 1e-12)
        throw NumericError("feasibility band inverted; this contradicts the band inequality");
    return {lo, hi};
}

std::string IvInequalityReport::to_csv() const {
    std::string out =
        "stratum,weight,lhs_y0_d0,lhs_y0_d1,lhs_y1_d0,lhs_y1_d1,max_slack,violated,skipped\n";
    for (const auto& s : strata) {
        out += s.stratum_id + "," + format_g17(s.weight);
        for (double v : s.lhs) out += "," + format_g17(v);
        out += "," + format_g17(s.max_slack);
        out += s.violated ? ",true" : ",false";
        out += s.skipped ? ",true\n" : ",false\n";
    }
    return out;
}

std::string IvInequalityReport::to_text() const {
    std::string out = "instrumental inequality screen (flag when LHS > 1 + 2*SE)\n";
    for (const auto& s : strata) {
        out += "  stratum " + s.stratum_id + " (weight " + format_g17(s.weight) + "): ";
        if (s.skipped) {
            out += "skipped (an instrument arm is empty)\n";
            continue;
        }
        out += "max slack " + format_g17(s.max_slack);
        out += s.violated ? "  VIOLATED\n" : "  ok\n";
    }
    out += any_violation ? "overall: VIOLATION\n" : "overall: no violation\n";
    return out;
}

}  // namespace ivwald
