#ifndef IVWALD_DIAGNOSTICS_HPP
#define IVWALD_DIAGNOSTICS_HPP

#include "ivwald/dataset.hpp"

#include <string>
#include <vector>

namespace ivwald {

// How to condition on X when screening the instrumental inequalities.
struct Stratification {
    enum class Kind { None, Columns, QuantileBins } kind = Kind::None;
    std::vector<std::string> columns;  // Kind::Columns: exact-value strata
    std::string bin_column;            // Kind::QuantileBins
    int bins = 4;

    static Stratification none() { return {}; }
    static Stratification by_columns(std::vector<std::string> cols) {
        Stratification s;
        s.kind = Kind::Columns;
        s.columns = std::move(cols);
        return s;
    }
    static Stratification by_quantile_bins(std::string col, int k) {
        Stratification s;
        s.kind = Kind::QuantileBins;
        s.bin_column = std::move(col);
        s.bins = k;
        return s;
    }
};

struct IvInequalityStratum {
    std::string stratum_id;
    double weight = 0.0;  // share of total weight
    // lhs(y, d) = P(Y=y, D=d | Z=1) + P(Y=1-y, D=d | Z=0), flattened as
    // (y=0,d=0), (y=0,d=1), (y=1,d=0), (y=1,d=1).
    double lhs[4] = {0, 0, 0, 0};
    double tolerance[4] = {0, 0, 0, 0};
    double max_slack = 0.0;  // max over cells of lhs - 1
    bool violated = false;
    bool skipped = false;  // an instrument arm was empty
};

struct IvInequalityReport {
    std::vector<IvInequalityStratum> strata;
    bool any_violation = false;
    int skipped_strata = 0;

    std::string to_csv() const;
    std::string to_text() const;
};

// Screen the instrumental inequalities
//   P(Y=y, D=d | Z=1, X) + P(Y=1-y, D=d | Z=0, X) <= 1
// on weighted empirical cell probabilities, flagging any left-hand side
// above 1 plus a two-standard-error allowance (binomial plug-in with Kish
// effective sample sizes).
IvInequalityReport test_iv_inequalities(const Dataset& ds,
                                        const Stratification& strat = Stratification::none());

// Bounds on x1 - x0 = P(Y=1,D=1|Z=1) - P(Y=1,D=1|Z=0) implied by the
// observable margins; lo <= hi holds on all of [0,1]^4.
std::pair<double, double> feasibility_band(double p1y, double p0y, double p1d, double p0d);

}  // namespace ivwald

#endif
