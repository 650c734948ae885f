#ifndef IVWALD_DATASET_HPP
#define IVWALD_DATASET_HPP

#include "ivwald/common.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ivwald {

// One unit's record. The covariate vector starts with the intercept 1.
struct ObservedSample {
    int z;
    int d;
    double y;
    VectorXd x;
    double w;
};

// Column-oriented sample container. Covariate matrix x is n-by-p with
// x(:,0) == 1; missing covariate cells are NaN until imputed. Weights are
// normalized to mean 1 so every P_n below is (1/n) * sum_i w_i * (.).
struct Dataset {
    VectorXi z;
    VectorXi d;
    VectorXd y;
    VectorXd w;
    MatrixXd x;
    std::vector<std::string> column_names;  // size p, [0] == "(intercept)"
    bool binary_outcome = false;

    // Provenance for serialization and reports.
    std::string instrument_name = "z";
    std::string treatment_name = "d";
    std::string outcome_name = "y";
    std::string weight_name;                 // empty: no weight column on save
    Index dropped_rows = 0;                  // rows dropped for missing z/d/y
    std::optional<double> dichotomize_threshold;

    Index n() const { return z.size(); }
    Index p() const { return x.cols(); }

    ObservedSample row(Index i) const {
        return ObservedSample{z[i], d[i], y[i], x.row(i).transpose(), w[i]};
    }

    bool has_missing_covariates() const;

    // Both instrument arms present, weights positive, shapes consistent.
    void validate() const;
};

struct ColumnMap {
    std::string instrument;
    std::string treatment;
    std::string outcome;
    std::vector<std::string> covariates;
    std::string weight;  // empty: all weights 1
};

struct LoadOptions {
    // Normalize weights to mean 1 (estimator convention); on by default.
    bool normalize_weights = true;
};

// Read a CSV with a header row. Missing values are encoded as an empty
// cell or "NA". Rows with missing instrument/treatment/outcome are dropped
// and counted; missing covariates are kept as NaN for impute_* to fill.
Dataset load_csv(const std::string& path, const ColumnMap& map, const LoadOptions& opts = {});

// Same parser over an in-memory string (tests, pipes).
Dataset parse_csv(const std::string& text, const ColumnMap& map, const LoadOptions& opts = {});

// Serialize with 17 significant digits: instrument, treatment, outcome,
// covariates (intercept excluded), then the weight column if named.
void save_csv(const Dataset& ds, const std::string& path);
std::string to_csv(const Dataset& ds);

// Replace missing cells in the named covariate columns by their weighted
// observed means and append one 0/1 was-missing indicator per column that
// had any gap. Z/D/Y/weight columns are not eligible.
Dataset impute_mean_with_indicators(const Dataset& ds, const std::vector<std::string>& cols);

// All covariate columns with at least one missing cell.
Dataset impute_mean_with_indicators(const Dataset& ds);

struct DichotomizeRule {
    enum class Kind { WeightedMedian, Fixed } kind = Kind::WeightedMedian;
    double value = 0.0;  // threshold when Fixed
    static DichotomizeRule median() { return {}; }
    static DichotomizeRule fixed(double t) { return {Kind::Fixed, t}; }
};

// Replace y by 1(y > t) and set the binary flag; t recorded in metadata.
// Errors if the outcome is already binary.
Dataset dichotomize(const Dataset& ds, const DichotomizeRule& rule);

// Weighted quantile of (values, weights) by midpoint-CDF interpolation;
// under equal weights its median equals the type-7 median. Used for the
// median threshold rule.
double weighted_quantile(const VectorXd& values, const VectorXd& weights, double q);

// Extract the design submatrix ds.x(:, cols).
MatrixXd design_matrix(const Dataset& ds, const std::vector<Index>& cols);

// Column indices 0..p-1.
std::vector<Index> all_columns(const Dataset& ds);

}  // namespace ivwald

#endif
