#include "ivwald/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace ivwald {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

bool is_missing_token(const std::string& s) { return s.empty() || s == "NA"; }

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

double parse_double(const std::string& s, Index csv_row, const std::string& col) {
    double v;
    const char* begin = s.data();
    const char* end = begin + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end)
        throw ValidationError("row " + std::to_string(csv_row) + ", column '" + col +
                              "': cannot parse '" + s + "' as a number");
    return v;
}

Index find_column(const std::vector<std::string>& header, const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("column '" + name + "' not found in header");
    return static_cast<Index>(it - header.begin());
}

// 0/1/missing for instrument and treatment columns.
std::optional<int> parse_binary(const std::string& s, Index csv_row, const std::string& col) {
    if (is_missing_token(s)) return std::nullopt;
    const double v = parse_double(s, csv_row, col);
    if (v == 0.0) return 0;
    if (v == 1.0) return 1;
    throw ValidationError("row " + std::to_string(csv_row) + ": column '" + col +
                          "' must be 0 or 1, got '" + s + "'");
}

}  // namespace

bool Dataset::has_missing_covariates() const { return x.hasNaN(); }

void Dataset::validate() const {
    const Index m = n();
    if (d.size() != m || y.size() != m || w.size() != m || x.rows() != m)
        throw ValidationError("dataset columns have inconsistent lengths");
    if (p() < 1 || static_cast<Index>(column_names.size()) != p())
        throw ValidationError("dataset must have an intercept column and matching names");
    double w1 = 0.0, w0 = 0.0;
    for (Index i = 0; i < m; ++i) {
        if (!(w[i] > 0.0)) throw ValidationError("row " + std::to_string(i + 1) + ": weight must be positive");
        if (x(i, 0) != 1.0) throw ValidationError("row " + std::to_string(i + 1) + ": intercept column must equal 1");
        if (z[i] != 0 && z[i] != 1) throw ValidationError("instrument must be 0/1");
        if (d[i] != 0 && d[i] != 1) throw ValidationError("treatment must be 0/1");
        if (binary_outcome && y[i] != 0.0 && y[i] != 1.0)
            throw ValidationError("outcome flagged binary but row " + std::to_string(i + 1) +
                                  " has y = " + format_g17(y[i]));
        (z[i] == 1 ? w1 : w0) += w[i];
    }
    if (!(w1 > 0.0) || !(w0 > 0.0))
        throw ValidationError("degenerate data: one instrument arm carries no weight");
}

Dataset parse_csv(const std::string& text, const ColumnMap& map, const LoadOptions& opts) {
    std::stringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("empty input: no header row");
    const auto header = split_line(line);

    const Index zc = find_column(header, map.instrument);
    const Index dc = find_column(header, map.treatment);
    const Index yc = find_column(header, map.outcome);
    std::vector<Index> xc;
    for (const auto& name : map.covariates) xc.push_back(find_column(header, name));
    const Index wc = map.weight.empty() ? -1 : find_column(header, map.weight);

    std::vector<int> zs, ds;
    std::vector<double> ys, ws;
    std::vector<std::vector<double>> xs;  // row-major, user covariates only
    Index dropped = 0;
    Index csv_row = 1;  // header is row 1
    while (std::getline(in, line)) {
        ++csv_row;
        if (trim(line).empty()) continue;
        const auto cells = split_line(line);
        if (static_cast<Index>(cells.size()) != static_cast<Index>(header.size()))
            throw SchemaError("row " + std::to_string(csv_row) + ": expected " +
                              std::to_string(header.size()) + " cells, got " +
                              std::to_string(cells.size()));
        const auto zv = parse_binary(cells[zc], csv_row, map.instrument);
        const auto dv = parse_binary(cells[dc], csv_row, map.treatment);
        const bool y_missing = is_missing_token(cells[yc]);
        if (!zv || !dv || y_missing) {  // no missing-outcome machinery; drop and count
            ++dropped;
            continue;
        }
        double wv = 1.0;
        if (wc >= 0) {
            if (is_missing_token(cells[wc]))
                throw ValidationError("row " + std::to_string(csv_row) + ": missing weight");
            wv = parse_double(cells[wc], csv_row, map.weight);
            if (!(wv > 0.0))
                throw ValidationError("row " + std::to_string(csv_row) + ": weight must be > 0");
        }
        std::vector<double> xrow(xc.size());
        for (size_t j = 0; j < xc.size(); ++j)
            xrow[j] = is_missing_token(cells[xc[j]])
                          ? std::numeric_limits<double>::quiet_NaN()
                          : parse_double(cells[xc[j]], csv_row, map.covariates[j]);
        zs.push_back(*zv);
        ds.push_back(*dv);
        ys.push_back(parse_double(cells[yc], csv_row, map.outcome));
        ws.push_back(wv);
        xs.push_back(std::move(xrow));
    }

    const Index n = static_cast<Index>(zs.size());
    if (n == 0) throw ValidationError("no usable rows after dropping missing Z/D/Y");

    Dataset out;
    out.z = Eigen::Map<VectorXi>(zs.data(), n);
    out.d = Eigen::Map<VectorXi>(ds.data(), n);
    out.y = Eigen::Map<VectorXd>(ys.data(), n);
    out.w = Eigen::Map<VectorXd>(ws.data(), n);
    out.x.resize(n, static_cast<Index>(xc.size()) + 1);
    out.x.col(0).setOnes();
    for (Index i = 0; i < n; ++i)
        for (size_t j = 0; j < xc.size(); ++j) out.x(i, static_cast<Index>(j) + 1) = xs[i][j];
    out.column_names.push_back("(intercept)");
    for (const auto& name : map.covariates) out.column_names.push_back(name);
    out.instrument_name = map.instrument;
    out.treatment_name = map.treatment;
    out.outcome_name = map.outcome;
    out.weight_name = map.weight;
    out.dropped_rows = dropped;

    if (opts.normalize_weights) {
        const double mean = out.w.mean();
        // Skip when already mean 1 so load -> save -> load is exact.
        if (std::abs(mean - 1.0) > 1e-12) out.w /= mean;
    }

    out.binary_outcome = true;
    for (Index i = 0; i < n; ++i)
        if (out.y[i] != 0.0 && out.y[i] != 1.0) {
            out.binary_outcome = false;
            break;
        }

    out.validate();
    return out;
}

Dataset load_csv(const std::string& path, const ColumnMap& map, const LoadOptions& opts) {
    std::ifstream f(path);
    if (!f) throw SchemaError("cannot open '" + path + "'");
    std::stringstream buf;
    buf << f.rdbuf();
    return parse_csv(buf.str(), map, opts);
}

std::string to_csv(const Dataset& ds) {
    std::string out;
    out += ds.instrument_name + "," + ds.treatment_name + "," + ds.outcome_name;
    for (Index j = 1; j < ds.p(); ++j) out += "," + ds.column_names[j];
    if (!ds.weight_name.empty()) out += "," + ds.weight_name;
    out += "\n";
    for (Index i = 0; i < ds.n(); ++i) {
        out += std::to_string(ds.z[i]) + "," + std::to_string(ds.d[i]) + "," + format_g17(ds.y[i]);
        for (Index j = 1; j < ds.p(); ++j) {
            out += ",";
            out += std::isnan(ds.x(i, j)) ? "NA" : format_g17(ds.x(i, j));
        }
        if (!ds.weight_name.empty()) out += "," + format_g17(ds.w[i]);
        out += "\n";
    }
    return out;
}

void save_csv(const Dataset& ds, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw SchemaError("cannot open '" + path + "' for writing");
    f << to_csv(ds);
}

Dataset impute_mean_with_indicators(const Dataset& ds, const std::vector<std::string>& cols) {
    Dataset out = ds;
    for (const auto& name : cols) {
        if (name == ds.instrument_name || name == ds.treatment_name || name == ds.outcome_name ||
            (!ds.weight_name.empty() && name == ds.weight_name))
            throw ValidationError("imputation applies to covariates only, not '" + name + "'");
        auto it = std::find(out.column_names.begin(), out.column_names.end(), name);
        if (it == out.column_names.end() || it == out.column_names.begin())
            throw SchemaError("covariate column '" + name + "' not found");
        const Index j = static_cast<Index>(it - out.column_names.begin());

        double wsum = 0.0, wval = 0.0;
        Index n_missing = 0;
        for (Index i = 0; i < out.n(); ++i) {
            if (std::isnan(out.x(i, j))) {
                ++n_missing;
            } else {
                wsum += out.w[i];
                wval += out.w[i] * out.x(i, j);
            }
        }
        if (n_missing == 0) continue;
        if (wsum == 0.0) throw ValidationError("column '" + name + "' has no observed values");
        const double mean = wval / wsum;

        out.x.conservativeResize(Eigen::NoChange, out.x.cols() + 1);
        const Index ind = out.x.cols() - 1;
        for (Index i = 0; i < out.n(); ++i) {
            const bool miss = std::isnan(out.x(i, j));
            out.x(i, ind) = miss ? 1.0 : 0.0;
            if (miss) out.x(i, j) = mean;
        }
        out.column_names.push_back(name + "_imputed");
    }
    return out;
}

Dataset impute_mean_with_indicators(const Dataset& ds) {
    std::vector<std::string> cols;
    for (Index j = 1; j < ds.p(); ++j)
        if (ds.x.col(j).hasNaN()) cols.push_back(ds.column_names[j]);
    return impute_mean_with_indicators(ds, cols);
}

double weighted_quantile(const VectorXd& values, const VectorXd& weights, double q) {
    const Index n = values.size();
    if (n == 0) throw ValidationError("weighted_quantile: empty input");
    std::vector<Index> order(n);
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return values[a] < values[b]; });
    const double total = weights.sum();
    // Midpoint empirical CDF: c_i = (cum_i - w_i/2) / total, interpolated.
    double cum = 0.0;
    std::vector<double> cdf(n);
    for (Index k = 0; k < n; ++k) {
        const double wk = weights[order[k]];
        cdf[k] = (cum + 0.5 * wk) / total;
        cum += wk;
    }
    if (q <= cdf[0]) return values[order[0]];
    if (q >= cdf[n - 1]) return values[order[n - 1]];
    for (Index k = 1; k < n; ++k) {
        if (q <= cdf[k]) {
            const double t = (q - cdf[k - 1]) / (cdf[k] - cdf[k - 1]);
            return values[order[k - 1]] + t * (values[order[k]] - values[order[k - 1]]);
        }
    }
    return values[order[n - 1]];
}

Dataset dichotomize(const Dataset& ds, const DichotomizeRule& rule) {
    if (ds.binary_outcome) throw ValidationError("outcome is already binary");
    const double t = rule.kind == DichotomizeRule::Kind::WeightedMedian
                         ? weighted_quantile(ds.y, ds.w, 0.5)
                         : rule.value;
    Dataset out = ds;
    for (Index i = 0; i < out.n(); ++i) out.y[i] = out.y[i] > t ? 1.0 : 0.0;
    out.binary_outcome = true;
    out.dichotomize_threshold = t;
    return out;
}

MatrixXd design_matrix(const Dataset& ds, const std::vector<Index>& cols) {
    MatrixXd m(ds.n(), static_cast<Index>(cols.size()));
    for (size_t j = 0; j < cols.size(); ++j) {
        if (cols[j] < 0 || cols[j] >= ds.p())
            throw SchemaError("design column index " + std::to_string(cols[j]) + " out of range");
        m.col(static_cast<Index>(j)) = ds.x.col(cols[j]);
    }
    if (m.hasNaN())
        throw ValidationError("design matrix contains missing values; impute covariates first");
    return m;
}

std::vector<Index> all_columns(const Dataset& ds) {
    std::vector<Index> cols(ds.p());
    std::iota(cols.begin(), cols.end(), Index{0});
    return cols;
}

}  // namespace ivwald
