#include "ivwald/dataset.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace ivwald;

namespace {

const ColumnMap kZdy{"z", "d", "y", {}, ""};

Dataset tiny(const std::string& csv, const ColumnMap& map = kZdy) { return parse_csv(csv, map); }

}  // namespace

TEST_CASE("minimal four-row file") {
    const Dataset ds = tiny("z,d,y\n0,0,0\n1,1,1\n0,1,0\n1,0,1\n");
    CHECK(ds.n() == 4);
    CHECK(ds.p() == 1);
    CHECK(ds.binary_outcome);
    CHECK(ds.column_names[0] == "(intercept)");
    CHECK(ds.w.mean() == doctest::Approx(1.0));
}

TEST_CASE("non-binary instrument names the offending row") {
    // header is file row 1, so the bad cell sits on file row 7
    const std::string csv = "z,d,y\n0,0,0\n1,1,1\n0,0,1\n1,0,1\n0,1,0\n2,1,1\n";
    try {
        tiny(csv);
        FAIL("expected a validation error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("row 7") != std::string::npos);
    }
}

TEST_CASE("weights normalized to mean one, weighted means preserved") {
    // weights sum to 2n before normalization
    const Dataset ds = tiny("z,d,y,w\n0,0,1,2\n1,1,0,2\n0,1,1,2\n1,0,0,2\n",
                            ColumnMap{"z", "d", "y", {}, "w"});
    CHECK(ds.w.mean() == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(ds.w[0] == doctest::Approx(1.0).epsilon(1e-15));

    // normalization is a global rescale, so weighted means are untouched
    const Dataset raw = tiny("z,d,y,w\n0,0,1,3\n1,1,0,1\n0,1,1,5\n1,0,0,7\n",
                             ColumnMap{"z", "d", "y", {}, "w"});
    double num = 0.0, den = 0.0;
    for (Index i = 0; i < raw.n(); ++i) {
        num += raw.w[i] * raw.y[i];
        den += raw.w[i];
    }
    CHECK(num / den == doctest::Approx((3.0 * 1 + 5.0 * 1) / 16.0).epsilon(1e-14));
}

TEST_CASE("load, save, reload round trip is exact") {
    const std::string csv =
        "z,d,wage,age,iq,wt\n"
        "0,0,1.25,33,0.1234567890123456,0.5\n"
        "1,1,5.375,41,NA,1.5\n"
        "0,1,9.5,28,-3.75,1.0\n"
        "1,0,2.125,55,0.3333333333333333,1.0\n";
    const ColumnMap map{"z", "d", "wage", {"age", "iq"}, "wt"};
    const Dataset a = parse_csv(csv, map);
    const Dataset b = parse_csv(to_csv(a), map);
    CHECK(a.n() == b.n());
    CHECK(a.z == b.z);
    CHECK(a.d == b.d);
    CHECK(a.y == b.y);
    CHECK(a.w == b.w);
    for (Index i = 0; i < a.n(); ++i)
        for (Index j = 0; j < a.p(); ++j) {
            if (std::isnan(a.x(i, j)))
                CHECK(std::isnan(b.x(i, j)));
            else
                CHECK(a.x(i, j) == b.x(i, j));
        }
    CHECK(a.binary_outcome == b.binary_outcome);

    const auto path = std::filesystem::temp_directory_path() / "ivwald_roundtrip.csv";
    save_csv(a, path.string());
    const Dataset c = load_csv(path.string(), map);
    CHECK(c.y == a.y);
    std::filesystem::remove(path);
}

TEST_CASE("rows with missing instrument, treatment or outcome are dropped") {
    const Dataset ds = tiny("z,d,y\n0,0,0\n,1,1\n1,NA,1\n1,1,\n1,1,1\n0,1,0\n");
    CHECK(ds.n() == 3);
    CHECK(ds.dropped_rows == 3);
}

TEST_CASE("schema errors") {
    CHECK_THROWS_AS(tiny("a,b,c\n1,1,1\n"), SchemaError);
    CHECK_THROWS_AS(tiny("z,d,y\n1,1\n"), SchemaError);
    CHECK_THROWS_AS(load_csv("/nonexistent/file.csv", kZdy), SchemaError);
}

TEST_CASE("an empty instrument arm is degenerate") {
    CHECK_THROWS_AS(tiny("z,d,y\n1,0,0\n1,1,1\n"), ValidationError);
}

TEST_CASE("mean imputation with indicators") {
    const ColumnMap map{"z", "d", "y", {"a"}, ""};
    const Dataset ds = tiny("z,d,y,a\n0,0,0,1\n1,1,1,2\n0,1,1,NA\n", map);
    const Dataset imp = impute_mean_with_indicators(ds, {"a"});
    CHECK(imp.p() == 3);
    CHECK(imp.column_names[2] == "a_imputed");
    CHECK(imp.x(0, 1) == 1.0);
    CHECK(imp.x(1, 1) == 2.0);
    CHECK(imp.x(2, 1) == doctest::Approx(1.5).epsilon(1e-15));
    CHECK(imp.x(0, 2) == 0.0);
    CHECK(imp.x(1, 2) == 0.0);
    CHECK(imp.x(2, 2) == 1.0);

    SUBCASE("non-missing cells and z/d/y/w are untouched") {
        CHECK(imp.z == ds.z);
        CHECK(imp.d == ds.d);
        CHECK(imp.y == ds.y);
        CHECK(imp.w == ds.w);
    }
}

TEST_CASE("imputation identity when nothing is missing") {
    const ColumnMap map{"z", "d", "y", {"a"}, ""};
    const Dataset ds = tiny("z,d,y,a\n0,0,0,1\n1,1,1,2\n", map);
    const Dataset imp = impute_mean_with_indicators(ds, {"a"});
    CHECK(imp.p() == 2);
    CHECK(imp.x == ds.x);
}

TEST_CASE("imputation error cases") {
    const ColumnMap map{"z", "d", "y", {"a"}, ""};
    const Dataset ds = tiny("z,d,y,a\n0,0,0,NA\n1,1,1,NA\n", map);
    CHECK_THROWS_WITH_AS(static_cast<void>(impute_mean_with_indicators(ds, {"a"})),
                         doctest::Contains("no observed values"), ValidationError);
    CHECK_THROWS_AS(static_cast<void>(impute_mean_with_indicators(ds, {"z"})), ValidationError);
    CHECK_THROWS_AS(static_cast<void>(impute_mean_with_indicators(ds, {"nope"})), SchemaError);
}

TEST_CASE("dichotomize at the weighted median") {
    const Dataset ds = tiny("z,d,y\n0,0,1\n1,1,2\n0,1,3\n1,0,4\n");
    const Dataset cut = dichotomize(ds, DichotomizeRule::median());
    CHECK(*cut.dichotomize_threshold == doctest::Approx(2.5).epsilon(1e-15));
    CHECK(cut.y[0] == 0.0);
    CHECK(cut.y[1] == 0.0);
    CHECK(cut.y[2] == 1.0);
    CHECK(cut.y[3] == 1.0);
    CHECK(cut.binary_outcome);
}

TEST_CASE("dichotomize at a fixed threshold") {
    const Dataset ds = tiny("z,d,y\n0,0,5.0\n1,1,6.0\n");
    const Dataset cut = dichotomize(ds, DichotomizeRule::fixed(5.375));
    CHECK(cut.y[0] == 0.0);
    CHECK(cut.y[1] == 1.0);
    CHECK(*cut.dichotomize_threshold == 5.375);
}

TEST_CASE("dichotomize rejects an already binary outcome") {
    const Dataset ds = tiny("z,d,y\n0,0,0\n1,1,1\n");
    CHECK_THROWS_AS(static_cast<void>(dichotomize(ds, DichotomizeRule::median())),
                    ValidationError);
}

TEST_CASE("design matrix refuses missing cells") {
    const ColumnMap map{"z", "d", "y", {"a"}, ""};
    const Dataset ds = tiny("z,d,y,a\n0,0,0,1\n1,1,1,NA\n", map);
    CHECK_THROWS_AS(static_cast<void>(design_matrix(ds, {0, 1})), ValidationError);
    CHECK_NOTHROW(static_cast<void>(design_matrix(ds, {0})));
}

TEST_CASE("weighted median interpolates the midpoint CDF") {
    VectorXd v(4), w(4);
    v << 1, 2, 3, 4;
    w.setOnes();
    CHECK(weighted_quantile(v, w, 0.5) == doctest::Approx(2.5));
    // doubling one weight pulls the median toward that value
    w << 1, 1, 2, 1;
    CHECK(weighted_quantile(v, w, 0.5) > 2.5);
}
