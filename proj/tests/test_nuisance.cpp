#include "ivwald/nuisance.hpp"

#include "ivwald/rng.hpp"
#include "ivwald/simulate.hpp"

#include <doctest.h>

#include <cmath>

using namespace ivwald;

namespace {

Dataset balanced_cells() {
    // all (z, x2) combinations with equal weight and Z independent of X
    Dataset ds;
    const Index n = 4;
    ds.z.resize(n);
    ds.d.resize(n);
    ds.y.resize(n);
    ds.w = VectorXd::Ones(n);
    ds.x.resize(n, 2);
    ds.column_names = {"(intercept)", "x2"};
    ds.binary_outcome = true;
    int k = 0;
    for (int z = 0; z <= 1; ++z)
        for (int x2 = -1; x2 <= 1; x2 += 2) {
            ds.z[k] = z;
            ds.d[k] = z;
            ds.y[k] = 0.0;
            ds.x(k, 0) = 1.0;
            ds.x(k, 1) = x2;
            ++k;
        }
    return ds;
}

// Central finite difference of a scalar function of theta.
template <class F>
VectorXd fd_gradient(const F& f, const VectorXd& theta, double h = 1e-6) {
    VectorXd g(theta.size());
    VectorXd probe = theta;
    for (Index k = 0; k < theta.size(); ++k) {
        probe[k] = theta[k] + h;
        const double up = f(probe);
        probe[k] = theta[k] - h;
        const double down = f(probe);
        probe[k] = theta[k];
        g[k] = (up - down) / (2.0 * h);
    }
    return g;
}

double rel_err(const VectorXd& a, const VectorXd& b) {
    return (a - b).lpNorm<Eigen::Infinity>() / std::max(1.0, a.lpNorm<Eigen::Infinity>());
}

}  // namespace

TEST_CASE("balanced instrument gives a zero propensity coefficient") {
    const PropensityFit f = fit_propensity(balanced_cells(), {0, 1});
    CHECK(f.info.converged);
    CHECK(f.gamma.lpNorm<Eigen::Infinity>() < 1e-8);
    CHECK(f.prob[0] == doctest::Approx(0.5).epsilon(1e-8));
}

TEST_CASE("saturated propensity equals the weighted cell means") {
    CounterRng rng(21);
    const Index n = 600;
    Dataset ds;
    ds.z.resize(n);
    ds.d.resize(n);
    ds.y.resize(n);
    ds.w.resize(n);
    ds.x.resize(n, 2);
    ds.column_names = {"(intercept)", "x2"};
    ds.binary_outcome = true;
    for (Index i = 0; i < n; ++i) {
        const int cell = rng.bernoulli(0.5);
        ds.x(i, 0) = 1.0;
        ds.x(i, 1) = cell;
        ds.z[i] = rng.bernoulli(cell ? 0.7 : 0.3);
        ds.d[i] = ds.z[i];
        ds.y[i] = 0.0;
        ds.w[i] = rng.uniform(0.5, 1.5);
    }
    ds.w /= ds.w.mean();
    const PropensityFit f = fit_propensity(ds, {0, 1});
    for (int cell = 0; cell <= 1; ++cell) {
        double wz = 0.0, wt = 0.0, fitted = 0.0;
        for (Index i = 0; i < n; ++i) {
            if (static_cast<int>(ds.x(i, 1)) != cell) continue;
            wz += ds.w[i] * ds.z[i];
            wt += ds.w[i];
            fitted = f.prob[i];
        }
        CHECK(fitted == doctest::Approx(wz / wt).epsilon(1e-8));
    }
}

TEST_CASE("perfect separation is reported as non-convergence") {
    Dataset ds;
    const Index n = 40;
    ds.z.resize(n);
    ds.d.resize(n);
    ds.y.resize(n);
    ds.w = VectorXd::Ones(n);
    ds.x.resize(n, 2);
    ds.column_names = {"(intercept)", "x2"};
    ds.binary_outcome = true;
    for (Index i = 0; i < n; ++i) {
        ds.x(i, 0) = 1.0;
        ds.x(i, 1) = i < n / 2 ? -1.0 : 1.0;
        ds.z[i] = i < n / 2 ? 0 : 1;  // separated exactly by x2
        ds.d[i] = 0;
        ds.y[i] = 0.0;
    }
    CHECK_THROWS_AS(static_cast<void>(fit_propensity(ds, {0, 1})), NonConvergenceError);
}

TEST_CASE("rank-deficient designs are rejected") {
    Dataset ds = balanced_cells();
    CHECK_THROWS_AS(static_cast<void>(fit_propensity(ds, {0, 0})), NumericError);
}

TEST_CASE("analytic scores match finite differences at random points") {
    const GeneratedData gen = generate(300, 515);
    const Dataset& ds = gen.data;
    const MatrixXd xg = design_matrix(ds, {0, 1});
    const MatrixXd xb = design_matrix(ds, {0, 1});
    const MatrixXd xe = design_matrix(ds, {0, 2});
    const MatrixXd xa = design_matrix(ds, {0, 1});
    const MatrixXd xz = design_matrix(ds, {0, 2});
    VectorXd delta_d_fixed(ds.n());
    for (Index i = 0; i < ds.n(); ++i) delta_d_fixed[i] = std::tanh(0.2 - 0.4 * ds.x(i, 1));

    CounterRng rng(99);
    for (int rep = 0; rep < 100; ++rep) {
        VectorXd g2(2);
        for (Index k = 0; k < 2; ++k) g2[k] = rng.uniform(-0.8, 0.8);
        VectorXd grad_p(2);
        const double v1 = propensity_loglik(ds, xg, g2, &grad_p);
        const VectorXd fd_p =
            fd_gradient([&](const VectorXd& t) { return propensity_loglik(ds, xg, t); }, g2);
        CHECK(rel_err(grad_p, fd_p) < 1e-5);
        CHECK(std::isfinite(v1));

        VectorXd theta4(4);
        for (Index k = 0; k < 4; ++k) theta4[k] = rng.uniform(-0.8, 0.8);
        VectorXd grad_t(4);
        treatment_loglik(ds, xb, xe, DeltaLink::Tanh, theta4, &grad_t);
        const VectorXd fd_t = fd_gradient(
            [&](const VectorXd& t) { return treatment_loglik(ds, xb, xe, DeltaLink::Tanh, t); },
            theta4);
        CHECK(rel_err(grad_t, fd_t) < 1e-5);

        VectorXd theta_y(4);
        for (Index k = 0; k < 4; ++k) theta_y[k] = rng.uniform(-0.8, 0.8);
        VectorXd grad_y(4);
        outcome_loglik(ds, xa, xz, delta_d_fixed, theta_y, &grad_y);
        const VectorXd fd_y = fd_gradient(
            [&](const VectorXd& t) { return outcome_loglik(ds, xa, xz, delta_d_fixed, t); },
            theta_y);
        CHECK(rel_err(grad_y, fd_y) < 1e-5);
    }
}

TEST_CASE("two-step MLE on simulated data recovers the truth") {
    const GeneratedData gen = generate(100000, 2024);
    const Dataset& ds = gen.data;

    const PropensityFit f = fit_propensity(ds, {0, 1});
    CHECK(f.info.converged);
    CHECK(f.info.final_gradient_norm < 1e-8);
    // 3 standard errors at n = 1e5 is roughly 0.02-0.03 for these designs
    CHECK(std::abs(f.gamma[0] - 0.1) < 0.03);
    CHECK(std::abs(f.gamma[1] + 0.5) < 0.04);

    const TreatmentFit tf = fit_treatment_2mle(ds, {0, 1}, {0, 1});
    CHECK(tf.info.converged);
    CHECK(tf.info.final_gradient_norm < 1e-8);
    CHECK(std::abs(tf.beta[0] - 0.0) < 0.04);
    CHECK(std::abs(tf.beta[1] + 0.5) < 0.06);
    CHECK(std::abs(tf.eta[0] + 0.5) < 0.10);
    CHECK(std::abs(tf.eta[1] - 1.0) < 0.15);

    const OutcomeFit of = fit_outcome_2mle(ds, tf, {0, 1}, {0, 1});
    CHECK(of.info.converged);
    CHECK(std::abs(of.alpha[0] - 0.1) < 0.15);
    CHECK(std::abs(of.alpha[1] - 0.5) < 0.25);
    CHECK(std::abs(of.zeta[0] - 0.0) < 0.10);
    CHECK(std::abs(of.zeta[1] + 1.0) < 0.15);

    SUBCASE("log-likelihood at the optimum dominates the zero start") {
        const MatrixXd xb = design_matrix(ds, {0, 1});
        const MatrixXd xe = design_matrix(ds, {0, 1});
        const double at_zero =
            treatment_loglik(ds, xb, xe, DeltaLink::Tanh, VectorXd::Zero(4));
        CHECK(tf.info.log_likelihood >= at_zero);
    }
}

TEST_CASE("null-treatment dataset drives beta to zero") {
    // cells with D independent of Z given X and P(D=1|x) = 0.5 exactly
    Dataset ds;
    const Index n = 8;
    ds.z.resize(n);
    ds.d.resize(n);
    ds.y.resize(n);
    ds.w = VectorXd::Ones(n);
    ds.x.resize(n, 2);
    ds.column_names = {"(intercept)", "x2"};
    ds.binary_outcome = true;
    int k = 0;
    for (int z = 0; z <= 1; ++z)
        for (int d = 0; d <= 1; ++d)
            for (int x2 = 0; x2 <= 1; ++x2) {
                ds.z[k % n] = z;
                ds.d[k % n] = d;
                ds.x(k % n, 0) = 1.0;
                ds.x(k % n, 1) = x2;
                ds.y[k % n] = 0.0;
                ++k;
            }
    const TreatmentFit tf = fit_treatment_2mle(ds, {0, 1}, {0, 1});
    CHECK(tf.beta.lpNorm<Eigen::Infinity>() < 1e-6);
    CHECK(tf.delta_d.lpNorm<Eigen::Infinity>() < 1e-6);
    CHECK((tf.p0d.array() - 0.5).matrix().lpNorm<Eigen::Infinity>() < 1e-7);
}

TEST_CASE("saturated two-step fits reproduce the empirical cell frequencies") {
    CounterRng rng(33);
    const Index n = 3000;
    Dataset ds;
    ds.z.resize(n);
    ds.d.resize(n);
    ds.y.resize(n);
    ds.w = VectorXd::Ones(n);
    ds.x.resize(n, 2);
    ds.column_names = {"(intercept)", "x2"};
    ds.binary_outcome = true;
    for (Index i = 0; i < n; ++i) {
        const int cell = rng.bernoulli(0.5);
        ds.x(i, 0) = 1.0;
        ds.x(i, 1) = cell;
        ds.z[i] = rng.bernoulli(0.5);
        ds.d[i] = rng.bernoulli(0.25 + 0.35 * ds.z[i] + 0.15 * cell);
        ds.y[i] = rng.bernoulli(0.35 + 0.25 * ds.d[i] + 0.10 * cell) ? 1.0 : 0.0;
    }
    const TreatmentFit tf = fit_treatment_2mle(ds, {0, 1}, {0, 1});
    const OutcomeFit of = fit_outcome_2mle(ds, tf, {0, 1}, {0, 1});

    for (int cell = 0; cell <= 1; ++cell) {
        for (int z = 0; z <= 1; ++z) {
            double wd = 0.0, wy = 0.0, wt = 0.0;
            double fit_d = 0.0, fit_y = 0.0;
            for (Index i = 0; i < n; ++i) {
                if (static_cast<int>(ds.x(i, 1)) != cell || ds.z[i] != z) continue;
                wd += ds.w[i] * ds.d[i];
                wy += ds.w[i] * ds.y[i];
                wt += ds.w[i];
                fit_d = tf.p0d[i] + z * tf.delta_d[i];
                fit_y = of.p0y[i] + z * of.delta[i] * tf.delta_d[i];
            }
            CHECK(fit_d == doctest::Approx(wd / wt).epsilon(1e-8));
            CHECK(fit_y == doctest::Approx(wy / wt).epsilon(1e-8));
        }
    }
}

TEST_CASE("two-step MLE is invariant to row order and row splitting") {
    const GeneratedData gen = generate(400, 77);
    const Dataset& ds = gen.data;
    Dataset rev = ds;
    for (Index i = 0; i < ds.n(); ++i) {
        const Index j = ds.n() - 1 - i;
        rev.z[i] = ds.z[j];
        rev.d[i] = ds.d[j];
        rev.y[i] = ds.y[j];
        rev.w[i] = ds.w[j];
        rev.x.row(i) = ds.x.row(j);
    }
    const TreatmentFit t1 = fit_treatment_2mle(ds, {0, 1}, {0, 1});
    const TreatmentFit t2 = fit_treatment_2mle(rev, {0, 1}, {0, 1});
    CHECK((t1.info.coefficients - t2.info.coefficients).lpNorm<Eigen::Infinity>() < 1e-6);

    Dataset dup;
    const Index n = ds.n();
    dup.z.resize(2 * n);
    dup.d.resize(2 * n);
    dup.y.resize(2 * n);
    dup.w.resize(2 * n);
    dup.x.resize(2 * n, ds.p());
    dup.column_names = ds.column_names;
    dup.binary_outcome = true;
    for (Index i = 0; i < n; ++i)
        for (Index c : {2 * i, 2 * i + 1}) {
            dup.z[c] = ds.z[i];
            dup.d[c] = ds.d[i];
            dup.y[c] = ds.y[i];
            dup.w[c] = ds.w[i];
            dup.x.row(c) = ds.x.row(i);
        }
    const TreatmentFit t3 = fit_treatment_2mle(dup, {0, 1}, {0, 1});
    CHECK((t1.info.coefficients - t3.info.coefficients).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("linear nuisances") {
    CounterRng rng(55);
    const Index n = 200;
    Dataset ds;
    ds.z.resize(n);
    ds.d.resize(n);
    ds.y.resize(n);
    ds.w = VectorXd::Ones(n);
    ds.x.resize(n, 2);
    ds.column_names = {"(intercept)", "x2"};
    ds.binary_outcome = false;
    for (Index i = 0; i < n; ++i) {
        ds.x(i, 0) = 1.0;
        ds.x(i, 1) = rng.uniform(-1.0, 1.0);
        ds.z[i] = rng.bernoulli(0.5);
        ds.d[i] = rng.bernoulli(0.3 + 0.4 * ds.z[i]);
        ds.y[i] = 2.0 + 3.0 * ds.x(i, 1);  // noiseless linear outcome
    }
    const LinearNuisances lin = fit_linear_nuisances(ds, {0, 1}, {0, 1}, {0, 1});
    CHECK(lin.iota[0] == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(lin.iota[1] == doctest::Approx(3.0).epsilon(1e-10));

    SUBCASE("constant outcome in the Z=0 arm") {
        Dataset flat = ds;
        for (Index i = 0; i < n; ++i) flat.y[i] = 3.5;
        const LinearNuisances c = fit_linear_nuisances(flat, {0, 1}, {0, 1}, {0, 1});
        CHECK(c.iota[0] == doctest::Approx(3.5).epsilon(1e-12));
        CHECK(std::abs(c.iota[1]) < 1e-10);
    }

    SUBCASE("binary outcome is rejected") {
        Dataset bin = ds;
        for (Index i = 0; i < n; ++i) bin.y[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
        bin.binary_outcome = true;
        CHECK_THROWS_AS(static_cast<void>(fit_linear_nuisances(bin, {0, 1}, {0, 1}, {0, 1})),
                        ValidationError);
    }
}

TEST_CASE("linear nuisance consistency under gaussian noise") {
    CounterRng rng(56);
    const Index n = 100000;
    Dataset ds;
    ds.z.resize(n);
    ds.d.resize(n);
    ds.y.resize(n);
    ds.w = VectorXd::Ones(n);
    ds.x.resize(n, 2);
    ds.column_names = {"(intercept)", "x2"};
    ds.binary_outcome = false;
    for (Index i = 0; i < n; ++i) {
        ds.x(i, 0) = 1.0;
        ds.x(i, 1) = rng.uniform(-1.0, 1.0);
        ds.z[i] = rng.bernoulli(0.5);
        ds.d[i] = rng.bernoulli(0.3 + 0.4 * ds.z[i]);
        ds.y[i] = 1.0 - 2.0 * ds.x(i, 1) + rng.normal();
    }
    const LinearNuisances lin = fit_linear_nuisances(ds, {0, 1}, {0, 1}, {0, 1});
    // sd(iota) ~ sigma / sqrt(n/2) ~ 0.0045; allow 3 SEs
    CHECK(std::abs(lin.iota[0] - 1.0) < 0.014);
    CHECK(std::abs(lin.iota[1] + 2.0) < 0.024);
}

TEST_CASE("ensemble propensity") {
    SUBCASE("single candidate passes through") {
        const GeneratedData gen = generate(2000, 8);
        const EnsembleFit ens = fit_propensity_ensemble(gen.data, {{0, 1}});
        CHECK(ens.weights.size() == 1);
        CHECK(ens.weights[0] == 1.0);
        const PropensityFit direct = fit_propensity(gen.data, {0, 1});
        CHECK((ens.prob - direct.prob).lpNorm<Eigen::Infinity>() < 1e-12);
    }

    SUBCASE("correct model absorbs the weight against a decoy") {
        const GeneratedData gen = generate(100000, 9);
        const EnsembleFit ens = fit_propensity_ensemble(gen.data, {{0, 1}, {0, 2}});
        CHECK(ens.weights[0] == doctest::Approx(1.0).epsilon(0.1));
        CHECK(std::abs(ens.weights[1]) < 0.1);
    }

    SUBCASE("collinear candidates flag a warning and stay clamped") {
        const GeneratedData gen = generate(500, 10);
        const EnsembleFit ens = fit_propensity_ensemble(gen.data, {{0, 1}, {0, 1}});
        CHECK(ens.collinearity_warning);
        for (Index i = 0; i < ens.prob.size(); ++i) {
            CHECK(ens.prob[i] >= kEnsembleClamp);
            CHECK(ens.prob[i] <= 1.0 - kEnsembleClamp);
        }
    }
}
