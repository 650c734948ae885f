#ifndef IVWALD_COMMON_HPP
#define IVWALD_COMMON_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace ivwald {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::VectorXi;

// Error taxonomy. The CLI maps these onto exit codes: schema/validation
// problems are exit 3, numerical failures exit 4.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Input file/column structure problems.
struct SchemaError : Error {
    using Error::Error;
};

// Data values violating a contract (non-binary instrument, empty arm, ...).
struct ValidationError : Error {
    using Error::Error;
};

// Argument outside a mathematical domain.
struct DomainError : Error {
    using Error::Error;
};

// Solver / optimizer / linear-algebra failures.
struct NumericError : Error {
    using Error::Error;
};

// Optimizer gave up; carries the best iterate seen.
struct NonConvergenceError : NumericError {
    NonConvergenceError(const std::string& msg, VectorXd best, double norm)
        : NumericError(msg), best_iterate(std::move(best)), best_norm(norm) {}
    VectorXd best_iterate;
    double best_norm;
};

// Deterministic pairwise summation in index order. All P_n reductions go
// through here so results do not depend on accumulation chunking.
template <class F>
double pairwise_sum(Index lo, Index hi, F&& term) {
    const Index len = hi - lo;
    if (len <= 32) {
        double acc = 0.0;
        for (Index i = lo; i < hi; ++i) acc += term(i);
        return acc;
    }
    const Index mid = lo + len / 2;
    return pairwise_sum(lo, mid, term) + pairwise_sum(mid, hi, term);
}

template <class F>
double pairwise_sum(Index n, F&& term) {
    return pairwise_sum<F>(0, n, std::forward<F>(term));
}

// Vector-valued variant; term(i, out) fills a dim-sized buffer.
template <class F>
VectorXd pairwise_sum_vec(Index lo, Index hi, Index dim, F&& term) {
    const Index len = hi - lo;
    if (len <= 32) {
        VectorXd acc = VectorXd::Zero(dim);
        VectorXd buf(dim);
        for (Index i = lo; i < hi; ++i) {
            term(i, buf);
            acc += buf;
        }
        return acc;
    }
    const Index mid = lo + len / 2;
    VectorXd left = pairwise_sum_vec(lo, mid, dim, term);
    left += pairwise_sum_vec(mid, hi, dim, term);
    return left;
}

template <class F>
VectorXd pairwise_sum_vec(Index n, Index dim, F&& term) {
    return pairwise_sum_vec<F>(0, n, dim, std::forward<F>(term));
}

// Render a double with 17 significant digits (round-trip exact).
std::string format_g17(double v);

// Run tasks 0..count-1 on up to `threads` workers. fn(t) must only touch
// its own slot; results indexed by task stay deterministic under any
// worker count.
void parallel_tasks(Index count, int threads, const std::function<void(Index)>& fn);

}  // namespace ivwald

#endif
