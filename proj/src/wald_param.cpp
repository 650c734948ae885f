#include "ivwald/wald_param.hpp"

#include <cmath>

namespace ivwald {

namespace {

void check_domain(double delta, double op, const char* what) {
    if (!(delta > -1.0 && delta < 1.0))
        throw DomainError(std::string(what) + ": risk difference " + format_g17(delta) +
                          " outside (-1, 1)");
    if (!(op > 0.0) || !std::isfinite(op))
        throw DomainError(std::string(what) + ": odds product " + format_g17(op) +
                          " outside (0, inf)");
}

}  // namespace

double solve_baseline_prob(double delta, double op) {
    check_domain(delta, op, "solve_baseline_prob");
    const double a = 1.0 - op;
    const double b = delta + op * (2.0 - delta);
    const double c = -op * (1.0 - delta);
    double disc = b * b - 4.0 * a * c;
    // Nonnegative on the domain; tolerate float dust just below zero.
    if (disc < 0.0) {
        if (disc < -1e-12) throw NumericError("solve_baseline_prob: negative discriminant");
        disc = 0.0;
    }
    const double s = std::sqrt(disc);
    // b > 0: divide c out of the product of roots (no cancellation, and
    // smooth through a = 0 where the paper's root form is 0/0).
    // b <= 0 only occurs for op < 1/3, where a is safely away from 0.
    const double p0 = (b > 0.0) ? (-2.0 * c) / (b + s) : (s - b) / (2.0 * a);
    return p0;
}

BaselineProbGrad solve_baseline_prob_grad(double delta, double op) {
    BaselineProbGrad g;
    g.p0 = solve_baseline_prob(delta, op);
    // Implicit differentiation of F = p0(p0+delta) - op(1-p0)(1-p0-delta):
    // F_p0 > 0 on the domain, so the derivatives below are well defined
    // everywhere, including op = 1.
    const double f_p0 = 2.0 * g.p0 + delta + op * (2.0 - 2.0 * g.p0 - delta);
    const double f_delta = g.p0 + op * (1.0 - g.p0);
    const double f_op = -(1.0 - g.p0) * (1.0 - g.p0 - delta);
    g.d_delta = -f_delta / f_p0;
    g.d_op = -f_op / f_p0;
    return g;
}

CellProbs map_forward(const WaldParams& wp) {
    check_domain(wp.delta, 1.0, "map_forward(delta)");
    check_domain(wp.delta_d, wp.op_d, "map_forward(delta_d, op_d)");
    const double delta_y = wp.delta * wp.delta_d;
    check_domain(delta_y, wp.op_y, "map_forward(delta_y, op_y)");

    CellProbs cp;
    cp.p0_d = solve_baseline_prob(wp.delta_d, wp.op_d);
    cp.p1_d = cp.p0_d + wp.delta_d;
    cp.p0_y = solve_baseline_prob(delta_y, wp.op_y);
    cp.p1_y = cp.p0_y + delta_y;
    return cp;
}

WaldParams map_inverse(const CellProbs& cp) {
    for (double p : {cp.p0_d, cp.p1_d, cp.p0_y, cp.p1_y})
        if (!(p > 0.0 && p < 1.0))
            throw DomainError("map_inverse: cell probability " + format_g17(p) +
                              " outside (0, 1)");
    WaldParams wp;
    wp.delta_d = cp.p1_d - cp.p0_d;
    if (wp.delta_d == 0.0)
        throw ValidationError(
            "map_inverse: p1_d == p0_d, instrument relevance fails and delta is undefined");
    wp.op_d = (cp.p1_d * cp.p0_d) / ((1.0 - cp.p1_d) * (1.0 - cp.p0_d));
    wp.op_y = (cp.p1_y * cp.p0_y) / ((1.0 - cp.p1_y) * (1.0 - cp.p0_y));
    wp.delta = (cp.p1_y - cp.p0_y) / wp.delta_d;
    return wp;
}

double link_delta(DeltaLink kind, double eta) {
    switch (kind) {
        case DeltaLink::Tanh:
            return std::tanh(eta);
        case DeltaLink::Expit:
            return 1.0 / (1.0 + std::exp(-eta));
        case DeltaLink::Identity:
            return eta;
    }
    throw DomainError("link_delta: unknown link");
}

double link_delta_deriv(DeltaLink kind, double eta) {
    switch (kind) {
        case DeltaLink::Tanh: {
            const double t = std::tanh(eta);
            return 1.0 - t * t;
        }
        case DeltaLink::Expit: {
            const double e = 1.0 / (1.0 + std::exp(-eta));
            return e * (1.0 - e);
        }
        case DeltaLink::Identity:
            return 1.0;
    }
    throw DomainError("link_delta_deriv: unknown link");
}

double link_op(double eta) {
    if (eta > kOpLinkClamp) eta = kOpLinkClamp;
    if (eta < -kOpLinkClamp) eta = -kOpLinkClamp;
    return std::exp(eta);
}

}  // namespace ivwald
