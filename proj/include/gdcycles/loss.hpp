#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace gdcycles {

/// Something that can be wrapped as a ScalarLoss.
template <typename F>
concept LossFunction = requires(const F f, double z) {
    { f.eval(z) } -> std::convertible_to<double>;
    { f.d1(z) } -> std::convertible_to<double>;
    { f.d2(z) } -> std::convertible_to<double>;
};

/// Per-example loss ℓ with hand-coded first and second derivatives.
/// Immutable once built; safe to share between threads.
struct ScalarLoss {
    std::string name;
    std::function<double(double)> eval;
    std::function<double(double)> d1;
    std::function<double(double)> d2;
};

template <LossFunction F>
ScalarLoss make_loss(std::string name, F f) {
    return ScalarLoss{std::move(name),
                      [f](double z) { return f.eval(z); },
                      [f](double z) { return f.d1(z); },
                      [f](double z) { return f.d2(z); }};
}

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

struct LogisticLoss {
    double eval(double z) const {
        // log(1+e^z) = z + log1p(e^{-z}) once e^z would dominate.
        if (z > 30.0) return z + std::log1p(std::exp(-z));
        return std::log1p(std::exp(z));
    }
    double d1(double z) const { return sigmoid(z); }
    double d2(double z) const { return sigmoid(z) * sigmoid(-z); }
};

struct SquareplusLoss {
    double eval(double z) const {
        // For z < 0 use the conjugate form 2/(sqrt(z²+4) - z) to avoid cancellation.
        const double r = std::sqrt(z * z + 4.0);
        return z >= 0.0 ? 0.5 * (r + z) : 2.0 / (r - z);
    }
    double d1(double z) const {
        const double r = std::sqrt(z * z + 4.0);
        return z >= 0.0 ? 0.5 * (z / r + 1.0) : 2.0 / (r * (r - z));
    }
    double d2(double z) const {
        const double s = z * z + 4.0;
        return 2.0 / (s * std::sqrt(s));
    }
};

inline ScalarLoss logistic() { return make_loss("logistic", LogisticLoss{}); }
inline ScalarLoss squareplus() { return make_loss("squareplus", SquareplusLoss{}); }

inline ScalarLoss loss_by_name(const std::string& name) {
    if (name == "logistic") return logistic();
    if (name == "squareplus") return squareplus();
    throw std::invalid_argument("unknown loss '" + name + "' (expected logistic or squareplus)");
}

/// |ε²·ℓ(z/ε²) − max{z, 0}|: distance of the rescaled loss from a ReLU.
inline double relu_limit_gap(const ScalarLoss& loss, double z, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("relu_limit_gap: eps must be positive");
    const double e2 = eps * eps;
    return std::abs(e2 * loss.eval(z / e2) - std::max(z, 0.0));
}

struct GridSpec {
    double lo = -50.0;
    double hi = 50.0;
    std::size_t points = 10001;

    double at(std::size_t i) const {
        return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
    }
};

struct AssumptionCheck {
    std::string name;
    bool pass = true;
    double worst_violation = 0.0;
    // Where the worst violation (or the first non-finite value) occurred.
    double at = std::numeric_limits<double>::quiet_NaN();
};

struct AssumptionReport {
    std::string loss_name;
    std::vector<AssumptionCheck> checks;
    GridSpec grid;

    bool all_pass() const {
        return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.pass; });
    }
    const AssumptionCheck& check(const std::string& name) const {
        for (const auto& c : checks)
            if (c.name == name) return c;
        throw std::out_of_range("no assumption check named " + name);
    }
};

namespace assumption {
inline constexpr const char* finite = "finite";
inline constexpr const char* positivity = "positivity";
inline constexpr const char* derivative_bounds = "derivative_bounds";
inline constexpr const char* left_tail = "left_tail";
inline constexpr const char* curvature_unimodal = "curvature_unimodal";
inline constexpr const char* curvature_decay = "curvature_decay";
inline constexpr const char* finite_difference = "finite_difference";
} // namespace assumption

namespace detail {

inline void record(AssumptionCheck& c, double violation, double z) {
    if (!(violation <= c.worst_violation)) {  // also catches NaN
        c.worst_violation = violation;
        c.at = z;
    }
    if (violation > 0.0 || std::isnan(violation)) c.pass = false;
}

} // namespace detail

/// Grid audit of the structural loss assumptions: ℓ>0 and ℓ''>0, 0<ℓ'<1,
/// ℓ → 0 on the left, ℓ'' unimodal about 0, (1/ε²)ℓ''(1/ε) decreasing to 0
/// along eps_list, and finite-difference agreement of the derivatives.
inline AssumptionReport verify_assumption1(const ScalarLoss& loss, const GridSpec& grid = {},
                                           const std::vector<double>& eps_list = {1e-1, 1e-2, 1e-3}) {
    if (grid.points < 3 || grid.lo > -50.0 || grid.hi < 50.0)
        throw std::invalid_argument("verify_assumption1: grid must cover [-50, 50] with >= 3 points");
    for (std::size_t i = 0; i < eps_list.size(); ++i) {
        if (!(eps_list[i] > 0.0) || (i > 0 && !(eps_list[i] < eps_list[i - 1])))
            throw std::invalid_argument("verify_assumption1: eps_list must be positive and strictly decreasing");
    }

    AssumptionReport rep{loss.name, {}, grid};
    AssumptionCheck finite{assumption::finite};
    AssumptionCheck pos{assumption::positivity};
    AssumptionCheck bounds{assumption::derivative_bounds};
    AssumptionCheck tail{assumption::left_tail};
    AssumptionCheck unimodal{assumption::curvature_unimodal};
    AssumptionCheck decay{assumption::curvature_decay};
    AssumptionCheck fd{assumption::finite_difference};

    double prev_d2 = 0.0;
    for (std::size_t i = 0; i < grid.points; ++i) {
        const double z = grid.at(i);
        const double v = loss.eval(z), g = loss.d1(z), h = loss.d2(z);
        if (!std::isfinite(v) || !std::isfinite(g) || !std::isfinite(h)) {
            if (finite.pass) {
                finite.pass = false;
                finite.worst_violation = std::numeric_limits<double>::infinity();
                finite.at = z;
            }
            continue;
        }
        constexpr double tiny = std::numeric_limits<double>::min();
        detail::record(pos, v > 0.0 && h > 0.0 ? 0.0 : std::max({-v, -h, tiny}), z);
        // ℓ' may round to exactly 1 once the remaining gap is below half an ulp,
        // which is when ℓ'' itself has dropped below machine epsilon.
        const bool below_one = g < 1.0 || (g == 1.0 && h < std::numeric_limits<double>::epsilon());
        detail::record(bounds, g > 0.0 && below_one ? 0.0 : std::max({-g, g - 1.0, tiny}), z);
        if (i > 0) {
            // nondecreasing for z <= 0, nonincreasing for z >= 0
            const double step = z <= 0.0 ? prev_d2 - h : h - prev_d2;
            detail::record(unimodal, step > 0.0 ? step : 0.0, z);
        }
        prev_d2 = h;

        if (std::abs(z) <= 20.0) {
            constexpr double step = 1e-5;
            constexpr double ulp = std::numeric_limits<double>::epsilon();
            const double vp = loss.eval(z + step), vm = loss.eval(z - step);
            const double gp = loss.d1(z + step), gm = loss.d1(z - step);
            const double fd1 = (vp - vm) / (2 * step);
            const double fd2 = (gp - gm) / (2 * step);
            // Relative tolerance plus the cancellation floor of the difference quotient.
            const double tol1 = 1e-6 * std::abs(g) + 4 * ulp * (std::abs(vp) + std::abs(vm)) / (2 * step);
            const double tol2 = 1e-6 * std::abs(h) + 4 * ulp * (std::abs(gp) + std::abs(gm)) / (2 * step);
            const double excess = std::max(std::abs(fd1 - g) - tol1, std::abs(fd2 - h) - tol2);
            detail::record(fd, excess > 0.0 ? excess : 0.0, z);
        }
    }

    // ℓ → 0 at −∞: nonincreasing along z = −50·10^k and below 1e-9 by the end of
    // that sequence. Logistic is already there at −50; squareplus decays like 1/|z|.
    {
        double prev_v = std::numeric_limits<double>::infinity();
        bool reached = false;
        for (double z = -50.0; z >= -5e13; z *= 10.0) {
            const double v = loss.eval(z);
            if (!std::isfinite(v) || v > prev_v) {
                detail::record(tail, std::isfinite(v) ? v - prev_v : std::numeric_limits<double>::infinity(), z);
                break;
            }
            prev_v = v;
            if (v < 1e-9) {
                reached = true;
                break;
            }
        }
        if (!reached && tail.pass) detail::record(tail, prev_v - 1e-9, -5e13);
    }

    // Strictly decreasing, and overall at least by sqrt of the eps ratio, so a
    // sequence that merely plateaus is rejected.
    double prev = std::numeric_limits<double>::infinity();
    double first = 0.0;
    for (std::size_t i = 0; i < eps_list.size(); ++i) {
        const double eps = eps_list[i];
        const double s = loss.d2(1.0 / eps) / (eps * eps);
        if (i == 0) first = s;
        double viol = 0.0;
        if (!std::isfinite(s)) viol = std::numeric_limits<double>::infinity();
        else if (s >= prev) viol = s - prev + std::numeric_limits<double>::min();
        detail::record(decay, viol, 1.0 / eps);
        prev = s;
    }
    if (eps_list.size() >= 2) {
        const double bound = first * std::sqrt(eps_list.back() / eps_list.front());
        detail::record(decay, prev > bound ? prev - bound : 0.0, 1.0 / eps_list.back());
    }

    rep.checks = {finite, pos, bounds, tail, unimodal, decay, fd};
    return rep;
}

} // namespace gdcycles
