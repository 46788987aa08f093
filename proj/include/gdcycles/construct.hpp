#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gdcycles/analysis.hpp"
#include "gdcycles/data.hpp"
#include "gdcycles/dynamics.hpp"
#include "gdcycles/objective.hpp"

namespace gdcycles {

// ---------------------------------------------------------------------------
// Rank-one toy family

struct ToySpec {
    std::size_t n = 2;
    Vec v{1.0};
};

/// n−1 copies of v and one copy of −v, all labelled +1.
inline Dataset make_toy(const ToySpec& spec) {
    if (spec.n < 2) throw std::invalid_argument("toy dataset needs n >= 2");
    if (spec.v.empty() || std::abs(norm2(spec.v) - 1.0) > 1e-12) throw std::invalid_argument("toy direction v must be a unit vector");
    Vec neg = spec.v;
    for (double& c : neg) c = -c;
    return Dataset(spec.v.size(), {Group{spec.v, 1, spec.n - 1}, Group{neg, 1, 1}});
}

/// Fixed point p*_n of the reduced toy map, found by bisection on the drive
/// p − (n−1)(1−p), and the curvature λ = p*(1−p*) of the minimizing subspace.
struct ToyFixedPoint {
    double p_star;
    double lambda;
};

inline ToyFixedPoint toy_fixed_point(std::size_t n) {
    if (n < 2) throw std::invalid_argument("toy dataset needs n >= 2");
    const double nn = static_cast<double>(n);
    double lo = 0.0, hi = 1.0;
    for (int i = 0; i < 200 && hi - lo > 0.0; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        (mid - (nn - 1.0) * (1.0 - mid) < 0.0 ? lo : hi) = mid;
    }
    const double p = 0.5 * (lo + hi);
    return {p, p * (1.0 - p)};
}

/// The two points of the period-2 orbit of the n = 2 toy map for η >= 8:
/// p = (1 + u)/2 where u solves tanh⁻¹(u) = (η/8)·u on (0, 1). Returns (p, 1−p).
inline std::pair<double, double> period2_points(double eta) {
    if (!(eta >= 8.0)) throw std::invalid_argument("period-2 point undefined for eta < 8");
    if (eta == 8.0) return {0.5, 0.5};
    const double k = eta / 8.0;
    auto f = [k](double u) { return std::atanh(u) - k * u; };
    double lo = 1e-12, hi = 1.0 - 1e-15;
    // f(lo) < 0 < f(hi) for k > 1; when k is so close to 1 that f(lo) >= 0 the
    // root is below the bracket and u ~ sqrt(3(k−1)) is already accurate.
    if (f(lo) >= 0.0) {
        const double u = std::sqrt(3.0 * (k - 1.0));
        return {0.5 * (1.0 + u), 0.5 * (1.0 - u)};
    }
    for (int i = 0; i < 400; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if (std::abs(fm) < 1e-13 && hi - lo < 1e-15) break;
        if (mid == lo || mid == hi) break;
        (fm < 0.0 ? lo : hi) = mid;
    }
    const double u = 0.5 * (lo + hi);
    return {0.5 * (1.0 + u), 0.5 * (1.0 - u)};
}

// ---------------------------------------------------------------------------
// Cycle constructions

/// m copies of x = +1, n copies of x = −1 and b "kick" copies of x = x_big,
/// all labelled +1; step size γ/L''(w*).
struct Recipe1D {
    std::size_t m = 250;
    std::size_t n = 200;
    double x_big = 70.0;
    std::size_t b = 15;
    double gamma = 1.5;
    double w0 = 10.0;

    void validate() const {
        if (!(m > n && n >= 1)) throw std::invalid_argument("Recipe1D needs m > n >= 1");
        if (!(x_big > 0.0)) throw std::invalid_argument("Recipe1D needs x_big > 0");
        if (!(gamma > 1.0 && gamma <= 2.0)) throw std::invalid_argument("Recipe1D needs gamma in (1, 2]");
    }
};

/// Axis groups ±e1, ±e2 plus two kick groups, all labelled +1; step size
/// γ/λmax(∇²L(w*)).
struct Recipe2D {
    std::size_t m1 = 500, n1 = 30, m2 = 5, n2 = 1;
    Vec kick1{45.0, -70.0};
    std::size_t kick1_count = 7;
    Vec kick2{7.5, 50.0};
    std::size_t kick2_count = 10;
    double gamma = 0.4;
    Vec w0{15.0, 4.0};

    void validate() const {
        if (!(m1 > n1 && m2 > n2)) throw std::invalid_argument("Recipe2D needs m1 > n1 and m2 > n2");
        // The first axis must dominate the asymptotic slope so that the step
        // size is set by the first coordinate.
        if (!(m1 - n1 > m2 - n2)) throw std::invalid_argument("Recipe2D needs m1 - n1 > m2 - n2");
        if (kick1.size() != 2 || kick2.size() != 2 || w0.size() != 2) throw std::invalid_argument("Recipe2D vectors must be 2D");
        if (!(gamma > 0.0 && gamma <= 2.0)) throw std::invalid_argument("Recipe2D needs gamma in (0, 2]");
    }
};

struct Construction {
    Dataset dataset;
    double eta;
    Solution solution;
    Vec w0;
};

namespace detail {

inline Construction finish_construction(Dataset ds, const ScalarLoss& loss, double gamma, Vec w0) {
    if (check_separable(ds).verdict != Separability::non_separable)
        throw DomainError("constructed dataset is not certified non-separable");
    Objective obj(ds, loss);
    Solution sol = minimize(obj);
    const double eta = gamma / sol.lambda_star;
    return {std::move(ds), eta, std::move(sol), std::move(w0)};
}

} // namespace detail

inline Dataset recipe_dataset(const Recipe1D& r) {
    r.validate();
    std::vector<Group> g{{Vec{1.0}, 1, r.m}, {Vec{-1.0}, 1, r.n}};
    if (r.b > 0) g.push_back({Vec{r.x_big}, 1, r.b});
    return Dataset(1, std::move(g));
}

inline Dataset recipe_dataset(const Recipe2D& r) {
    r.validate();
    std::vector<Group> g;
    auto add = [&](Vec x, std::size_t c) {
        if (c > 0) g.push_back({std::move(x), 1, c});
    };
    add({1.0, 0.0}, r.m1);
    add({-1.0, 0.0}, r.n1);
    add({0.0, 1.0}, r.m2);
    add({0.0, -1.0}, r.n2);
    add(r.kick1, r.kick1_count);
    add(r.kick2, r.kick2_count);
    return Dataset(2, std::move(g));
}

/// Construction from any dataset: step size γ/λmax(∇²L(w*)).
inline Construction build_from(Dataset ds, double gamma, Vec w0, const ScalarLoss& loss = logistic()) {
    if (w0.size() != ds.dim()) throw std::invalid_argument("w0 has the wrong dimension");
    return detail::finish_construction(std::move(ds), loss, gamma, std::move(w0));
}

/// Dataset and step size γ/L''(w*), with w* of the full (kicked) objective.
inline Construction build_1d(const Recipe1D& r, const ScalarLoss& loss = logistic()) {
    return detail::finish_construction(recipe_dataset(r), loss, r.gamma, Vec{r.w0});
}

inline Construction build_2d(const Recipe2D& r, const ScalarLoss& loss = logistic()) {
    return detail::finish_construction(recipe_dataset(r), loss, r.gamma, r.w0);
}

struct CycleRunOptions {
    std::size_t iters = 200000;
    double tol = default_cycle_tol;
    std::size_t k_max = default_k_max;
};

/// Runs GD from the construction's w0 and classifies the limit.
inline CycleReport run_and_detect(const Construction& c, const ScalarLoss& loss = logistic(), const CycleRunOptions& opt = {}) {
    Objective obj(c.dataset, loss);
    GDConfig cfg;
    cfg.eta = c.eta;
    cfg.max_iters = opt.iters;
    cfg.record_every = opt.iters + 1;
    cfg.dense_tail = std::max(default_dense_tail, 2 * opt.k_max);
    cfg.w0 = c.w0;
    cfg.record_losses = false;
    const Trajectory tr = run(obj, cfg);
    if (tr.diverged) throw DomainError("GD diverged on the constructed dataset");
    return detect_cycle(obj, tr, opt.tol, opt.k_max);
}

struct HuntRanges {
    std::vector<std::size_t> m{250};
    std::vector<std::size_t> n{200};
    std::vector<double> x_big;
    std::vector<std::size_t> b;
    std::vector<double> w0_grid{1, 2, 5, 10, 20, 50};

    static HuntRanges defaults() {
        HuntRanges r;
        for (int x = 10; x <= 300; x += 10) r.x_big.push_back(x);
        for (std::size_t k = 1; k <= 30; ++k) r.b.push_back(k);
        return r;
    }
};

struct HuntResult {
    Recipe1D recipe;  // w0 is the witnessing initialization
    CycleReport report;
    std::size_t candidates_tried = 0;
};

struct HuntOptions {
    CycleRunOptions run{50000, default_cycle_tol, 512};
    unsigned threads = 1;
};

/// First recipe, in lexicographic (b, x_big, m, n) order, for which GD from
/// some w0 in the grid settles on a stable cycle of period > 1.
inline HuntResult hunt_1d(double gamma, const HuntRanges& ranges, std::size_t budget, const HuntOptions& opt = {}) {
    if (!(gamma > 1.0 && gamma <= 2.0)) throw std::invalid_argument("hunt_1d needs gamma in (1, 2]");

    std::vector<Recipe1D> cands;
    for (auto b : ranges.b)
        for (auto x : ranges.x_big)
            for (auto m : ranges.m)
                for (auto n : ranges.n)
                    if (m > n && n >= 1 && x > 0.0 && cands.size() < budget) cands.push_back(Recipe1D{m, n, x, b, gamma, 0.0});
    const ScalarLoss loss = logistic();
    auto evaluate = [&](const Recipe1D& r) -> std::optional<HuntResult> {
        Construction c = build_1d(r, loss);
        for (double w0 : ranges.w0_grid) {
            c.w0 = Vec{w0};
            CycleReport rep;
            try {
                rep = run_and_detect(c, loss, opt.run);
            } catch (const DomainError&) {
                continue;
            }
            if (rep.kind == LimitKind::cycle && rep.multiplier < 1.0) {
                Recipe1D found = r;
                found.w0 = w0;
                return HuntResult{found, std::move(rep), 0};
            }
        }
        return std::nullopt;
    };

    // Evaluate in chunks; the lowest index that succeeds wins regardless of threading.
    const std::size_t chunk = std::max<std::size_t>(1, opt.threads) * 4;
    for (std::size_t start = 0; start < cands.size(); start += chunk) {
        const std::size_t len = std::min(chunk, cands.size() - start);
        std::vector<std::optional<HuntResult>> out(len);
        detail::parallel_for(len, opt.threads, [&](std::size_t i) { out[i] = evaluate(cands[start + i]); });
        for (std::size_t i = 0; i < len; ++i)
            if (out[i]) {
                out[i]->candidates_tried = start + i + 1;
                return std::move(*out[i]);
            }
    }
    throw DomainError("no cycle found in search space");
}

// ---------------------------------------------------------------------------
// Lifting to higher dimension

/// Block-diagonal lift I_k ⊗ X: each group is copied into each of k blocks.
inline Dataset kronecker_stack(const Dataset& ds, std::size_t k) {
    if (k < 2) throw std::invalid_argument("kronecker_stack needs k >= 2");
    const std::size_t d = ds.dim();
    std::vector<Group> out;
    out.reserve(k * ds.groups().size());
    for (std::size_t j = 0; j < k; ++j)
        for (const auto& g : ds.groups()) {
            Vec x(k * d, 0.0);
            std::copy(g.x.begin(), g.x.end(), x.begin() + static_cast<std::ptrdiff_t>(j * d));
            out.push_back({std::move(x), g.y, g.count});
        }
    return Dataset(k * d, std::move(out));
}

struct EosSetup {
    Dataset dataset;
    double eta;
    Vec w0;
    Solution solution;
    CycleReport base_cycle;
};

/// Stacks a verified 1D k-cycle k times and starts block j at the j-th orbit
/// point, so every iterate is a cyclic permutation of the previous one. The
/// stacked step size is γ/λ(stacked), with γ = η·λ of the base construction.
inline EosSetup eos_from(const Construction& base, std::size_t k, const ScalarLoss& loss = logistic(),
                         const CycleRunOptions& opt = {}) {
    if (base.dataset.dim() != 1) throw std::invalid_argument("eos: the base construction must be one-dimensional");
    CycleReport rep = run_and_detect(base, loss, opt);
    if (rep.kind != LimitKind::cycle) throw DomainError("recipe does not produce a cycle");
    if (rep.period != k) throw DomainError("recipe produces a " + std::to_string(rep.period) + "-cycle, not a " + std::to_string(k) + "-cycle");

    const double gamma = base.eta * base.solution.lambda_star;
    Dataset stacked = kronecker_stack(base.dataset, k);
    Objective obj(stacked, loss);
    Solution sol = minimize(obj);
    const double eta = gamma / sol.lambda_star;
    Vec w0(k);
    for (std::size_t j = 0; j < k; ++j) w0[j] = rep.orbit[j][0];
    return {std::move(stacked), eta, std::move(w0), std::move(sol), std::move(rep)};
}

inline EosSetup eos_demo(const Recipe1D& r, std::size_t k, const CycleRunOptions& opt = {}) {
    const ScalarLoss loss = logistic();
    return eos_from(build_1d(r, loss), k, loss, opt);
}

} // namespace gdcycles
