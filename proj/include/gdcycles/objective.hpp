#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>

#include "gdcycles/data.hpp"
#include "gdcycles/error.hpp"
#include "gdcycles/linalg.hpp"
#include "gdcycles/loss.hpp"

namespace gdcycles {

/// L(w) = (1/N) Σ count_i · ℓ(−y_i wᵀx_i) over a grouped dataset.
class Objective {
public:
    Objective(Dataset ds, ScalarLoss loss) : ds_(std::move(ds)), loss_(std::move(loss)) {}

    const Dataset& dataset() const { return ds_; }
    const ScalarLoss& loss() const { return loss_; }
    std::size_t dim() const { return ds_.dim(); }

    double value(std::span<const double> w) const {
        check_dim(w);
        double s = 0.0;
        for (const auto& g : ds_.groups()) s += static_cast<double>(g.count) * loss_.eval(-g.y * dot(w, g.x));
        const double v = s / static_cast<double>(ds_.total_count());
        if (!std::isfinite(v)) throw NumericError("objective value is not finite");
        return v;
    }

    void gradient_into(std::span<const double> w, std::span<double> out) const {
        check_dim(w);
        std::fill(out.begin(), out.end(), 0.0);
        const double inv_n = 1.0 / static_cast<double>(ds_.total_count());
        for (const auto& g : ds_.groups()) {
            const double c = -static_cast<double>(g.count) * g.y * loss_.d1(-g.y * dot(w, g.x)) * inv_n;
            for (std::size_t i = 0; i < out.size(); ++i) out[i] += c * g.x[i];
        }
        if (!all_finite(out)) throw NumericError("objective gradient is not finite");
    }

    Vec gradient(std::span<const double> w) const {
        Vec g(dim());
        gradient_into(w, g);
        return g;
    }

    SymMatrix hessian(std::span<const double> w) const {
        check_dim(w);
        SymMatrix h(dim());
        const double inv_n = 1.0 / static_cast<double>(ds_.total_count());
        for (const auto& g : ds_.groups())
            h.add_outer(static_cast<double>(g.count) * loss_.d2(-g.y * dot(w, g.x)) * inv_n, g.x);
        if (!h.all_finite()) throw NumericError("objective Hessian is not finite");
        return h;
    }

    /// Σ (count_i/N) x_i x_iᵀ.
    SymMatrix second_moment() const {
        SymMatrix m(dim());
        const double inv_n = 1.0 / static_cast<double>(ds_.total_count());
        for (const auto& g : ds_.groups()) m.add_outer(static_cast<double>(g.count) * inv_n, g.x);
        return m;
    }

    /// Global smoothness constant ℓ''(0)·λmax(second moment).
    double smoothness() const { return loss_.d2(0.0) * lambda_max(second_moment()); }

private:
    void check_dim(std::span<const double> w) const {
        if (w.size() != dim())
            throw std::invalid_argument("weight vector has length " + std::to_string(w.size()) + ", expected " + std::to_string(dim()));
    }

    Dataset ds_;
    ScalarLoss loss_;
};

struct CriticalSteps {
    double two_over_L = 0.0;
    double one_over_lambda = 0.0;
    double two_over_lambda = 0.0;
};

struct Solution {
    Vec w_star;
    double grad_norm = 0.0;
    double lambda_star = 0.0;  // λmax(∇²L(w*))
    double L_global = 0.0;
    CriticalSteps etas;
};

enum class SolverMethod { automatic, newton, gradient };

struct MinimizeOptions {
    double tol = 1e-12;
    SolverMethod method = SolverMethod::automatic;
    std::size_t max_iter = 10000;           // Newton iterations
    std::size_t max_gd_iter = 50000000;     // safe-GD iterations
    double divergence_norm = 1e12;
};

namespace detail {

inline Solution finish_solution(const Objective& obj, Vec w) {
    Solution sol;
    sol.grad_norm = norm2(obj.gradient(w));
    sol.lambda_star = lambda_max(obj.hessian(w));
    sol.L_global = obj.smoothness();
    sol.etas.two_over_L = 2.0 / sol.L_global;
    sol.etas.two_over_lambda = 2.0 / sol.lambda_star;
    sol.etas.one_over_lambda = sol.etas.two_over_lambda / 2.0;
    sol.w_star = std::move(w);
    return sol;
}

inline void check_divergence(std::span<const double> w, double limit) {
    if (!(norm_inf(w) <= limit))
        throw DomainError("divergence: iterate norm exceeded " + std::to_string(limit) + " (data likely separable or degenerate)");
}

inline Vec minimize_newton(const Objective& obj, const MinimizeOptions& opt) {
    const std::size_t d = obj.dim();
    Vec w(d, 0.0), step(d), trial(d);
    double f = obj.value(w);
    Vec g = obj.gradient(w);
    double gn = norm2(g);
    double mu = 0.0;
    for (std::size_t it = 0; it < opt.max_iter; ++it) {
        if (gn < opt.tol) return w;
        SymMatrix h = obj.hessian(w);
        if (mu > 0.0) h.add_diagonal(mu);
        if (!cholesky_solve(h, g, step)) {
            mu = std::max(2.0 * mu, 1e-12);
            if (mu > 1e12) throw DomainError("Hessian is singular beyond the damping floor");
            continue;
        }
        for (std::size_t i = 0; i < d; ++i) trial[i] = w[i] - step[i];
        const double ft = obj.value(trial);
        Vec gt = obj.gradient(trial);
        const double gtn = norm2(gt);
        // Near the optimum the value stops resolving in floating point; a
        // smaller gradient then decides.
        const bool better = ft < f || (ft <= f + 4 * std::numeric_limits<double>::epsilon() * std::abs(f) && gtn < gn);
        if (better) {
            w.swap(trial);
            f = ft;
            g = std::move(gt);
            gn = gtn;
            mu = 0.0;
            check_divergence(w, opt.divergence_norm);
        } else {
            mu = std::max(2.0 * mu, 1e-12);
            if (mu > 1e12) {
                if (gn < 1e3 * opt.tol) return w;  // stalled at round-off level
                throw ConvergenceError("damped Newton stalled", gn);
            }
        }
    }
    throw ConvergenceError("damped Newton hit the iteration cap", gn);
}

inline Vec minimize_gd(const Objective& obj, const MinimizeOptions& opt) {
    const std::size_t d = obj.dim();
    const double eta = 1.0 / obj.smoothness();
    Vec w(d, 0.0), g(d);
    double gn = 0.0;
    for (std::size_t it = 0; it < opt.max_gd_iter; ++it) {
        obj.gradient_into(w, g);
        gn = norm2(g);
        if (gn < opt.tol) return w;
        for (std::size_t i = 0; i < d; ++i) w[i] -= eta * g[i];
        check_divergence(w, opt.divergence_norm);
    }
    throw ConvergenceError("gradient descent minimizer hit the iteration cap", gn);
}

} // namespace detail

/// Finite minimizer of a non-separable objective plus the curvature summary
/// and critical step sizes at it.
inline Solution minimize(const Objective& obj, const MinimizeOptions& opt = {}) {
    // On separable data the gradient can vanish numerically long before the
    // iterates blow up, so the divergence guard alone is not enough.
    if (check_separable(obj.dataset(), 100000).verdict == Separability::separable)
        throw DomainError("data is linearly separable; no finite minimizer");
    // Rank-deficient features leave a subspace of minimizers.
    {
        SymMatrix m = obj.second_moment();
        Vec probe(obj.dim(), 0.0), x;
        if (!cholesky_solve(m, probe, x, 1e-13))
            throw DomainError("feature second-moment matrix is rank-deficient; the minimizer is not unique");
    }
    auto method = opt.method;
    if (method == SolverMethod::automatic) method = obj.dim() <= 4 ? SolverMethod::newton : SolverMethod::gradient;
    Vec w = method == SolverMethod::newton ? detail::minimize_newton(obj, opt) : detail::minimize_gd(obj, opt);
    return detail::finish_solution(obj, std::move(w));
}

} // namespace gdcycles
