#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <variant>
#include <vector>

#include "gdcycles/error.hpp"
#include "gdcycles/linalg.hpp"
#include "gdcycles/objective.hpp"

namespace gdcycles {

/// One step of the GD map T(w) = w − η∇L(w).
inline Vec gd_step(const Objective& obj, std::span<const double> w, double eta) {
    if (!(eta > 0.0)) throw std::invalid_argument("gd_step: eta must be positive");
    Vec g = obj.gradient(w);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = w[i] - eta * g[i];
    if (!all_finite(g)) throw NumericError("gd_step produced a non-finite iterate");
    return g;
}

enum class EtaReference { lambda, two_over_L };

/// Step size given as a multiple of a critical step size: γ/λ or γ·(2/L).
struct RelativeEta {
    double gamma = 1.0;
    EtaReference reference = EtaReference::lambda;
};

using EtaSpec = std::variant<double, RelativeEta>;

inline double resolve_eta(const EtaSpec& spec, const Solution* sol) {
    double eta;
    if (const double* abs = std::get_if<double>(&spec)) {
        eta = *abs;
    } else {
        const auto& rel = std::get<RelativeEta>(spec);
        if (!sol) throw std::invalid_argument("a relative step size needs the solution of the objective");
        eta = rel.reference == EtaReference::lambda ? rel.gamma / sol->lambda_star : rel.gamma * sol->etas.two_over_L;
    }
    if (!(eta > 0.0) || !std::isfinite(eta)) throw std::invalid_argument("step size must resolve to a positive finite value");
    return eta;
}

inline constexpr std::size_t default_dense_tail = 4096;

struct GDConfig {
    double eta = 0.0;
    std::size_t max_iters = 10000;
    std::size_t record_every = 1;
    // Trailing iterates always kept at full resolution, for cycle detection and PSD.
    std::size_t dense_tail = default_dense_tail;
    Vec w0;
    double divergence_norm = 1e12;
    bool record_losses = true;
};

/// Recorded GD iterates w_t for t in `steps`; the last `dense_tail` records are
/// consecutive iterations ending at the final one.
struct Trajectory {
    std::vector<std::size_t> steps;
    std::vector<Vec> iterates;
    std::vector<double> losses;
    double eta = 0.0;
    bool diverged = false;
    std::size_t dense_tail = 0;

    std::size_t size() const { return iterates.size(); }
    const Vec& back() const { return iterates.back(); }
    std::span<const Vec> tail() const {
        return std::span<const Vec>(iterates).subspan(iterates.size() - dense_tail);
    }
    std::span<const double> tail_losses() const {
        return std::span<const double>(losses).subspan(losses.size() - dense_tail);
    }
};

/// Runs `max_iters` GD steps from w0. Divergence (‖w‖∞ above the threshold)
/// stops the run and sets the flag instead of throwing.
inline Trajectory run(const Objective& obj, const GDConfig& cfg) {
    if (!(cfg.eta > 0.0) || !std::isfinite(cfg.eta)) throw std::invalid_argument("run: eta must be positive and finite");
    if (cfg.w0.size() != obj.dim()) throw std::invalid_argument("run: w0 has the wrong dimension");
    if (cfg.record_every == 0) throw std::invalid_argument("run: record_every must be >= 1");

    Trajectory tr;
    tr.eta = cfg.eta;
    const std::size_t T = cfg.max_iters;
    const std::size_t tail_start = T + 1 > cfg.dense_tail ? T + 1 - cfg.dense_tail : 0;
    const std::size_t expected = tail_start / cfg.record_every + (T + 1 - tail_start) + 1;
    tr.steps.reserve(expected);
    tr.iterates.reserve(expected);
    if (cfg.record_losses) tr.losses.reserve(expected);

    Vec w = cfg.w0, g(obj.dim());
    std::size_t consecutive = 0;
    std::size_t last_recorded = std::numeric_limits<std::size_t>::max();
    auto record = [&](std::size_t t) {
        consecutive = (last_recorded != std::numeric_limits<std::size_t>::max() && t == last_recorded + 1) ? consecutive + 1 : 1;
        last_recorded = t;
        tr.steps.push_back(t);
        tr.iterates.push_back(w);
        if (cfg.record_losses) tr.losses.push_back(obj.value(w));
    };

    for (std::size_t t = 0;; ++t) {
        if (t >= tail_start || t % cfg.record_every == 0) record(t);
        if (t == T) break;
        obj.gradient_into(w, g);
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= cfg.eta * g[i];
        if (!(norm_inf(w) <= cfg.divergence_norm)) {
            tr.diverged = true;
            break;
        }
    }
    tr.dense_tail = std::min(consecutive, cfg.dense_tail);
    return tr;
}

// ---------------------------------------------------------------------------
// Probability space (logistic loss only)

/// Per-group probabilities p_i = σ(−y_i wᵀx_i), each strictly inside (0, 1).
struct ProbState {
    Vec p;
};

inline constexpr double prob_margin = 1e-300;

inline ProbState clamp_probabilities(ProbState s, double margin = prob_margin) {
    const double hi = std::nextafter(1.0, 0.0);
    for (double& v : s.p) v = std::clamp(v, margin, hi);
    return s;
}

/// The GD recurrence rewritten on the per-example probabilities:
/// p'_i = σ(σ⁻¹(p_i) − (η/N)·y_i·(Σ_j c_j y_j p_j x_j)ᵀx_i), with the Gram
/// inner products y_i y_j x_jᵀx_i precomputed.
class ProbabilityMap {
public:
    explicit ProbabilityMap(const Objective& obj) : n_(obj.dataset().groups().size()) {
        if (obj.loss().name != "logistic")
            throw std::invalid_argument("the probability-space map is defined for the logistic loss only");
        const auto& gs = obj.dataset().groups();
        gram_.assign(n_ * n_, 0.0);
        weight_.resize(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            weight_[i] = static_cast<double>(gs[i].count) / static_cast<double>(obj.dataset().total_count());
            for (std::size_t j = 0; j < n_; ++j) gram_[i * n_ + j] = gs[i].y * gs[j].y * dot(gs[j].x, gs[i].x);
        }
        groups_ = gs;
    }

    std::size_t size() const { return n_; }

    ProbState from_weights(std::span<const double> w) const {
        ProbState s{Vec(n_)};
        for (std::size_t i = 0; i < n_; ++i) s.p[i] = sigmoid(-groups_[i].y * dot(w, groups_[i].x));
        return s;
    }

    ProbState step(const ProbState& s, double eta) const {
        if (s.p.size() != n_) throw std::invalid_argument("prob_step: state has the wrong size");
        ProbState out{Vec(n_)};
        for (std::size_t i = 0; i < n_; ++i) {
            const double p = s.p[i];
            if (!(p > 0.0 && p < 1.0)) throw NumericError("prob_step: probability is numerically 0 or 1; clamp first");
            double drive = 0.0;
            for (std::size_t j = 0; j < n_; ++j) drive += weight_[j] * s.p[j] * gram_[i * n_ + j];
            out.p[i] = sigmoid(logit(p) - eta * drive);
        }
        return out;
    }

private:
    std::size_t n_;
    std::vector<double> gram_;
    std::vector<double> weight_;
    std::vector<Group> groups_;
};

/// Reduced scalar map of the rank-one toy dataset (n−1 copies of v, one −v,
/// ‖v‖=1): p'_n = σ(σ⁻¹(p_n) − (η/n)(p_n − (n−1)(1−p_n))).
inline double toy_prob_step(double p_n, std::size_t n, double eta) {
    if (!(p_n > 0.0 && p_n < 1.0)) throw NumericError("toy_prob_step: probability is numerically 0 or 1");
    const double nn = static_cast<double>(n);
    return sigmoid(logit(p_n) - (eta / nn) * (p_n - (nn - 1.0) * (1.0 - p_n)));
}

// ---------------------------------------------------------------------------
// Linear stability along orbits

/// Spectral radius of a general square matrix. Closed form up to 2×2, otherwise
/// Gelfand's formula ρ = lim ‖A^m‖^{1/m} via renormalized repeated squaring.
inline double spectral_radius(const Matrix& a) {
    const std::size_t n = a.dim();
    if (n == 1) return std::abs(a(0, 0));
    if (n == 2) {
        const double tr = a(0, 0) + a(1, 1);
        const double det = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
        const double disc = 0.25 * tr * tr - det;
        if (disc < 0.0) return std::sqrt(det);
        const double r = std::sqrt(disc);
        return std::max(std::abs(0.5 * tr + r), std::abs(0.5 * tr - r));
    }
    Matrix b = a;
    double log_scale = 0.0;  // log of ‖A^{2^s}‖ bookkeeping, divided by 2^s
    double weight = 1.0;
    for (int s = 0; s < 64; ++s) {
        const double m = b.max_abs();
        if (m == 0.0) return 0.0;
        b.scale(1.0 / m);
        log_scale += weight * std::log(m);
        b = b * b;
        weight *= 0.5;
    }
    const double m = b.max_abs();
    if (m == 0.0) return 0.0;
    return std::exp(log_scale + weight * std::log(m));
}

/// Spectral radius of ∏_t (I − η∇²L(w_t)) over the orbit, applied in order.
inline double orbit_multiplier(const Objective& obj, std::span<const Vec> orbit, double eta) {
    if (orbit.empty()) throw std::invalid_argument("orbit_multiplier: empty orbit");
    const std::size_t d = obj.dim();
    if (d == 1) {
        double log_abs = 0.0;
        for (const auto& w : orbit) {
            const double f = std::abs(1.0 - eta * obj.hessian(w)(0, 0));
            if (f == 0.0) return 0.0;
            log_abs += std::log(f);
        }
        return std::exp(log_abs);
    }
    Matrix prod = Matrix::identity(d);
    double log_scale = 0.0;
    for (const auto& w : orbit) {
        const SymMatrix h = obj.hessian(w);
        Matrix j(d);
        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t c = 0; c < d; ++c) j(r, c) = (r == c ? 1.0 : 0.0) - eta * h(r, c);
        prod = j * prod;
        const double m = prod.max_abs();
        if (m == 0.0) return 0.0;
        prod.scale(1.0 / m);
        log_scale += std::log(m);
    }
    return spectral_radius(prod) * std::exp(log_scale);
}

/// Largest Lyapunov exponent estimate over the recorded iterates after
/// `burn_in`; those records must be consecutive iterations.
inline double lyapunov(const Objective& obj, const Trajectory& traj, double eta, std::size_t burn_in) {
    if (traj.size() < burn_in + 2) throw std::invalid_argument("lyapunov: trajectory too short for the burn-in");
    for (std::size_t j = burn_in + 1; j < traj.size(); ++j)
        if (traj.steps[j] != traj.steps[j - 1] + 1)
            throw std::invalid_argument("lyapunov: post-burn-in records must be consecutive iterations");

    const std::size_t d = obj.dim();
    const std::size_t count = traj.size() - burn_in;
    double sum = 0.0;
    if (d == 1) {
        for (std::size_t j = burn_in; j < traj.size(); ++j)
            sum += std::log(std::abs(1.0 - eta * obj.hessian(traj.iterates[j])(0, 0)));
        return sum / static_cast<double>(count);
    }
    std::mt19937_64 rng(0x1a9u);
    std::normal_distribution<double> normal;
    Vec v(d);
    for (double& x : v) x = normal(rng);
    const double n0 = norm2(v);
    for (double& x : v) x /= n0;
    for (std::size_t j = burn_in; j < traj.size(); ++j) {
        const SymMatrix h = obj.hessian(traj.iterates[j]);
        Vec hv = h.apply(v);
        for (std::size_t i = 0; i < d; ++i) hv[i] = v[i] - eta * hv[i];
        const double nv = norm2(hv);
        if (nv == 0.0) return -std::numeric_limits<double>::infinity();
        sum += std::log(nv);
        for (std::size_t i = 0; i < d; ++i) v[i] = hv[i] / nv;
    }
    return sum / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// One-dimensional convergence bounds at η = 1/L''(w*)

namespace one_d {

inline double sign_of(double w_star) { return w_star < 0.0 ? -1.0 : 1.0; }

/// τ̄ = 1 + max{0, −⌈w0·sign(w*)·L''(w*)/L''(0)⌉}: the crossing bound in the
/// curvature-ratio form.
inline std::size_t curvature_ratio_bound(const Objective& obj, double w_star, double w0) {
    const double ratio = obj.hessian(Vec{w_star})(0, 0) / obj.hessian(Vec{0.0})(0, 0);
    const double c = std::ceil(w0 * sign_of(w_star) * ratio);
    return 1 + static_cast<std::size_t>(std::max(0.0, -c));
}

/// 1 + max{0, ⌈−w0·sign(w*)/(η|L'(0)|)⌉}: the slope at 0 bounds how long it
/// takes to cross 0, after which one more step lands at or beyond w*.
inline std::size_t slope_bound(const Objective& obj, double w_star, double eta, double w0) {
    const double slope = std::abs(obj.gradient(Vec{0.0})[0]);
    if (slope == 0.0) return 1;
    const double c = std::ceil(-w0 * sign_of(w_star) / (eta * slope));
    return 1 + static_cast<std::size_t>(std::max(0.0, c));
}

/// Number of GD steps before the iterate first lies in [w*, ∞)·sign(w*)
/// (within `slack`); returns nullopt if that never happens within `max_steps`.
inline std::optional<std::size_t> steps_to_enter(const Objective& obj, double w_star, double eta, double w0,
                                                 std::size_t max_steps, double slack = 0.0) {
    const double s = sign_of(w_star);
    double w = w0;
    for (std::size_t t = 0; t <= max_steps; ++t) {
        if (s * (w - w_star) >= -slack) return t;
        w -= eta * obj.gradient(Vec{w})[0];
    }
    return std::nullopt;
}

} // namespace one_d

} // namespace gdcycles
