#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstddef>
#include <exception>
#include <numbers>
#include <random>
#include <stdexcept>
#include <thread>
#include <vector>

#include "gdcycles/dynamics.hpp"
#include "gdcycles/linalg.hpp"
#include "gdcycles/objective.hpp"

namespace gdcycles {

enum class LimitKind { fixed_point, cycle, undetermined };

inline const char* to_string(LimitKind k) {
    switch (k) {
    case LimitKind::fixed_point: return "fixed_point";
    case LimitKind::cycle: return "cycle";
    case LimitKind::undetermined: return "undetermined";
    }
    return "?";
}

struct CycleReport {
    LimitKind kind = LimitKind::undetermined;
    std::size_t period = 0;  // 1 for a fixed point, 0 when undetermined
    std::vector<Vec> orbit;  // orbit[i+1] = T(orbit[i])
    double residual = 0.0;
    double multiplier = 0.0;
    double lyapunov = 0.0;
};

inline constexpr double default_cycle_tol = 1e-8;
inline constexpr std::size_t default_k_max = 2048;

namespace detail {

inline bool period_matches(std::span<const Vec> tail, std::size_t k, double tol, double* residual = nullptr) {
    const std::size_t last = tail.size() - 1;
    double worst = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        const auto& a = tail[last - j];
        const double d = dist_inf(a, tail[last - j - k]);
        if (!(d < tol * (1.0 + norm_inf(a)))) return false;
        worst = std::max(worst, d);
    }
    if (residual) *residual = worst;
    return true;
}

} // namespace detail

/// Smallest k <= k_max such that the last k iterates repeat the k before them
/// (relative max-norm tolerance). Fills in the orbit multiplier and a Lyapunov
/// estimate over the dense tail.
inline CycleReport detect_cycle(const Objective& obj, const Trajectory& traj, double tol = default_cycle_tol,
                                std::size_t k_max = default_k_max) {
    const auto tail = traj.tail();
    if (k_max == 0) throw std::invalid_argument("detect_cycle: k_max must be >= 1");
    if (tail.size() < 2 * k_max) throw std::invalid_argument("detect_cycle: dense tail shorter than 2*k_max");

    CycleReport rep;
    for (std::size_t k = 1; k <= k_max; ++k) {
        double residual = 0.0;
        if (!detail::period_matches(tail, k, tol, &residual)) continue;
        for (std::size_t div = 1; div < k; ++div)
            if (k % div == 0 && detail::period_matches(tail, div, tol))
                throw std::logic_error("detect_cycle: a divisor of the detected period also matches");
        rep.kind = k == 1 ? LimitKind::fixed_point : LimitKind::cycle;
        rep.period = k;
        rep.residual = residual;
        rep.orbit.assign(tail.end() - static_cast<std::ptrdiff_t>(k), tail.end());
        rep.multiplier = orbit_multiplier(obj, rep.orbit, traj.eta);
        const std::size_t used = (tail.size() / k) * k;
        rep.lyapunov = lyapunov(obj, traj, traj.eta, traj.size() - used);
        return rep;
    }
    rep.lyapunov = lyapunov(obj, traj, traj.eta, traj.size() - tail.size());
    return rep;
}

// ---------------------------------------------------------------------------
// Periodogram

struct PsdResult {
    std::vector<double> freqs;  // cycles per iteration, 0 .. 0.5
    std::vector<double> power;
};

namespace detail {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 FFT.
inline void fft(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> w = std::polar(1.0, ang * static_cast<double>(k));
                const auto u = a[i + k];
                const auto v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
            }
        }
    }
}

} // namespace detail

/// One-sided periodogram of the mean-removed last `window` values, normalized so
/// the bins sum to the window's (population) variance.
inline PsdResult psd(std::span<const double> values, std::size_t window = 1024) {
    if (!detail::is_pow2(window)) throw std::invalid_argument("psd: window must be a power of two");
    if (window > values.size()) throw std::invalid_argument("psd: window longer than the sequence");
    const auto seg = values.subspan(values.size() - window);
    double mean = 0.0;
    for (double v : seg) mean += v;
    mean /= static_cast<double>(window);

    std::vector<std::complex<double>> a(window);
    for (std::size_t i = 0; i < window; ++i) a[i] = seg[i] - mean;
    detail::fft(a);

    PsdResult r;
    const std::size_t half = window / 2;
    const double w2 = static_cast<double>(window) * static_cast<double>(window);
    r.freqs.resize(half + 1);
    r.power.resize(half + 1);
    for (std::size_t k = 0; k <= half; ++k) {
        r.freqs[k] = static_cast<double>(k) / static_cast<double>(window);
        const double folded = (k == 0 || k == half) ? 1.0 : 2.0;
        r.power[k] = folded * std::norm(a[k]) / w2;
    }
    return r;
}

/// Index of the largest bin above frequency 0.
inline std::size_t dominant_bin(const PsdResult& r) {
    std::size_t best = 1;
    for (std::size_t k = 2; k < r.power.size(); ++k)
        if (r.power[k] > r.power[best]) best = k;
    return best;
}

// ---------------------------------------------------------------------------
// Parallel helper: independent cells, results placed by index.

namespace detail {

template <typename F>
void parallel_for(std::size_t n, unsigned threads, F&& body) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::exception_ptr> errors(threads);
    {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) {
            pool.emplace_back([&, t] {
                try {
                    for (std::size_t i = t; i < n; i += threads) body(i);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

inline std::vector<double> dedup_sorted(std::vector<double> v, double rel) {
    std::sort(v.begin(), v.end());
    std::vector<double> out;
    for (double x : v)
        if (out.empty() || std::abs(x - out.back()) > rel * std::max(std::abs(x), std::abs(out.back()))) out.push_back(x);
    return out;
}

inline std::size_t count_distinct_points(std::span<const Vec> pts, double rel) {
    std::vector<const Vec*> reps;
    for (const auto& p : pts) {
        bool seen = false;
        for (const Vec* r : reps)
            if (dist_inf(p, *r) <= rel * (1.0 + norm_inf(p))) {
                seen = true;
                break;
            }
        if (!seen) reps.push_back(&p);
    }
    return reps.size();
}

} // namespace detail

// ---------------------------------------------------------------------------
// Bifurcation sweep

struct SweepCell {
    std::vector<double> final_losses;  // distinct tail losses
    double scaled_sharpness = 0.0;     // η·λmax(∇²L(w_T))/2
    std::size_t distinct_states = 0;   // distinct tail iterates
    bool diverged = false;
};

struct BifurcationSweep {
    std::vector<double> eta_grid;
    std::vector<Vec> inits;
    std::vector<std::vector<SweepCell>> cells;  // [eta][init]
};

struct SweepOptions {
    std::size_t tail_samples = 256;
    double dedup_rel = 1e-9;
    unsigned threads = 1;
};

inline std::vector<double> default_init_scales() { return {1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3}; }

/// Initial points scale·N(0, I), scales cycled across inits; fixed by the seed.
inline std::vector<Vec> sweep_inits(std::size_t dim, std::size_t n_inits, std::span<const double> scales, std::uint64_t seed) {
    if (scales.empty()) throw std::invalid_argument("sweep: at least one initialization scale is required");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    std::vector<Vec> inits(n_inits, Vec(dim));
    for (std::size_t i = 0; i < n_inits; ++i)
        for (double& v : inits[i]) v = scales[i % scales.size()] * normal(rng);
    return inits;
}

inline BifurcationSweep bifurcation_sweep(const Objective& obj, std::vector<double> eta_grid, std::size_t n_inits,
                                          std::span<const double> scales, std::size_t T, std::uint64_t seed,
                                          const SweepOptions& opt = {}) {
    if (eta_grid.empty()) throw std::invalid_argument("sweep: empty eta grid");
    for (std::size_t i = 0; i < eta_grid.size(); ++i) {
        if (!(eta_grid[i] > 0.0)) throw std::invalid_argument("sweep: step sizes must be positive");
        if (i > 0 && !(eta_grid[i] > eta_grid[i - 1])) throw std::invalid_argument("sweep: eta grid must be strictly ascending");
    }
    if (n_inits == 0) throw std::invalid_argument("sweep: n_inits must be >= 1");

    BifurcationSweep sw;
    sw.eta_grid = std::move(eta_grid);
    sw.inits = sweep_inits(obj.dim(), n_inits, scales, seed);
    sw.cells.assign(sw.eta_grid.size(), std::vector<SweepCell>(n_inits));

    detail::parallel_for(sw.eta_grid.size() * n_inits, opt.threads, [&](std::size_t idx) {
        const std::size_t e = idx / n_inits, i = idx % n_inits;
        GDConfig cfg;
        cfg.eta = sw.eta_grid[e];
        cfg.max_iters = T;
        cfg.record_every = T + 1;
        cfg.dense_tail = opt.tail_samples;
        cfg.w0 = sw.inits[i];
        const Trajectory tr = run(obj, cfg);
        SweepCell& cell = sw.cells[e][i];
        if (tr.diverged) {
            cell.diverged = true;
            return;
        }
        const auto tl = tr.tail_losses();
        cell.final_losses = detail::dedup_sorted(std::vector<double>(tl.begin(), tl.end()), opt.dedup_rel);
        cell.distinct_states = detail::count_distinct_points(tr.tail(), opt.dedup_rel);
        cell.scaled_sharpness = cfg.eta * lambda_max(obj.hessian(tr.back())) / 2.0;
    });
    return sw;
}

/// Distinct final losses pooled over all initializations at one step size.
inline std::vector<double> pooled_losses(const BifurcationSweep& sw, std::size_t eta_index, double rel = 1e-9) {
    std::vector<double> all;
    for (const auto& c : sw.cells.at(eta_index))
        all.insert(all.end(), c.final_losses.begin(), c.final_losses.end());
    return detail::dedup_sorted(std::move(all), rel);
}

// ---------------------------------------------------------------------------
// Basin of attraction

enum class BasinLabel : unsigned char { other = 0, to_cycle = 1, to_fixed_point = 2 };

struct Bounds {
    double xmin, xmax, ymin, ymax;
};

struct BasinRaster {
    Bounds bounds{};
    std::size_t nx = 0, ny = 0;
    std::vector<BasinLabel> labels;  // row-major, row 0 at ymin

    BasinLabel at(std::size_t ix, std::size_t iy) const { return labels[iy * nx + ix]; }
    std::size_t count(BasinLabel l) const { return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), l)); }
    Vec cell_center(std::size_t ix, std::size_t iy) const {
        return {bounds.xmin + (static_cast<double>(ix) + 0.5) * (bounds.xmax - bounds.xmin) / static_cast<double>(nx),
                bounds.ymin + (static_cast<double>(iy) + 0.5) * (bounds.ymax - bounds.ymin) / static_cast<double>(ny)};
    }
};

struct BasinRefs {
    Vec w_star;
    std::vector<Vec> orbit;
};

/// Runs GD for T steps from every cell center and labels the attractor reached.
inline BasinRaster basin_raster(const Objective& obj, double eta, Bounds bounds, std::size_t nx, std::size_t ny,
                                const BasinRefs& refs, std::size_t T, unsigned threads = 1) {
    if (obj.dim() != 2) throw std::invalid_argument("basin_raster: the objective must be two-dimensional");
    if (nx == 0 || ny == 0) throw std::invalid_argument("basin_raster: empty resolution");
    if (!(eta > 0.0)) throw std::invalid_argument("basin_raster: eta must be positive");
    BasinRaster r{bounds, nx, ny, std::vector<BasinLabel>(nx * ny, BasinLabel::other)};
    const double tol = 1e-6 * (1.0 + norm_inf(refs.w_star));

    detail::parallel_for(nx * ny, threads, [&](std::size_t idx) {
        Vec w = r.cell_center(idx % nx, idx / nx), g(2);
        for (std::size_t t = 0; t < T; ++t) {
            obj.gradient_into(w, g);
            w[0] -= eta * g[0];
            w[1] -= eta * g[1];
            if (!(norm_inf(w) <= 1e12)) return;
        }
        if (dist_inf(w, refs.w_star) <= tol) {
            r.labels[idx] = BasinLabel::to_fixed_point;
            return;
        }
        for (const auto& p : refs.orbit)
            if (dist_inf(w, p) <= tol) {
                r.labels[idx] = BasinLabel::to_cycle;
                return;
            }
    });
    return r;
}

/// λmax(∇²L(w_t)) at every recorded iterate.
inline std::vector<double> sharpness_series(const Objective& obj, const Trajectory& traj) {
    std::vector<double> s;
    s.reserve(traj.size());
    for (const auto& w : traj.iterates) s.push_back(lambda_max(obj.hessian(w)));
    return s;
}

} // namespace gdcycles
