#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "gdcycles/error.hpp"

namespace gdcycles {

using Vec = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
    assert(a.size() == b.size());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double norm_inf(std::span<const double> a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
}

inline double dist_inf(std::span<const double> a, std::span<const double> b) {
    assert(a.size() == b.size());
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline bool all_finite(std::span<const double> a) {
    return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

/// Dense symmetric matrix. Only symmetric updates are exposed, so symmetry
/// holds exactly by construction.
class SymMatrix {
public:
    SymMatrix() = default;
    explicit SymMatrix(std::size_t dim) : dim_(dim), a_(dim * dim, 0.0) {}

    static SymMatrix identity(std::size_t dim) {
        SymMatrix m(dim);
        for (std::size_t i = 0; i < dim; ++i) m.a_[i * dim + i] = 1.0;
        return m;
    }

    std::size_t dim() const { return dim_; }
    double operator()(std::size_t i, std::size_t j) const { return a_[i * dim_ + j]; }

    void set(std::size_t i, std::size_t j, double v) {
        a_[i * dim_ + j] = v;
        a_[j * dim_ + i] = v;
    }

    // this += c * x xᵀ
    void add_outer(double c, std::span<const double> x) {
        assert(x.size() == dim_);
        for (std::size_t i = 0; i < dim_; ++i) {
            const double cx = c * x[i];
            for (std::size_t j = 0; j <= i; ++j) a_[i * dim_ + j] += cx * x[j];
        }
        mirror_lower();
    }

    void add_diagonal(double mu) {
        for (std::size_t i = 0; i < dim_; ++i) a_[i * dim_ + i] += mu;
    }

    void scale(double c) {
        for (double& v : a_) v *= c;
    }

    Vec apply(std::span<const double> x) const {
        Vec y(dim_, 0.0);
        for (std::size_t i = 0; i < dim_; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < dim_; ++j) s += a_[i * dim_ + j] * x[j];
            y[i] = s;
        }
        return y;
    }

    double trace() const {
        double t = 0.0;
        for (std::size_t i = 0; i < dim_; ++i) t += a_[i * dim_ + i];
        return t;
    }

    bool all_finite() const { return gdcycles::all_finite(a_); }

private:
    void mirror_lower() {
        for (std::size_t i = 0; i < dim_; ++i)
            for (std::size_t j = 0; j < i; ++j) a_[j * dim_ + i] = a_[i * dim_ + j];
    }

    std::size_t dim_ = 0;
    std::vector<double> a_;
};

/// Dense square matrix used for Jacobian products along orbits.
class Matrix {
public:
    Matrix() = default;
    explicit Matrix(std::size_t n) : n_(n), a_(n * n, 0.0) {}

    static Matrix identity(std::size_t n) {
        Matrix m(n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t dim() const { return n_; }
    double& operator()(std::size_t i, std::size_t j) { return a_[i * n_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a_[i * n_ + j]; }

    friend Matrix operator*(const Matrix& x, const Matrix& y) {
        assert(x.n_ == y.n_);
        Matrix z(x.n_);
        for (std::size_t i = 0; i < x.n_; ++i)
            for (std::size_t k = 0; k < x.n_; ++k) {
                const double xik = x(i, k);
                for (std::size_t j = 0; j < x.n_; ++j) z(i, j) += xik * y(k, j);
            }
        return z;
    }

    Vec apply(std::span<const double> v) const {
        Vec out(n_, 0.0);
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < n_; ++j) out[i] += a_[i * n_ + j] * v[j];
        return out;
    }

    double max_abs() const { return norm_inf(a_); }
    void scale(double c) {
        for (double& v : a_) v *= c;
    }

private:
    std::size_t n_ = 0;
    std::vector<double> a_;
};

namespace detail {

// Dominant (largest-magnitude) eigenvalue of m + shift·I by power iteration.
inline double power_iteration(const SymMatrix& m, double shift, std::size_t max_iter, double rel_tol) {
    const std::size_t n = m.dim();
    std::mt19937_64 rng(0x5eed1234abcdULL);
    std::normal_distribution<double> normal;
    Vec v(n);
    for (double& x : v) x = normal(rng);
    double nv = norm2(v);
    for (double& x : v) x /= nv;

    double mu = 0.0;
    for (std::size_t it = 0; it < max_iter; ++it) {
        Vec w = m.apply(v);
        for (std::size_t i = 0; i < n; ++i) w[i] += shift * v[i];
        const double next = dot(v, w);
        const double nw = norm2(w);
        if (nw == 0.0) return 0.0;
        for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / nw;
        if (it > 0 && std::abs(next - mu) <= rel_tol * std::max(std::abs(next), 1e-300)) return next;
        mu = next;
    }
    throw ConvergenceError("power iteration did not converge", mu);
}

} // namespace detail

/// Largest (algebraic) eigenvalue of a symmetric matrix. Closed forms for
/// d <= 2; shifted power iteration otherwise.
inline double lambda_max(const SymMatrix& m, std::size_t max_iter = 100000, double rel_tol = 1e-12) {
    const std::size_t n = m.dim();
    if (n == 0) throw std::invalid_argument("lambda_max: empty matrix");
    if (n == 1) return m(0, 0);
    if (n == 2) {
        const double a = m(0, 0), b = m(0, 1), c = m(1, 1);
        const double mid = 0.5 * (a + c);
        return mid + std::hypot(0.5 * (a - c), b);
    }
    const double mu = detail::power_iteration(m, 0.0, max_iter, rel_tol);
    if (mu >= 0.0) return mu;
    // The dominant eigenvalue was the most negative one; shift so the top of the
    // spectrum becomes dominant.
    return detail::power_iteration(m, -mu, max_iter, rel_tol) + mu;
}

/// Cholesky solve of (m) x = b. Returns false if a pivot drops below
/// `pivot_floor` times the largest diagonal entry.
inline bool cholesky_solve(const SymMatrix& m, std::span<const double> b, Vec& x, double pivot_floor = 1e-14) {
    const std::size_t n = m.dim();
    std::vector<double> l(n * n, 0.0);
    double diag_max = 0.0;
    for (std::size_t i = 0; i < n; ++i) diag_max = std::max(diag_max, std::abs(m(i, i)));
    if (diag_max == 0.0) return false;
    for (std::size_t j = 0; j < n; ++j) {
        double s = m(j, j);
        for (std::size_t k = 0; k < j; ++k) s -= l[j * n + k] * l[j * n + k];
        if (!(s > pivot_floor * diag_max)) return false;
        const double ljj = std::sqrt(s);
        l[j * n + j] = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double t = m(i, j);
            for (std::size_t k = 0; k < j; ++k) t -= l[i * n + k] * l[j * n + k];
            l[i * n + j] = t / ljj;
        }
    }
    x.assign(b.begin(), b.end());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < i; ++k) x[i] -= l[i * n + k] * x[k];
        x[i] /= l[i * n + i];
    }
    for (std::size_t i = n; i-- > 0;) {
        for (std::size_t k = i + 1; k < n; ++k) x[i] -= l[k * n + i] * x[k];
        x[i] /= l[i * n + i];
    }
    return true;
}

} // namespace gdcycles
