#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gdcycles/error.hpp"
#include "gdcycles/linalg.hpp"

namespace gdcycles {

/// Distinct example (x, y) repeated `count` times.
struct Group {
    Vec x;
    int y = 1;
    std::size_t count = 1;

    friend bool operator==(const Group&, const Group&) = default;
};

/// Weighted binary classification data. Repeated rows are stored once with a
/// multiplicity, so evaluation cost scales with the number of distinct points.
class Dataset {
public:
    Dataset(std::size_t dim, std::vector<Group> groups) : dim_(dim), groups_(std::move(groups)) {
        if (dim_ == 0) throw std::invalid_argument("dataset dimension must be positive");
        if (groups_.empty()) throw std::invalid_argument("dataset has no examples");
        bool any_nonzero = false;
        for (const auto& g : groups_) {
            if (g.x.size() != dim_) throw std::invalid_argument("feature vector length differs from dataset dimension");
            if (g.count == 0) throw std::invalid_argument("group count must be >= 1");
            if (g.y != 1 && g.y != -1) throw std::invalid_argument("labels must be +1 or -1");
            if (!all_finite(g.x)) throw std::invalid_argument("non-finite feature value");
            any_nonzero = any_nonzero || norm_inf(g.x) > 0.0;
            total_ += g.count;
        }
        if (!any_nonzero) throw std::invalid_argument("all feature vectors are zero");
    }

    std::size_t dim() const { return dim_; }
    std::size_t total_count() const { return total_; }
    const std::vector<Group>& groups() const { return groups_; }

    friend bool operator==(const Dataset& a, const Dataset& b) {
        return a.dim_ == b.dim_ && a.groups_ == b.groups_;
    }

private:
    std::size_t dim_;
    std::vector<Group> groups_;
    std::size_t total_ = 0;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
        std::size_t j = i;
        while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
        if (j > i) out.push_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

template <typename T>
std::optional<T> parse_number(std::string_view tok) {
    if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
    T v{};
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || p != tok.data() + tok.size()) return std::nullopt;
    if constexpr (std::is_floating_point_v<T>) {
        if (!std::isfinite(v)) return std::nullopt;
    }
    return v;
}

inline std::string_view strip_comment(std::string_view line) {
    const auto h = line.find('#');
    return trim(h == std::string_view::npos ? line : line.substr(0, h));
}

// Merge identical (x, y) rows into one group, keeping first-appearance order.
inline std::vector<Group> merge_groups(std::vector<Group> rows) {
    std::map<std::pair<Vec, int>, std::size_t> index;
    std::vector<Group> out;
    for (auto& r : rows) {
        auto key = std::make_pair(r.x, r.y);
        auto it = index.find(key);
        if (it == index.end()) {
            index.emplace(std::move(key), out.size());
            out.push_back(std::move(r));
        } else {
            out[it->second].count += r.count;
        }
    }
    return out;
}

} // namespace detail

struct LibsvmOptions {
    // Accept label 0 as -1. Off by default so that 0/1 files fail loudly.
    bool zero_is_negative = false;
};

/// Parse LIBSVM text ("<label> <idx>:<val> ..."), 1-based ascending indices.
/// Returns a dense dataset of dimension max index, identical rows merged.
inline Dataset parse_libsvm(std::string_view text, LibsvmOptions opts = {}) {
    struct Row {
        std::vector<std::pair<std::size_t, double>> feats;
        int y;
        std::size_t line;
    };
    std::vector<Row> rows;
    std::size_t dim = 0, lineno = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        auto line = detail::strip_comment(text.substr(pos, nl - pos));
        ++lineno;
        pos = nl + 1;
        if (line.empty()) continue;

        auto toks = detail::split_ws(line);
        auto lab = detail::parse_number<double>(toks[0]);
        if (!lab) throw ParseError(lineno, "bad label '" + std::string(toks[0]) + "'");
        int y;
        if (*lab == 1.0) y = 1;
        else if (*lab == -1.0) y = -1;
        else if (*lab == 0.0 && opts.zero_is_negative) y = -1;
        else throw ParseError(lineno, "label must be +1/-1 (0 only with zero_is_negative), got '" + std::string(toks[0]) + "'");

        Row r{{}, y, lineno};
        std::size_t last = 0;
        for (std::size_t t = 1; t < toks.size(); ++t) {
            const auto colon = toks[t].find(':');
            if (colon == std::string_view::npos) throw ParseError(lineno, "expected idx:val, got '" + std::string(toks[t]) + "'");
            auto idx = detail::parse_number<std::size_t>(toks[t].substr(0, colon));
            auto val = detail::parse_number<double>(toks[t].substr(colon + 1));
            if (!idx || *idx == 0) throw ParseError(lineno, "feature index must be a positive integer");
            if (!val) throw ParseError(lineno, "bad feature value in '" + std::string(toks[t]) + "'");
            if (*idx <= last) throw ParseError(lineno, "feature indices must be strictly ascending");
            last = *idx;
            r.feats.emplace_back(*idx, *val);
        }
        dim = std::max(dim, last);
        rows.push_back(std::move(r));
    }
    if (rows.empty()) throw ParseError(0, "empty LIBSVM input");
    if (dim == 0) throw ParseError(0, "LIBSVM input has no features");

    std::vector<Group> groups;
    groups.reserve(rows.size());
    for (auto& r : rows) {
        Group g{Vec(dim, 0.0), r.y, 1};
        for (auto [i, v] : r.feats) g.x[i - 1] = v;
        groups.push_back(std::move(g));
    }
    try {
        return Dataset(dim, detail::merge_groups(std::move(groups)));
    } catch (const std::invalid_argument& e) {
        throw ParseError(0, e.what());
    }
}

/// Parse the compact replicated-point format: "<count> <y> <x1> [<x2> ...]" per line.
inline Dataset parse_compact(std::string_view text) {
    std::vector<Group> groups;
    std::size_t arity = 0, lineno = 0, pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        auto line = detail::strip_comment(text.substr(pos, nl - pos));
        ++lineno;
        pos = nl + 1;
        if (line.empty()) continue;

        auto toks = detail::split_ws(line);
        if (toks.size() < 3) throw ParseError(lineno, "expected '<count> <y> <x1> ...'");
        if (arity == 0) arity = toks.size();
        else if (toks.size() != arity) throw ParseError(lineno, "ragged row: expected " + std::to_string(arity - 2) + " features");

        auto cnt = detail::parse_number<long long>(toks[0]);
        if (!cnt || *cnt <= 0) throw ParseError(lineno, "count must be a positive integer");
        auto lab = detail::parse_number<int>(toks[1]);
        if (!lab || (*lab != 1 && *lab != -1)) throw ParseError(lineno, "label must be 1 or -1");
        Group g{Vec(arity - 2), *lab, static_cast<std::size_t>(*cnt)};
        for (std::size_t t = 2; t < toks.size(); ++t) {
            auto v = detail::parse_number<double>(toks[t]);
            if (!v) throw ParseError(lineno, "bad feature value '" + std::string(toks[t]) + "'");
            g.x[t - 2] = *v;
        }
        groups.push_back(std::move(g));
    }
    if (groups.empty()) throw ParseError(0, "empty compact dataset");
    try {
        return Dataset(arity - 2, std::move(groups));
    } catch (const std::invalid_argument& e) {
        throw ParseError(0, e.what());
    }
}

inline std::string serialize_compact(const Dataset& ds) {
    std::ostringstream os;
    os.precision(17);
    for (const auto& g : ds.groups()) {
        os << g.count << ' ' << g.y;
        for (double v : g.x) os << ' ' << v;
        os << '\n';
    }
    return os.str();
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Load by extension: `.cds` is the compact format, anything else is LIBSVM.
inline Dataset load_dataset(const std::string& path, LibsvmOptions opts = {}) {
    const auto text = read_file(path);
    if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".cds") == 0) return parse_compact(text);
    return parse_libsvm(text, opts);
}

enum class Separability { separable, non_separable, unknown };

inline const char* to_string(Separability s) {
    switch (s) {
    case Separability::separable: return "separable";
    case Separability::non_separable: return "non_separable";
    case Separability::unknown: return "unknown";
    }
    return "?";
}

struct SeparabilityVerdict {
    Separability verdict = Separability::unknown;
    std::optional<Vec> witness;
    std::string method;
};

/// min_i y_i wᵀx_i over the groups.
inline double min_margin(const Dataset& ds, std::span<const double> w) {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& g : ds.groups()) m = std::min(m, g.y * dot(w, g.x));
    return m;
}

namespace detail {

// Signed points s_i = y_i x_i; separable through the origin iff some w has wᵀs_i > 0 for all i.
inline std::vector<Vec> signed_points(const Dataset& ds) {
    std::vector<Vec> s;
    s.reserve(ds.groups().size());
    for (const auto& g : ds.groups()) {
        Vec v = g.x;
        for (double& c : v) c *= g.y;
        s.push_back(std::move(v));
    }
    return s;
}

inline std::optional<double> separate_1d(const std::vector<double>& s) {
    bool pos = true, neg = true;
    for (double v : s) {
        pos = pos && v > 0.0;
        neg = neg && v < 0.0;
    }
    if (pos) return 1.0;
    if (neg) return -1.0;
    return std::nullopt;
}

// Exact in 2D: the open feasible cone is nonempty iff all points lie in an open
// half-plane, i.e. the largest circular gap between sorted angles exceeds π.
inline std::optional<Vec> separate_2d(const std::vector<Vec>& s) {
    std::vector<double> ang;
    ang.reserve(s.size());
    for (const auto& v : s) {
        if (v[0] == 0.0 && v[1] == 0.0) return std::nullopt;
        ang.push_back(std::atan2(v[1], v[0]));
    }
    std::sort(ang.begin(), ang.end());
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double best_gap = ang.front() + two_pi - ang.back();
    std::size_t after = 0;  // first angle after the largest gap
    for (std::size_t i = 1; i < ang.size(); ++i) {
        if (ang[i] - ang[i - 1] > best_gap) {
            best_gap = ang[i] - ang[i - 1];
            after = i;
        }
    }
    auto feasible = [&](const Vec& w) {
        for (const auto& v : s)
            if (!(w[0] * v[0] + w[1] * v[1] > 0.0)) return false;
        return true;
    };
    if (best_gap > std::numbers::pi) {
        const double start = ang[after];
        const double end = after == 0 ? ang.back() : ang[after - 1] + two_pi;
        const double mid = 0.5 * (start + end);
        Vec w{std::cos(mid), std::sin(mid)};
        if (feasible(w)) return w;
    }
    // Fall back to the finite candidate set: each point and its two normals.
    for (const auto& v : s) {
        for (const Vec& w : {v, Vec{-v[1], v[0]}, Vec{v[1], -v[0]}})
            if (feasible(w)) return w;
    }
    return std::nullopt;
}

// Orthonormal basis of span{s_i} by modified Gram-Schmidt.
inline std::vector<Vec> span_basis(const std::vector<Vec>& s, double rel_tol = 1e-12) {
    double scale = 0.0;
    for (const auto& v : s) scale = std::max(scale, norm2(v));
    std::vector<Vec> basis;
    for (const auto& v : s) {
        Vec r = v;
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& b : basis) {
                const double c = dot(r, b);
                for (std::size_t i = 0; i < r.size(); ++i) r[i] -= c * b[i];
            }
        const double n = norm2(r);
        if (n > rel_tol * scale) {
            for (double& c : r) c /= n;
            basis.push_back(std::move(r));
        }
    }
    return basis;
}

} // namespace detail

/// Linear separability through the origin. Exact when the signed points span
/// at most two dimensions; otherwise a capped perceptron that can only certify
/// separability.
inline SeparabilityVerdict check_separable(const Dataset& ds, std::size_t perceptron_cap = 1000000) {
    const auto s = detail::signed_points(ds);
    for (const auto& v : s)
        if (norm_inf(v) == 0.0) return {Separability::non_separable, std::nullopt, "zero-point"};

    const std::size_t d = ds.dim();
    auto confirm = [&](Vec w, const char* method) -> SeparabilityVerdict {
        if (min_margin(ds, w) > 0.0) return {Separability::separable, std::move(w), method};
        return {Separability::non_separable, std::nullopt, method};
    };

    if (d == 1) {
        std::vector<double> s1;
        for (const auto& v : s) s1.push_back(v[0]);
        if (auto w = detail::separate_1d(s1)) return confirm(Vec{*w}, "sign-1d");
        return {Separability::non_separable, std::nullopt, "sign-1d"};
    }
    if (d == 2) {
        if (auto w = detail::separate_2d(s)) return confirm(*w, "angular-2d");
        return {Separability::non_separable, std::nullopt, "angular-2d"};
    }

    // Low-rank data in higher dimension reduces exactly to the 1D/2D cases.
    const auto basis = detail::span_basis(s);
    if (basis.size() <= 2) {
        std::vector<Vec> coords;
        for (const auto& v : s) {
            Vec c(basis.size());
            for (std::size_t k = 0; k < basis.size(); ++k) c[k] = dot(v, basis[k]);
            coords.push_back(std::move(c));
        }
        std::optional<Vec> wc;
        if (basis.size() == 1) {
            std::vector<double> s1;
            for (const auto& c : coords) s1.push_back(c[0]);
            if (auto w = detail::separate_1d(s1)) wc = Vec{*w};
        } else {
            wc = detail::separate_2d(coords);
        }
        const char* method = basis.size() == 1 ? "rank1-reduced" : "rank2-reduced";
        if (!wc) return {Separability::non_separable, std::nullopt, method};
        Vec w(d, 0.0);
        for (std::size_t k = 0; k < basis.size(); ++k)
            for (std::size_t i = 0; i < d; ++i) w[i] += (*wc)[k] * basis[k][i];
        return confirm(std::move(w), method);
    }

    Vec w(d, 0.0);
    std::size_t updates = 0;
    while (updates < perceptron_cap) {
        bool clean = true;
        for (const auto& v : s) {
            if (dot(w, v) <= 0.0) {
                for (std::size_t i = 0; i < d; ++i) w[i] += v[i] / norm2(v);
                clean = false;
                if (++updates >= perceptron_cap) break;
            }
        }
        if (clean) return confirm(std::move(w), "perceptron");
    }
    return {Separability::unknown, std::nullopt, "perceptron"};
}

} // namespace gdcycles
