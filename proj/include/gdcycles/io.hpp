#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gdcycles/analysis.hpp"
#include "gdcycles/data.hpp"
#include "gdcycles/dynamics.hpp"
#include "gdcycles/objective.hpp"

namespace gdcycles::io {

/// Shortest round-trip-safe text for a double.
inline std::string num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_solution_csv(std::ostream& os, const Solution& s) {
    for (std::size_t i = 0; i < s.w_star.size(); ++i) os << "w_star_" << i + 1 << ',';
    os << "grad_norm,lambda_star,L_global,eta_2L,eta_1lam,eta_2lam\n";
    for (double v : s.w_star) os << num(v) << ',';
    os << num(s.grad_norm) << ',' << num(s.lambda_star) << ',' << num(s.L_global) << ',' << num(s.etas.two_over_L) << ','
       << num(s.etas.one_over_lambda) << ',' << num(s.etas.two_over_lambda) << '\n';
}

inline void print_solution(std::ostream& os, const Solution& s) {
    os << "w_star =";
    for (double v : s.w_star) os << ' ' << num(v);
    os << "\ngrad_norm = " << num(s.grad_norm) << "\nlambda_star = " << num(s.lambda_star)
       << "\nL_global = " << num(s.L_global) << "\neta_2L = " << num(s.etas.two_over_L)
       << "\neta_1lam = " << num(s.etas.one_over_lambda) << "\neta_2lam = " << num(s.etas.two_over_lambda) << '\n';
}

/// Columns t, loss, then w_1..w_d and sharpness when given.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& tr, bool with_weights,
                                 const std::vector<double>* sharpness = nullptr) {
    const std::size_t d = tr.iterates.empty() ? 0 : tr.iterates.front().size();
    os << "t,loss";
    if (with_weights)
        for (std::size_t i = 0; i < d; ++i) os << ",w_" << i + 1;
    if (sharpness) os << ",sharpness";
    os << '\n';
    for (std::size_t j = 0; j < tr.size(); ++j) {
        os << tr.steps[j] << ',' << (j < tr.losses.size() ? num(tr.losses[j]) : "nan");
        if (with_weights)
            for (double v : tr.iterates[j]) os << ',' << num(v);
        if (sharpness) os << ',' << num((*sharpness)[j]);
        os << '\n';
    }
}

/// One row per distinct tail loss; a diverged cell gets a single row with loss nan.
inline void write_sweep_csv(std::ostream& os, const BifurcationSweep& sw) {
    os << "eta,init_index,loss_value,scaled_sharpness,diverged\n";
    for (std::size_t e = 0; e < sw.eta_grid.size(); ++e)
        for (std::size_t i = 0; i < sw.cells[e].size(); ++i) {
            const auto& c = sw.cells[e][i];
            if (c.diverged) {
                os << num(sw.eta_grid[e]) << ',' << i << ",nan,nan,1\n";
                continue;
            }
            for (double l : c.final_losses)
                os << num(sw.eta_grid[e]) << ',' << i << ',' << num(l) << ',' << num(c.scaled_sharpness) << ",0\n";
        }
}

inline void write_psd_csv(std::ostream& os, const PsdResult& r) {
    os << "freq,power\n";
    for (std::size_t k = 0; k < r.freqs.size(); ++k) os << num(r.freqs[k]) << ',' << num(r.power[k]) << '\n';
}

inline int pgm_level(BasinLabel l) {
    switch (l) {
    case BasinLabel::other: return 0;
    case BasinLabel::to_cycle: return 128;
    case BasinLabel::to_fixed_point: return 255;
    }
    return 0;
}

/// ASCII PGM (P2); the top image row is ymax.
inline void write_pgm(std::ostream& os, const BasinRaster& r) {
    os << "P2\n" << r.nx << ' ' << r.ny << "\n255\n";
    for (std::size_t row = 0; row < r.ny; ++row) {
        const std::size_t iy = r.ny - 1 - row;
        for (std::size_t ix = 0; ix < r.nx; ++ix) os << (ix ? " " : "") << pgm_level(r.at(ix, iy));
        os << '\n';
    }
}

inline void write_raster_header(std::ostream& os, const BasinRaster& r, double gamma, double eta) {
    os << "xmin = " << num(r.bounds.xmin) << "\nxmax = " << num(r.bounds.xmax) << "\nymin = " << num(r.bounds.ymin)
       << "\nymax = " << num(r.bounds.ymax) << "\nnx = " << r.nx << "\nny = " << r.ny << "\ngamma = " << num(gamma)
       << "\neta = " << num(eta) << "\nto_fixed_point = " << r.count(BasinLabel::to_fixed_point)
       << "\nto_cycle = " << r.count(BasinLabel::to_cycle) << "\nother = " << r.count(BasinLabel::other)
       << "\nlevels = 0:other 128:to_cycle 255:to_fixed_point\n";
}

/// Minimal SVG scatter/line plot.
class SvgPlot {
public:
    SvgPlot(std::string title, std::string xlabel, std::string ylabel)
        : title_(std::move(title)), xlabel_(std::move(xlabel)), ylabel_(std::move(ylabel)) {}

    void scatter(std::vector<double> x, std::vector<double> y, std::string color = "#1f77b4") {
        series_.push_back({std::move(x), std::move(y), std::move(color), false});
    }
    void line(std::vector<double> x, std::vector<double> y, std::string color = "#d62728") {
        series_.push_back({std::move(x), std::move(y), std::move(color), true});
    }
    void hline(double y, std::string color = "#7f7f7f") { hlines_.push_back({y, std::move(color)}); }

    void write(std::ostream& os) const {
        constexpr double W = 640, H = 420, L = 70, R = 20, T = 40, B = 50;
        double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
        for (const auto& s : series_)
            for (std::size_t i = 0; i < s.x.size(); ++i) {
                if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
                x0 = std::min(x0, s.x[i]);
                x1 = std::max(x1, s.x[i]);
                y0 = std::min(y0, s.y[i]);
                y1 = std::max(y1, s.y[i]);
            }
        for (const auto& h : hlines_) {
            y0 = std::min(y0, h.first);
            y1 = std::max(y1, h.first);
        }
        if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
        if (x1 == x0) x0 -= 0.5, x1 += 0.5;
        if (y1 == y0) y0 -= 0.5, y1 += 0.5;
        auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
        auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

        os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
           << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
           << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << title_ << "</text>\n"
           << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
           << "\" fill=\"none\" stroke=\"black\"/>\n"
           << "<text x=\"" << W / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-size=\"12\">" << xlabel_ << "</text>\n"
           << "<text x=\"16\" y=\"" << H / 2 << "\" transform=\"rotate(-90 16 " << H / 2
           << ")\" text-anchor=\"middle\" font-size=\"12\">" << ylabel_ << "</text>\n";
        for (double f : {0.0, 0.5, 1.0}) {
            os << "<text x=\"" << px(x0 + f * (x1 - x0)) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\" font-size=\"10\">"
               << num(x0 + f * (x1 - x0)).substr(0, 8) << "</text>\n";
            os << "<text x=\"" << L - 4 << "\" y=\"" << py(y0 + f * (y1 - y0)) << "\" text-anchor=\"end\" font-size=\"10\">"
               << num(y0 + f * (y1 - y0)).substr(0, 8) << "</text>\n";
        }
        for (const auto& h : hlines_)
            os << "<line x1=\"" << L << "\" x2=\"" << W - R << "\" y1=\"" << py(h.first) << "\" y2=\"" << py(h.first)
               << "\" stroke=\"" << h.second << "\" stroke-dasharray=\"4 3\"/>\n";
        for (const auto& s : series_) {
            if (s.connect) {
                os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1\" points=\"";
                for (std::size_t i = 0; i < s.x.size(); ++i)
                    if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) os << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
                os << "\"/>\n";
            } else {
                for (std::size_t i = 0; i < s.x.size(); ++i)
                    if (std::isfinite(s.x[i]) && std::isfinite(s.y[i]))
                        os << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"1.2\" fill=\"" << s.color << "\"/>\n";
            }
        }
        os << "</svg>\n";
    }

private:
    struct Series {
        std::vector<double> x, y;
        std::string color;
        bool connect;
    };
    std::string title_, xlabel_, ylabel_;
    std::vector<Series> series_;
    std::vector<std::pair<double, std::string>> hlines_;
};

/// Sidecar for a checked-in dataset: which loss, how to pick η, where to start.
///
///   { "dataset": "fig4.cds", "loss": "logistic", "gamma": 1.5, "ref": "lambda",
///     "w0": [10], "iters": 200000 }
///
/// At most one of "eta" and "gamma" is present. Optional keys: "k" (stacking
/// factor), "bounds" [xmin, xmax, ymin, ymax], "resolution" [nx, ny],
/// "basin_iters", and "sweep" {eta_min, eta_max, steps, inits}.
struct ProblemConfig {
    std::filesystem::path dataset;
    std::string loss = "logistic";
    std::optional<EtaSpec> eta;
    std::optional<Vec> w0;
    std::size_t iters = 100000;
    std::optional<std::size_t> k;
    std::optional<Bounds> bounds;
    std::size_t nx = 64, ny = 64;
    std::size_t basin_iters = 5000;
    struct Sweep {
        double eta_min, eta_max;
        std::size_t steps, inits;
    };
    std::optional<Sweep> sweep;
};

inline EtaReference parse_reference(const std::string& s) {
    if (s == "lambda") return EtaReference::lambda;
    if (s == "two-L") return EtaReference::two_over_L;
    throw std::invalid_argument("reference must be 'lambda' or 'two-L', got '" + s + "'");
}

inline ProblemConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, std::string("config is not valid JSON: ") + e.what());
    }
    try {
        ProblemConfig c;
        c.dataset = base_dir / j.at("dataset").get<std::string>();
        c.loss = j.value("loss", std::string("logistic"));
        const bool has_eta = j.contains("eta"), has_gamma = j.contains("gamma");
        if (has_eta && has_gamma) throw ParseError(0, "config may give 'eta' or 'gamma', not both");
        if (has_eta) c.eta = j["eta"].get<double>();
        else if (has_gamma) c.eta = RelativeEta{j["gamma"].get<double>(), parse_reference(j.value("ref", std::string("lambda")))};
        if (j.contains("w0")) c.w0 = j["w0"].get<Vec>();
        c.iters = j.value("iters", c.iters);
        if (j.contains("k")) c.k = j["k"].get<std::size_t>();
        if (j.contains("bounds")) {
            auto b = j["bounds"].get<std::vector<double>>();
            if (b.size() != 4) throw ParseError(0, "bounds must be [xmin, xmax, ymin, ymax]");
            c.bounds = Bounds{b[0], b[1], b[2], b[3]};
        }
        if (j.contains("resolution")) {
            auto r = j["resolution"].get<std::vector<std::size_t>>();
            if (r.size() != 2) throw ParseError(0, "resolution must be [nx, ny]");
            c.nx = r[0];
            c.ny = r[1];
        }
        c.basin_iters = j.value("basin_iters", c.basin_iters);
        if (j.contains("sweep")) {
            const auto& s = j["sweep"];
            c.sweep = ProblemConfig::Sweep{s.at("eta_min").get<double>(), s.at("eta_max").get<double>(),
                                           s.at("steps").get<std::size_t>(), s.at("inits").get<std::size_t>()};
        }
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, std::string("bad config field: ") + e.what());
    }
}

inline ProblemConfig load_config(const std::filesystem::path& path) {
    return parse_config(read_file(path.string()), path.parent_path());
}

} // namespace gdcycles::io
