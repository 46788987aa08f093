#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gdcycles/gdcycles.hpp"

#ifndef GDCYCLES_CONFIG_DIR
#define GDCYCLES_CONFIG_DIR "configs"
#endif

namespace gdcycles::cli {

namespace fs = std::filesystem;

enum ExitCode : int { ok = 0, usage = 1, domain = 2 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Flags shared by every problem-driven subcommand. A `--config` sidecar fills
/// in whatever the flags leave unset.
struct RunConfig {
    std::string data;
    std::string config;
    std::string loss;
    std::optional<double> eta;
    std::optional<double> gamma;
    std::string ref = "lambda";
    std::optional<std::size_t> iters;
    std::uint64_t seed = 0;
    std::string out = ".";
    std::vector<double> w0;
    unsigned threads = 1;
};

inline void add_common(CLI::App* sub, RunConfig& rc) {
    sub->add_option("--data", rc.data, "Dataset file (.cds compact, otherwise LIBSVM)");
    sub->add_option("--config", rc.config, "JSON sidecar describing dataset, loss, step size and w0");
    sub->add_option("--loss", rc.loss, "logistic | squareplus");
    auto* eta = sub->add_option("--eta", rc.eta, "Absolute step size");
    auto* gamma = sub->add_option("--gamma", rc.gamma, "Step size as a multiple of the reference");
    eta->excludes(gamma);
    sub->add_option("--ref", rc.ref, "Reference for --gamma: lambda (eta = gamma/lambda) or two-L (eta = gamma*2/L)")
        ->check(CLI::IsMember({"lambda", "two-L"}));
    sub->add_option("--iters", rc.iters, "Number of GD iterations");
    sub->add_option("--seed", rc.seed, "Seed for sampled initializations");
    sub->add_option("--out", rc.out, "Output directory");
    sub->add_option("--w0", rc.w0, "Initial point")->expected(1, -1);
    sub->add_option("--threads", rc.threads, "Worker threads (0 = hardware concurrency)");
}

/// Flags merged over the optional config file.
struct Problem {
    Dataset dataset;
    ScalarLoss loss;
    std::optional<EtaSpec> eta;
    std::optional<Vec> w0;
    std::size_t iters;
    io::ProblemConfig cfg;
};

inline Problem load_problem(const RunConfig& rc) {
    io::ProblemConfig cfg;
    if (!rc.config.empty()) cfg = io::load_config(rc.config);
    if (!rc.data.empty()) cfg.dataset = rc.data;
    if (cfg.dataset.empty()) throw UsageError("no dataset: pass --data or a --config naming one");
    if (!rc.loss.empty()) cfg.loss = rc.loss;
    if (rc.eta) cfg.eta = *rc.eta;
    if (rc.gamma) cfg.eta = RelativeEta{*rc.gamma, io::parse_reference(rc.ref)};
    if (!rc.w0.empty()) cfg.w0 = rc.w0;
    if (rc.iters) cfg.iters = *rc.iters;
    Dataset ds = load_dataset(cfg.dataset.string());
    if (cfg.w0 && cfg.w0->size() != ds.dim())
        throw UsageError("w0 has " + std::to_string(cfg.w0->size()) + " entries but the dataset has dimension " + std::to_string(ds.dim()));
    return {std::move(ds), loss_by_name(cfg.loss), cfg.eta, cfg.w0, cfg.iters, cfg};
}

inline double require_eta(const Problem& p, const std::optional<Solution>& sol) {
    if (!p.eta) throw UsageError("a step size is required: pass --eta or --gamma");
    return resolve_eta(*p.eta, sol ? &*sol : nullptr);
}

inline bool eta_is_relative(const Problem& p) { return p.eta && std::holds_alternative<RelativeEta>(*p.eta); }

inline Vec initial_point(const Problem& p) { return p.w0 ? *p.w0 : Vec(p.dataset.dim(), 0.0); }

inline fs::path prepare_out(const std::string& dir) {
    fs::path p(dir);
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec || !fs::is_directory(p)) throw UsageError("output directory " + dir + " is not writable");
    return p;
}

inline std::ofstream open_out(const fs::path& p) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw UsageError("cannot write " + p.string());
    return f;
}

inline void print_report(std::ostream& os, const CycleReport& r) {
    os << "kind = " << to_string(r.kind) << "\nperiod = " << r.period << "\nresidual = " << io::num(r.residual)
       << "\nmultiplier = " << io::num(r.multiplier) << "\nlyapunov = " << io::num(r.lyapunov) << '\n';
}

inline std::vector<double> eta_grid(double lo, double hi, std::size_t steps) {
    if (steps == 0) throw UsageError("--steps must be >= 1");
    if (steps == 1) return {lo};
    if (!(hi > lo)) throw UsageError("--eta-max must exceed --eta-min");
    std::vector<double> g(steps);
    for (std::size_t i = 0; i < steps; ++i) g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(steps - 1);
    return g;
}

// ---------------------------------------------------------------------------

inline int cmd_solve(const RunConfig& rc, bool write_csv, std::ostream& out) {
    Problem p = load_problem(rc);
    Objective obj(p.dataset, p.loss);
    const Solution sol = minimize(obj);
    io::print_solution(out, sol);
    if (write_csv) {
        auto f = open_out(prepare_out(rc.out) / "solution.csv");
        io::write_solution_csv(f, sol);
    }
    return ok;
}

struct TrajectoryFlags {
    std::size_t record_every = 1;
    bool sharpness = false;
    double tol = default_cycle_tol;
    std::size_t k_max = default_k_max;
};

inline int cmd_trajectory(const RunConfig& rc, const TrajectoryFlags& tf, std::ostream& out) {
    Problem p = load_problem(rc);
    Objective obj(p.dataset, p.loss);
    std::optional<Solution> sol;
    if (eta_is_relative(p)) sol = minimize(obj);
    GDConfig cfg;
    cfg.eta = require_eta(p, sol);
    cfg.max_iters = p.iters;
    cfg.record_every = tf.record_every;
    cfg.dense_tail = std::max(default_dense_tail, 2 * tf.k_max);
    cfg.w0 = initial_point(p);
    const Trajectory tr = run(obj, cfg);

    const fs::path dir = prepare_out(rc.out);
    std::vector<double> sharp;
    if (tf.sharpness) sharp = sharpness_series(obj, tr);
    {
        auto f = open_out(dir / "trajectory.csv");
        io::write_trajectory_csv(f, tr, true, tf.sharpness ? &sharp : nullptr);
    }
    {
        io::SvgPlot plot("GD loss", "iteration", "loss");
        std::vector<double> t(tr.steps.begin(), tr.steps.end());
        plot.line(t, tr.losses);
        auto f = open_out(dir / "trajectory.svg");
        plot.write(f);
    }
    out << "eta = " << io::num(cfg.eta) << '\n';
    if (tr.diverged) {
        out << "diverged = 1\n";
        return ok;
    }
    if (tr.dense_tail >= 2 * tf.k_max) print_report(out, detect_cycle(obj, tr, tf.tol, tf.k_max));
    else out << "kind = undetermined (run shorter than 2*k_max)\n";
    return ok;
}

inline int cmd_psd(const RunConfig& rc, std::size_t window, std::ostream& out) {
    Problem p = load_problem(rc);
    Objective obj(p.dataset, p.loss);
    std::optional<Solution> sol;
    if (eta_is_relative(p)) sol = minimize(obj);
    GDConfig cfg;
    cfg.eta = require_eta(p, sol);
    cfg.max_iters = p.iters;
    cfg.record_every = p.iters + 1;
    cfg.dense_tail = std::max(default_dense_tail, window);
    cfg.w0 = initial_point(p);
    const Trajectory tr = run(obj, cfg);
    if (tr.diverged) throw DomainError("GD diverged; no loss tail to analyse");
    if (tr.dense_tail < window) throw UsageError("--iters too small for the PSD window");
    const PsdResult r = psd(tr.tail_losses(), window);

    const fs::path dir = prepare_out(rc.out);
    {
        auto f = open_out(dir / "psd.csv");
        io::write_psd_csv(f, r);
    }
    {
        io::SvgPlot plot("Periodogram of the loss tail", "frequency (cycles/iteration)", "power");
        plot.line(r.freqs, r.power);
        auto f = open_out(dir / "psd.svg");
        plot.write(f);
    }
    const std::size_t k = dominant_bin(r);
    out << "eta = " << io::num(cfg.eta) << "\ndominant_freq = " << io::num(r.freqs[k]) << "\ndominant_power = " << io::num(r.power[k]) << '\n';
    return ok;
}

struct BifurcateFlags {
    std::optional<double> eta_min, eta_max;
    std::optional<std::size_t> steps, inits;
};

inline int cmd_bifurcate(const RunConfig& rc, const BifurcateFlags& bf, std::ostream& out) {
    Problem p = load_problem(rc);
    const auto& sc = p.cfg.sweep;
    auto pick = [&](const auto& flag, auto from_cfg, const char* name) {
        if (flag) return *flag;
        if (sc) return from_cfg(*sc);
        throw UsageError(std::string("bifurcate needs ") + name);
    };
    const double lo = pick(bf.eta_min, [](const auto& s) { return s.eta_min; }, "--eta-min");
    const double hi = pick(bf.eta_max, [](const auto& s) { return s.eta_max; }, "--eta-max");
    const std::size_t steps = pick(bf.steps, [](const auto& s) { return s.steps; }, "--steps");
    const std::size_t inits = pick(bf.inits, [](const auto& s) { return s.inits; }, "--inits");

    Objective obj(p.dataset, p.loss);
    const auto scales = default_init_scales();
    SweepOptions opt;
    opt.threads = rc.threads;
    const BifurcationSweep sw = bifurcation_sweep(obj, eta_grid(lo, hi, steps), inits, scales, p.iters, rc.seed, opt);

    const fs::path dir = prepare_out(rc.out);
    {
        auto f = open_out(dir / "sweep.csv");
        io::write_sweep_csv(f, sw);
    }
    io::SvgPlot loss_plot("Bifurcation diagram", "step size", "final loss");
    io::SvgPlot sharp_plot("Scaled sharpness", "step size", "eta * sharpness / 2");
    std::vector<double> lx, ly, sx, sy;
    for (std::size_t e = 0; e < sw.eta_grid.size(); ++e)
        for (const auto& c : sw.cells[e]) {
            if (c.diverged) continue;
            for (double l : c.final_losses) {
                lx.push_back(sw.eta_grid[e]);
                ly.push_back(l);
            }
            sx.push_back(sw.eta_grid[e]);
            sy.push_back(c.scaled_sharpness);
        }
    loss_plot.scatter(lx, ly);
    sharp_plot.scatter(sx, sy);
    sharp_plot.hline(1.0);
    {
        auto f = open_out(dir / "bifurcation_loss.svg");
        loss_plot.write(f);
    }
    {
        auto f = open_out(dir / "bifurcation_sharpness.svg");
        sharp_plot.write(f);
    }

    std::size_t diverged = 0;
    std::optional<double> onset;
    for (std::size_t e = 0; e < sw.eta_grid.size(); ++e)
        for (const auto& c : sw.cells[e]) {
            diverged += c.diverged;
            if (!onset && !c.diverged && c.distinct_states > 1) onset = sw.eta_grid[e];
        }
    out << "etas = " << sw.eta_grid.size() << "\ninits = " << inits << "\ndiverged_cells = " << diverged << '\n';
    if (onset) out << "first_multi_state_eta = " << io::num(*onset) << '\n';
    return ok;
}

struct BasinFlags {
    std::vector<double> bounds;
    std::vector<std::size_t> res;
    std::optional<std::size_t> basin_iters;
};

inline int cmd_basin(const RunConfig& rc, const BasinFlags& bf, std::ostream& out) {
    Problem p = load_problem(rc);
    if (p.dataset.dim() != 2) throw UsageError("basin needs a two-dimensional dataset");
    Objective obj(p.dataset, p.loss);
    const Solution sol = minimize(obj);
    const double eta = require_eta(p, sol);

    Bounds b = p.cfg.bounds.value_or(Bounds{-10, 30, -10, 30});
    if (!bf.bounds.empty()) b = {bf.bounds[0], bf.bounds[1], bf.bounds[2], bf.bounds[3]};
    std::size_t nx = p.cfg.nx, ny = p.cfg.ny;
    if (!bf.res.empty()) nx = bf.res[0], ny = bf.res[1];
    const std::size_t T = bf.basin_iters.value_or(p.cfg.basin_iters);

    // The cycle reference comes from the configured run from w0.
    Construction c{p.dataset, eta, sol, initial_point(p)};
    CycleRunOptions ro;
    ro.iters = p.iters;
    const CycleReport rep = run_and_detect(c, p.loss, ro);
    BasinRefs refs{sol.w_star, rep.kind == LimitKind::cycle ? rep.orbit : std::vector<Vec>{}};
    const BasinRaster r = basin_raster(obj, eta, b, nx, ny, refs, T, rc.threads);

    const fs::path dir = prepare_out(rc.out);
    {
        auto f = open_out(dir / "basin.pgm");
        io::write_pgm(f, r);
    }
    {
        auto f = open_out(dir / "basin.txt");
        io::write_raster_header(f, r, eta * sol.lambda_star, eta);
    }
    out << "reference = " << to_string(rep.kind) << " period " << rep.period << "\nto_fixed_point = "
        << r.count(BasinLabel::to_fixed_point) << "\nto_cycle = " << r.count(BasinLabel::to_cycle)
        << "\nother = " << r.count(BasinLabel::other) << '\n';
    return ok;
}

inline int cmd_eos(const RunConfig& rc, std::optional<std::size_t> k_flag, std::ostream& out) {
    Problem p = load_problem(rc);
    const std::optional<std::size_t> k = k_flag ? k_flag : p.cfg.k;
    if (!k) throw UsageError("eos needs --k (or 'k' in the config)");
    Objective obj(p.dataset, p.loss);
    const Solution sol = minimize(obj);
    const Construction base{p.dataset, require_eta(p, sol), sol, initial_point(p)};
    const EosSetup eos = eos_from(base, *k, p.loss);

    Objective stacked(eos.dataset, p.loss);
    GDConfig cfg;
    cfg.eta = eos.eta;
    cfg.max_iters = std::min<std::size_t>(p.iters, 2000);
    cfg.w0 = eos.w0;
    const Trajectory tr = run(stacked, cfg);
    const auto sharp = sharpness_series(stacked, tr);

    const fs::path dir = prepare_out(rc.out);
    {
        auto f = open_out(dir / "eos.csv");
        io::write_trajectory_csv(f, tr, true, &sharp);
    }
    {
        io::SvgPlot plot("Sharpness along the stacked run", "iteration", "sharpness");
        std::vector<double> t(tr.steps.begin(), tr.steps.end());
        plot.line(t, sharp);
        plot.hline(2.0 / eos.eta);
        auto f = open_out(dir / "eos_sharpness.svg");
        plot.write(f);
    }
    out << "k = " << *k << "\neta = " << io::num(eos.eta) << "\ntwo_over_eta = " << io::num(2.0 / eos.eta)
        << "\ntwo_over_lambda = " << io::num(eos.solution.etas.two_over_lambda) << "\ntail_sharpness = " << io::num(sharp.back())
        << '\n';
    return ok;
}

struct HuntFlags {
    double gamma = 1.5;
    std::size_t budget = 1000;
    std::vector<std::size_t> m, n, b;
    std::vector<double> x_big, w0_grid;
};

inline int cmd_hunt(const HuntFlags& hf, const std::string& out_dir, unsigned threads, std::ostream& out) {
    HuntRanges ranges = HuntRanges::defaults();
    if (!hf.m.empty()) ranges.m = hf.m;
    if (!hf.n.empty()) ranges.n = hf.n;
    if (!hf.b.empty()) ranges.b = hf.b;
    if (!hf.x_big.empty()) ranges.x_big = hf.x_big;
    if (!hf.w0_grid.empty()) ranges.w0_grid = hf.w0_grid;
    HuntOptions opt;
    opt.threads = threads;
    const HuntResult res = hunt_1d(hf.gamma, ranges, hf.budget, opt);
    const auto& r = res.recipe;
    out << "m = " << r.m << "\nn = " << r.n << "\nx_big = " << io::num(r.x_big) << "\nb = " << r.b << "\ngamma = "
        << io::num(r.gamma) << "\nw0 = " << io::num(r.w0) << "\nperiod = " << res.report.period
        << "\nmultiplier = " << io::num(res.report.multiplier) << "\ncandidates_tried = " << res.candidates_tried << '\n';

    const fs::path dir = prepare_out(out_dir);
    {
        auto f = open_out(dir / "hunt.cds");
        f << serialize_compact(recipe_dataset(r));
    }
    {
        nlohmann::ordered_json j{{"dataset", "hunt.cds"}, {"loss", "logistic"}, {"gamma", r.gamma},
                                 {"ref", "lambda"}, {"w0", Vec{r.w0}}, {"iters", 200000}};
        auto f = open_out(dir / "hunt.json");
        f << j.dump(2) << '\n';
    }
    return ok;
}

inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err);

/// Runs the checked-in configs through the ordinary subcommands.
inline int cmd_repro(const std::string& config_dir, const std::string& out_dir, unsigned threads, std::ostream& out,
                     std::ostream& err) {
    const fs::path cfg(config_dir), dst = prepare_out(out_dir);
    const std::string th = std::to_string(threads);
    const std::vector<std::pair<std::string, std::vector<std::string>>> jobs{
        {"fig4 trajectory", {"trajectory", "--config", (cfg / "fig4.json").string(), "--record-every", "100", "--out", (dst / "fig4").string()}},
        {"fig4 psd", {"psd", "--config", (cfg / "fig4.json").string(), "--out", (dst / "fig4").string()}},
        {"fig5 trajectory", {"trajectory", "--config", (cfg / "fig5.json").string(), "--record-every", "100", "--out", (dst / "fig5").string()}},
        {"fig6 bifurcate", {"bifurcate", "--config", (cfg / "fig6_toy2.json").string(), "--threads", th, "--out", (dst / "fig6").string()}},
        {"fig7 basin", {"basin", "--config", (cfg / "fig7.json").string(), "--threads", th, "--out", (dst / "fig7").string()}},
        {"fig8 eos", {"eos", "--config", (cfg / "fig8.json").string(), "--out", (dst / "fig8").string()}},
    };
    for (const auto& [name, argv] : jobs) {
        out << "== " << name << '\n';
        const int rc = run(argv, out, err);
        if (rc != ok) {
            err << "repro: " << name << " failed\n";
            return rc;
        }
    }
    return ok;
}

/// Entry point; `args` excludes the program name.
inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Gradient descent dynamics on non-separable linear classification", "gdcycles"};
    app.require_subcommand(1);

    RunConfig solve_rc, traj_rc, psd_rc, bif_rc, basin_rc, eos_rc;
    TrajectoryFlags tf;
    BifurcateFlags bf;
    BasinFlags basin_f;
    HuntFlags hf;
    std::size_t window = 1024;
    std::optional<std::size_t> eos_k;
    std::string hunt_out = ".", repro_out = "repro", repro_cfg = GDCYCLES_CONFIG_DIR;
    unsigned hunt_threads = 1, repro_threads = 0;

    auto* solve = app.add_subcommand("solve", "Minimizer, curvature and critical step sizes");
    add_common(solve, solve_rc);

    auto* traj = app.add_subcommand("trajectory", "Run GD and classify the limit");
    add_common(traj, traj_rc);
    traj->add_option("--record-every", tf.record_every, "Keep every n-th iterate before the dense tail")->check(CLI::PositiveNumber);
    traj->add_flag("--sharpness", tf.sharpness, "Add a sharpness column");
    traj->add_option("--tol", tf.tol, "Relative cycle-detection tolerance");
    traj->add_option("--k-max", tf.k_max, "Longest period searched")->check(CLI::PositiveNumber);

    auto* psd_cmd = app.add_subcommand("psd", "Periodogram of the loss tail");
    add_common(psd_cmd, psd_rc);
    psd_cmd->add_option("--window", window, "Power-of-two window length");

    auto* bif = app.add_subcommand("bifurcate", "Sweep step sizes over multi-scale initializations");
    add_common(bif, bif_rc);
    bif->add_option("--eta-min", bf.eta_min);
    bif->add_option("--eta-max", bf.eta_max);
    bif->add_option("--steps", bf.steps);
    bif->add_option("--inits", bf.inits);

    auto* basin = app.add_subcommand("basin", "Basin-of-attraction raster for a 2D dataset");
    add_common(basin, basin_rc);
    basin->add_option("--bounds", basin_f.bounds, "xmin xmax ymin ymax")->expected(4);
    basin->add_option("--res", basin_f.res, "nx ny")->expected(2);
    basin->add_option("--basin-iters", basin_f.basin_iters, "GD steps per cell");

    auto* eos = app.add_subcommand("eos", "Stack a 1D cycle k times and track sharpness");
    add_common(eos, eos_rc);
    eos->add_option("--k", eos_k, "Stacking factor (must equal the cycle period)");

    auto* hunt = app.add_subcommand("hunt", "Search 1D recipes for a stable cycle");
    hunt->add_option("--gamma", hf.gamma, "Relative step size in (1, 2]");
    hunt->add_option("--budget", hf.budget, "Maximum number of candidate recipes");
    hunt->add_option("--m", hf.m)->expected(1, -1);
    hunt->add_option("--n", hf.n)->expected(1, -1);
    hunt->add_option("--b", hf.b)->expected(1, -1);
    hunt->add_option("--x-big", hf.x_big)->expected(1, -1);
    hunt->add_option("--w0-grid", hf.w0_grid)->expected(1, -1);
    hunt->add_option("--out", hunt_out);
    hunt->add_option("--threads", hunt_threads);

    auto* repro = app.add_subcommand("repro", "Run the checked-in configs end to end");
    repro->add_option("--configs", repro_cfg, "Directory with the checked-in configs");
    repro->add_option("--out", repro_out);
    repro->add_option("--threads", repro_threads);

    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? ok : usage;
    }

    try {
        if (*solve) return cmd_solve(solve_rc, solve->count("--out") > 0, out);
        if (*traj) return cmd_trajectory(traj_rc, tf, out);
        if (*psd_cmd) return cmd_psd(psd_rc, window, out);
        if (*bif) return cmd_bifurcate(bif_rc, bf, out);
        if (*basin) return cmd_basin(basin_rc, basin_f, out);
        if (*eos) return cmd_eos(eos_rc, eos_k, out);
        if (*hunt) return cmd_hunt(hf, hunt_out, hunt_threads, out);
        if (*repro) return cmd_repro(repro_cfg, repro_out, repro_threads, out, err);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return usage;
    } catch (const gdcycles::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return usage;
    } catch (const DomainError& e) {
        err << "error: " << e.what() << '\n';
        return domain;
    } catch (const NumericError& e) {
        err << "error: " << e.what() << '\n';
        return domain;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return usage;
    }
    return usage;
}

} // namespace gdcycles::cli
