// Acceptance gate: one PASS/FAIL line per criterion, with supporting detail
// lines indented underneath. Exit status is the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "gdcycles/gdcycles.hpp"
#include "oracles.hpp"

using namespace gdcycles;

namespace {

struct Criterion {
    bool pass = true;
    std::vector<std::string> notes;

    void check(bool ok, const std::string& what) {
        notes.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
        pass = pass && ok;
    }
    void note(const std::string& what) { notes.push_back("     " + what); }
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

int failures = 0;

void run_criterion(int id, const char* title, double budget_s, const std::function<void(Criterion&)>& body) {
    Criterion c;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        body(c);
    } catch (const std::exception& e) {
        c.check(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    c.check(secs < budget_s, fmt("runtime %.2f s < %.0f s", secs, budget_s));
    std::printf("%s %d: %s\n", c.pass ? "PASS" : "FAIL", id, title);
    for (const auto& n : c.notes) std::printf("    %s\n", n.c_str());
    std::fflush(stdout);
    failures += !c.pass;
}

Trajectory dense_run(const Objective& obj, double eta, Vec w0, std::size_t iters, std::size_t tail) {
    GDConfig cfg;
    cfg.eta = eta;
    cfg.max_iters = iters;
    cfg.record_every = iters + 1;
    cfg.dense_tail = tail;
    cfg.w0 = std::move(w0);
    return run(obj, cfg);
}

// Closure of the orbit under k further steps, and the loss periodogram peaking
// at a multiple of 1/k.
void check_cycle_consistency(Criterion& c, const std::string& name, const Objective& obj, double eta, const CycleReport& rep) {
    Vec w = rep.orbit[0];
    for (std::size_t j = 0; j < rep.period; ++j) w = gd_step(obj, w, eta);
    const double closure = dist_inf(w, rep.orbit[0]);
    c.check(closure < 10 * default_cycle_tol * (1 + norm_inf(rep.orbit[0])), fmt("%s: closure after %zu steps %.3g", name.c_str(), rep.period, closure));
    const std::size_t window = 4096;
    const auto tr = dense_run(obj, eta, rep.orbit[0], window, window);
    const auto r = psd(tr.tail_losses(), window);
    const double f = r.freqs[dominant_bin(r)], fk = f * double(rep.period);
    c.check(std::abs(fk - std::round(fk)) <= double(rep.period) / double(window),
            fmt("%s: PSD peak %.6g = %.4g/k", name.c_str(), f, fk));
}

std::vector<CycleReport> detected;  // cycles from criteria 3, 4, 7 for criterion 8
std::vector<std::pair<std::string, Construction>> detected_src;

Recipe2D basin_recipe() {
    Recipe2D r;
    r.m1 = 160;
    r.gamma = 0.95;
    return r;
}

} // namespace

int main() {
    run_criterion(1, "toy dataset algebra", 1, [](Criterion& c) {
        for (std::size_t n : {2u, 5u, 10u, 100u}) {
            const auto sol = minimize(Objective(make_toy({n, {1.0}}), logistic()));
            const double want = double(n - 1) / double(n * n);
            c.check(std::abs(sol.lambda_star - want) <= 1e-12, fmt("n=%zu lambda %.17g vs (n-1)/n^2 %.17g", n, sol.lambda_star, want));
            c.check(std::abs(sol.L_global - 0.25) <= 1e-12, fmt("n=%zu L_global %.17g", n, sol.L_global));
        }
    });

    run_criterion(2, "n=2 period-2 closed form and bifurcation onset", 10, [](Criterion& c) {
        for (double eta : {8.5, 10.0, 16.0, 100.0}) {
            const auto [a, b] = period2_points(eta);
            // The scalar map in logit coordinates z = logit(p): z ← z − (η/2)(2σ(z) − 1).
            // Iterating p itself saturates to 1.0 at large η.
            double z = std::log(0.6 / 0.4);
            for (int t = 0; t < 10000; ++t) z -= eta / 2 * (2 * sigmoid(z) - 1);
            const double p = sigmoid(z);
            const double err = std::min(std::abs(p - a), std::abs(p - b));
            c.check(err <= 1e-9, fmt("eta=%g closed form (%.12f, %.12f), brute force %.12f, gap %.3g", eta, a, b, p, err));
            const double zgap = std::min(std::abs(z - logit(a)), std::abs(z - logit(b)));
            c.note(fmt("eta=%g gap in logit coordinates %.3g", eta, zgap));
        }
        const Objective obj(make_toy({2, {1.0}}), logistic());
        std::vector<double> grid;
        for (int i = 0; i <= 40; ++i) grid.push_back(7.0 + 0.05 * i);
        SweepOptions opt;
        opt.threads = 0;
        const auto scales = default_init_scales();
        const auto sw = bifurcation_sweep(obj, grid, 14, scales, 10000, 0, opt);
        double onset = std::nan("");
        for (std::size_t e = 0; e < grid.size() && std::isnan(onset); ++e)
            for (const auto& cell : sw.cells[e])
                if (!cell.diverged && cell.distinct_states > 1) {
                    onset = grid[e];
                    break;
                }
        c.check(onset >= 8.0 && onset <= 8.05 + 1e-12, fmt("first multi-state step size %.4g in [8, 8.05]", onset));
    });

    run_criterion(3, "one-dimensional kick recipes", 60, [](Criterion& c) {
        struct Row {
            Recipe1D r;
            std::size_t period;
        };
        for (const auto& row : {Row{{250, 200, 20, 6, 1.9, 10}, 4}, Row{{250, 200, 70, 15, 1.5, 10}, 7},
                                Row{{200, 190, 270, 25, 1.4, 10}, 37}}) {
            const auto con = build_1d(row.r);
            const auto rep = run_and_detect(con);
            c.check(rep.kind == LimitKind::cycle && rep.period == row.period && rep.residual < 1e-8 && rep.multiplier < 1,
                    fmt("gamma=%g x_big=%g b=%zu: %s period %zu (want %zu), residual %.3g, multiplier %.6g", row.r.gamma, row.r.x_big,
                        row.r.b, to_string(rep.kind), rep.period, row.period, rep.residual, rep.multiplier));
            if (rep.kind == LimitKind::cycle) {
                detected.push_back(rep);
                detected_src.emplace_back(fmt("row gamma=%g", row.r.gamma), con);
            }
        }
        const auto rep = run_and_detect(build_1d(Recipe1D{250, 200, 60, 15, 1.5, 10}));
        c.check(rep.kind == LimitKind::undetermined && rep.lyapunov > 0,
                fmt("gamma=1.5 x_big=60: %s, Lyapunov estimate %.4g", to_string(rep.kind), rep.lyapunov));
    });

    run_criterion(4, "two-dimensional kick recipe", 30, [](Criterion& c) {
        const auto con = build_2d(Recipe2D{});
        const auto rep = run_and_detect(con);
        c.check(rep.kind == LimitKind::cycle && rep.period == 13, fmt("%s period %zu, multiplier %.6g", to_string(rep.kind), rep.period, rep.multiplier));
        c.check(con.eta < con.solution.etas.two_over_lambda, fmt("eta %.10g < 2/lambda %.10g", con.eta, con.solution.etas.two_over_lambda));
        if (rep.kind == LimitKind::cycle) {
            detected.push_back(rep);
            detected_src.emplace_back("fig5", con);
        }
        Recipe2D plain;
        plain.kick1_count = plain.kick2_count = 0;
        const auto pr = run_and_detect(build_2d(plain));
        c.check(pr.kind == LimitKind::fixed_point, fmt("without kicks: %s", to_string(pr.kind)));
    });

    run_criterion(5, "1D convergence theorem", 60, [](Criterion& c) {
        gen::Rng rng(2024);
        std::size_t runs = 0, not_converged = 0, stated_violations = 0, proof_violations = 0, contraction_violations = 0,
                    contraction_checks = 0;
        std::string first_stated;
        for (int i = 0; i < 200; ++i) {
            const auto ds = gen::non_separable_1d(rng);
            for (const auto& loss : {logistic(), squareplus()}) {
                const Objective obj(ds, loss);
                const auto sol = minimize(obj);
                const double ws = sol.w_star[0], s = one_d::sign_of(ws), eta = 1.0 / sol.lambda_star;
                const double slack = 1e-12 * (1 + std::abs(ws));
                for (double w0 : {1e3, -1e3, 1.0, -1.0, 1e-3, -1e-3}) {
                    ++runs;
                    double w = w0;
                    std::optional<std::size_t> entered;
                    double ref = 0;  // first iterate inside the invariant half-line
                    std::size_t t = 0;
                    for (; t < 2000000; ++t) {
                        if (!entered && s * (w - ws) >= -slack) {
                            entered = t;
                            ref = w;
                        }
                        const double g = obj.gradient(Vec{w})[0];
                        if (std::abs(g) < 1e-8 && entered) break;
                        const double next = w - eta * g;
                        if (entered && s * (w - ws) >= 0 && s * (w - ref) <= 0) {
                            ++contraction_checks;
                            const double rate = 1 - eta * obj.hessian(Vec{ref})(0, 0);
                            if ((next - ws) * (next - ws) > rate * (w - ws) * (w - ws) * (1 + 1e-9) + 1e-24) ++contraction_violations;
                        }
                        w = next;
                    }
                    if (!(std::abs(obj.gradient(Vec{w})[0]) < 1e-8)) ++not_converged;
                    if (!entered) continue;
                    if (*entered > one_d::curvature_ratio_bound(obj, ws, w0)) {
                        if (stated_violations++ == 0)
                            first_stated = fmt("%s w*=%.6g w0=%g: %zu steps, stated bound %zu", loss.name.c_str(), ws, w0, *entered,
                                               one_d::curvature_ratio_bound(obj, ws, w0));
                    }
                    if (*entered > one_d::slope_bound(obj, ws, eta, w0)) ++proof_violations;
                }
            }
        }
        c.check(not_converged == 0, fmt("%zu of %zu runs end with |grad| >= 1e-8", not_converged, runs));
        c.check(stated_violations == 0, fmt("stated crossing bound exceeded in %zu of %zu runs", stated_violations, runs));
        if (!first_stated.empty()) c.note("first: " + first_stated);
        c.check(contraction_violations == 0, fmt("contraction inside [w*, w0] violated %zu of %zu steps", contraction_violations, contraction_checks));
        c.note(fmt("slope-at-zero crossing bound exceeded in %zu of %zu runs", proof_violations, runs));
    });

    run_criterion(6, "edge-of-stability violation by stacking", 30, [](Criterion& c) {
        const std::size_t k = 4;
        const auto eos = eos_demo(Recipe1D{250, 200, 20, 6, 1.9, 10}, k);
        const Objective obj(eos.dataset, logistic());
        const auto tr = dense_run(obj, eos.eta, eos.w0, 2000, 512);
        const auto tail = tr.tail();
        double lo = INFINITY, hi = -INFINITY, drift = 0;
        for (const auto& w : tail) {
            const double s = lambda_max(obj.hessian(w));
            lo = std::min(lo, s);
            hi = std::max(hi, s);
        }
        const auto tl = tr.tail_losses();
        for (std::size_t t = 0; t + k < tl.size(); ++t) drift = std::max(drift, std::abs(tl[t + k] - tl[t]));
        c.check(hi - lo <= 1e-6, fmt("tail sharpness in [%.12g, %.12g]", lo, hi));
        c.check(lo > 2.0 / eos.eta, fmt("tail sharpness %.10g > 2/eta %.10g", lo, 2.0 / eos.eta));
        c.check(eos.eta < eos.solution.etas.two_over_lambda, fmt("eta %.10g < 2/lambda(stacked) %.10g", eos.eta, eos.solution.etas.two_over_lambda));
        c.check(drift <= 1e-12, fmt("max |L(t+k) - L(t)| over the tail %.3g", drift));
    });

    run_criterion(7, "basin raster co-stability", 120, [](Criterion& c) {
        const auto con = build_2d(basin_recipe());
        const Objective obj(con.dataset, logistic());
        const auto rep = run_and_detect(con);
        c.check(rep.kind == LimitKind::cycle, fmt("reference orbit: %s period %zu", to_string(rep.kind), rep.period));
        if (rep.kind == LimitKind::cycle) {
            detected.push_back(rep);
            detected_src.emplace_back("fig7", con);
        }
        const auto r = basin_raster(obj, con.eta, Bounds{-10, 30, -10, 30}, 64, 64, BasinRefs{con.solution.w_star, rep.orbit}, 3000, 0);
        const double total = 64.0 * 64.0;
        const double fp = double(r.count(BasinLabel::to_fixed_point)) / total, cy = double(r.count(BasinLabel::to_cycle)) / total;
        c.check(fp >= 0.01, fmt("to_fixed_point fraction %.4f", fp));
        c.check(cy >= 0.01, fmt("to_cycle fraction %.4f", cy));
    });

    run_criterion(8, "oracle and property suites", 300, [](Criterion& c) {
        gen::Rng rng(808);
        {
            double worst_g = 0, worst_h = 0;
            for (int i = 0; i < 50; ++i) {
                const std::size_t d = gen::index(rng, 1, 5);
                const auto loss = i % 2 ? logistic() : squareplus();
                const Objective obj(gen::non_separable(rng, d, 3), loss);
                const auto w = gen::normal_vec(rng, d, 1.5);
                const auto fg = oracle::fd_gradient([&](const Vec& v) { return obj.value(v); }, w);
                const auto fh = oracle::fd_jacobian([&](const Vec& v) { return obj.gradient(v); }, w);
                const auto g = obj.gradient(w);
                const auto h = obj.hessian(w);
                double eg = 0, sg = 0, eh = 0, sh = 0;
                for (std::size_t a = 0; a < d; ++a) {
                    eg = std::max(eg, std::abs(g[a] - fg[a]));
                    sg = std::max(sg, std::abs(fg[a]));
                    for (std::size_t b = 0; b < d; ++b) {
                        eh = std::max(eh, std::abs(h(a, b) - fh[a][b]));
                        sh = std::max(sh, std::abs(fh[a][b]));
                    }
                }
                worst_g = std::max(worst_g, eg / sg);
                worst_h = std::max(worst_h, eh / sh);
            }
            c.check(worst_g < 1e-6, fmt("gradient vs finite differences, worst relative error %.3g", worst_g));
            c.check(worst_h < 1e-5, fmt("Hessian vs finite differences, worst relative error %.3g", worst_h));
        }
        {
            double worst = 0;
            for (int i = 0; i < 20; ++i) {
                const std::size_t d = gen::index(rng, 2, 4);
                const Objective obj(gen::non_separable(rng, d, 3), logistic());
                const ProbabilityMap map(obj);
                const double eta = gen::uniform(rng, 0.3, 1.9) / obj.smoothness();
                Vec w = gen::normal_vec(rng, d, 0.5);
                ProbState s = map.from_weights(w);
                for (int t = 0; t < 1000; ++t) {
                    w = gd_step(obj, w, eta);
                    s = map.step(s, eta);
                }
                worst = std::max(worst, dist_inf(map.from_weights(w).p, s.p));
            }
            c.check(worst < 1e-8, fmt("probability vs weight space after 1000 steps, worst %.3g", worst));
        }
        {
            double worst_block = 0, worst_lambda = 0;
            MinimizeOptions newton;
            newton.method = SolverMethod::newton;
            for (int i = 0; i < 20; ++i) {
                const std::size_t d = gen::index(rng, 1, 3), k = gen::index(rng, 2, 4);
                const auto base = gen::non_separable(rng, d, 2);
                const Objective ob(base, logistic()), os(kronecker_stack(base, k), logistic());
                Vec w;
                std::vector<Vec> blocks;
                for (std::size_t j = 0; j < k; ++j) {
                    blocks.push_back(gen::normal_vec(rng, d, 2.0));
                    w.insert(w.end(), blocks.back().begin(), blocks.back().end());
                }
                const auto h = os.hessian(w);
                for (std::size_t r = 0; r < k * d; ++r)
                    for (std::size_t q = 0; q < k * d; ++q) {
                        const std::size_t jr = r / d, jq = q / d;
                        const double want = jr == jq ? ob.hessian(blocks[jr])(r % d, q % d) / double(k) : 0.0;
                        worst_block = std::max(worst_block, std::abs(h(r, q) - want));
                    }
                const auto sb = minimize(ob, newton), ss = minimize(os, newton);
                worst_lambda = std::max(worst_lambda, std::abs(ss.lambda_star - sb.lambda_star / double(k)));
            }
            c.check(worst_block <= 1e-12, fmt("stacked Hessian is block-diagonal base/k, worst %.3g", worst_block));
            c.check(worst_lambda <= 1e-12, fmt("lambda(stacked) = lambda/k, worst %.3g", worst_lambda));
        }
        for (std::size_t i = 0; i < detected.size(); ++i) {
            const auto& [name, con] = detected_src[i];
            check_cycle_consistency(c, name, Objective(con.dataset, logistic()), con.eta, detected[i]);
        }
        {
            const auto ds = load_dataset(std::string(GDCYCLES_TEST_DATA) + "/noisy6.libsvm");
            const Objective obj(ds, logistic());
            const auto sol = minimize(obj);
            const double crit = sol.etas.two_over_lambda;
            SweepOptions opt;
            opt.threads = 0;
            const auto scales = default_init_scales();
            const auto sw = bifurcation_sweep(obj, {0.5 * crit, 0.75 * crit, 0.95 * crit}, 32, scales, 10000, 1, opt);
            for (std::size_t e = 0; e < sw.eta_grid.size(); ++e) {
                const auto pooled = pooled_losses(sw, e, 1e-9);
                c.check(pooled.size() == 1, fmt("noisy6.libsvm eta=%.6g (2/lambda=%.6g): %zu distinct final losses over 32 inits",
                                                sw.eta_grid[e], crit, pooled.size()));
            }
        }
    });

    std::printf("%d criteria failed\n", failures);
    return failures;
}
