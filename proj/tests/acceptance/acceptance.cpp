// Acceptance suite: one PASS/FAIL line per criterion.
//
//   flowlab_acceptance [--criterion NAME]...
//
// Without arguments every criterion runs. Exit status is 0 only if all selected
// criteria pass.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <CLI11.hpp>

#include "flowlab/analysis.hpp"
#include "flowlab/cfm.hpp"
#include "flowlab/commands.hpp"
#include "flowlab/config.hpp"
#include "flowlab/flow_sim.hpp"
#include "flowlab/io.hpp"
#include "flowlab/velocity_net.hpp"
#include "test_support.hpp"

using namespace flowlab;
namespace fs = std::filesystem;

namespace {

/// Collects detail lines and the verdict for one criterion.
class Report {
public:
    void note(const std::string& line) { std::cout << "    " << line << '\n' << std::flush; }

    /// Records a check; returns `ok` so callers can chain.
    bool check(bool ok, const std::string& what) {
        note(std::string(ok ? "ok   " : "FAIL ") + what);
        pass_ = pass_ && ok;
        return ok;
    }

    bool passed() const { return pass_; }

private:
    bool pass_ = true;
};

std::string fmt(double x, int precision = 4) {
    std::ostringstream s;
    s.precision(precision);
    s << x;
    return s.str();
}

const GaussianMixture& prior2() {
    static const GaussianMixture m = ExperimentConfig::default_prior();
    return m;
}

const GaussianMixture& target2() {
    static const GaussianMixture m = ExperimentConfig::default_target();
    return m;
}

// ---------------------------------------------------------------------------

void closed_form(Report& r) {
    const std::size_t draws = 10000000;
    const double radius = 0.05;
    std::uint64_t seed = 1000;
    for (double t : {0.3, 0.5, 0.7}) {
        const double s = std::sqrt(0.25 * t * t + (1 - t) * (1 - t));
        // Seven probes around each mode plus three per mode on its inner flank,
        // 1.5 to 2 marginal standard deviations toward the boundary.
        std::vector<Vector> probes;
        for (double sign : {1.0, -1.0}) {
            const Vector c = test::vec({3.0 * t * sign, 0.0});
            const double a = 0.8 * s;
            for (const Vector& o : {test::vec({0, 0}), test::vec({a, 0}), test::vec({-a, 0}),
                                    test::vec({0, a}), test::vec({0, -a}), test::vec({a, a}),
                                    test::vec({-a, -a}), test::vec({-2 * s, 0}), test::vec({-2 * s, s}),
                                    test::vec({-1.5 * s, -s})}) {
                probes.push_back(c + sign * o);
            }
        }
        const auto hits = test::mc_ball_hits(t, prior2(), target2(), probes, radius, draws, seed++);

        std::size_t bad = 0, min_hits = draws;
        double worst = 0.0;
        for (std::size_t p = 0; p < probes.size(); ++p) {
            min_hits = std::min(min_hits, hits[p].size());
            if (hits[p].size() < 500) {
                ++bad;
                continue;
            }
            // Paired difference removes the within-ball variation of v*.
            std::vector<Vector> d;
            d.reserve(hits[p].size());
            for (std::size_t i = 0; i < hits[p].size(); ++i) {
                d.push_back(hits[p].x1[i] - hits[p].x0[i] -
                            optimal_velocity(t, hits[p].xt[i], prior2(), target2()));
            }
            const auto me = test::mean_and_error(d);
            const double z = me.mean.norm() / me.stderr_.norm();
            worst = std::max(worst, z);
            bad += z <= 3.0 ? 0 : 1;
        }
        r.note("t=" + fmt(t) + ": " + std::to_string(probes.size()) + " probes, min hits " +
               std::to_string(min_hits) + ", worst |mean diff|/SE " + fmt(worst, 3));
        r.check(bad == 0, "t=" + fmt(t) + ": every probe has >= 500 hits and lies within 3 MC standard errors");
    }
}

void continuity(Report& r) {
    const OracleField oracle(prior2(), target2());
    const ShiftedField perturbed(oracle, Vector::Ones(2));
    const GridSpec grid{-5.0, 5.0, 61};
    for (double t : {0.3, 0.5, 0.7}) {
        const auto good = continuity_residual(oracle, prior2(), target2(), t, grid);
        const auto bad = continuity_residual(perturbed, prior2(), target2(), t, grid);
        r.note("t=" + fmt(t) + ": max residual " + fmt(good.max_abs, 3) + ", bound " +
               fmt(good.bound, 3) + ", perturbed " + fmt(bad.max_abs, 3));
        r.check(good.within_bound(), "t=" + fmt(t) + ": oracle residual within 1e-3 max p_t");
        r.check(bad.max_abs >= 10 * good.bound, "t=" + fmt(t) + ": negative control exceeds bound 10x");
    }
}

void jump_growth(Report& r) {
    const OracleField oracle(prior2(), target2());
    std::vector<double> jhat;
    for (double t : {0.3, 0.5, 0.7, 0.9}) {
        const auto p = profile_jump(oracle, prior2(), target2(), t, {0.5});
        jhat.push_back(p.jump[0]);
        r.note("t=" + fmt(t) + ": J_hat(0.5) " + fmt(p.jump[0]) + ", switching part " +
               fmt(p.switching[0]) + ", exact amplitude " + fmt(p.amplitude) +
               ", mode shorthand |mu1-mu2|/(1-t) " + fmt(p.mode_shorthand));
    }
    bool increasing = true;
    for (std::size_t i = 1; i < jhat.size(); ++i) increasing = increasing && jhat[i] > jhat[i - 1];
    r.check(increasing, "oracle J_hat strictly increasing over t in {0.3, 0.5, 0.7, 0.9}");
    r.check(jhat[3] / jhat[1] > 2.0, "J_hat(0.9) / J_hat(0.5) = " + fmt(jhat[3] / jhat[1]) + " > 2");
    const double amp = jump_magnitude(0.5, Vector::Zero(2), prior2(), target2());
    r.check(std::abs(amp - 9.6) <= 1e-9, "amplitude at t=0.5 = " + fmt(amp, 17) + " (9.6 +/- 1e-9)");
    r.note("mode shorthand at t=0.5: " + fmt(mode_shorthand_jump(0.5, target2())));
}

void transport(Report& r) {
    const OracleField oracle(prior2(), target2());
    Rng rng(7);
    const Points x0 = sample(prior2(), 10000, rng);
    const auto res = integrate(oracle, x0, {Method::rk4, 200, kMaxTime, 0});
    const auto m = mode_metrics(res.endpoints, target2(), 1.5, 1.0);
    r.note("covered " + fmt(m.covered_fraction) + ", modes " + fmt(m.mode_fractions[0]) + " / " +
           fmt(m.mode_fractions[1]) + ", midpoint mass " + fmt(m.midpoint_mass));
    r.check(m.covered_fraction >= 0.99, "mass within 1.5 of a mode >= 0.99");
    r.check(std::abs(m.mode_fractions[0] - 0.5) <= 0.03 && std::abs(m.mode_fractions[1] - 0.5) <= 0.03,
            "per-mode split 0.5 +/- 0.03");

    const GaussianMixture p1(IsotropicGaussian{Vector::Zero(1), 1.0});
    const GaussianMixture t1(IsotropicGaussian{Vector::Constant(1, 2.0), 0.5});
    Rng rng1(8);
    const Points z = sample(p1, 100000, rng1);
    const auto e = integrate(OracleField(p1, t1), z, {Method::rk4, 200, kMaxTime, 0}).endpoints;
    const double mean = e.col(0).mean();
    const double sd = std::sqrt((e.col(0).array() - mean).square().sum() / (e.rows() - 1));
    r.check(std::abs(mean - 2.0) <= 0.02, "1D unimodal mean " + fmt(mean, 6) + " (2 +/- 0.02)");
    r.check(std::abs(sd - 0.5) <= 0.01, "1D unimodal std " + fmt(sd, 6) + " (0.5 +/- 0.01)");
}

void integrator_orders(Report& r) {
    const GaussianMixture p1(IsotropicGaussian{Vector::Zero(1), 1.0});
    const GaussianMixture t1(IsotropicGaussian{Vector::Constant(1, 2.0), 0.5});
    const OracleField field(p1, t1);
    Points x0(3, 1);
    x0 << -1.0, 0.3, 1.7;
    const auto rep = convergence_order(field, x0, kMaxTime);
    for (const auto& l : rep.euler) r.note("euler " + std::to_string(l.steps) + " steps: " + fmt(l.error, 3));
    for (const auto& l : rep.rk4) r.note("rk4   " + std::to_string(l.steps) + " steps: " + fmt(l.error, 3));
    r.check(rep.euler_slope >= 0.8 && rep.euler_slope <= 1.2, "Euler slope " + fmt(rep.euler_slope) + " in [0.8, 1.2]");
    r.check(rep.rk4_slope >= 3.5 && rep.rk4_slope <= 4.5, "RK4 slope " + fmt(rep.rk4_slope) + " in [3.5, 4.5]");
    r.check(rep.euler.back().error < 1e-6 && rep.rk4.back().error < 1e-6,
            "finest levels agree with the reference to < 1e-6");
}

void gradient(Report& r) {
    struct Case {
        Activation act;
        std::vector<std::size_t> hidden;
        std::size_t batch;
    };
    const std::vector<Case> cases{{Activation::silu, {128, 128, 128, 128}, 2},
                                  {Activation::relu, {32, 32}, 5},
                                  {Activation::silu, {64}, 16}};
    std::uint64_t seed = 40;
    for (const auto& c : cases) {
        Rng rng(seed++);
        const auto net = VelocityNet::initialized(2, c.hidden, c.act, rng);
        const auto batch = draw_batch(prior2(), target2(), c.batch, rng);
        VelocityNet shaped = net;
        shaped.layers() = loss_and_grad(net, batch).grad;
        const auto g = shaped.flat_parameters();
        auto flat = net.flat_parameters();
        double worst = 0.0;
        for (int k = 0; k < 20; ++k) {
            const auto i = static_cast<std::size_t>(rng.uniform() * static_cast<double>(flat.size()));
            VelocityNet probe = net;
            const double orig = flat[i];
            flat[i] = orig + 1e-5;
            probe.set_flat_parameters(flat);
            const double up = fm_loss(probe, batch);
            flat[i] = orig - 1e-5;
            probe.set_flat_parameters(flat);
            const double down = fm_loss(probe, batch);
            flat[i] = orig;
            const double fd = (up - down) / 2e-5;
            // The 1e-6 floor keeps round-off on vanishing partials from dominating.
            const double rel = std::abs(g[i] - fd) / std::max({std::abs(g[i]), std::abs(fd), 1e-6});
            worst = std::max(worst, rel);
        }
        const std::string name = std::string(to_string(c.act)) + " " + std::to_string(c.hidden.size()) +
                                 "x" + std::to_string(c.hidden.front()) + ", batch " + std::to_string(c.batch);
        r.check(worst < 1e-4, name + ": worst relative error " + fmt(worst, 3) + " < 1e-4");
    }
}

void training(Report& r, const fs::path& config_path, const fs::path& scratch) {
    std::ostringstream sink;
    for (std::uint64_t seed : {0, 1, 2}) {
        CommandOptions opts;
        opts.config = config_path;
        opts.seed = seed;
        opts.out = scratch / ("seed" + std::to_string(seed));
        const RunContext run = prepare_run(opts);
        const auto& c = run.config;
        const auto t0 = std::chrono::steady_clock::now();
        const TrainReport rep = cmd_train(run, sink);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const VelocityNet net = load_checkpoint(run.out_dir / "checkpoint.bin");
        const NetworkField nf(net);
        const OracleField oracle(c.prior, c.target);

        const std::string tag = "seed " + std::to_string(seed) + ": ";
        const double first = rep.epoch_loss.front(), last = rep.epoch_loss.back();
        r.note(tag + "trained " + std::to_string(rep.epoch_loss.size()) + " epochs in " + fmt(secs, 3) +
               " s, loss " + fmt(first) + " -> " + fmt(last));
        r.check(last <= 0.5 * first, tag + "final loss <= 0.5 x first");

        const double t = c.analysis.headline_t, delta = c.analysis.headline_delta;
        const auto pn = profile_jump(nf, c.prior, c.target, t, {delta});
        const auto po = profile_jump(oracle, c.prior, c.target, t, {delta});
        const double ratio = underestimation_ratio(pn, po, delta);
        r.note(tag + "J_hat network " + fmt(pn.jump[0]) + ", oracle " + fmt(po.jump[0]));
        r.check(pn.jump[0] < po.jump[0] && ratio >= 0.15 && ratio <= 0.9,
                tag + "underestimation ratio " + fmt(ratio) + " in [0.15, 0.9]");

        const auto band = error_band_scan(nf, c.prior, c.target, c.analysis.band_times,
                                          c.analysis.band_halfwidth, c.analysis.band_samples,
                                          stream_rng(seed, SeedStream::band));
        std::string values;
        bool nondecreasing = true;
        for (std::size_t i = 0; i < band.size(); ++i) {
            values += (i ? ", " : "") + fmt(band[i].error);
            if (i > 0) nondecreasing = nondecreasing && band[i].error >= band[i - 1].error;
        }
        r.check(nondecreasing, tag + "e(t) nondecreasing: " + values);

        Rng srng = stream_rng(seed, SeedStream::sample);
        const Points x0 = sample(c.prior, c.integrate.particles, srng);
        const IntegrateOptions io{c.integrate.method, c.integrate.steps, c.integrate.t_end, 0};
        const auto mn = mode_metrics(integrate(nf, x0, io).endpoints, c.target,
                                     c.analysis.mode_radius, c.analysis.midpoint_radius);
        const auto mo = mode_metrics(integrate(oracle, x0, io).endpoints, c.target,
                                     c.analysis.mode_radius, c.analysis.midpoint_radius);
        r.check(mn.midpoint_mass >= mo.midpoint_mass, tag + "midpoint mass network " +
                                                          fmt(mn.midpoint_mass) + " >= oracle " +
                                                          fmt(mo.midpoint_mass));
    }
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string("\"") + FLOWLAB_CLI_PATH + "\" " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void reproducibility(Report& r, const fs::path& config_path, const fs::path& scratch) {
    // The full pipeline, shortened to a few epochs so two runs fit in the time budget.
    auto cfg = load_config(config_path);
    cfg.train.epochs = 3;
    cfg.integrate.particles = 2000;
    const fs::path small = scratch / "repro.json";
    write_file(small, config_to_json(cfg).dump(2));

    std::vector<fs::path> dirs{scratch / "run_a", scratch / "run_b"};
    for (const auto& d : dirs) {
        const std::string base = " --config \"" + small.string() + "\" --out \"" + d.string() + "\"";
        bool ok = run_cli("train" + base) == 0;
        for (const char* src : {"oracle", "network", "averaged"}) {
            ok = ok && run_cli(std::string("sample") + base + " --source " + src) == 0;
            ok = ok && run_cli(std::string("field") + base + " --source " + src) == 0;
        }
        ok = ok && run_cli("profile" + base) == 0;
        r.check(ok, "pipeline completed in " + d.filename().string());
    }
    std::size_t files = 0, differing = 0;
    for (const auto& e : fs::recursive_directory_iterator(dirs[0])) {
        if (!e.is_regular_file()) continue;
        const fs::path rel = fs::relative(e.path(), dirs[0]);
        const fs::path other = dirs[1] / rel;
        ++files;
        if (!fs::exists(other) || read_file(e.path()) != read_file(other)) {
            ++differing;
            r.note("differs: " + rel.string());
        }
    }
    r.note(std::to_string(files) + " files compared");
    r.check(files > 10 && differing == 0, "checkpoints, CSVs, and metrics byte-identical");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"flowlab acceptance suite"};
    std::vector<std::string> selected;
    std::string config = FLOWLAB_DEFAULT_CONFIG;
    app.add_option("--criterion", selected, "criterion to run (repeatable; default all)");
    app.add_option("--config", config, "default experiment config");
    CLI11_PARSE(app, argc, argv);

    const fs::path scratch = fs::temp_directory_path() / ("flowlab_acceptance_" + std::to_string(::getpid()));
    fs::create_directories(scratch);

    using Fn = std::function<void(Report&)>;
    const std::vector<std::pair<std::string, Fn>> criteria{
        {"closed_form", closed_form},
        {"continuity", continuity},
        {"jump_growth", jump_growth},
        {"transport", transport},
        {"integrator_orders", integrator_orders},
        {"gradient", gradient},
        {"training", [&](Report& r) { training(r, config, scratch); }},
        {"reproducibility", [&](Report& r) { reproducibility(r, config, scratch); }},
    };
    for (const auto& name : selected) {
        bool known = false;
        for (const auto& c : criteria) known = known || c.first == name;
        if (!known) {
            std::cerr << "unknown criterion: " << name << '\n';
            return 2;
        }
    }

    bool all = true;
    for (const auto& [name, fn] : criteria) {
        if (!selected.empty() && std::find(selected.begin(), selected.end(), name) == selected.end()) {
            continue;
        }
        std::cout << "[" << name << "]\n";
        Report r;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            fn(r);
        } catch (const std::exception& e) {
            r.check(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << (r.passed() ? "PASS " : "FAIL ") << name << " (" << fmt(secs, 3) << " s)\n" << std::flush;
        all = all && r.passed();
    }
    fs::remove_all(scratch);
    return all ? 0 : 1;
}
