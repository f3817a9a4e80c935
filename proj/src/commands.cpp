#include "flowlab/commands.hpp"

#include <cstdio>
#include <iomanip>
#include <iostream>
#include <map>

#include "flowlab/analysis.hpp"
#include "flowlab/errors.hpp"
#include "flowlab/io.hpp"

namespace flowlab {

namespace fs = std::filesystem;
using nlohmann::json;

Rng stream_rng(std::uint64_t seed, SeedStream stream) {
    return Rng(seed, static_cast<std::uint64_t>(stream));
}

namespace {

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

std::vector<std::string> coordinate_names(std::size_t d) {
    if (d == 1) return {"x"};
    if (d == 2) return {"x", "y"};
    std::vector<std::string> names;
    for (std::size_t i = 0; i < d; ++i) {
        names.push_back("x" + std::to_string(i + 1));
    }
    return names;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

fs::path checkpoint_path(const RunContext& run, const std::optional<fs::path>& explicit_path) {
    return explicit_path ? *explicit_path : run.out_dir / "checkpoint.bin";
}

VelocityNet require_checkpoint(const RunContext& run, const std::optional<fs::path>& path) {
    const fs::path p = checkpoint_path(run, path);
    if (!fs::exists(p)) {
        throw InputError("checkpoint not found: " + p.string());
    }
    VelocityNet net = load_checkpoint(p);
    if (net.dim() != run.config.dimension) {
        throw InputError("checkpoint dimension " + std::to_string(net.dim()) +
                         " does not match config dimension " +
                         std::to_string(run.config.dimension));
    }
    return net;
}

std::unique_ptr<VelocityField> field_for(const RunContext& run, FieldSource source,
                                         const std::optional<fs::path>& checkpoint) {
    const auto& c = run.config;
    if (source == FieldSource::network) {
        const VelocityNet net = require_checkpoint(run, checkpoint);
        return make_field(source, c.prior, c.target, &net);
    }
    return make_field(source, c.prior, c.target);
}

json mode_metrics_json(const ModeMetrics& m) {
    return {{"count", m.count},
            {"mode_fractions", m.mode_fractions},
            {"covered_fraction", m.covered_fraction},
            {"midpoint_mass", m.midpoint_mass},
            {"mean", to_std(m.mean)},
            {"std", to_std(m.stddev)}};
}

json jump_json(const JumpProfile& p) {
    json v_plus = json::array(), v_minus = json::array();
    for (std::size_t i = 0; i < p.offsets.size(); ++i) {
        v_plus.push_back(to_std(p.v_plus[i]));
        v_minus.push_back(to_std(p.v_minus[i]));
    }
    return {{"t", p.t},
            {"amplitude", p.amplitude},
            {"mode_shorthand_amplitude", p.mode_shorthand},
            {"offsets", p.offsets},
            {"jump", p.jump},
            {"switching", p.switching},
            {"alpha_plus", p.alpha_plus},
            {"alpha_minus", p.alpha_minus},
            {"v_plus", v_plus},
            {"v_minus", v_minus}};
}

}  // namespace

void update_metrics(const fs::path& out_dir, const std::string& key, const json& section,
                    const ExperimentConfig& config) {
    const fs::path path = out_dir / "metrics.json";
    json doc = json::object();
    if (fs::exists(path)) {
        try {
            doc = json::parse(read_file(path));
        } catch (const json::parse_error&) {
            doc = json::object();
        }
    }
    doc["schema_version"] = kMetricsSchemaVersion;
    doc["config"] = config_to_json(config);
    doc[key] = section;
    write_file(path, doc.dump(2) + "\n");
}

RunContext prepare_run(const CommandOptions& opts) {
    RunContext run{load_config(opts.config), {}};
    if (opts.seed) {
        run.config.seed = *opts.seed;
        run.config.train.seed = *opts.seed;
    }
    if (opts.t) {
        if (!(*opts.t >= 0.0) || *opts.t > kMaxTime) {
            throw InputError("--t must lie in [0, 1 - 1e-3]");
        }
        run.config.analysis.field_t = *opts.t;
    }
    run.out_dir = opts.out ? *opts.out : fs::path(run.config.output_dir) / run.config.name;
    fs::create_directories(run.out_dir);
    write_file(run.out_dir / "config.echo.json", config_to_json(run.config).dump(2) + "\n");
    return run;
}

TrainReport cmd_train(const RunContext& run, std::ostream& log) {
    const auto& c = run.config;
    Rng init = stream_rng(c.seed, SeedStream::init);
    VelocityNet net =
        VelocityNet::initialized(c.dimension, c.network.hidden, c.network.activation, init);
    Rng data = stream_rng(c.seed, SeedStream::train);
    const TrainReport report = train(net, c.prior, c.target, c.train, data, [&](int epoch, double loss) {
        log << "epoch " << epoch + 1 << "/" << c.train.epochs << " loss " << format_double(loss)
            << '\n';
    });
    save_checkpoint(net, run.out_dir / "checkpoint.bin");
    {
        CsvWriter csv(run.out_dir / "loss.csv", {"epoch", "loss"});
        for (std::size_t i = 0; i < report.epoch_loss.size(); ++i) {
            csv.cell(static_cast<long long>(i + 1)).cell(report.epoch_loss[i]).end_row();
        }
    }
    update_metrics(run.out_dir, "train",
                   {{"epochs", c.train.epochs},
                    {"loss_curve", report.epoch_loss},
                    {"parameter_count", net.parameter_count()},
                    {"checksum", hex64(report.checksum)}},
                   c);
    log << "trained " << c.train.epochs << " epochs in " << std::fixed << std::setprecision(1)
        << report.wall_seconds << " s\n" << std::defaultfloat;
    return report;
}

fs::path cmd_field(const RunContext& run, FieldSource source,
                   const std::optional<fs::path>& checkpoint, std::ostream& log) {
    const auto& c = run.config;
    if (c.dimension != 2) {
        throw InputError("field dumps need dimension 2");
    }
    const auto field = field_for(run, source, checkpoint);
    const double t = c.analysis.field_t;
    const auto& g = c.analysis.field_grid;
    const auto n = static_cast<Eigen::Index>(g.n);

    Points grid(n * n, 2);
    for (Eigen::Index iy = 0; iy < n; ++iy) {
        for (Eigen::Index ix = 0; ix < n; ++ix) {
            grid(iy * n + ix, 0) = g.lo + (g.hi - g.lo) * static_cast<double>(ix) / static_cast<double>(n - 1);
            grid(iy * n + ix, 1) = g.lo + (g.hi - g.lo) * static_cast<double>(iy) / static_cast<double>(n - 1);
        }
    }
    const Points v = field->evaluate(t, grid);
    const bool with_alpha = source != FieldSource::network;
    std::optional<FixedTimePosterior> post;
    if (with_alpha) {
        post.emplace(t, c.prior, c.target);
    }

    const fs::path path =
        run.out_dir / ("field_" + std::string(to_string(source)) + "_t" + format_double(t) + ".csv");
    CsvWriter csv(path, {"t", "x", "y", "vx", "vy", "alpha1"});
    for (Eigen::Index i = 0; i < grid.rows(); ++i) {
        csv.cell(t).cell(grid(i, 0)).cell(grid(i, 1)).cell(v(i, 0)).cell(v(i, 1));
        if (with_alpha) {
            csv.cell(post->at(grid.row(i).transpose()).alpha[0]);
        } else {
            csv.empty();
        }
        csv.end_row();
    }
    log << "wrote " << csv.rows() << " rows to " << path.string() << '\n';
    return path;
}

ModeMetrics cmd_sample(const RunContext& run, FieldSource source,
                       const std::optional<fs::path>& checkpoint, std::ostream& log) {
    const auto& c = run.config;
    const auto field = field_for(run, source, checkpoint);
    Rng rng = stream_rng(c.seed, SeedStream::sample);
    const Points x0 = sample(c.prior, c.integrate.particles, rng);

    IntegrateOptions opts;
    opts.method = c.integrate.method;
    opts.steps = c.integrate.steps;
    opts.t_end = c.integrate.t_end;
    opts.record_every = c.integrate.trajectory_particles > 0 ? c.integrate.record_every : 0;
    const IntegrationResult result = integrate(*field, x0, opts);

    const std::string tag(to_string(source));
    const auto names = coordinate_names(c.dimension);
    {
        std::vector<std::string> header{"particle_id"};
        header.insert(header.end(), names.begin(), names.end());
        CsvWriter csv(run.out_dir / ("endpoints_" + tag + ".csv"), header);
        for (Eigen::Index i = 0; i < result.endpoints.rows(); ++i) {
            csv.cell(static_cast<long long>(i));
            for (Eigen::Index j = 0; j < result.endpoints.cols(); ++j) {
                csv.cell(result.endpoints(i, j));
            }
            csv.end_row();
        }
    }
    {
        std::vector<std::string> header{"particle_id", "step", "t"};
        header.insert(header.end(), names.begin(), names.end());
        CsvWriter csv(run.out_dir / ("trajectories_" + tag + ".csv"), header);
        const std::size_t keep = std::min(c.integrate.trajectory_particles, result.trajectories.size());
        for (std::size_t p = 0; p < keep; ++p) {
            const auto& tr = result.trajectories[p];
            for (std::size_t s = 0; s < tr.times.size(); ++s) {
                csv.cell(static_cast<long long>(tr.particle_id))
                    .cell(static_cast<long long>(tr.steps[s]))
                    .cell(tr.times[s]);
                for (Eigen::Index j = 0; j < tr.positions[s].size(); ++j) {
                    csv.cell(tr.positions[s][j]);
                }
                csv.end_row();
            }
        }
    }

    const ModeMetrics m =
        mode_metrics(result.endpoints, c.target, c.analysis.mode_radius, c.analysis.midpoint_radius);
    json section = json::object();
    const fs::path metrics = run.out_dir / "metrics.json";
    if (fs::exists(metrics)) {
        try {
            const json doc = json::parse(read_file(metrics));
            if (doc.contains("sample")) {
                section = doc["sample"];
            }
        } catch (const json::parse_error&) {
        }
    }
    section[tag] = mode_metrics_json(m);
    section[tag]["method"] = std::string(to_string(opts.method));
    section[tag]["steps"] = opts.steps;
    section[tag]["t_end"] = opts.t_end;
    update_metrics(run.out_dir, "sample", section, c);
    log << tag << ": " << m.count << " particles, covered " << format_double(m.covered_fraction)
        << ", midpoint mass " << format_double(m.midpoint_mass) << '\n';
    return m;
}

json cmd_profile(const RunContext& run, const std::optional<fs::path>& checkpoint,
                 std::ostream& log) {
    const auto& c = run.config;
    const auto& an = c.analysis;
    require_symmetric_bimodal(c.prior, c.target);

    std::vector<std::unique_ptr<VelocityField>> fields;
    fields.push_back(make_field(FieldSource::oracle, c.prior, c.target));
    fields.push_back(make_field(FieldSource::averaged, c.prior, c.target));
    const bool have_network = checkpoint.has_value() || fs::exists(run.out_dir / "checkpoint.bin");
    if (have_network) {
        fields.push_back(field_for(run, FieldSource::network, checkpoint));
    }
    const VelocityField& oracle = *fields.front();

    fs::create_directories(run.out_dir / "profiles");
    json section;

    // Velocity and posterior along the boundary normal.
    for (const auto& f : fields) {
        for (double t : an.profile_times) {
            const auto profile = posterior_profile(t, c.prior, c.target, an.profile_points,
                                                   an.profile_halfwidth);
            const DecisionBoundary b = decision_boundary(t, c.prior, c.target);
            Points probes(static_cast<Eigen::Index>(profile.size()), b.point.size());
            for (std::size_t i = 0; i < profile.size(); ++i) {
                probes.row(static_cast<Eigen::Index>(i)) =
                    (b.point + profile[i].offset * b.normal).transpose();
            }
            const Points v = f->evaluate(t, probes);
            const bool alpha = f->name() != "network";
            CsvWriter csv(run.out_dir / "profiles" /
                              ("velocity_" + std::string(f->name()) + "_t" + format_double(t) + ".csv"),
                          {"t", "offset", "vx", "vy", "alpha"});
            for (std::size_t i = 0; i < profile.size(); ++i) {
                const auto r = static_cast<Eigen::Index>(i);
                csv.cell(t).cell(profile[i].offset).cell(v(r, 0));
                if (v.cols() > 1) {
                    csv.cell(v(r, 1));
                } else {
                    csv.empty();
                }
                if (alpha) {
                    csv.cell(profile[i].alpha);
                } else {
                    csv.empty();
                }
                csv.end_row();
            }
        }
    }

    json posterior = json::array();
    for (double t : an.profile_times) {
        const auto profile =
            posterior_profile(t, c.prior, c.target, an.profile_points, an.profile_halfwidth);
        posterior.push_back({{"t", t},
                             {"alpha_at_zero", profile[profile.size() / 2].alpha},
                             {"max_slope", max_slope(profile)}});
    }
    section["posterior"] = posterior;

    // Jump profiles over the jump times plus the headline time.
    std::vector<double> jump_times = an.jump_times;
    if (std::find(jump_times.begin(), jump_times.end(), an.headline_t) == jump_times.end()) {
        jump_times.push_back(an.headline_t);
    }
    std::vector<double> deltas = an.deltas;
    if (std::find(deltas.begin(), deltas.end(), an.headline_delta) == deltas.end()) {
        deltas.push_back(an.headline_delta);
    }
    json jumps = json::object();
    std::map<std::string, JumpProfile> headline;
    for (const auto& f : fields) {
        json list = json::array();
        for (double t : jump_times) {
            const JumpProfile p = profile_jump(*f, c.prior, c.target, t, deltas);
            list.push_back(jump_json(p));
            if (t == an.headline_t) {
                headline.emplace(std::string(f->name()), p);
            }
        }
        jumps[std::string(f->name())] = list;
    }
    section["jumps"] = jumps;
    if (have_network) {
        const double ratio = underestimation_ratio(headline.at("network"), headline.at("oracle"),
                                                   an.headline_delta);
        section["underestimation"] = {{"t", an.headline_t},
                                      {"delta", an.headline_delta},
                                      {"ratio", ratio},
                                      {"underestimation", 1.0 - ratio}};
        log << "jump ratio network/oracle at t=" << format_double(an.headline_t)
            << " delta=" << format_double(an.headline_delta) << ": " << format_double(ratio) << '\n';
    }

    // Continuity-equation residual with a constant-shift negative control.
    if (c.dimension <= 2) {
        json residual = json::array();
        const Vector shift = Eigen::Map<const Vector>(an.residual_shift.data(),
                                                      static_cast<Eigen::Index>(an.residual_shift.size()));
        const ShiftedField control(oracle, shift);
        for (double t : an.residual_times) {
            const ResidualStats r = continuity_residual(oracle, c.prior, c.target, t,
                                                        an.residual_grid, 1e-3, 1e-4,
                                                        an.residual_tolerance);
            const ResidualStats n = continuity_residual(control, c.prior, c.target, t,
                                                        an.residual_grid, 1e-3, 1e-4,
                                                        an.residual_tolerance);
            residual.push_back({{"t", t},
                                {"max_abs", r.max_abs},
                                {"mean_abs", r.mean_abs},
                                {"max_density", r.max_density},
                                {"bound", r.bound},
                                {"within_bound", r.within_bound()},
                                {"control_max_abs", n.max_abs},
                                {"control_ratio", n.max_abs / r.bound}});
        }
        section["residual"] = residual;
    }

    // Error band around the boundary, per non-oracle field.
    json band = json::object();
    for (const auto& f : fields) {
        if (f.get() == &oracle) {
            continue;
        }
        const auto scan = error_band_scan(*f, c.prior, c.target, an.band_times, an.band_halfwidth,
                                          an.band_samples, stream_rng(c.seed, SeedStream::band));
        json list = json::array();
        for (const auto& e : scan) {
            list.push_back({{"t", e.t}, {"error", e.error}, {"samples", e.samples}});
        }
        band[std::string(f->name())] = list;
    }
    section["error_band"] = band;
    section["band_halfwidth"] = an.band_halfwidth;

    update_metrics(run.out_dir, "profile", section, c);
    log << "profile written for " << fields.size() << " fields\n";
    return section;
}

int run_command(std::string_view command, const CommandOptions& opts, std::ostream& out,
                std::ostream& err) {
    try {
        const RunContext run = prepare_run(opts);
        const FieldSource source = opts.source.value_or(FieldSource::oracle);
        if (command == "train") {
            cmd_train(run, out);
        } else if (command == "field") {
            cmd_field(run, source, opts.checkpoint, out);
        } else if (command == "sample") {
            cmd_sample(run, source, opts.checkpoint, out);
        } else if (command == "profile") {
            cmd_profile(run, opts.checkpoint, out);
        } else {
            err << "unknown command '" << command << "'\n";
            return kExitInput;
        }
        return kExitOk;
    } catch (const InputError& e) {
        err << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const DomainError& e) {
        err << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const TrainingError& e) {
        err << "training error (epoch " << e.epoch() << "): " << e.what() << '\n';
        return kExitRuntime;
    } catch (const IntegrationError& e) {
        err << "integration error: " << e.what() << '\n';
        return kExitRuntime;
    } catch (const std::exception& e) {
        err << "runtime error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

}  // namespace flowlab
