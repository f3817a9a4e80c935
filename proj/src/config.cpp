#include "flowlab/config.hpp"

#include <set>

#include "flowlab/io.hpp"

namespace flowlab {

using nlohmann::json;

GaussianMixture ExperimentConfig::default_prior() {
    return GaussianMixture(IsotropicGaussian{Vector::Zero(2), 1.0});
}

GaussianMixture ExperimentConfig::default_target() {
    Vector a(2), b(2);
    a << 3.0, 0.0;
    b << -3.0, 0.0;
    return GaussianMixture({{a, 0.5}, {b, 0.5}}, {0.5, 0.5});
}

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& msg) {
    throw ConfigError(field + ": " + msg);
}

void check_keys(const json& j, const std::string& field, const std::set<std::string>& allowed) {
    if (!j.is_object()) {
        fail(field.empty() ? "<root>" : field, "expected an object");
    }
    for (const auto& [key, _] : j.items()) {
        if (!allowed.count(key)) {
            fail(field.empty() ? key : field + "." + key, "unknown key");
        }
    }
}

std::string join(const std::string& parent, const std::string& key) {
    return parent.empty() ? key : parent + "." + key;
}

double get_number(const json& j, const std::string& field) {
    if (!j.is_number()) {
        fail(field, "expected a number");
    }
    return j.get<double>();
}

template <typename Int>
Int get_int(const json& j, const std::string& field, long long min) {
    if (!j.is_number_integer()) {
        fail(field, "expected an integer");
    }
    const long long v = j.get<long long>();
    if (v < min) {
        fail(field, "must be >= " + std::to_string(min));
    }
    return static_cast<Int>(v);
}

std::vector<double> get_numbers(const json& j, const std::string& field) {
    if (!j.is_array()) {
        fail(field, "expected an array of numbers");
    }
    std::vector<double> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        out.push_back(get_number(j[i], field + "[" + std::to_string(i) + "]"));
    }
    return out;
}

void require_times(const std::vector<double>& ts, const std::string& field, bool open_left) {
    if (ts.empty()) {
        fail(field, "must not be empty");
    }
    for (double t : ts) {
        if ((open_left ? !(t > 0.0) : !(t >= 0.0)) || t > kMaxTime) {
            fail(field, "times must lie in " + std::string(open_left ? "(0" : "[0") +
                            ", 1 - 1e-3]");
        }
    }
}

GridSpec get_grid(const json& j, const std::string& field) {
    check_keys(j, field, {"lo", "hi", "n"});
    GridSpec g;
    if (j.contains("lo")) g.lo = get_number(j["lo"], field + ".lo");
    if (j.contains("hi")) g.hi = get_number(j["hi"], field + ".hi");
    if (j.contains("n")) g.n = get_int<int>(j["n"], field + ".n", 2);
    if (!(g.hi > g.lo)) {
        fail(field, "hi must exceed lo");
    }
    return g;
}

json grid_json(const GridSpec& g) { return {{"lo", g.lo}, {"hi", g.hi}, {"n", g.n}}; }

}  // namespace

GaussianMixture mixture_from_json(const json& j, const std::string& field, std::size_t dimension) {
    if (!j.is_array() || j.empty()) {
        fail(field, "expected a nonempty list of components");
    }
    std::vector<IsotropicGaussian> comps;
    std::vector<double> weights;
    for (std::size_t k = 0; k < j.size(); ++k) {
        const std::string f = field + "[" + std::to_string(k) + "]";
        check_keys(j[k], f, {"mean", "sigma", "weight"});
        if (!j[k].contains("mean") || !j[k].contains("sigma") || !j[k].contains("weight")) {
            fail(f, "component needs mean, sigma, and weight");
        }
        const auto mean = get_numbers(j[k]["mean"], f + ".mean");
        if (mean.size() != dimension) {
            fail(f + ".mean", "has " + std::to_string(mean.size()) + " entries, dimension is " +
                                  std::to_string(dimension));
        }
        const double sigma = get_number(j[k]["sigma"], f + ".sigma");
        if (!(sigma > 0.0)) {
            fail(f + ".sigma", "must be positive");
        }
        const double w = get_number(j[k]["weight"], f + ".weight");
        if (!(w >= 0.0)) {
            fail(f + ".weight", "must be nonnegative");
        }
        comps.push_back({Eigen::Map<const Vector>(mean.data(), static_cast<Eigen::Index>(mean.size())),
                         sigma});
        weights.push_back(w);
    }
    try {
        return GaussianMixture(std::move(comps), std::move(weights));
    } catch (const InputError& e) {
        fail(field, e.what());
    }
}

json mixture_to_json(const GaussianMixture& m) {
    json out = json::array();
    for (std::size_t k = 0; k < m.size(); ++k) {
        const auto& c = m.component(k);
        out.push_back({{"mean", std::vector<double>(c.mean.data(), c.mean.data() + c.mean.size())},
                       {"sigma", c.sigma},
                       {"weight", m.weight(k)}});
    }
    return out;
}

ExperimentConfig config_from_json(const json& j) {
    check_keys(j, "", {"name", "seed", "output_dir", "dimension", "prior", "target", "network",
                       "train", "integrate", "analysis"});
    ExperimentConfig c;
    if (j.contains("name")) {
        if (!j["name"].is_string() || j["name"].get<std::string>().empty()) {
            fail("name", "expected a nonempty string");
        }
        c.name = j["name"].get<std::string>();
        if (c.name.find('/') != std::string::npos || c.name == "." || c.name == "..") {
            fail("name", "must be a plain directory name");
        }
    }
    if (j.contains("seed")) c.seed = get_int<std::uint64_t>(j["seed"], "seed", 0);
    if (j.contains("output_dir")) {
        if (!j["output_dir"].is_string()) fail("output_dir", "expected a string");
        c.output_dir = j["output_dir"].get<std::string>();
    }
    if (j.contains("dimension")) c.dimension = get_int<std::size_t>(j["dimension"], "dimension", 1);

    if (j.contains("prior")) {
        c.prior = mixture_from_json(j["prior"], "prior", c.dimension);
    } else if (c.dimension != 2) {
        fail("prior", "required when dimension is not 2");
    }
    if (j.contains("target")) {
        c.target = mixture_from_json(j["target"], "target", c.dimension);
    } else if (c.dimension != 2) {
        fail("target", "required when dimension is not 2");
    }

    if (j.contains("network")) {
        const auto& n = j["network"];
        check_keys(n, "network", {"hidden", "activation"});
        if (n.contains("hidden")) {
            if (!n["hidden"].is_array() || n["hidden"].empty()) {
                fail("network.hidden", "expected a nonempty list of widths");
            }
            c.network.hidden.clear();
            for (std::size_t i = 0; i < n["hidden"].size(); ++i) {
                c.network.hidden.push_back(get_int<std::size_t>(
                    n["hidden"][i], "network.hidden[" + std::to_string(i) + "]", 1));
            }
        }
        if (n.contains("activation")) {
            if (!n["activation"].is_string()) fail("network.activation", "expected a string");
            try {
                c.network.activation = parse_activation(n["activation"].get<std::string>());
            } catch (const InputError& e) {
                fail("network.activation", e.what());
            }
        }
    }

    if (j.contains("train")) {
        const auto& t = j["train"];
        const std::string f = "train";
        check_keys(t, f, {"epochs", "batch_size", "steps_per_epoch", "learning_rate", "beta1",
                          "beta2", "adam_epsilon"});
        if (t.contains("epochs")) c.train.epochs = get_int<int>(t["epochs"], join(f, "epochs"), 0);
        if (t.contains("batch_size"))
            c.train.batch_size = get_int<int>(t["batch_size"], join(f, "batch_size"), 1);
        if (t.contains("steps_per_epoch"))
            c.train.steps_per_epoch = get_int<int>(t["steps_per_epoch"], join(f, "steps_per_epoch"), 1);
        if (t.contains("learning_rate")) {
            c.train.learning_rate = get_number(t["learning_rate"], join(f, "learning_rate"));
            if (!(c.train.learning_rate >= 0.0)) fail(join(f, "learning_rate"), "must be >= 0");
        }
        if (t.contains("beta1")) c.train.beta1 = get_number(t["beta1"], join(f, "beta1"));
        if (t.contains("beta2")) c.train.beta2 = get_number(t["beta2"], join(f, "beta2"));
        if (!(c.train.beta1 >= 0.0 && c.train.beta1 < 1.0)) fail(join(f, "beta1"), "must lie in [0, 1)");
        if (!(c.train.beta2 >= 0.0 && c.train.beta2 < 1.0)) fail(join(f, "beta2"), "must lie in [0, 1)");
        if (t.contains("adam_epsilon")) {
            c.train.adam_epsilon = get_number(t["adam_epsilon"], join(f, "adam_epsilon"));
            if (!(c.train.adam_epsilon > 0.0)) fail(join(f, "adam_epsilon"), "must be positive");
        }
    }

    if (j.contains("integrate")) {
        const auto& g = j["integrate"];
        const std::string f = "integrate";
        check_keys(g, f, {"method", "steps", "t_end", "particles", "record_every",
                          "trajectory_particles"});
        if (g.contains("method")) {
            if (!g["method"].is_string()) fail(join(f, "method"), "expected a string");
            try {
                c.integrate.method = parse_method(g["method"].get<std::string>());
            } catch (const InputError& e) {
                fail(join(f, "method"), e.what());
            }
        }
        if (g.contains("steps")) c.integrate.steps = get_int<int>(g["steps"], join(f, "steps"), 1);
        if (g.contains("t_end")) {
            c.integrate.t_end = get_number(g["t_end"], join(f, "t_end"));
            if (!(c.integrate.t_end > 0.0) || c.integrate.t_end > kMaxTime) {
                fail(join(f, "t_end"), "must lie in (0, 1 - 1e-3]");
            }
        }
        if (g.contains("particles"))
            c.integrate.particles = get_int<std::size_t>(g["particles"], join(f, "particles"), 1);
        if (g.contains("record_every"))
            c.integrate.record_every = get_int<int>(g["record_every"], join(f, "record_every"), 0);
        if (g.contains("trajectory_particles"))
            c.integrate.trajectory_particles = get_int<std::size_t>(
                g["trajectory_particles"], join(f, "trajectory_particles"), 0);
    }

    if (j.contains("analysis")) {
        const auto& a = j["analysis"];
        const std::string f = "analysis";
        check_keys(a, f, {"profile_times", "jump_times", "deltas", "headline_t", "headline_delta",
                          "band_times", "band_halfwidth", "band_samples", "residual_times",
                          "residual_grid", "residual_tolerance", "residual_shift", "field_grid",
                          "field_t", "profile_points", "profile_halfwidth", "mode_radius",
                          "midpoint_radius"});
        auto& an = c.analysis;
        if (a.contains("profile_times")) an.profile_times = get_numbers(a["profile_times"], join(f, "profile_times"));
        if (a.contains("jump_times")) an.jump_times = get_numbers(a["jump_times"], join(f, "jump_times"));
        if (a.contains("deltas")) an.deltas = get_numbers(a["deltas"], join(f, "deltas"));
        if (a.contains("headline_t")) an.headline_t = get_number(a["headline_t"], join(f, "headline_t"));
        if (a.contains("headline_delta")) an.headline_delta = get_number(a["headline_delta"], join(f, "headline_delta"));
        if (a.contains("band_times")) an.band_times = get_numbers(a["band_times"], join(f, "band_times"));
        if (a.contains("band_halfwidth")) an.band_halfwidth = get_number(a["band_halfwidth"], join(f, "band_halfwidth"));
        if (a.contains("band_samples")) an.band_samples = get_int<std::size_t>(a["band_samples"], join(f, "band_samples"), 1);
        if (a.contains("residual_times")) an.residual_times = get_numbers(a["residual_times"], join(f, "residual_times"));
        if (a.contains("residual_grid")) an.residual_grid = get_grid(a["residual_grid"], join(f, "residual_grid"));
        if (a.contains("residual_tolerance")) an.residual_tolerance = get_number(a["residual_tolerance"], join(f, "residual_tolerance"));
        if (a.contains("residual_shift")) an.residual_shift = get_numbers(a["residual_shift"], join(f, "residual_shift"));
        if (a.contains("field_grid")) an.field_grid = get_grid(a["field_grid"], join(f, "field_grid"));
        if (a.contains("field_t")) an.field_t = get_number(a["field_t"], join(f, "field_t"));
        if (a.contains("profile_points")) an.profile_points = get_int<std::size_t>(a["profile_points"], join(f, "profile_points"), 2);
        if (a.contains("profile_halfwidth")) an.profile_halfwidth = get_number(a["profile_halfwidth"], join(f, "profile_halfwidth"));
        if (a.contains("mode_radius")) an.mode_radius = get_number(a["mode_radius"], join(f, "mode_radius"));
        if (a.contains("midpoint_radius")) an.midpoint_radius = get_number(a["midpoint_radius"], join(f, "midpoint_radius"));
    }

    if (!j.contains("analysis") || !j["analysis"].contains("residual_shift")) {
        c.analysis.residual_shift.assign(c.dimension, 1.0);
    }
    const auto& an = c.analysis;
    require_times(an.profile_times, "analysis.profile_times", true);
    require_times(an.jump_times, "analysis.jump_times", true);
    require_times(an.band_times, "analysis.band_times", true);
    require_times(an.residual_times, "analysis.residual_times", true);
    require_times({an.headline_t}, "analysis.headline_t", true);
    require_times({an.field_t}, "analysis.field_t", false);
    if (an.deltas.empty()) fail("analysis.deltas", "must not be empty");
    for (double d : an.deltas) {
        if (!(d > 0.0)) fail("analysis.deltas", "offsets must be positive");
    }
    if (!(an.headline_delta > 0.0)) fail("analysis.headline_delta", "must be positive");
    if (!(an.band_halfwidth > 0.0)) fail("analysis.band_halfwidth", "must be positive");
    if (!(an.residual_tolerance > 0.0)) fail("analysis.residual_tolerance", "must be positive");
    if (an.residual_shift.size() != c.dimension) {
        fail("analysis.residual_shift", "must have one entry per dimension");
    }
    if (!(an.profile_halfwidth > 0.0)) fail("analysis.profile_halfwidth", "must be positive");
    if (!(an.mode_radius > 0.0)) fail("analysis.mode_radius", "must be positive");
    if (!(an.midpoint_radius > 0.0)) fail("analysis.midpoint_radius", "must be positive");
    c.train.seed = c.seed;
    return c;
}

json config_to_json(const ExperimentConfig& c) {
    const auto& an = c.analysis;
    return {
        {"name", c.name},
        {"seed", c.seed},
        {"output_dir", c.output_dir},
        {"dimension", c.dimension},
        {"prior", mixture_to_json(c.prior)},
        {"target", mixture_to_json(c.target)},
        {"network", {{"hidden", c.network.hidden}, {"activation", std::string(to_string(c.network.activation))}}},
        {"train",
         {{"epochs", c.train.epochs},
          {"batch_size", c.train.batch_size},
          {"steps_per_epoch", c.train.steps_per_epoch},
          {"learning_rate", c.train.learning_rate},
          {"beta1", c.train.beta1},
          {"beta2", c.train.beta2},
          {"adam_epsilon", c.train.adam_epsilon}}},
        {"integrate",
         {{"method", std::string(to_string(c.integrate.method))},
          {"steps", c.integrate.steps},
          {"t_end", c.integrate.t_end},
          {"particles", c.integrate.particles},
          {"record_every", c.integrate.record_every},
          {"trajectory_particles", c.integrate.trajectory_particles}}},
        {"analysis",
         {{"profile_times", an.profile_times},
          {"jump_times", an.jump_times},
          {"deltas", an.deltas},
          {"headline_t", an.headline_t},
          {"headline_delta", an.headline_delta},
          {"band_times", an.band_times},
          {"band_halfwidth", an.band_halfwidth},
          {"band_samples", an.band_samples},
          {"residual_times", an.residual_times},
          {"residual_grid", grid_json(an.residual_grid)},
          {"residual_tolerance", an.residual_tolerance},
          {"residual_shift", an.residual_shift},
          {"field_grid", grid_json(an.field_grid)},
          {"field_t", an.field_t},
          {"profile_points", an.profile_points},
          {"profile_halfwidth", an.profile_halfwidth},
          {"mode_radius", an.mode_radius},
          {"midpoint_radius", an.midpoint_radius}}},
    };
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

}  // namespace flowlab
