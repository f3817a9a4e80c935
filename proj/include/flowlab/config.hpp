#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowlab/analysis.hpp"
#include "flowlab/errors.hpp"
#include "flowlab/flow_sim.hpp"
#include "flowlab/mixture.hpp"
#include "flowlab/velocity_net.hpp"

namespace flowlab {

/// Invalid experiment configuration; the message starts with the offending field path.
class ConfigError : public InputError {
public:
    using InputError::InputError;
};

struct NetworkConfig {
    std::vector<std::size_t> hidden{128, 128, 128, 128};
    Activation activation = Activation::silu;
};

struct IntegrationConfig {
    Method method = Method::rk4;
    int steps = 200;
    double t_end = kMaxTime;
    std::size_t particles = 10000;
    int record_every = 10;
    /// Trajectories are written for the first this-many particles only.
    std::size_t trajectory_particles = 200;
};

struct AnalysisConfig {
    std::vector<double> profile_times{0.3, 0.5, 0.7};
    std::vector<double> jump_times{0.3, 0.5, 0.7, 0.9};
    std::vector<double> deltas{0.1, 0.25, 0.5, 1.0};
    double headline_t = 0.5;
    double headline_delta = 0.5;
    std::vector<double> band_times{0.3, 0.5, 0.7, 0.9};
    double band_halfwidth = 0.5;
    std::size_t band_samples = 4000;
    std::vector<double> residual_times{0.3, 0.5, 0.7};
    GridSpec residual_grid{-5.0, 5.0, 61};
    double residual_tolerance = 1e-3;
    std::vector<double> residual_shift{1.0, 1.0};
    GridSpec field_grid{-5.0, 5.0, 41};
    double field_t = 0.5;
    std::size_t profile_points = 201;
    double profile_halfwidth = 5.0;
    double mode_radius = 1.5;
    double midpoint_radius = 1.0;
};

/// Everything one run needs. Defaults reproduce the 2D bimodal experiment:
/// prior N(0, I), target 0.5 N((3,0), 0.25 I) + 0.5 N((-3,0), 0.25 I).
struct ExperimentConfig {
    std::string name = "default";
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    std::size_t dimension = 2;
    GaussianMixture prior = default_prior();
    GaussianMixture target = default_target();
    NetworkConfig network;
    TrainConfig train;
    IntegrationConfig integrate;
    AnalysisConfig analysis;

    static GaussianMixture default_prior();
    static GaussianMixture default_target();
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

nlohmann::json mixture_to_json(const GaussianMixture& m);
GaussianMixture mixture_from_json(const nlohmann::json& j, const std::string& field,
                                  std::size_t dimension);

}  // namespace flowlab
