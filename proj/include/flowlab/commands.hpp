#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string_view>

#include <json.hpp>

#include "flowlab/config.hpp"
#include "flowlab/flow_sim.hpp"

namespace flowlab {

/// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitRuntime = 3;

inline constexpr int kMetricsSchemaVersion = 1;

/// RNG stream ids derived from the run seed, one per stochastic stage.
enum class SeedStream : std::uint64_t { init = 1, train = 2, sample = 3, band = 4 };

Rng stream_rng(std::uint64_t seed, SeedStream stream);

struct CommandOptions {
    std::filesystem::path config;
    std::optional<FieldSource> source;
    std::optional<std::filesystem::path> checkpoint;
    std::optional<double> t;
    std::optional<std::filesystem::path> out;
    std::optional<std::uint64_t> seed;
};

/// Resolved configuration plus the directory all outputs go to.
struct RunContext {
    ExperimentConfig config;
    std::filesystem::path out_dir;
};

/// Loads the config, applies command-line overrides, creates the output
/// directory, and writes config.echo.json there.
RunContext prepare_run(const CommandOptions& opts);

/// Trains the network; writes checkpoint.bin, loss.csv, and the "train" metrics section.
TrainReport cmd_train(const RunContext& run, std::ostream& log);

/// Writes field_<source>_t<t>.csv over the configured 2D grid.
std::filesystem::path cmd_field(const RunContext& run, FieldSource source,
                                const std::optional<std::filesystem::path>& checkpoint,
                                std::ostream& log);

/// Transports prior samples; writes endpoints/trajectories CSVs and mode metrics.
ModeMetrics cmd_sample(const RunContext& run, FieldSource source,
                       const std::optional<std::filesystem::path>& checkpoint, std::ostream& log);

/// Jump, posterior, residual, and (given a checkpoint) error-band and underestimation
/// measurements; writes profiles/*.csv and the "profile" metrics section.
nlohmann::json cmd_profile(const RunContext& run,
                           const std::optional<std::filesystem::path>& checkpoint,
                           std::ostream& log);

/// Dispatches a subcommand by name and maps failures to exit codes.
int run_command(std::string_view command, const CommandOptions& opts, std::ostream& out,
                std::ostream& err);

/// Merges `section` under `key` into <out_dir>/metrics.json (created if absent).
void update_metrics(const std::filesystem::path& out_dir, const std::string& key,
                    const nlohmann::json& section, const ExperimentConfig& config);

}  // namespace flowlab
