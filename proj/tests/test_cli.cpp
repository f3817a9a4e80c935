#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowlab/commands.hpp"
#include "flowlab/io.hpp"
#include "flowlab/velocity_net.hpp"
#include "test_support.hpp"

using namespace flowlab;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
    int code = -1;
    std::string output;
};

/// Runs the CLI binary with the given arguments, capturing stdout and stderr.
Run run_cli(const std::string& args, const fs::path& dir) {
    const fs::path log = dir / "cli.log";
    const std::string cmd = std::string("\"") + FLOWLAB_CLI_PATH + "\" " + args + " > \"" +
                            log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.output = read_file(log);
    return r;
}

/// Small but complete experiment so the CLI tests finish quickly.
json small_config() {
    return json::parse(R"({
      "name": "small",
      "seed": 3,
      "dimension": 2,
      "prior": [{"mean": [0, 0], "sigma": 1.0, "weight": 1.0}],
      "target": [{"mean": [3, 0], "sigma": 0.5, "weight": 0.5},
                 {"mean": [-3, 0], "sigma": 0.5, "weight": 0.5}],
      "network": {"hidden": [16, 16], "activation": "silu"},
      "train": {"epochs": 3, "batch_size": 64, "steps_per_epoch": 20},
      "integrate": {"particles": 300, "steps": 40, "record_every": 5, "trajectory_particles": 10},
      "analysis": {"band_samples": 200, "residual_grid": {"lo": -5, "hi": 5, "n": 21}, "profile_points": 21}
    })");
}

fs::path write_config(const fs::path& dir, const json& cfg, const std::string& name = "config.json") {
    const fs::path p = dir / name;
    write_file(p, cfg.dump(2));
    return p;
}

std::vector<std::string> lines(const fs::path& p) {
    std::istringstream in(read_file(p));
    std::vector<std::string> out;
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::string args(const std::string& command, const fs::path& config, const fs::path& out) {
    return command + " --config \"" + config.string() + "\" --out \"" + out.string() + "\"";
}

}  // namespace

TEST_CASE("cli: usage and input errors exit with code 2") {
    const auto dir = test::scratch_dir("cli_errors");
    CHECK(run_cli("", dir).code == kExitInput);
    CHECK(run_cli("bogus", dir).code == kExitInput);
    CHECK(run_cli("train", dir).code == kExitInput);
    CHECK(run_cli("train --config \"" + (dir / "missing.json").string() + "\"", dir).code == kExitInput);

    json bad = small_config();
    bad["target"][1]["sigma"] = -0.5;
    const auto r = run_cli(args("train", write_config(dir, bad), dir / "o1"), dir);
    CHECK(r.code == kExitInput);
    CHECK(r.output.find("target[1].sigma") != std::string::npos);

    json unknown = small_config();
    unknown["train"]["momentum"] = 0.9;
    const auto u = run_cli(args("train", write_config(dir, unknown), dir / "o2"), dir);
    CHECK(u.code == kExitInput);
    CHECK(u.output.find("train.momentum") != std::string::npos);

    const auto cfg = write_config(dir, small_config());
    CHECK(run_cli(args("field", cfg, dir / "o3") + " --source network", dir).code == kExitInput);
    CHECK(run_cli(args("field", cfg, dir / "o3") + " --source learned", dir).code == kExitInput);
    CHECK(run_cli(args("field", cfg, dir / "o3") + " --t 1.0", dir).code == kExitInput);
    fs::remove_all(dir);
}

TEST_CASE("cli: training divergence exits with code 3") {
    const auto dir = test::scratch_dir("cli_diverge");
    json cfg = small_config();
    cfg["train"]["learning_rate"] = 1e300;
    const auto r = run_cli(args("train", write_config(dir, cfg), dir / "out"), dir);
    CHECK(r.code == kExitRuntime);
    CHECK(r.output.find("epoch") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("cli: train") {
    const auto dir = test::scratch_dir("cli_train");
    const auto cfg = write_config(dir, small_config());
    REQUIRE(run_cli(args("train", cfg, dir / "a"), dir).code == kExitOk);
    REQUIRE(run_cli(args("train", cfg, dir / "b"), dir).code == kExitOk);

    for (const char* f : {"checkpoint.bin", "loss.csv", "metrics.json", "config.echo.json"}) {
        CHECK(fs::exists(dir / "a" / f));
        CHECK(read_file(dir / "a" / f) == read_file(dir / "b" / f));
    }
    const auto loss = lines(dir / "a" / "loss.csv");
    REQUIRE(loss.size() == 4);
    CHECK(loss[0] == "epoch,loss");
    const json metrics = json::parse(read_file(dir / "a" / "metrics.json"));
    CHECK(metrics["schema_version"] == kMetricsSchemaVersion);
    CHECK(metrics["train"]["loss_curve"].size() == 3);
    CHECK(metrics["config"]["seed"] == 3);

    SUBCASE("seed override changes the checkpoint") {
        REQUIRE(run_cli(args("train", cfg, dir / "c") + " --seed 4", dir).code == kExitOk);
        CHECK(read_file(dir / "c" / "checkpoint.bin") != read_file(dir / "a" / "checkpoint.bin"));
        CHECK(json::parse(read_file(dir / "c" / "config.echo.json"))["seed"] == 4);
    }
    SUBCASE("the config echo reproduces the run") {
        REQUIRE(run_cli(args("train", dir / "a" / "config.echo.json", dir / "d"), dir).code == kExitOk);
        CHECK(read_file(dir / "d" / "checkpoint.bin") == read_file(dir / "a" / "checkpoint.bin"));
        CHECK(read_file(dir / "d" / "config.echo.json") == read_file(dir / "a" / "config.echo.json"));
    }
    SUBCASE("zero epochs saves the initialization") {
        json zero = small_config();
        zero["train"]["epochs"] = 0;
        REQUIRE(run_cli(args("train", write_config(dir, zero, "zero.json"), dir / "z"), dir).code == kExitOk);
        CHECK(lines(dir / "z" / "loss.csv") == std::vector<std::string>{"epoch,loss"});
        Rng rng = stream_rng(3, SeedStream::init);
        const auto init = VelocityNet::initialized(2, {16, 16}, Activation::silu, rng);
        CHECK(load_checkpoint(dir / "z" / "checkpoint.bin") == init);
    }
    fs::remove_all(dir);
}

TEST_CASE("cli: field") {
    const auto dir = test::scratch_dir("cli_field");
    const auto cfg = write_config(dir, small_config());
    REQUIRE(run_cli(args("field", cfg, dir) + " --source oracle --t 0.5", dir).code == kExitOk);
    const auto rows = lines(dir / "field_oracle_t0.5.csv");
    REQUIRE(rows.size() == 1682);
    CHECK(rows[0] == "t,x,y,vx,vy,alpha1");
    bool found = false;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto c = split(rows[i]);
        REQUIRE(c.size() == 6);
        if (std::stod(c[1]) == 0.0 && std::stod(c[2]) == 0.0) {
            found = true;
            CHECK(std::stod(c[3]) == 0.0);
            CHECK(std::stod(c[4]) == 0.0);
            CHECK(std::stod(c[5]) == 0.5);
        }
    }
    CHECK(found);

    REQUIRE(run_cli(args("train", cfg, dir), dir).code == kExitOk);
    REQUIRE(run_cli(args("field", cfg, dir) + " --source network --t 0.5", dir).code == kExitOk);
    const auto net_rows = lines(dir / "field_network_t0.5.csv");
    REQUIRE(net_rows.size() == 1682);
    CHECK(split(net_rows[1]).size() == 6);
    CHECK(split(net_rows[1])[5].empty());
    fs::remove_all(dir);
}

TEST_CASE("cli: sample") {
    const auto dir = test::scratch_dir("cli_sample");
    json one = small_config();
    one["integrate"] = {{"particles", 1}, {"steps", 20}, {"record_every", 1}, {"trajectory_particles", 1}};
    const auto cfg = write_config(dir, one);
    REQUIRE(run_cli(args("sample", cfg, dir / "a") + " --source oracle", dir).code == kExitOk);
    const auto traj = lines(dir / "a" / "trajectories_oracle.csv");
    CHECK(traj.size() == 21 + 1);
    CHECK(traj[0] == "particle_id,step,t,x,y");
    CHECK(lines(dir / "a" / "endpoints_oracle.csv").size() == 2);

    const auto full = write_config(dir, small_config(), "full.json");
    REQUIRE(run_cli(args("sample", full, dir / "b") + " --source oracle", dir).code == kExitOk);
    REQUIRE(run_cli(args("sample", full, dir / "c") + " --source oracle", dir).code == kExitOk);
    for (const char* f : {"endpoints_oracle.csv", "trajectories_oracle.csv", "metrics.json"}) {
        CHECK(read_file(dir / "b" / f) == read_file(dir / "c" / f));
    }
    const json m = json::parse(read_file(dir / "b" / "metrics.json"));
    const auto& fr = m["sample"]["oracle"]["mode_fractions"];
    CHECK(fr[0].get<double>() + fr[1].get<double>() > 0.95);
    // 10 recorded particles, steps 0..40 every 5 plus the final one.
    CHECK(lines(dir / "b" / "trajectories_oracle.csv").size() == 10 * 9 + 1);
    fs::remove_all(dir);
}

TEST_CASE("cli: profile") {
    const auto dir = test::scratch_dir("cli_profile");
    const auto cfg = write_config(dir, small_config());

    REQUIRE(run_cli(args("profile", cfg, dir / "oracle_only"), dir).code == kExitOk);
    const json m0 = json::parse(read_file(dir / "oracle_only" / "metrics.json"));
    CHECK(m0["profile"].contains("jumps"));
    CHECK_FALSE(m0["profile"].contains("underestimation"));
    CHECK(fs::exists(dir / "oracle_only" / "profiles" / "velocity_oracle_t0.5.csv"));

    REQUIRE(run_cli(args("train", cfg, dir / "run"), dir).code == kExitOk);
    REQUIRE(run_cli(args("profile", cfg, dir / "run"), dir).code == kExitOk);
    const json m = json::parse(read_file(dir / "run" / "metrics.json"));
    CHECK(m.contains("train"));
    const auto& u = m["profile"]["underestimation"];
    REQUIRE(u.contains("ratio"));
    CHECK(u["ratio"].get<double>() > 0.0);
    CHECK(u["ratio"].get<double>() < 1.0);
    for (const auto& p : m["profile"]["posterior"]) {
        CHECK(p["alpha_at_zero"].get<double>() == 0.5);
    }
    const auto rows = lines(dir / "run" / "profiles" / "velocity_network_t0.5.csv");
    CHECK(rows[0] == "t,offset,vx,vy,alpha");

    json tri = small_config();
    tri["target"] = json::parse(R"([{"mean": [3, 0], "sigma": 0.5, "weight": 0.5},
                                    {"mean": [-3, 0], "sigma": 0.5, "weight": 0.3},
                                    {"mean": [0, 3], "sigma": 0.5, "weight": 0.2}])");
    CHECK(run_cli(args("profile", write_config(dir, tri, "tri.json"), dir / "tri"), dir).code == kExitInput);
    fs::remove_all(dir);
}
