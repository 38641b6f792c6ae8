#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gabev/config.hpp"
#include "gabev/io.hpp"
#include "gabev/metrics.hpp"

namespace gabev::cli {

namespace fs = std::filesystem;

/// Flag values that override the config file when given.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<double> cell_size;
    std::optional<double> range;
    std::optional<int> history;
    std::optional<int> cadence;
    std::optional<std::string> fusion;
    std::optional<double> noise_depth;
    std::optional<double> noise_pose;
    std::optional<double> noise_rot;

    void apply(RunConfig& config) const;
    /// Applies only BEV/cadence/history flags on top of a recorded archive's settings.
    void apply(BevConfig& bev, Cadence& cadence, int& history) const;
};

struct SimulateOptions {
    fs::path scene;
    int episodes = 1;
    std::string policy = "oracle";  // oracle | explore
    fs::path out;
    int jobs = 1;
};

struct TokenizeOptions {
    fs::path archive;
    fs::path out;
};

struct EvaluateOptions {
    std::vector<fs::path> archives;  // recorded runs, or replay sources
    fs::path scene;  // live mode
    int episodes = 0;
    std::string policy = "oracle";  // oracle | replay
    std::string distance = "geodesic";  // geodesic | euclidean, for NE/SR/OSR
    fs::path out;
    int jobs = 1;
};

struct BenchmarkOptions {
    std::vector<fs::path> archives;
    std::vector<double> cell_sizes{0.125, 0.25, 0.5};
    std::vector<int> histories{8};
    fs::path out;
};

/// Start/goal pair with geodesic distance inside the configured band.
Episode sample_episode(const sim::Scene& scene, const RunConfig& config, int index);

/// Metrics of a recorded trajectory against its scene. Goal distances are
/// geodesic unless `euclidean` is set; the SPL reference length is always geodesic.
metrics::EpisodeMetrics score_trajectory(const TrajectoryRecord& record, const sim::Scene& scene,
                                         double success_radius, bool euclidean = false);

void run_simulate(const RunConfig& config, const SimulateOptions& options);
void run_tokenize(const Overrides& overrides, const TokenizeOptions& options);
void run_evaluate(const RunConfig& config, const EvaluateOptions& options);
void run_benchmark(const Overrides& overrides, const BenchmarkOptions& options);

/// Token-curve rows for one archive: per action step, dense baseline vs. active BEV.
struct CurveRow {
    std::string episode_id;
    double cell_size = 0.0;
    int history = 0;
    std::int64_t step = 0;  // 1-based action count
    std::size_t dense_tokens = 0;
    std::size_t bev_tokens = 0;
};
std::vector<CurveRow> token_curve(const io::TrajectoryArchive& archive, double cell_size, int history);

/// Maps an exception from a command to the documented exit code.
int exit_code_for(const std::exception& e);

}  // namespace gabev::cli
