#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "gabev/episode.hpp"
#include "gabev/errors.hpp"
#include "gabev/sim.hpp"

namespace gabev {

/// Everything a CLI run needs; all randomness derives from `seed`.
struct RunConfig {
    EpisodeConfig episode;
    Cadence cadence;
    int history_frames = 8;
    int max_steps = 200;
    double success_radius = 3.0;
    OraclePolicyConfig oracle;
    sim::NoiseSpec noise;
    double min_goal_distance = 3.0;
    double max_goal_distance = 8.0;
    int goal_retries = 100;
    double camera_hfov_deg = 60.0;
    std::uint64_t seed = 0;

    /// Recomputes derived fields (intrinsics, embed width) and checks invariants.
    void finalize();
};

/// Thrown with a "<source>:<line>: message" description.
class ConfigError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

RunConfig parse_run_config(const std::string& json_text, const std::string& source = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_to_json(const RunConfig& config);

}  // namespace gabev
