#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gabev/bev.hpp"
#include "gabev/features.hpp"
#include "gabev/sim.hpp"

namespace gabev {

struct Cadence {
    int actions_per_round = 4;
    int rounds_per_bev = 2;

    int actions_per_bev() const { return actions_per_round * rounds_per_bev; }
    void validate() const;
};

bool bev_refresh_due(std::int64_t step_index, const Cadence& cadence);

struct Episode {
    std::string id;
    std::string instruction;
    std::string scene_ref;
    sim::AgentState start;
    Eigen::Vector2d goal{0.0, 0.0};
    int max_steps = 200;
    Cadence cadence;
    int history_frames = 8;

    void validate() const;
};

/// A BevMap shared by every round of one refresh window.
struct BevSnapshot {
    std::uint64_t id = 0;
    std::int64_t step_index = 0;
    BevMap map;
    TokenStats stats;
};

/// What a policy sees per dialogue round. Round 0 of a window carries no prior
/// actions; later rounds also carry the previous round's frame and actions.
struct PolicyQuery {
    const std::string* instruction = nullptr;
    std::shared_ptr<const BevSnapshot> bev;
    const FeatureMap* current_frame = nullptr;
    const FeatureMap* previous_frame = nullptr;
    const std::vector<sim::Action>* previous_actions = nullptr;
    int round_in_window = 0;
    std::int64_t step_index = 0;
    // Privileged simulator state for scripted stand-ins; an MLLM policy ignores it.
    sim::AgentState state;
};

class Policy {
public:
    virtual ~Policy() = default;
    /// Must return exactly `actions_per_round` actions.
    virtual std::vector<sim::Action> decide(const PolicyQuery& query, int actions_per_round) = 0;
};

struct OraclePolicyConfig {
    double stop_radius = 1.0;
    double heading_tolerance_deg = 7.5;
    double lookahead = 0.5;
    double resolution = 0.05;
    double clearance_margin = 0.1;  // planning slack beyond the agent radius
    sim::AgentConfig agent;
};

/// Greedy geodesic follower. Plans on a raster inflated by the agent radius
/// plus a margin; turns toward the path when a forward step is blocked.
std::unique_ptr<Policy> oracle_policy(const sim::Scene& scene, const Eigen::Vector2d& goal,
                                      const OraclePolicyConfig& config = {});

/// Pops logged actions in order; ProtocolError once exhausted.
std::unique_ptr<Policy> replay_policy(std::vector<sim::Action> action_log);

/// Uniform Forward/TurnLeft/TurnRight, never stops. Used to collect fixed-length runs.
std::unique_ptr<Policy> explore_policy(std::uint64_t seed);

struct StreamDims {
    int visual_rows = 16;
    int visual_cols = 16;
    int visual_dim = 64;
    int geometry_rows = 24;
    int geometry_cols = 24;
    int geometry_dim = 128;
    int hidden_dim = 256;
};

struct EpisodeConfig {
    CameraIntrinsics camera = CameraIntrinsics::from_hfov(60.0, 96, 96);
    sim::AgentConfig agent;
    sim::RenderConfig render;
    StreamDims dims;
    BevConfig bev;
    std::uint64_t feature_seed = 0;
};

struct FrameRecord {
    std::int64_t step_index = 0;
    DepthMap depth;  // as observed (noisy when noise is on)
    std::optional<DepthMap> clean_depth;  // present only with noise
    FeatureMap visual;
    FeatureMap geometry_raw;  // before projection
    Pose pose;  // as observed
    Pose true_pose;
};

struct StepRecord {
    sim::Action action = sim::Action::Stop;
    sim::AgentState state;  // after the action
    std::uint64_t snapshot = 0;
    std::size_t tokens = 0;
};

struct BuildRecord {
    std::uint64_t snapshot = 0;
    std::int64_t step_index = 0;
    std::size_t frame_index = 0;
    TokenStats stats;
};

struct TrajectoryRecord {
    Episode episode;
    std::vector<FrameRecord> frames;
    std::vector<StepRecord> steps;
    std::vector<BuildRecord> builds;
    std::vector<int> queries_per_snapshot;  // policy rounds served by each snapshot
    bool stopped = false;

    sim::AgentState final_state() const {
        return steps.empty() ? episode.start : steps.back().state;
    }
    std::vector<Eigen::Vector2d> path() const;
    std::vector<sim::Action> actions() const;
};

/// Frames [max(0, end - capacity), end) of a history of `total` frames.
struct HistoryWindow {
    std::size_t begin = 0;
    std::size_t end = 0;
};
HistoryWindow history_window(std::size_t current_frame, int capacity);

TrajectoryRecord run_episode(const Episode& episode, const sim::Scene& scene, Policy& policy,
                             const MlpProjection& mlp, const EpisodeConfig& config,
                             const std::optional<sim::NoiseSpec>& noise = std::nullopt);

/// Rebuilds the BEV at every refresh frame of a recorded trajectory.
struct ReplayedBuild {
    std::size_t frame_index = 0;
    std::int64_t step_index = 0;
    BevBuild build;
};
std::vector<ReplayedBuild> rebuild_bevs(const std::vector<FrameRecord>& frames, const MlpProjection& mlp,
                                        const CameraIntrinsics& K, const BevConfig& bev, const Cadence& cadence,
                                        int history_frames);

/// Fraction of surviving clean points (both streams) whose cell differs under the
/// observed (noisy) depth and pose. Requires clean_depth on every frame.
double cell_reassignment_fraction(const TrajectoryRecord& record, const EpisodeConfig& config);

}  // namespace gabev
