#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "gabev/features.hpp"
#include "gabev/geometry.hpp"

namespace gabev {

enum class FusionMode { GlobalMean, HierarchicalMean };

// Coordinates fed to the sinusoidal embedding.
enum class EmbeddingCoords { MetricCenter, GridIndex };

/// Agent-centric BEV grid: plane spans [-range, range) on x and z.
struct BevConfig {
    double cell_size = 0.25;
    double range = 10.0;
    int embed_dim = 64;
    FusionMode fusion = FusionMode::GlobalMean;
    EmbeddingCoords embedding = EmbeddingCoords::MetricCenter;
    double embedding_tau = 10000.0;
    // Optional height clip on the y coordinate; unbounded by default.
    std::optional<double> y_min;
    std::optional<double> y_max;

    int grid_n() const;
    /// Lower edge of cell index `i` on either axis: -R + i * cell_size.
    double cell_lower(int i) const { return -range + i * cell_size; }
    double cell_center(int i) const { return -range + (i + 0.5) * cell_size; }
    void validate() const;
};

struct CellIndex {
    int i = 0;  // x axis
    int j = 0;  // z axis
    auto operator<=>(const CellIndex&) const = default;
};

struct CellMembers {
    std::vector<std::size_t> visual;
    std::vector<std::size_t> geometry;
    std::size_t total() const { return visual.size() + geometry.size(); }
};

struct CellAssignment {
    std::map<CellIndex, CellMembers> cells;  // ordered row-major by (i, j)
    std::vector<std::optional<CellIndex>> point_cell;  // per input point
    std::size_t discarded = 0;  // outside [-R, R) or outside the height clip
};

struct BevToken {
    CellIndex cell;
    std::vector<float> feature;
    std::uint32_t count_visual = 0;
    std::uint32_t count_geometry = 0;
    double center_x = 0.0;
    double center_z = 0.0;
};

struct BevMap {
    std::vector<BevToken> tokens;
    BevConfig config;
    std::int64_t source_step = 0;

    std::size_t size() const { return tokens.size(); }
    bool empty() const { return tokens.empty(); }
};

struct TokenStats {
    std::size_t tokens = 0;
    std::size_t frames = 0;
    std::size_t visual_points = 0;
    std::size_t geometry_points = 0;
    std::size_t dropped_patches = 0;  // invalid or zero depth
    std::size_t discarded_points = 0;  // outside the grid
};

/// Exact half-open interval test; returns nullopt outside the grid.
std::optional<int> axis_cell(double coord, const BevConfig& config);

CellAssignment bin_points(const PointFeatureSet& points, const BevConfig& config);

/// Sinusoidal 2D embedding; first half encodes x, second half z.
std::vector<float> position_embedding(double coord_x, double coord_z, int embed_dim, double tau = 10000.0);

/// Embedding for a cell under the config's coordinate mode.
std::vector<float> cell_embedding(const CellIndex& cell, const BevConfig& config);

BevMap aggregate(const CellAssignment& assignment, const PointFeatureSet& points, const BevConfig& config);

/// One historical observation. `geometry` is already projected to the visual width.
struct FrameObservation {
    FeatureMap visual;
    FeatureMap geometry;
    DepthMap depth;  // camera resolution; resized per stream
    Pose pose;
};

struct BevBuild {
    BevMap map;
    TokenStats stats;
};

/// Points of the whole history in the current agent frame, canonical order.
PointFeatureSet lift_history(const std::vector<FrameObservation>& history, const Pose& current_agent_pose,
                             const CameraIntrinsics& K, TokenStats* stats = nullptr);

BevBuild build_ga_bev(const std::vector<FrameObservation>& history, const Pose& current_agent_pose,
                      const CameraIntrinsics& K, const BevConfig& config);

std::size_t token_count(const BevMap& map);

/// Tokens a dense-patch baseline consumes after `frames` frames.
constexpr std::size_t dense_baseline_tokens(std::size_t frames, int patch_rows, int patch_cols) {
    return frames * static_cast<std::size_t>(patch_rows) * static_cast<std::size_t>(patch_cols);
}

}  // namespace gabev
