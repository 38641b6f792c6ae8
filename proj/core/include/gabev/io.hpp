#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gabev/bev.hpp"
#include "gabev/episode.hpp"
#include "gabev/features.hpp"
#include "gabev/geometry.hpp"
#include "gabev/sim.hpp"

namespace gabev::io {

namespace fs = std::filesystem;

enum class DType : std::uint8_t { F32 = 1, F64 = 2, U8 = 3 };

struct Tensor {
    std::vector<std::uint64_t> dims;
    DType dtype = DType::F32;
    std::vector<std::uint8_t> payload;  // little-endian, row-major

    std::uint64_t element_count() const;
};

std::vector<std::uint8_t> encode_tensor(const Tensor& t);
/// `name` only labels errors.
Tensor decode_tensor(std::span<const std::uint8_t> bytes, const std::string& name);

void write_tensor(const fs::path& path, const Tensor& t);
Tensor read_tensor(const fs::path& path);

Tensor tensor_from(const FeatureMap& map);
FeatureMap feature_map_from(const Tensor& t, Stream stream, const std::string& name);
Tensor tensor_from_pose(const Pose& pose);
Pose pose_from(const Tensor& t, const std::string& name);

void write_depth(const fs::path& values_path, const fs::path& mask_path, const DepthMap& depth);
DepthMap read_depth(const fs::path& values_path, const fs::path& mask_path);

void save_mlp_weights(const MlpProjection& mlp, const fs::path& path);
MlpProjection load_mlp_weights(const fs::path& path);

std::string scene_to_json(const sim::Scene& scene);
sim::Scene scene_from_json(const std::string& text, const std::string& name = "<scene>");
sim::Scene load_scene(const fs::path& path);
void save_scene(const sim::Scene& scene, const fs::path& path);

inline constexpr int kArchiveSchemaVersion = 1;

/// Everything persisted for one recorded episode.
struct TrajectoryArchive {
    TrajectoryRecord record;
    sim::Scene scene;
    MlpProjection mlp;
    EpisodeConfig config;
    std::uint64_t seed = 0;
    std::optional<sim::NoiseSpec> noise;
};

void write_archive(const fs::path& dir, const TrajectoryArchive& archive);
TrajectoryArchive read_archive(const fs::path& dir);

std::string bev_csv(const BevMap& map);
std::vector<std::uint8_t> occupancy_pgm(const BevMap& map);
void export_bev_csv(const BevMap& map, const fs::path& path);
void export_occupancy_pgm(const BevMap& map, const fs::path& path);

std::vector<std::uint8_t> read_file(const fs::path& path);
void write_file(const fs::path& path, std::span<const std::uint8_t> bytes);
void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

}  // namespace gabev::io
