#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gabev/geometry.hpp"

namespace gabev::sim {

// World frame shares the camera convention: x right, y down, z forward at heading 0.
// The floor is the plane y = 0; a point at height h above the floor has y = -h.

struct Rect {
    Eigen::Vector2d min{0.0, 0.0};  // (x, z)
    Eigen::Vector2d max{0.0, 0.0};

    bool contains(const Eigen::Vector2d& p) const {
        return p.x() >= min.x() && p.x() <= max.x() && p.y() >= min.y() && p.y() <= max.y();
    }
    double distance_to(const Eigen::Vector2d& p) const;
};

struct Obstacle {
    Rect footprint;
    double height = 1.0;
};

struct Scene {
    std::string name;
    Rect bounds;
    double wall_height = 2.5;
    bool floor = true;
    bool ceiling = true;
    std::vector<Obstacle> obstacles;

    void validate() const;
};

enum class Action : std::uint8_t { Forward = 0, TurnLeft = 1, TurnRight = 2, Stop = 3 };

const char* to_string(Action a);
Action action_from_string(const std::string& s);

struct AgentState {
    Eigen::Vector2d position{0.0, 0.0};  // (x, z)
    double heading = 0.0;  // radians, [-pi, pi); 0 = +z, positive = left

    bool operator==(const AgentState&) const = default;
};

double normalize_heading(double radians);

/// Unit floor-plane direction (x, z) for a heading.
Eigen::Vector2d heading_direction(double heading);

struct AgentConfig {
    double radius = 0.18;
    double camera_height = 1.25;
    double step_m = 0.25;
    double turn_deg = 15.0;
    double contact_margin = 0.01;
};

/// Camera pose (camera -> world) for an agent state.
Pose camera_pose(const AgentState& state, double camera_height);

/// Heading recovered from a yaw-only pose.
double pose_heading(const Pose& pose);

struct RenderConfig {
    double max_range = 20.0;
};

/// z-depth per pixel center; pixels with no hit within max_range are invalid.
DepthMap render_depth(const Scene& scene, const Pose& camera, const CameraIntrinsics& K, int rows, int cols,
                      const RenderConfig& config = {});

/// Nearest positive ray parameter along origin + t * dir, or +inf.
double cast_ray(const Scene& scene, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir);

/// True if a disc of `radius` at `p` overlaps no obstacle and lies inside the bounds.
bool disc_is_free(const Scene& scene, const Eigen::Vector2d& p, double radius);

AgentState step(const Scene& scene, const AgentState& state, Action action, const AgentConfig& agent = {});

/// Dijkstra distance field over an 8-connected free-space raster, seeded at `goal`.
class GeodesicField {
public:
    GeodesicField(const Scene& scene, const Eigen::Vector2d& goal, double resolution = 0.05,
                  double clearance = 0.0);

    /// +inf when unreachable; SimError if `p` is not in free space.
    double distance(const Eigen::Vector2d& p) const;

    /// Cell-center point `lookahead` meters of path closer to the goal than `p`.
    Eigen::Vector2d waypoint(const Eigen::Vector2d& p, double lookahead) const;

    const Eigen::Vector2d& goal() const { return goal_; }
    double resolution() const { return resolution_; }

private:
    int cell_of(const Eigen::Vector2d& p) const;
    Eigen::Vector2d center_of(int cell) const;
    int nearest_free_cell(const Eigen::Vector2d& p) const;

    Scene scene_;
    Eigen::Vector2d goal_;
    double resolution_;
    double clearance_;
    int nx_ = 0;
    int nz_ = 0;
    std::vector<std::uint8_t> free_;
    std::vector<double> dist_;
    int goal_cell_ = -1;
};

double geodesic_distance(const Scene& scene, const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                         double resolution = 0.05, double clearance = 0.0);

struct NoiseSpec {
    double depth_sigma = 0.0;  // meters
    double pose_sigma = 0.0;  // meters
    double rot_sigma_deg = 0.0;  // degrees, yaw only
    std::uint64_t seed = 0;

    bool any() const { return depth_sigma > 0.0 || pose_sigma > 0.0 || rot_sigma_deg > 0.0; }
    void validate() const;
};

/// i.i.d. Gaussian per valid pixel, clamped >= 0. `key` decorrelates frames.
DepthMap inject_depth_noise(const DepthMap& depth, const NoiseSpec& noise, std::uint64_t key);

/// Gaussian on each translation component and on yaw.
Pose inject_pose_noise(const Pose& pose, const NoiseSpec& noise, std::uint64_t key);

}  // namespace gabev::sim
