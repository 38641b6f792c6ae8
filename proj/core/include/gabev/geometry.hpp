#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace gabev {

class FeatureMap;

/// Pinhole camera. Axes: x right, y down, z forward.
struct CameraIntrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;

    /// Square pixels, centered principal point, focal length from the horizontal FOV.
    static CameraIntrinsics from_hfov(double hfov_deg, int width, int height);

    void validate() const;
    Eigen::Matrix3d matrix() const;
    /// K^-1 [u, v, 1]^T, a camera-frame ray with z = 1.
    Eigen::Vector3d unproject(double u, double v) const;
};

/// Rigid transform camera/agent -> world: p_world = R p_local + t.
class Pose {
public:
    Pose();
    /// Throws ValidationError unless R is orthonormal with det +1 (1e-9).
    Pose(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation);

    static Pose identity() { return Pose(); }

    const Eigen::Matrix3d& rotation() const { return rotation_; }
    const Eigen::Vector3d& translation() const { return translation_; }

    Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation_ * p + translation_; }
    Eigen::Vector3d apply_inverse(const Eigen::Vector3d& p) const {
        return rotation_.transpose() * (p - translation_);
    }

    bool operator==(const Pose& other) const = default;

private:
    Eigen::Matrix3d rotation_;
    Eigen::Vector3d translation_;
};

void validate_rotation(const Eigen::Matrix3d& rotation);

/// compose(a, b) applies b first, then a.
Pose compose(const Pose& a, const Pose& b);
Pose invert(const Pose& p);

/// Max-abs deviation of a pose from identity, over R and t entries.
double deviation_from_identity(const Pose& p);

/// Planar (z-)depth map with an explicit validity mask. Invalid entries store 0.
class DepthMap {
public:
    DepthMap() = default;
    DepthMap(int rows, int cols, double fill = 0.0, bool valid = true);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }

    double at(int r, int c) const { return values_[index(r, c)]; }
    bool valid(int r, int c) const { return valid_[index(r, c)] != 0; }

    /// Sets a valid depth; throws ContractViolation on negative or non-finite values.
    void set(int r, int c, double depth);
    void invalidate(int r, int c);

    std::span<const double> values() const { return values_; }
    std::span<const std::uint8_t> mask() const { return valid_; }
    std::size_t valid_count() const;

    bool operator==(const DepthMap& other) const = default;

private:
    std::size_t index(int r, int c) const { return static_cast<std::size_t>(r) * cols_ + c; }

    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> values_;
    std::vector<std::uint8_t> valid_;
};

enum class Stream : std::uint8_t { Visual = 0, Geometry = 1 };

/// World-frame (or agent-frame) points paired with feature vectors.
struct PointFeatureSet {
    int dim = 0;
    std::vector<Eigen::Vector3d> points;
    std::vector<float> features;  // points.size() * dim, row-major
    std::vector<Stream> source;
    std::vector<std::uint32_t> frame_index;
    std::vector<std::uint32_t> patch_index;

    std::size_t size() const { return points.size(); }
    std::span<const float> feature(std::size_t k) const {
        return std::span<const float>(features).subspan(k * dim, dim);
    }
    void append(const PointFeatureSet& other);
    void check_consistent() const;
};

/// Back-projects one pixel at z-depth `depth` into the world frame.
Eigen::Vector3d backproject_pixel(double u, double v, double depth, const CameraIntrinsics& K,
                                  const Pose& pose);

struct PixelDepth {
    double u;
    double v;
    double depth;
};

/// World point -> (u, v, z-depth) in the camera described by `pose`.
PixelDepth project_point(const Eigen::Vector3d& world, const CameraIntrinsics& K, const Pose& pose);

/// Image pixel at the center of patch (row, col) of a rows x cols grid laid over the image.
Eigen::Vector2d patch_center_pixel(int row, int col, int grid_rows, int grid_cols,
                                   const CameraIntrinsics& K);

/// Lifts every patch with valid, nonzero depth into the world frame.
/// `features` and `depth` must share grid dimensions.
PointFeatureSet backproject_patch_grid(const FeatureMap& features, const DepthMap& depth,
                                       const CameraIntrinsics& K, const Pose& pose,
                                       std::uint32_t frame_index = 0);

/// Keys bicubic (a = -0.5), clamp-to-edge, pixel-center aligned. A target sample is
/// invalid if any source pixel with nonzero weight is invalid.
DepthMap resize_depth(const DepthMap& depth, int target_rows, int target_cols);

PointFeatureSet world_to_agent(const PointFeatureSet& points, const Pose& agent_pose);
PointFeatureSet agent_to_world(const PointFeatureSet& points, const Pose& agent_pose);

}  // namespace gabev
