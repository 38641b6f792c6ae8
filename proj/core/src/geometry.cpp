#include "gabev/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "gabev/errors.hpp"
#include "gabev/features.hpp"

namespace gabev {

namespace {

constexpr double kRotationTolerance = 1e-9;

}  // namespace

CameraIntrinsics CameraIntrinsics::from_hfov(double hfov_deg, int width, int height) {
    if (!(hfov_deg > 0.0 && hfov_deg < 180.0) || width < 1 || height < 1) {
        throw ContractViolation("from_hfov: need 0 < fov < 180 and positive image size");
    }
    const double half = hfov_deg * std::numbers::pi / 360.0;
    CameraIntrinsics K;
    K.fx = (width / 2.0) / std::tan(half);
    K.fy = K.fx;
    K.cx = width / 2.0;
    K.cy = height / 2.0;
    K.width = width;
    K.height = height;
    return K;
}

void CameraIntrinsics::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) {
        throw ValidationError("intrinsics: focal lengths must be positive");
    }
    if (width < 1 || height < 1) {
        throw ValidationError("intrinsics: image size must be positive");
    }
    if (!(cx >= 0.0 && cx <= width && cy >= 0.0 && cy <= height)) {
        throw ValidationError("intrinsics: principal point outside the image");
    }
}

Eigen::Matrix3d CameraIntrinsics::matrix() const {
    Eigen::Matrix3d K;
    K << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
    return K;
}

Eigen::Vector3d CameraIntrinsics::unproject(double u, double v) const {
    return {(u - cx) / fx, (v - cy) / fy, 1.0};
}

void validate_rotation(const Eigen::Matrix3d& rotation) {
    if (!rotation.allFinite()) {
        throw ValidationError("pose: rotation has non-finite entries");
    }
    const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (ortho > kRotationTolerance) {
        throw ValidationError("pose: rotation is not orthonormal (deviation " + std::to_string(ortho) + ")");
    }
    if (std::abs(rotation.determinant() - 1.0) > kRotationTolerance) {
        throw ValidationError("pose: rotation determinant is not +1");
    }
}

Pose::Pose() : rotation_(Eigen::Matrix3d::Identity()), translation_(Eigen::Vector3d::Zero()) {}

Pose::Pose(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation)
    : rotation_(rotation), translation_(translation) {
    validate_rotation(rotation_);
    if (!translation_.allFinite()) {
        throw ValidationError("pose: translation has non-finite entries");
    }
}

Pose compose(const Pose& a, const Pose& b) {
    return Pose(a.rotation() * b.rotation(), a.rotation() * b.translation() + a.translation());
}

Pose invert(const Pose& p) {
    const Eigen::Matrix3d rt = p.rotation().transpose();
    return Pose(rt, -(rt * p.translation()));
}

double deviation_from_identity(const Pose& p) {
    const double r = (p.rotation() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    const double t = p.translation().cwiseAbs().maxCoeff();
    return std::max(r, t);
}

DepthMap::DepthMap(int rows, int cols, double fill, bool valid) : rows_(rows), cols_(cols) {
    if (rows < 0 || cols < 0) {
        throw ContractViolation("DepthMap: negative dimensions");
    }
    if (valid && !(std::isfinite(fill) && fill >= 0.0)) {
        throw ContractViolation("DepthMap: fill must be finite and >= 0");
    }
    const auto n = static_cast<std::size_t>(rows) * cols;
    values_.assign(n, valid ? fill : 0.0);
    valid_.assign(n, valid ? 1 : 0);
}

void DepthMap::set(int r, int c, double depth) {
    if (!(std::isfinite(depth) && depth >= 0.0)) {
        throw ContractViolation("DepthMap::set: depth must be finite and >= 0");
    }
    values_[index(r, c)] = depth;
    valid_[index(r, c)] = 1;
}

void DepthMap::invalidate(int r, int c) {
    values_[index(r, c)] = 0.0;
    valid_[index(r, c)] = 0;
}

std::size_t DepthMap::valid_count() const {
    return static_cast<std::size_t>(std::count(valid_.begin(), valid_.end(), std::uint8_t{1}));
}

void PointFeatureSet::append(const PointFeatureSet& other) {
    if (other.size() == 0) {
        return;
    }
    if (size() == 0 && dim == 0) {
        dim = other.dim;
    }
    if (other.dim != dim) {
        throw ContractViolation("PointFeatureSet::append: feature dims differ");
    }
    points.insert(points.end(), other.points.begin(), other.points.end());
    features.insert(features.end(), other.features.begin(), other.features.end());
    source.insert(source.end(), other.source.begin(), other.source.end());
    frame_index.insert(frame_index.end(), other.frame_index.begin(), other.frame_index.end());
    patch_index.insert(patch_index.end(), other.patch_index.begin(), other.patch_index.end());
}

void PointFeatureSet::check_consistent() const {
    const std::size_t n = points.size();
    if (features.size() != n * static_cast<std::size_t>(dim) || source.size() != n || frame_index.size() != n ||
        patch_index.size() != n) {
        throw ContractViolation("PointFeatureSet: parallel arrays have inconsistent lengths");
    }
}

Eigen::Vector3d backproject_pixel(double u, double v, double depth, const CameraIntrinsics& K, const Pose& pose) {
    return pose.apply(K.unproject(u, v) * depth);
}

PixelDepth project_point(const Eigen::Vector3d& world, const CameraIntrinsics& K, const Pose& pose) {
    const Eigen::Vector3d cam = pose.apply_inverse(world);
    return {K.fx * cam.x() / cam.z() + K.cx, K.fy * cam.y() / cam.z() + K.cy, cam.z()};
}

Eigen::Vector2d patch_center_pixel(int row, int col, int grid_rows, int grid_cols, const CameraIntrinsics& K) {
    return {(col + 0.5) * (static_cast<double>(K.width) / grid_cols),
            (row + 0.5) * (static_cast<double>(K.height) / grid_rows)};
}

PointFeatureSet backproject_patch_grid(const FeatureMap& features, const DepthMap& depth, const CameraIntrinsics& K,
                                       const Pose& pose, std::uint32_t frame_index) {
    if (features.rows() != depth.rows() || features.cols() != depth.cols()) {
        throw ContractViolation("backproject_patch_grid: feature grid " + std::to_string(features.rows()) + "x" +
                                std::to_string(features.cols()) + " vs depth " + std::to_string(depth.rows()) + "x" +
                                std::to_string(depth.cols()));
    }
    K.validate();
    validate_rotation(pose.rotation());

    PointFeatureSet out;
    out.dim = features.dim();
    const int rows = features.rows();
    const int cols = features.cols();
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            if (!depth.valid(r, c) || depth.at(r, c) <= 0.0) {
                continue;
            }
            const Eigen::Vector2d px = patch_center_pixel(r, c, rows, cols, K);
            out.points.push_back(backproject_pixel(px.x(), px.y(), depth.at(r, c), K, pose));
            const auto f = features.at(r, c);
            out.features.insert(out.features.end(), f.begin(), f.end());
            out.source.push_back(features.stream());
            out.frame_index.push_back(frame_index);
            out.patch_index.push_back(static_cast<std::uint32_t>(r * cols + c));
        }
    }
    return out;
}

namespace {

// Keys cubic convolution kernel with a = -0.5.
double keys_weight(double x) {
    constexpr double a = -0.5;
    x = std::abs(x);
    if (x < 1.0) {
        return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    }
    if (x < 2.0) {
        return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
    }
    return 0.0;
}

struct Taps {
    std::array<int, 4> index;
    std::array<double, 4> weight;
};

Taps taps_for(int dst, int src_n, int dst_n) {
    const double src = (dst + 0.5) * (static_cast<double>(src_n) / dst_n) - 0.5;
    const double base = std::floor(src);
    const double frac = src - base;
    Taps t{};
    for (int k = 0; k < 4; ++k) {
        const int idx = static_cast<int>(base) - 1 + k;
        t.index[k] = std::clamp(idx, 0, src_n - 1);
        t.weight[k] = keys_weight(frac - (k - 1));
    }
    return t;
}

}  // namespace

DepthMap resize_depth(const DepthMap& depth, int target_rows, int target_cols) {
    if (depth.empty()) {
        throw ContractViolation("resize_depth: source depth is empty");
    }
    if (target_rows < 1 || target_cols < 1) {
        throw ContractViolation("resize_depth: target dimensions must be >= 1");
    }
    if (target_rows == depth.rows() && target_cols == depth.cols()) {
        return depth;
    }

    std::vector<Taps> row_taps(target_rows);
    std::vector<Taps> col_taps(target_cols);
    for (int r = 0; r < target_rows; ++r) {
        row_taps[r] = taps_for(r, depth.rows(), target_rows);
    }
    for (int c = 0; c < target_cols; ++c) {
        col_taps[c] = taps_for(c, depth.cols(), target_cols);
    }

    DepthMap out(target_rows, target_cols, 0.0, false);
    for (int r = 0; r < target_rows; ++r) {
        const Taps& rt = row_taps[r];
        for (int c = 0; c < target_cols; ++c) {
            const Taps& ct = col_taps[c];
            // Offsets from the base tap (always weighted) keep constant fields exact.
            const double ref = depth.at(rt.index[1], ct.index[1]);
            double acc = 0.0;
            bool ok = true;
            for (int i = 0; i < 4 && ok; ++i) {
                if (rt.weight[i] == 0.0) {
                    continue;
                }
                double row_acc = 0.0;
                for (int j = 0; j < 4; ++j) {
                    if (ct.weight[j] == 0.0) {
                        continue;
                    }
                    if (!depth.valid(rt.index[i], ct.index[j])) {
                        ok = false;
                        break;
                    }
                    row_acc += ct.weight[j] * (depth.at(rt.index[i], ct.index[j]) - ref);
                }
                acc += rt.weight[i] * row_acc;
            }
            if (ok) {
                out.set(r, c, std::max(ref + acc, 0.0));
            }
        }
    }
    return out;
}

PointFeatureSet world_to_agent(const PointFeatureSet& points, const Pose& agent_pose) {
    validate_rotation(agent_pose.rotation());
    PointFeatureSet out = points;
    for (auto& p : out.points) {
        p = agent_pose.apply_inverse(p);
    }
    return out;
}

PointFeatureSet agent_to_world(const PointFeatureSet& points, const Pose& agent_pose) {
    validate_rotation(agent_pose.rotation());
    PointFeatureSet out = points;
    for (auto& p : out.points) {
        p = agent_pose.apply(p);
    }
    return out;
}

}  // namespace gabev
