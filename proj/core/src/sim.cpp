#include "gabev/sim.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <queue>
#include <string>

#include "gabev/errors.hpp"
#include "gabev/random.hpp"

namespace gabev::sim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::uint64_t kDepthNoiseSalt = 0xDE9700000000001ULL;
constexpr std::uint64_t kPoseNoiseSalt = 0x905E00000000002ULL;

// Ray parameter interval [t0, t1] inside the slab lo <= o + t d <= hi.
bool slab(double o, double d, double lo, double hi, double& t0, double& t1) {
    if (d == 0.0) {
        return o >= lo && o <= hi;
    }
    double a = (lo - o) / d;
    double b = (hi - o) / d;
    if (a > b) {
        std::swap(a, b);
    }
    t0 = std::max(t0, a);
    t1 = std::min(t1, b);
    return t0 <= t1;
}

Eigen::Matrix3d yaw_rotation(double delta) {
    const double c = std::cos(delta);
    const double s = std::sin(delta);
    Eigen::Matrix3d R;
    R << c, 0.0, -s, 0.0, 1.0, 0.0, s, 0.0, c;
    return R;
}

bool inside_obstacle_3d(const Obstacle& o, const Eigen::Vector3d& p) {
    return p.x() > o.footprint.min.x() && p.x() < o.footprint.max.x() && p.z() > o.footprint.min.y() &&
           p.z() < o.footprint.max.y() && p.y() > -o.height && p.y() <= 0.0;
}

// First tau in [0, limit] where the convex function f crosses below zero, or +inf.
double first_contact(const std::function<double(double)>& f, double limit) {
    if (f(0.0) < 0.0) {
        return 0.0;
    }
    double lo = 0.0;
    double hi = limit;
    for (int it = 0; it < 100; ++it) {
        const double m1 = lo + (hi - lo) / 3.0;
        const double m2 = hi - (hi - lo) / 3.0;
        if (f(m1) <= f(m2)) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    const double tmin = 0.5 * (lo + hi);
    if (f(tmin) >= 0.0 && f(limit) >= 0.0) {
        return kInf;
    }
    double a = 0.0;
    double b = f(tmin) < 0.0 ? tmin : limit;
    for (int it = 0; it < 100; ++it) {
        const double m = 0.5 * (a + b);
        if (f(m) < 0.0) {
            b = m;
        } else {
            a = m;
        }
    }
    return a;
}

}  // namespace

double Rect::distance_to(const Eigen::Vector2d& p) const {
    const double dx = std::max({min.x() - p.x(), 0.0, p.x() - max.x()});
    const double dz = std::max({min.y() - p.y(), 0.0, p.y() - max.y()});
    return std::hypot(dx, dz);
}

void Scene::validate() const {
    if (!(bounds.max.x() > bounds.min.x()) || !(bounds.max.y() > bounds.min.y())) {
        throw ValidationError("scene '" + name + "': bounds must have positive extent");
    }
    if (!(wall_height > 0.0)) {
        throw ValidationError("scene '" + name + "': wall_height must be positive");
    }
    for (std::size_t k = 0; k < obstacles.size(); ++k) {
        const Obstacle& o = obstacles[k];
        if (!(o.footprint.max.x() > o.footprint.min.x()) || !(o.footprint.max.y() > o.footprint.min.y()) ||
            !(o.height > 0.0)) {
            throw ValidationError("scene '" + name + "': obstacle " + std::to_string(k) + " has non-positive extent");
        }
        if (!bounds.contains(o.footprint.min) || !bounds.contains(o.footprint.max)) {
            throw ValidationError("scene '" + name + "': obstacle " + std::to_string(k) + " leaves the bounds");
        }
    }
}

const char* to_string(Action a) {
    switch (a) {
        case Action::Forward: return "forward";
        case Action::TurnLeft: return "turn_left";
        case Action::TurnRight: return "turn_right";
        case Action::Stop: return "stop";
    }
    return "?";
}

Action action_from_string(const std::string& s) {
    if (s == "forward") return Action::Forward;
    if (s == "turn_left") return Action::TurnLeft;
    if (s == "turn_right") return Action::TurnRight;
    if (s == "stop") return Action::Stop;
    throw ValidationError("unknown action '" + s + "'");
}

double normalize_heading(double radians) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double h = std::fmod(radians + std::numbers::pi, two_pi);
    if (h < 0.0) {
        h += two_pi;
    }
    h -= std::numbers::pi;
    return h >= std::numbers::pi ? h - two_pi : h;
}

Eigen::Vector2d heading_direction(double heading) {
    return {-std::sin(heading), std::cos(heading)};
}

Pose camera_pose(const AgentState& state, double camera_height) {
    return Pose(yaw_rotation(state.heading), Eigen::Vector3d(state.position.x(), -camera_height, state.position.y()));
}

double pose_heading(const Pose& pose) {
    const Eigen::Vector3d fwd = pose.rotation().col(2);
    return std::atan2(-fwd.x(), fwd.z());
}

double cast_ray(const Scene& scene, const Eigen::Vector3d& o, const Eigen::Vector3d& d) {
    double best = kInf;

    // Room walls: exit through the x/z slabs, only where the wall actually stands.
    double t_wall = kInf;
    if (d.x() > 0.0) t_wall = std::min(t_wall, (scene.bounds.max.x() - o.x()) / d.x());
    if (d.x() < 0.0) t_wall = std::min(t_wall, (scene.bounds.min.x() - o.x()) / d.x());
    if (d.z() > 0.0) t_wall = std::min(t_wall, (scene.bounds.max.y() - o.z()) / d.z());
    if (d.z() < 0.0) t_wall = std::min(t_wall, (scene.bounds.min.y() - o.z()) / d.z());
    if (t_wall > 0.0 && std::isfinite(t_wall)) {
        const double y = o.y() + t_wall * d.y();
        if (y >= -scene.wall_height && y <= 0.0) {
            best = t_wall;
        }
    }

    auto plane = [&](double y_plane) {
        if (d.y() == 0.0) {
            return;
        }
        const double t = (y_plane - o.y()) / d.y();
        if (t <= 0.0 || t >= best) {
            return;
        }
        const double x = o.x() + t * d.x();
        const double z = o.z() + t * d.z();
        if (x >= scene.bounds.min.x() && x <= scene.bounds.max.x() && z >= scene.bounds.min.y() &&
            z <= scene.bounds.max.y()) {
            best = t;
        }
    };
    if (scene.floor && d.y() > 0.0) plane(0.0);
    if (scene.ceiling && d.y() < 0.0) plane(-scene.wall_height);

    for (const Obstacle& ob : scene.obstacles) {
        double t0 = 0.0;
        double t1 = kInf;
        if (!slab(o.x(), d.x(), ob.footprint.min.x(), ob.footprint.max.x(), t0, t1)) continue;
        if (!slab(o.y(), d.y(), -ob.height, 0.0, t0, t1)) continue;
        if (!slab(o.z(), d.z(), ob.footprint.min.y(), ob.footprint.max.y(), t0, t1)) continue;
        if (t0 > 0.0 && t0 < best) {
            best = t0;
        }
    }
    return best;
}

DepthMap render_depth(const Scene& scene, const Pose& camera, const CameraIntrinsics& K, int rows, int cols,
                      const RenderConfig& config) {
    if (rows < 1 || cols < 1) {
        throw ContractViolation("render_depth: rows and cols must be >= 1");
    }
    K.validate();
    const Eigen::Vector3d& o = camera.translation();
    const Eigen::Vector2d o2(o.x(), o.z());
    if (!scene.bounds.contains(o2) || o.y() > 0.0 || o.y() < -scene.wall_height) {
        throw SimError("render_depth: camera outside the scene bounds");
    }
    for (const Obstacle& ob : scene.obstacles) {
        if (inside_obstacle_3d(ob, o)) {
            throw SimError("render_depth: camera inside an obstacle");
        }
    }
    DepthMap depth(rows, cols, 0.0, false);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const Eigen::Vector2d px = patch_center_pixel(r, c, rows, cols, K);
            const Eigen::Vector3d ray_cam = K.unproject(px.x(), px.y());  // z = 1, so t is z-depth
            const double t = cast_ray(scene, o, camera.rotation() * ray_cam);
            if (std::isfinite(t) && t * ray_cam.norm() <= config.max_range) {
                depth.set(r, c, t);
            }
        }
    }
    return depth;
}

bool disc_is_free(const Scene& scene, const Eigen::Vector2d& p, double radius) {
    if (p.x() - radius < scene.bounds.min.x() || p.x() + radius > scene.bounds.max.x() ||
        p.y() - radius < scene.bounds.min.y() || p.y() + radius > scene.bounds.max.y()) {
        return false;
    }
    return std::all_of(scene.obstacles.begin(), scene.obstacles.end(),
                       [&](const Obstacle& o) { return o.footprint.distance_to(p) >= radius; });
}

AgentState step(const Scene& scene, const AgentState& state, Action action, const AgentConfig& agent) {
    AgentState next = state;
    const double turn = agent.turn_deg * std::numbers::pi / 180.0;
    switch (action) {
        case Action::Stop:
            return next;
        case Action::TurnLeft:
            next.heading = normalize_heading(state.heading + turn);
            return next;
        case Action::TurnRight:
            next.heading = normalize_heading(state.heading - turn);
            return next;
        case Action::Forward:
            break;
    }

    const Eigen::Vector2d p = state.position;
    const Eigen::Vector2d d = heading_direction(state.heading);
    const double r = agent.radius;
    double contact = kInf;

    auto wall = [&](double pos, double dir, double lo, double hi) {
        if (dir > 0.0) contact = std::min(contact, (hi - r - pos) / dir);
        if (dir < 0.0) contact = std::min(contact, (lo + r - pos) / dir);
    };
    wall(p.x(), d.x(), scene.bounds.min.x(), scene.bounds.max.x());
    wall(p.y(), d.y(), scene.bounds.min.y(), scene.bounds.max.y());
    if (contact > agent.step_m) {
        contact = kInf;
    }

    for (const Obstacle& o : scene.obstacles) {
        const auto f = [&](double tau) { return o.footprint.distance_to(p + tau * d) - r; };
        contact = std::min(contact, first_contact(f, agent.step_m));
    }

    const double travel = std::isfinite(contact) ? std::max(0.0, contact - agent.contact_margin) : agent.step_m;
    next.position = p + travel * d;
    return next;
}

GeodesicField::GeodesicField(const Scene& scene, const Eigen::Vector2d& goal, double resolution, double clearance)
    : scene_(scene), goal_(goal), resolution_(resolution), clearance_(clearance) {
    if (!(resolution > 0.0)) {
        throw ContractViolation("GeodesicField: resolution must be positive");
    }
    nx_ = static_cast<int>(std::ceil((scene.bounds.max.x() - scene.bounds.min.x()) / resolution - 1e-9));
    nz_ = static_cast<int>(std::ceil((scene.bounds.max.y() - scene.bounds.min.y()) / resolution - 1e-9));
    free_.assign(static_cast<std::size_t>(nx_) * nz_, 0);
    for (int k = 0; k < nx_ * nz_; ++k) {
        const Eigen::Vector2d c = center_of(k);
        bool ok = c.x() - clearance >= scene.bounds.min.x() && c.x() + clearance <= scene.bounds.max.x() &&
                  c.y() - clearance >= scene.bounds.min.y() && c.y() + clearance <= scene.bounds.max.y();
        for (const Obstacle& o : scene.obstacles) {
            ok = ok && o.footprint.distance_to(c) > clearance;
        }
        free_[k] = ok ? 1 : 0;
    }
    if (!disc_is_free(scene, goal, 0.0) ||
        std::any_of(scene.obstacles.begin(), scene.obstacles.end(),
                    [&](const Obstacle& o) { return o.footprint.distance_to(goal) == 0.0; })) {
        throw SimError("geodesic: goal is not in free space");
    }
    dist_.assign(free_.size(), kInf);
    goal_cell_ = nearest_free_cell(goal);
    if (goal_cell_ < 0) {
        return;
    }

    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
    dist_[goal_cell_] = 0.0;
    open.emplace(0.0, goal_cell_);
    const double diag = std::numbers::sqrt2 * resolution;
    while (!open.empty()) {
        const auto [dcur, cell] = open.top();
        open.pop();
        if (dcur > dist_[cell]) {
            continue;
        }
        const int ci = cell % nx_;
        const int cj = cell / nx_;
        for (int dj = -1; dj <= 1; ++dj) {
            for (int di = -1; di <= 1; ++di) {
                if (di == 0 && dj == 0) continue;
                const int ni = ci + di;
                const int nj = cj + dj;
                if (ni < 0 || nj < 0 || ni >= nx_ || nj >= nz_) continue;
                const int n = nj * nx_ + ni;
                if (!free_[n]) continue;
                // No corner cutting on diagonals.
                if (di != 0 && dj != 0 && (!free_[cj * nx_ + ni] || !free_[nj * nx_ + ci])) continue;
                const double nd = dcur + ((di != 0 && dj != 0) ? diag : resolution);
                if (nd < dist_[n]) {
                    dist_[n] = nd;
                    open.emplace(nd, n);
                }
            }
        }
    }
}

int GeodesicField::cell_of(const Eigen::Vector2d& p) const {
    const int i = std::clamp(static_cast<int>(std::floor((p.x() - scene_.bounds.min.x()) / resolution_)), 0, nx_ - 1);
    const int j = std::clamp(static_cast<int>(std::floor((p.y() - scene_.bounds.min.y()) / resolution_)), 0, nz_ - 1);
    return j * nx_ + i;
}

Eigen::Vector2d GeodesicField::center_of(int cell) const {
    return {scene_.bounds.min.x() + (cell % nx_ + 0.5) * resolution_,
            scene_.bounds.min.y() + (cell / nx_ + 0.5) * resolution_};
}

int GeodesicField::nearest_free_cell(const Eigen::Vector2d& p) const {
    const int home = cell_of(p);
    if (free_[home]) {
        return home;
    }
    const int reach = static_cast<int>(std::ceil(clearance_ / resolution_)) + 2;
    int best = -1;
    double best_d = kInf;
    const int hi = home % nx_;
    const int hj = home / nx_;
    for (int dj = -reach; dj <= reach; ++dj) {
        for (int di = -reach; di <= reach; ++di) {
            const int i = hi + di;
            const int j = hj + dj;
            if (i < 0 || j < 0 || i >= nx_ || j >= nz_) continue;
            const int c = j * nx_ + i;
            if (!free_[c]) continue;
            const double d = (center_of(c) - p).norm();
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
    }
    return best;
}

double GeodesicField::distance(const Eigen::Vector2d& p) const {
    if (!scene_.bounds.contains(p) ||
        std::any_of(scene_.obstacles.begin(), scene_.obstacles.end(), [&](const Obstacle& o) {
            return o.footprint.distance_to(p) == 0.0;
        })) {
        throw SimError("geodesic: query point is not in free space");
    }
    const int cell = nearest_free_cell(p);
    if (cell < 0) {
        return kInf;
    }
    if (cell == goal_cell_) {
        return (p - goal_).norm();
    }
    return dist_[cell];
}

Eigen::Vector2d GeodesicField::waypoint(const Eigen::Vector2d& p, double lookahead) const {
    int cell = nearest_free_cell(p);
    if (cell < 0 || !std::isfinite(dist_[cell])) {
        return goal_;
    }
    const double target = dist_[cell] - lookahead;
    while (cell != goal_cell_ && dist_[cell] > target) {
        int best = cell;
        const int ci = cell % nx_;
        const int cj = cell / nx_;
        for (int dj = -1; dj <= 1; ++dj) {
            for (int di = -1; di <= 1; ++di) {
                const int ni = ci + di;
                const int nj = cj + dj;
                if (ni < 0 || nj < 0 || ni >= nx_ || nj >= nz_) continue;
                const int n = nj * nx_ + ni;
                if (dist_[n] < dist_[best]) best = n;
            }
        }
        if (best == cell) break;
        cell = best;
    }
    return cell == goal_cell_ ? goal_ : center_of(cell);
}

double geodesic_distance(const Scene& scene, const Eigen::Vector2d& a, const Eigen::Vector2d& b, double resolution,
                         double clearance) {
    const GeodesicField field(scene, b, resolution, clearance);
    return field.distance(a);
}

void NoiseSpec::validate() const {
    auto ok = [](double s) { return std::isfinite(s) && s >= 0.0; };
    if (!ok(depth_sigma) || !ok(pose_sigma) || !ok(rot_sigma_deg)) {
        throw ValidationError("noise: sigmas must be finite and >= 0");
    }
}

DepthMap inject_depth_noise(const DepthMap& depth, const NoiseSpec& noise, std::uint64_t key) {
    noise.validate();
    if (noise.depth_sigma == 0.0) {
        return depth;
    }
    DepthMap out = depth;
    for (int r = 0; r < depth.rows(); ++r) {
        for (int c = 0; c < depth.cols(); ++c) {
            if (!depth.valid(r, c)) continue;
            const auto k = static_cast<std::uint64_t>(r) * depth.cols() + c;
            const double n = rng::standard_normal(noise.seed ^ kDepthNoiseSalt, {key, k});
            out.set(r, c, std::max(0.0, depth.at(r, c) + noise.depth_sigma * n));
        }
    }
    return out;
}

Pose inject_pose_noise(const Pose& pose, const NoiseSpec& noise, std::uint64_t key) {
    noise.validate();
    if (noise.pose_sigma == 0.0 && noise.rot_sigma_deg == 0.0) {
        return pose;
    }
    const std::uint64_t s = noise.seed ^ kPoseNoiseSalt;
    Eigen::Vector3d t = pose.translation();
    if (noise.pose_sigma > 0.0) {
        for (int a = 0; a < 3; ++a) {
            t[a] += noise.pose_sigma * rng::standard_normal(s, {key, static_cast<std::uint64_t>(a)});
        }
    }
    Eigen::Matrix3d R = pose.rotation();
    if (noise.rot_sigma_deg > 0.0) {
        const double yaw = noise.rot_sigma_deg * std::numbers::pi / 180.0 * rng::standard_normal(s, {key, 3});
        R = yaw_rotation(yaw) * R;
    }
    return Pose(R, t);
}

}  // namespace gabev::sim
