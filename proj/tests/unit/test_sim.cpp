#include <doctest.h>

#include <numbers>
#include <random>

#include "gabev/errors.hpp"
#include "gabev/sim.hpp"
#include "oracles.hpp"

using namespace gabev;
using namespace gabev::sim;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

Scene room(double half = 5.0) {
    Scene s;
    s.name = "room";
    s.bounds = {{-half, -half}, {half, half}};
    return s;
}

Obstacle box(double x0, double z0, double x1, double z1, double h) {
    return Obstacle{Rect{{x0, z0}, {x1, z1}}, h};
}

// Brute-force depth: every face of the room and of each obstacle, one at a time.
double brute_depth(const Scene& s, const Eigen::Vector3d& o, const Eigen::Vector3d& d, double max_range) {
    const Eigen::Vector3d lo(s.bounds.min.x(), -s.wall_height, s.bounds.min.y());
    const Eigen::Vector3d hi(s.bounds.max.x(), 0.0, s.bounds.max.y());
    // Face order per axis: (low, high). y low is the ceiling, y high the floor.
    const bool room_faces[6] = {true, true, s.ceiling, s.floor, true, true};
    double t = oracle::box_faces(o, d, lo, hi, room_faces);
    const bool all[6] = {true, true, true, true, true, true};
    for (const Obstacle& ob : s.obstacles) {
        const Eigen::Vector3d blo(ob.footprint.min.x(), -ob.height, ob.footprint.min.y());
        const Eigen::Vector3d bhi(ob.footprint.max.x(), 0.0, ob.footprint.max.y());
        t = std::min(t, oracle::box_faces(o, d, blo, bhi, all));
    }
    if (!std::isfinite(t) || t * d.norm() > max_range) return std::numeric_limits<double>::infinity();
    return t;
}

bool overlaps(const Scene& s, const Eigen::Vector2d& p, double r) {
    if (p.x() - r < s.bounds.min.x() || p.x() + r > s.bounds.max.x()) return true;
    if (p.y() - r < s.bounds.min.y() || p.y() + r > s.bounds.max.y()) return true;
    for (const Obstacle& o : s.obstacles) {
        const double dx = std::max({o.footprint.min.x() - p.x(), 0.0, p.x() - o.footprint.max.x()});
        const double dz = std::max({o.footprint.min.y() - p.y(), 0.0, p.y() - o.footprint.max.y()});
        if (dx * dx + dz * dz < r * r) return true;
    }
    return false;
}

}  // namespace

TEST_CASE("wall 2 m ahead renders 2.0 at the center and at 15 degrees off-axis") {
    Scene s;
    s.bounds = {{-10, -10}, {10, 2}};
    s.floor = false;
    s.ceiling = false;
    const Pose cam = camera_pose({{0, 0}, 0.0}, 1.25);
    // Odd width puts a pixel center on the optical axis.
    const CameraIntrinsics K = CameraIntrinsics::from_hfov(60.0, 9, 9);
    const DepthMap d = render_depth(s, cam, K, 9, 9);
    CHECK(d.valid(4, 4));
    CHECK(d.at(4, 4) == 2.0);

    // Principal ray rotated 15 degrees: u = cx + fx tan(15 deg).
    CameraIntrinsics K15 = K;
    K15.cx = 4.5 - K.fx * std::tan(15 * kDeg);
    const DepthMap off = render_depth(s, cam, K15, 9, 9);
    CHECK(off.at(4, 4) == doctest::Approx(2.0).epsilon(1e-12));
    const Eigen::Vector3d ray = K15.unproject(4.5, 4.5);
    CHECK(off.at(4, 4) * ray.norm() == doctest::Approx(2.0 / std::cos(15 * kDeg)).epsilon(1e-9));
    CHECK(2.0 / std::cos(15 * kDeg) == doctest::Approx(2.071).epsilon(1e-3));
}

TEST_CASE("nothing within max range leaves every pixel invalid") {
    Scene s;
    s.bounds = {{-100, -100}, {100, 100}};
    s.floor = false;
    s.ceiling = false;
    const DepthMap d = render_depth(s, camera_pose({{0, 0}, 0.3}, 1.25), CameraIntrinsics::from_hfov(60, 16, 16), 16,
                                    16, RenderConfig{20.0});
    CHECK(d.valid_count() == 0);
}

TEST_CASE("rendered depth equals a brute-force face intersector") {
    std::mt19937_64 rng(404);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    std::uniform_real_distribution<double> size(0.2, 1.5);
    std::uniform_real_distribution<double> height(0.3, 2.8);
    std::uniform_real_distribution<double> heading(-3.14, 3.14);
    std::bernoulli_distribution coin(0.5);
    double worst = 0.0;
    int checked = 0;
    for (int trial = 0; trial < 40; ++trial) {
        Scene s = room(5.0);
        s.floor = coin(rng);
        s.ceiling = coin(rng);
        for (int k = 0; k < 4; ++k) {
            const double x = u(rng), z = u(rng);
            s.obstacles.push_back(box(x, z, x + size(rng), z + size(rng), height(rng)));
        }
        Eigen::Vector2d p;
        do {
            p = {u(rng), u(rng)};
        } while (overlaps(s, p, 0.18));
        const Pose cam = camera_pose({p, heading(rng)}, 1.25);
        const CameraIntrinsics K = CameraIntrinsics::from_hfov(60, 24, 18);
        const DepthMap d = render_depth(s, cam, K, 18, 24, RenderConfig{6.0});
        for (int r = 0; r < 18; ++r) {
            for (int c = 0; c < 24; ++c) {
                const Eigen::Vector3d dir = cam.rotation() * K.unproject(c + 0.5, r + 0.5);
                const double t = brute_depth(s, cam.translation(), dir, 6.0);
                CHECK(d.valid(r, c) == std::isfinite(t));
                if (d.valid(r, c) && std::isfinite(t)) {
                    worst = std::max(worst, std::abs(d.at(r, c) - t));
                    ++checked;
                }
            }
        }
    }
    CHECK(checked > 1000);
    CHECK(worst < 1e-9);
}

TEST_CASE("step kinematics") {
    const Scene s = room(5.0);
    const AgentState a = step(s, {{0, 0}, 0.0}, Action::Forward);
    CHECK(a.position.x() == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(a.position.y() == 0.25);
    CHECK(a.heading == 0.0);

    AgentState t{{1, 1}, 0.4};
    for (Action act : {Action::TurnLeft, Action::TurnLeft, Action::TurnRight, Action::TurnRight}) t = step(s, t, act);
    CHECK(std::abs(t.heading - 0.4) < 1e-12);
    CHECK(step(s, {{0, 0}, 0.0}, Action::TurnLeft).heading == doctest::Approx(15 * kDeg).epsilon(1e-15));
    CHECK(step(s, {{0, 0}, 0.0}, Action::Stop) == AgentState{{0, 0}, 0.0});

    // Heading 90 degrees left moves toward -x.
    const AgentState l = step(s, {{0, 0}, std::numbers::pi / 2}, Action::Forward);
    CHECK(l.position.x() == doctest::Approx(-0.25).epsilon(1e-12));
}

TEST_CASE("forward into a wall 0.10 m ahead stops short without overlap") {
    Scene s = room(5.0);
    s.obstacles.push_back(box(-1.0, 0.28, 1.0, 0.6, 1.0));  // disc edge at 0.18, face at 0.28
    const AgentState out = step(s, {{0, 0}, 0.0}, Action::Forward);
    const double moved = (out.position - Eigen::Vector2d(0, 0)).norm();
    CHECK(moved < 0.10);
    CHECK(moved > 0.05);
    CHECK_FALSE(overlaps(s, out.position, 0.18));
}

TEST_CASE("random steps never end in collision") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    std::uniform_int_distribution<int> act(0, 2);
    for (int trial = 0; trial < 20; ++trial) {
        Scene s = room(5.0);
        for (int k = 0; k < 6; ++k) {
            const double x = u(rng), z = u(rng);
            s.obstacles.push_back(box(x, z, x + 0.8, z + 0.5, 1.0));
        }
        AgentState a;
        do {
            a.position = {u(rng), u(rng)};
        } while (overlaps(s, a.position, 0.18));
        for (int k = 0; k < 300; ++k) {
            a = step(s, a, static_cast<Action>(act(rng)));
            REQUIRE_FALSE(overlaps(s, a.position, 0.18));
            CHECK(disc_is_free(s, a.position, 0.18));
        }
    }
}

TEST_CASE("geodesic distances") {
    const Scene s = room(6.0);
    CHECK(geodesic_distance(s, {1, 1}, {1, 1}) == 0.0);
    const double d = geodesic_distance(s, {0, 0}, {3, 4});
    CHECK(d >= 5.0 - 2 * 0.05);
    CHECK(d <= 5.0 * 1.05);

    // A wall with no door splits the room.
    Scene split = room(3.0);
    split.obstacles.push_back(box(-0.2, -3.0, 0.2, 3.0, 2.5));
    CHECK(std::isinf(geodesic_distance(split, {-2, 0}, {2, 0})));

    // A wall with a gap forces a detour at least as long as going around its end.
    Scene door = room(3.0);
    door.obstacles.push_back(box(-0.1, -3.0, 0.1, 2.0, 2.5));
    const double around = geodesic_distance(door, {-1, 0}, {1, 0});
    // Straight legs via the wall end at (0, 2): Euclidean below, 8-connected (octile) above.
    const double euclid = 2.0 * std::hypot(1.0, 2.0);
    const double octile = 2.0 * (1.0 + std::numbers::sqrt2);
    CHECK(around >= euclid - 2 * 0.05);
    CHECK(around <= octile + 4 * 0.05);

    CHECK_THROWS_AS(geodesic_distance(door, {0, 0}, {1, 0}), SimError);
}

TEST_CASE("geodesic distance never undercuts Euclidean by more than two cells") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-4.5, 4.5);
    Scene s = room(5.0);
    s.obstacles.push_back(box(-1, -1, 1, 1, 1));
    s.obstacles.push_back(box(2, -4, 2.5, 2, 1));
    int n = 0;
    while (n < 200) {
        const Eigen::Vector2d a(u(rng), u(rng)), b(u(rng), u(rng));
        if (overlaps(s, a, 1e-6) || overlaps(s, b, 1e-6)) continue;
        const double g = geodesic_distance(s, a, b);
        if (std::isfinite(g)) CHECK(g >= (a - b).norm() - 2 * 0.05);
        ++n;
    }
}

TEST_CASE("noise injection") {
    NoiseSpec none;
    const DepthMap d(100, 100, 2.0);
    CHECK(inject_depth_noise(d, none, 3) == d);
    const Pose p = camera_pose({{1, 2}, 0.3}, 1.25);
    CHECK(inject_pose_noise(p, none, 3) == p);

    NoiseSpec depth;
    depth.depth_sigma = 0.05;
    depth.seed = 12;
    const DepthMap n = inject_depth_noise(d, depth, 0);
    double mean = 0.0, sq = 0.0;
    for (double v : n.values()) mean += v;
    mean /= n.size();
    for (double v : n.values()) sq += (v - mean) * (v - mean);
    const double sd = std::sqrt(sq / (n.size() - 1));
    CHECK(mean >= 1.995);
    CHECK(mean <= 2.005);
    CHECK(sd >= 0.045);
    CHECK(sd <= 0.055);
    CHECK(inject_depth_noise(d, depth, 0) == n);
    CHECK_FALSE(inject_depth_noise(d, depth, 1) == n);

    NoiseSpec rot;
    rot.rot_sigma_deg = 5.0;
    double s2 = 0.0;
    for (int k = 0; k < 10000; ++k) {
        const double h = pose_heading(inject_pose_noise(p, rot, k)) - 0.3;
        s2 += normalize_heading(h) * normalize_heading(h);
    }
    const double rsd = std::sqrt(s2 / 10000);
    CHECK(rsd == doctest::Approx(5 * kDeg).epsilon(0.1));
    CHECK(5 * kDeg == doctest::Approx(0.0873).epsilon(1e-3));

    DepthMap partial(2, 2, 1.0);
    partial.invalidate(0, 1);
    const DepthMap np = inject_depth_noise(partial, depth, 9);
    CHECK_FALSE(np.valid(0, 1));
    CHECK(np.at(0, 1) == 0.0);

    NoiseSpec bad;
    bad.depth_sigma = -1.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("heading helpers") {
    CHECK(normalize_heading(3 * std::numbers::pi) == doctest::Approx(-std::numbers::pi));
    CHECK(normalize_heading(-std::numbers::pi) == -std::numbers::pi);
    for (double h : {0.0, 0.5, -2.0, 3.0}) {
        CHECK(pose_heading(camera_pose({{0, 0}, h}, 1.25)) == doctest::Approx(h).epsilon(1e-12));
    }
    CHECK(action_from_string("turn_left") == Action::TurnLeft);
    CHECK(std::string(to_string(Action::Stop)) == "stop");
    CHECK_THROWS_AS(action_from_string("jump"), ValidationError);
}

TEST_CASE("scene validation") {
    Scene s = room(2.0);
    s.obstacles.push_back(box(1, 1, 0, 0, 1));
    CHECK_THROWS_AS(s.validate(), ValidationError);
    Scene flat = room(2.0);
    flat.wall_height = 0.0;
    CHECK_THROWS_AS(flat.validate(), ValidationError);
}
