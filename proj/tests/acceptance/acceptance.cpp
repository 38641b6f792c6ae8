// Acceptance run: one PASS/FAIL line per criterion; exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <string>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <spdlog/spdlog.h>

#include "commands.hpp"
#include "gabev/bev.hpp"
#include "gabev/config.hpp"
#include "gabev/episode.hpp"
#include "gabev/io.hpp"
#include "gabev/metrics.hpp"
#include "oracles.hpp"
#include "tempdir.hpp"

using namespace gabev;
namespace fs = std::filesystem;

namespace {

const fs::path kScenes = fs::path(GABEV_SOURCE_DIR) / "scenes";
const fs::path kData = GABEV_TEST_DATA;

struct Outcome {
    bool pass = true;
    std::string detail;

    // Records a failed check; the first message wins the detail slot.
    void require(bool ok, const std::string& what) {
        if (!ok && pass) {
            pass = false;
            detail = what;
        }
    }
};

using CellSet = std::set<std::pair<int, int>>;

CellSet oracle_cells(const PointFeatureSet& pts, const BevConfig& c) {
    CellSet cells;
    for (const auto& p : pts.points) {
        const auto i = oracle::interval_scan(p.x(), -c.range, c.cell_size, c.grid_n());
        const auto j = oracle::interval_scan(p.z(), -c.range, c.cell_size, c.grid_n());
        if (i && j) cells.emplace(*i, *j);
    }
    return cells;
}

std::vector<FrameObservation> window_of(const io::TrajectoryArchive& a, std::size_t frame) {
    const HistoryWindow w = history_window(frame, a.record.episode.history_frames);
    std::vector<FrameObservation> out;
    for (std::size_t k = w.begin; k < w.end; ++k) {
        const FrameRecord& fr = a.record.frames[k];
        out.push_back({fr.visual, project_geometry_features(fr.geometry_raw, a.mlp), fr.depth, fr.pose});
    }
    return out;
}

std::vector<std::size_t> build_counts(const io::TrajectoryArchive& a, double cell_size) {
    BevConfig bev = a.config.bev;
    bev.cell_size = cell_size;
    std::vector<std::size_t> out;
    for (const auto& b : rebuild_bevs(a.record.frames, a.mlp, a.config.camera, bev, a.record.episode.cadence,
                                      a.record.episode.history_frames)) {
        out.push_back(b.build.stats.tokens);
    }
    return out;
}

// ---------------------------------------------------------------------------

Outcome projection_round_trip() {
    Outcome o;
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    double worst = 0.0;
    for (int n = 0; n < 10000; ++n) {
        CameraIntrinsics K;
        K.width = 64 + static_cast<int>(u01(rng) * 600);
        K.height = 48 + static_cast<int>(u01(rng) * 400);
        K.fx = 50.0 + 900.0 * u01(rng);
        K.fy = K.fx * (0.8 + 0.4 * u01(rng));
        K.cx = K.width * (0.3 + 0.4 * u01(rng));
        K.cy = K.height * (0.3 + 0.4 * u01(rng));
        const Pose pose(oracle::random_rotation(rng),
                        Eigen::Vector3d(20 * u01(rng) - 10, 4 * u01(rng) - 2, 20 * u01(rng) - 10));
        const Eigen::Vector3d cam(8 * u01(rng) - 4, 6 * u01(rng) - 3, 0.1 + 19.9 * u01(rng));
        const Eigen::Vector3d world = pose.apply(cam);
        const PixelDepth px = project_point(world, K, pose);
        const Eigen::Vector3d back = backproject_pixel(px.u, px.v, px.depth, K, pose);
        worst = std::max(worst, (back - world).norm());
    }
    o.require(worst < 1e-9, fmt::format("max error {:.3g}", worst));
    if (o.pass) o.detail = fmt::format("10000 cases, max error {:.3g} m", worst);
    return o;
}

Outcome binning_oracle() {
    Outcome o;
    std::mt19937_64 rng(202);
    BevConfig c;
    c.cell_size = 0.25;
    c.range = 10.0;
    c.embed_dim = 4;
    const int n = c.grid_n();
    std::uniform_real_distribution<double> coord(-10.5, 10.5);
    std::uniform_int_distribution<int> edge(0, n);
    PointFeatureSet pts;
    pts.dim = 4;
    for (int k = 0; k < 1000; ++k) {
        // A third of the points sit exactly on a cell edge on one or both axes.
        double x = coord(rng);
        double z = coord(rng);
        if (k % 3 == 0) x = c.cell_lower(edge(rng));
        if (k % 6 == 0) z = c.cell_lower(edge(rng));
        pts.points.emplace_back(x, 0.0, z);
        pts.features.insert(pts.features.end(), 4, 1.0f);
        pts.source.push_back(Stream::Visual);
        pts.frame_index.push_back(0);
        pts.patch_index.push_back(static_cast<std::uint32_t>(k));
    }
    const CellAssignment a = bin_points(pts, c);
    std::size_t mismatches = 0;
    std::size_t discarded = 0;
    for (std::size_t k = 0; k < pts.size(); ++k) {
        const auto i = oracle::interval_scan(pts.points[k].x(), -c.range, c.cell_size, n);
        const auto j = oracle::interval_scan(pts.points[k].z(), -c.range, c.cell_size, n);
        std::optional<CellIndex> expect;
        if (i && j) expect = CellIndex{*i, *j};
        if (!expect) ++discarded;
        if (expect != a.point_cell[k]) ++mismatches;
    }
    o.require(mismatches == 0, fmt::format("{} mismatches", mismatches));
    o.require(discarded == a.discarded, "discard count differs");
    o.require(oracle_cells(pts, c).size() == a.cells.size(), "cell count differs");
    if (o.pass) o.detail = fmt::format("1000 points, {} discarded, 0 mismatches", discarded);
    return o;
}

Outcome pooling() {
    Outcome o;
    std::mt19937_64 rng(303);
    std::uniform_real_distribution<double> pos(-2.0, 2.0);
    std::uniform_real_distribution<float> val(-1.0f, 1.0f);
    std::bernoulli_distribution geo(0.4);
    const int dim = 16;
    PointFeatureSet pts;
    pts.dim = dim;
    for (int k = 0; k < 800; ++k) {
        pts.points.emplace_back(pos(rng), 0.0, pos(rng));
        for (int d = 0; d < dim; ++d) pts.features.push_back(val(rng));
        pts.source.push_back(geo(rng) ? Stream::Geometry : Stream::Visual);
        pts.frame_index.push_back(static_cast<std::uint32_t>(k % 7));
        pts.patch_index.push_back(static_cast<std::uint32_t>(k));
    }
    BevConfig c;
    c.cell_size = 0.5;
    c.range = 4.0;
    c.embed_dim = dim;
    double worst = 0.0;
    for (FusionMode mode : {FusionMode::GlobalMean, FusionMode::HierarchicalMean}) {
        c.fusion = mode;
        const BevMap ref = aggregate(bin_points(pts, c), pts, c);
        for (int s = 0; s < 100; ++s) {
            std::vector<std::size_t> perm(pts.size());
            std::iota(perm.begin(), perm.end(), 0);
            std::shuffle(perm.begin(), perm.end(), rng);
            PointFeatureSet sh;
            sh.dim = dim;
            for (std::size_t k : perm) {
                sh.points.push_back(pts.points[k]);
                const auto f = pts.feature(k);
                sh.features.insert(sh.features.end(), f.begin(), f.end());
                sh.source.push_back(pts.source[k]);
                sh.frame_index.push_back(pts.frame_index[k]);
                sh.patch_index.push_back(pts.patch_index[k]);
            }
            const BevMap m = aggregate(bin_points(sh, c), sh, c);
            o.require(m.size() == ref.size(), "token count changed under shuffle");
            if (!o.pass) return o;
            for (std::size_t t = 0; t < m.size(); ++t) {
                o.require(m.tokens[t].cell == ref.tokens[t].cell, "cell order changed under shuffle");
                for (int d = 0; d < dim; ++d) {
                    const double b = ref.tokens[t].feature[d];
                    worst = std::max(worst, std::abs(m.tokens[t].feature[d] - b) / std::max(1.0, std::abs(b)));
                }
            }
        }
    }
    o.require(worst <= 1e-6, fmt::format("shuffle deviation {:.3g}", worst));

    // Three visual features [0,0],[0,0],[6,0] and one geometry feature [2,2] in one cell.
    PointFeatureSet hand;
    hand.dim = 4;
    const std::vector<std::vector<float>> f = {{0, 0, 0, 0}, {0, 0, 0, 0}, {6, 0, 0, 0}, {2, 2, 0, 0}};
    for (int k = 0; k < 4; ++k) {
        hand.points.emplace_back(0.1 + 0.1 * k, 0.0, 0.1);
        hand.features.insert(hand.features.end(), f[k].begin(), f[k].end());
        hand.source.push_back(k == 3 ? Stream::Geometry : Stream::Visual);
        hand.frame_index.push_back(0);
        hand.patch_index.push_back(static_cast<std::uint32_t>(k));
    }
    BevConfig hc;
    hc.cell_size = 1.0;
    hc.range = 2.0;
    hc.embed_dim = 4;
    const std::vector<float> e = position_embedding(0.5, 0.5, 4);
    const BevMap g = aggregate(bin_points(hand, hc), hand, hc);
    hc.fusion = FusionMode::HierarchicalMean;
    const BevMap h = aggregate(bin_points(hand, hc), hand, hc);
    o.require(g.size() == 1 && h.size() == 1, "hand case should yield one token");
    if (!o.pass) return o;
    const double g0 = g.tokens[0].feature[0] - e[0], g1 = g.tokens[0].feature[1] - e[1];
    const double h0 = h.tokens[0].feature[0] - e[0], h1 = h.tokens[0].feature[1] - e[1];
    o.require(std::abs(g.tokens[0].feature[0] - (2.0f + e[0])) <= 1e-9 &&
                  std::abs(g.tokens[0].feature[1] - (0.5f + e[1])) <= 1e-9,
              fmt::format("global [{}, {}]", g0, g1));
    o.require(std::abs(h.tokens[0].feature[0] - (2.0f + e[0])) <= 1e-9 &&
                  std::abs(h.tokens[0].feature[1] - (1.0f + e[1])) <= 1e-9,
              fmt::format("hierarchical [{}, {}]", h0, h1));

    // Single-source cells: geometry only left of x = 0, visual only right of it.
    PointFeatureSet single = pts;
    for (std::size_t k = 0; k < single.size(); ++k) {
        single.source[k] = single.points[k].x() < 0.0 ? Stream::Geometry : Stream::Visual;
    }
    c.fusion = FusionMode::GlobalMean;
    const BevMap sg = aggregate(bin_points(single, c), single, c);
    c.fusion = FusionMode::HierarchicalMean;
    const BevMap sh = aggregate(bin_points(single, c), single, c);
    bool equal = sg.size() == sh.size();
    for (std::size_t t = 0; equal && t < sg.size(); ++t) equal = sg.tokens[t].feature == sh.tokens[t].feature;
    o.require(equal, "fusion modes differ on single-source cells");
    if (o.pass) {
        o.detail = fmt::format("shuffle deviation {:.2g}; global [{:.6g}, {:.6g}], hierarchical [{:.6g}, {:.6g}]; single-source equal",
                               worst, g0, g1, h0, h1);
    }
    return o;
}

// Twenty 32-step exploration episodes shared by the compression and curve checks.
struct ExploreRuns {
    std::vector<io::TrajectoryArchive> archives;
};

ExploreRuns& explore_runs() {
    static ExploreRuns runs = [] {
        ExploreRuns r;
        TempDir dir;
        RunConfig c = parse_run_config(R"({"episode": {"max_steps": 32}})");
        c.seed = 11;
        c.finalize();
        cli::SimulateOptions o;
        o.scene = kScenes / "apartment.json";
        o.episodes = 20;
        o.policy = "explore";
        o.out = dir.path();
        o.jobs = 0;
        cli::run_simulate(c, o);
        for (int k = 0; k < 20; ++k) r.archives.push_back(io::read_archive(dir / fmt::format("ep_{:05d}", k)));
        return r;
    }();
    return runs;
}

Outcome token_compression() {
    Outcome o;
    const auto& runs = explore_runs();
    double tokens = 0.0;
    double dense = 0.0;
    std::size_t windows = 0;
    for (const auto& a : runs.archives) {
        o.require(a.record.steps.size() == 32, a.record.episode.id + " is not 32 steps");
        const auto coarse = build_counts(a, 0.5);
        const auto mid = build_counts(a, 0.25);
        const auto fine = build_counts(a, 0.125);
        const int cadence = a.record.episode.cadence.actions_per_bev();
        for (std::size_t w = 0; w < mid.size(); ++w) {
            o.require(coarse[w] <= mid[w] && mid[w] <= fine[w],
                      fmt::format("{} window {}: {} / {} / {}", a.record.episode.id, w, coarse[w], mid[w], fine[w]));
            tokens += static_cast<double>(mid[w]);
            const std::size_t t = std::min<std::size_t>((w + 1) * cadence, a.record.steps.size());
            dense += static_cast<double>(dense_baseline_tokens(t, a.config.dims.visual_rows, a.config.dims.visual_cols));
            ++windows;
        }
    }
    const double ratio = tokens / dense;
    o.require(ratio < 0.25, fmt::format("ratio {:.3f}", ratio));
    if (o.pass) {
        o.detail = fmt::format("{} windows, mean {:.1f} BEV vs {:.1f} dense tokens ({:.1f}%); 0.5 <= 0.25 <= 0.125 holds",
                               windows, tokens / windows, dense / windows, 100.0 * ratio);
    }
    return o;
}

Outcome token_curve_shape() {
    Outcome o;
    const auto& runs = explore_runs();
    double worst_rate = 0.0;
    for (const auto& a : runs.archives) {
        const int h = a.record.episode.history_frames;
        const auto rows = cli::token_curve(a, 0.25, h);
        const std::size_t per_frame = static_cast<std::size_t>(a.config.dims.visual_rows * a.config.dims.visual_cols);
        for (const auto& r : rows) {
            o.require(r.dense_tokens == static_cast<std::size_t>(r.step) * per_frame,
                      fmt::format("{} step {}: dense {}", r.episode_id, r.step, r.dense_tokens));
        }
        // Each window's tokens equal its occupied cells under the oracle binning.
        const auto builds = rebuild_bevs(a.record.frames, a.mlp, a.config.camera, a.config.bev,
                                         a.record.episode.cadence, h);
        for (const auto& b : builds) {
            const auto pts = lift_history(window_of(a, b.frame_index), a.record.frames[b.frame_index].pose,
                                          a.config.camera);
            const std::size_t occupied = oracle_cells(pts, a.config.bev).size();
            o.require(b.build.stats.tokens <= occupied,
                      fmt::format("{} step {}: {} tokens > {} occupied cells", a.record.episode.id, b.step_index,
                                  b.build.stats.tokens, occupied));
        }
        if (rows.size() < 32) {
            o.require(false, a.record.episode.id + " is shorter than 32 steps");
            continue;
        }
        const auto& r16 = rows[15];
        const auto& r32 = rows[31];
        const double bev_rate = (static_cast<double>(r32.bev_tokens) - static_cast<double>(r16.bev_tokens)) / 16.0;
        const double dense_rate = (static_cast<double>(r32.dense_tokens) - static_cast<double>(r16.dense_tokens)) / 16.0;
        const double rel = bev_rate / dense_rate;
        worst_rate = std::max(worst_rate, rel);
        o.require(rel < 0.5, fmt::format("{}: growth 16->32 is {:.3f} of dense", a.record.episode.id, rel));
    }
    if (o.pass) {
        o.detail = fmt::format("dense linear, tokens <= occupied cells, worst 16->32 growth {:.3f} of dense",
                               worst_rate);
    }
    return o;
}

// Counts the snapshot each policy round was served.
class SpyPolicy final : public Policy {
public:
    explicit SpyPolicy(std::unique_ptr<Policy> inner) : inner_(std::move(inner)) {}
    std::vector<sim::Action> decide(const PolicyQuery& q, int apr) override {
        seen.push_back(q.bev->id);
        return inner_->decide(q, apr);
    }
    std::vector<std::uint64_t> seen;

private:
    std::unique_ptr<Policy> inner_;
};

Outcome cadence_protocol() {
    Outcome o;
    const sim::Scene scene = io::load_scene(kScenes / "room.json");
    RunConfig c = parse_run_config(R"({"camera": {"width": 32, "height": 32}})");
    const MlpProjection mlp = MlpProjection::random(c.episode.dims.geometry_dim, c.episode.dims.hidden_dim,
                                                    c.episode.dims.visual_dim, 5);
    std::size_t runs = 0;
    for (int rounds : {1, 2, 3, 4}) {
        for (int steps : {5, 8, 17, 32, 33, 48}) {
            Episode e;
            e.id = "cadence";
            e.start.position = {0.0, -3.0};
            e.goal = {0.0, 3.0};
            e.max_steps = steps;
            e.cadence = {4, rounds};
            SpyPolicy spy(explore_policy(static_cast<std::uint64_t>(steps * 7 + rounds)));
            const TrajectoryRecord r = run_episode(e, scene, spy, mlp, c.episode);
            const int cadence = 4 * rounds;
            const auto expect = static_cast<std::size_t>((steps + cadence - 1) / cadence);
            o.require(r.steps.size() == static_cast<std::size_t>(steps), "episode ended early");
            o.require(r.builds.size() == expect, fmt::format("cadence {} steps {}: {} builds, expected {}", cadence,
                                                             steps, r.builds.size(), expect));
            const std::set<std::uint64_t> distinct(spy.seen.begin(), spy.seen.end());
            o.require(distinct.size() == expect, fmt::format("cadence {} steps {}: policy saw {} maps for {} builds", cadence, steps, distinct.size(), expect));
            if (rounds == 2) {
                // Every window shares its map across both rounds; only a truncated tail window may serve one.
                for (std::size_t q = 0; q < spy.seen.size(); ++q) {
                    o.require(spy.seen[q] == spy.seen[q - q % 2], "round 2 saw a different map than round 1");
                }
                for (std::size_t b = 0; b + 1 < r.queries_per_snapshot.size(); ++b) {
                    o.require(r.queries_per_snapshot[b] == 2, "a full window served other than two rounds");
                }
            }
            ++runs;
        }
    }
    if (o.pass) o.detail = fmt::format("{} runs at cadence 4/8/12/16, builds = ceil(steps/cadence)", runs);
    return o;
}

struct OracleRuns {
    std::vector<metrics::EpisodeMetrics> results;
};

const OracleRuns& oracle_runs() {
    static const OracleRuns runs = [] {
        OracleRuns r;
        RunConfig c = parse_run_config("{}");
        c.seed = 21;
        c.finalize();
        const sim::Scene scene = io::load_scene(kScenes / "room.json");
        const MlpProjection mlp = MlpProjection::random(c.episode.dims.geometry_dim, c.episode.dims.hidden_dim,
                                                        c.episode.dims.visual_dim, c.seed);
        for (int k = 0; k < 20; ++k) {
            const Episode e = cli::sample_episode(scene, c, k);
            auto policy = oracle_policy(scene, e.goal, c.oracle);
            const TrajectoryRecord rec = run_episode(e, scene, *policy, mlp, c.episode);
            r.results.push_back(cli::score_trajectory(rec, scene, c.success_radius));
        }
        return r;
    }();
    return runs;
}

Outcome oracle_navigation() {
    Outcome o;
    const auto& res = oracle_runs().results;
    const metrics::MetricsTable t = metrics::aggregate(res);
    double worst_ne = 0.0;
    for (const auto& m : res) worst_ne = std::max(worst_ne, m.ne);
    o.require(t.episodes == 20, "episode count");
    o.require(t.sr == 100.0, fmt::format("SR {}", t.sr));
    o.require(t.osr == 100.0, fmt::format("OSR {}", t.osr));
    o.require(t.spl >= 85.0, fmt::format("SPL {:.2f}", t.spl));
    o.require(worst_ne <= 1.0, fmt::format("worst NE {:.3f} m", worst_ne));
    if (o.pass) {
        o.detail = fmt::format("SR {} OSR {} SPL {} mean NE {} m, worst NE {:.2f} m", metrics::format_percent(t.sr),
                               metrics::format_percent(t.osr), metrics::format_percent(t.spl),
                               metrics::format_meters(t.ne), worst_ne);
    }
    return o;
}

Outcome metric_identities() {
    Outcome o;
    for (const auto& m : oracle_runs().results) {
        const double sr = m.success ? 1.0 : 0.0;
        const double osr = m.oracle_success ? 1.0 : 0.0;
        o.require(m.spl <= sr && sr <= osr, m.episode_id + ": SPL <= SR <= OSR violated");
    }
    const metrics::EuclideanDistance goal({0.0, 4.0});
    metrics::EpisodeResult straight;
    straight.path = {{0.0, 0.0}, {0.0, 2.0}, {0.0, 4.0}};
    straight.goal = {0.0, 4.0};
    straight.reference_path_length = 4.0;
    const double s1 = metrics::spl(straight, goal);
    o.require(s1 == 1.0, fmt::format("straight-line SPL {}", s1));
    // Success with a 5 m path against a 4 m reference.
    metrics::EpisodeResult detour;
    detour.path = {{0.0, 0.0}, {1.5, 2.0}, {0.0, 4.0}};
    detour.goal = {0.0, 4.0};
    detour.reference_path_length = 4.0;
    const double s2 = metrics::spl(detour, goal);
    o.require(std::abs(s2 - 0.8) <= 1e-12, fmt::format("detour SPL {}", s2));
    if (o.pass) o.detail = fmt::format("ordering on 20 episodes; straight SPL {}, 4/5 detour SPL {}", s1, s2);
    return o;
}

Outcome noise_mechanics() {
    Outcome o;
    RunConfig c = parse_run_config(R"({
  "camera": {"width": 16, "height": 16},
  "features": {"visual_rows": 16, "visual_cols": 16, "geometry_rows": 16, "geometry_cols": 16,
               "visual_dim": 8, "geometry_dim": 8, "hidden_dim": 8},
  "bev": {"cell_size": 0.25},
  "noise": {"depth_sigma": 0.05}
})");
    c.seed = 31;
    c.finalize();
    const sim::Scene scene = io::load_scene(kScenes / "apartment.json");
    const MlpProjection mlp = MlpProjection::random(8, 8, 8, 1);
    std::mt19937_64 rng(404);
    std::normal_distribution<double> normal(0.0, c.noise.depth_sigma);
    const BevConfig& bev = c.episode.bev;
    const int n = bev.grid_n();
    const CameraIntrinsics& K = c.episode.camera;
    auto cell = [&](const Eigen::Vector3d& p) -> std::optional<std::pair<int, int>> {
        const auto i = oracle::interval_scan(p.x(), -bev.range, bev.cell_size, n);
        const auto j = oracle::interval_scan(p.z(), -bev.range, bev.cell_size, n);
        if (!i || !j) return std::nullopt;
        return std::make_pair(*i, *j);
    };

    double measured_changed = 0.0;
    double expected_changed = 0.0;
    double surviving = 0.0;
    for (int k = 0; k < 3; ++k) {
        Episode e = cli::sample_episode(scene, c, k);
        e.max_steps = 32;
        auto policy = explore_policy(static_cast<std::uint64_t>(k));
        const TrajectoryRecord r = run_episode(e, scene, *policy, mlp, c.episode, c.noise);

        // Weight by surviving points so the pooled fraction matches per-point averaging.
        double points = 0.0;
        for (const BuildRecord& b : r.builds) {
            const HistoryWindow w = history_window(b.frame_index, r.episode.history_frames);
            const Pose& agent = r.frames[b.frame_index].true_pose;
            for (std::size_t f = w.begin; f < w.end; ++f) {
                const FrameRecord& fr = r.frames[f];
                const DepthMap& clean = *fr.clean_depth;
                for (int row = 0; row < clean.rows(); ++row) {
                    for (int col = 0; col < clean.cols(); ++col) {
                        const double d = clean.at(row, col);
                        if (!clean.valid(row, col) || d <= 0.0) continue;
                        auto lift = [&](double depth) {
                            const Eigen::Vector3d cam =
                                oracle::unproject(col + 0.5, row + 0.5, depth, K.fx, K.fy, K.cx, K.cy);
                            return agent.apply_inverse(fr.true_pose.apply(cam));
                        };
                        const auto base = cell(lift(d));
                        if (!base) continue;
                        int moved = 0;
                        for (int s = 0; s < 10000; ++s) {
                            const double noisy = std::max(0.0, d + normal(rng));
                            moved += (noisy <= 0.0 || cell(lift(noisy)) != base) ? 1 : 0;
                        }
                        // Both streams share the pixel, so each contributes two points.
                        expected_changed += 2.0 * moved / 10000.0;
                        points += 2.0;
                    }
                }
            }
        }
        measured_changed += cell_reassignment_fraction(r, c.episode) * points;
        surviving += points;
    }
    const double measured = measured_changed / surviving;
    const double expected = expected_changed / surviving;
    const double rel = std::abs(measured - expected) / expected;
    o.require(rel <= 0.2, fmt::format("measured {:.4f} vs oracle {:.4f} ({:.1f}% off)", measured, expected, 100 * rel));
    if (o.pass) {
        o.detail = fmt::format("depth sigma 0.05, cell 0.25: measured {:.4f} vs oracle {:.4f} ({:.1f}% off), {:.0f} points",
                               measured, expected, 100 * rel, surviving);
    }
    return o;
}

Outcome bit_determinism() {
    Outcome o;
    auto pipeline = [](const fs::path& root, int jobs) {
        RunConfig c = parse_run_config(R"({"camera": {"width": 48, "height": 48}, "episode": {"max_steps": 40},
                                           "noise": {"depth_sigma": 0.02, "pose_sigma": 0.01}})");
        c.seed = 41;
        c.finalize();
        cli::SimulateOptions s;
        s.scene = kScenes / "apartment.json";
        s.episodes = 4;
        s.out = root / "runs";
        s.jobs = jobs;
        cli::run_simulate(c, s);
        cli::TokenizeOptions t;
        t.archive = root / "runs" / "ep_00001";
        t.out = root / "bev";
        cli::run_tokenize({}, t);
        cli::EvaluateOptions e;
        for (int k = 0; k < 4; ++k) e.archives.push_back(root / "runs" / fmt::format("ep_{:05d}", k));
        e.policy = "replay";
        e.scene = s.scene;
        e.out = root / "eval";
        e.jobs = jobs;
        cli::run_evaluate(c, e);
        cli::EvaluateOptions live;
        live.scene = s.scene;
        live.episodes = 4;
        live.out = root / "live";
        live.jobs = jobs;
        cli::run_evaluate(c, live);
    };
    TempDir a, b;
    pipeline(a.path(), 1);
    pipeline(b.path(), 4);
    const auto ta = tree_bytes(a.path());
    const auto tb = tree_bytes(b.path());
    o.require(ta == tb, "output trees differ");
    o.require(ta.size() > 50, "suspiciously small output tree");
    if (o.pass) o.detail = fmt::format("{} files byte-identical across two runs (1 and 4 jobs)", ta.size());
    return o;
}

Outcome io_round_trips() {
    Outcome o;
    TempDir tmp;
    const io::TrajectoryArchive golden = io::read_archive(kData / "golden_archive");
    io::write_archive(tmp / "copy", golden);
    o.require(tree_bytes(tmp / "copy") == tree_bytes(kData / "golden_archive"), "archive rewrite differs");
    const io::TrajectoryArchive again = io::read_archive(tmp / "copy");
    o.require(again.record.frames.size() == golden.record.frames.size(), "frame count differs");
    for (std::size_t f = 0; o.pass && f < golden.record.frames.size(); ++f) {
        o.require(again.record.frames[f].depth == golden.record.frames[f].depth &&
                      again.record.frames[f].visual == golden.record.frames[f].visual &&
                      again.record.frames[f].pose == golden.record.frames[f].pose,
                  fmt::format("frame {} differs after reload", f));
    }
    const MlpProjection mlp = MlpProjection::random(128, 256, 64, 9);
    io::save_mlp_weights(mlp, tmp / "mlp.bin");
    o.require(io::load_mlp_weights(tmp / "mlp.bin") == mlp, "MLP weights differ after reload");
    io::save_mlp_weights(io::load_mlp_weights(tmp / "mlp.bin"), tmp / "mlp2.bin");
    o.require(io::read_file(tmp / "mlp.bin") == io::read_file(tmp / "mlp2.bin"), "MLP file rewrite differs");

    const auto counts = build_counts(golden, 0.25);
    o.require(counts == std::vector<std::size_t>{8, 60, 123},
              fmt::format("golden counts {}", fmt::join(counts, ",")));
    if (o.pass) o.detail = fmt::format("archive and MLP bitwise; golden counts {}", fmt::join(counts, ","));
    return o;
}

struct Criterion {
    const char* name;
    double budget_s;  // 0 = no runtime bound
    std::function<Outcome()> run;
};

}  // namespace

int main() {
    spdlog::set_level(spdlog::level::warn);
    const std::vector<Criterion> criteria = {
        {"projection round-trip", 1.0, projection_round_trip},
        {"binning oracle equivalence", 5.0, binning_oracle},
        {"pooling invariance and fusion cases", 0.0, pooling},
        {"token compression trend", 120.0, token_compression},
        {"token accumulation curve", 60.0, token_curve_shape},
        {"cadence protocol", 0.0, cadence_protocol},
        {"oracle navigation", 60.0, oracle_navigation},
        {"metric identities", 0.0, metric_identities},
        {"noise robustness mechanics", 0.0, noise_mechanics},
        {"bit-determinism", 0.0, bit_determinism},
        {"I/O round-trips and golden fixture", 0.0, io_round_trips},
    };
    int failed = 0;
    for (const Criterion& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = c.run();
        } catch (const std::exception& e) {
            out.pass = false;
            out.detail = std::string("exception: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.budget_s > 0.0 && secs >= c.budget_s) {
            out.require(false, fmt::format("{:.2f} s exceeds the {:.0f} s budget", secs, c.budget_s));
        }
        failed += out.pass ? 0 : 1;
        std::printf("%s %s: %s [%.2f s]\n", out.pass ? "PASS" : "FAIL", c.name, out.detail.c_str(), secs);
        std::fflush(stdout);
    }
    std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
