#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <thread>

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "gabev/errors.hpp"
#include "gabev/random.hpp"

namespace gabev::cli {

using nlohmann::json;

namespace {

constexpr std::uint64_t kEpisodeSalt = 0xE915000000000001ULL;
constexpr std::uint64_t kFeatureSalt = 0xFEA7000000000002ULL;
constexpr std::uint64_t kNoiseSalt = 0x9015E00000000003ULL;
constexpr std::uint64_t kExploreSalt = 0xE8B1000000000004ULL;

// Runs fn(0..n-1) on up to `jobs` threads; the first exception is rethrown.
template <typename Fn>
void parallel_for(int n, int jobs, Fn&& fn) {
    jobs = std::clamp(jobs, 1, std::max(n, 1));
    if (jobs == 1) {
        for (int k = 0; k < n; ++k) fn(k);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex mu;
    std::vector<std::thread> workers;
    for (int w = 0; w < jobs; ++w) {
        workers.emplace_back([&] {
            for (int k = next++; k < n; k = next++) {
                try {
                    fn(k);
                } catch (...) {
                    const std::lock_guard lock(mu);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : workers) t.join();
    if (error) std::rethrow_exception(error);
}

double uniform(std::uint64_t seed, std::initializer_list<std::uint64_t> keys, double lo, double hi) {
    return lo + (hi - lo) * rng::unit_double(rng::hash_key(seed, keys));
}

EpisodeConfig episode_config_for(const RunConfig& config, int index) {
    EpisodeConfig c = config.episode;
    c.feature_seed = rng::hash_key(config.seed ^ kFeatureSalt, {static_cast<std::uint64_t>(index)});
    return c;
}

sim::NoiseSpec noise_for(const RunConfig& config, int index) {
    sim::NoiseSpec n = config.noise;
    n.seed = rng::hash_key(config.seed ^ kNoiseSalt, {static_cast<std::uint64_t>(index)});
    return n;
}

MlpProjection mlp_for(const RunConfig& config) {
    const StreamDims& d = config.episode.dims;
    return MlpProjection::random(d.geometry_dim, d.hidden_dim, d.visual_dim, config.seed);
}

json state_json(const sim::AgentState& s) {
    return json::array({s.position.x(), s.position.y(), s.heading});
}

double mean_build_tokens(const TrajectoryRecord& r) {
    if (r.builds.empty()) return 0.0;
    double sum = 0.0;
    for (const BuildRecord& b : r.builds) sum += static_cast<double>(b.stats.tokens);
    return sum / static_cast<double>(r.builds.size());
}

json summary_json(const TrajectoryRecord& r, const metrics::EpisodeMetrics& m) {
    std::size_t max_tokens = 0;
    for (const BuildRecord& b : r.builds) max_tokens = std::max(max_tokens, b.stats.tokens);
    return {{"episode_id", r.episode.id},
            {"final_state", state_json(r.final_state())},
            {"steps", r.steps.size()},
            {"stopped", r.stopped},
            {"metrics",
             {{"ne", std::isfinite(m.ne) ? json(m.ne) : json(nullptr)},
              {"success", m.success},
              {"oracle_success", m.oracle_success},
              {"spl", m.spl}}},
            {"tokens", {{"builds", r.builds.size()}, {"mean", m.tokens_mean}, {"max", max_tokens}}}};
}

void write_metrics(const fs::path& out, const std::vector<metrics::EpisodeMetrics>& results) {
    io::write_text(out / "results.csv", metrics::results_csv(results));
    const metrics::MetricsTable table = metrics::aggregate(results);
    io::write_text(out / "aggregate.csv", metrics::aggregate_csv(table));
    spdlog::info("episodes={} NE={} SR={} OSR={} SPL={}", table.episodes, metrics::format_meters(table.ne),
                 metrics::format_percent(table.sr), metrics::format_percent(table.osr),
                 metrics::format_percent(table.spl));
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError(IoErrorKind::Write, dir.string(), ec.message());
}

std::size_t dense_for_window(std::int64_t step_index, const Cadence& cadence, std::size_t total_steps,
                             const StreamDims& dims) {
    const auto end = std::min<std::size_t>(static_cast<std::size_t>(step_index + cadence.actions_per_bev()), total_steps);
    return dense_baseline_tokens(std::max<std::size_t>(end, 1), dims.visual_rows, dims.visual_cols);
}

}  // namespace

void Overrides::apply(RunConfig& c) const {
    if (seed) c.seed = *seed;
    BevConfig& b = c.episode.bev;
    apply(b, c.cadence, c.history_frames);
    if (noise_depth) c.noise.depth_sigma = *noise_depth;
    if (noise_pose) c.noise.pose_sigma = *noise_pose;
    if (noise_rot) c.noise.rot_sigma_deg = *noise_rot;
    c.finalize();
}

void Overrides::apply(BevConfig& b, Cadence& cad, int& history_frames) const {
    if (cell_size) b.cell_size = *cell_size;
    if (range) b.range = *range;
    if (fusion) {
        if (*fusion != "global" && *fusion != "hierarchical") {
            throw ConfigError("--fusion must be global or hierarchical");
        }
        b.fusion = *fusion == "global" ? FusionMode::GlobalMean : FusionMode::HierarchicalMean;
    }
    if (history) history_frames = *history;
    if (cadence) {
        if (*cadence < 1 || *cadence % cad.actions_per_round != 0) {
            throw ConfigError(fmt::format("--cadence must be a positive multiple of {}", cad.actions_per_round));
        }
        cad.rounds_per_bev = *cadence / cad.actions_per_round;
    }
    try {
        b.validate();
    } catch (const ValidationError& e) {
        throw ConfigError(e.what());
    }
    if (history_frames < 1) throw ConfigError("--history must be >= 1");
}

Episode sample_episode(const sim::Scene& scene, const RunConfig& config, int index) {
    const double r = config.episode.agent.radius;
    const std::uint64_t seed = config.seed ^ kEpisodeSalt;
    const auto k = static_cast<std::uint64_t>(index);
    const auto& b = scene.bounds;
    for (int attempt = 0; attempt < config.goal_retries; ++attempt) {
        const auto a = static_cast<std::uint64_t>(attempt);
        const Eigen::Vector2d start(uniform(seed, {k, a, 0}, b.min.x() + r, b.max.x() - r),
                                    uniform(seed, {k, a, 1}, b.min.y() + r, b.max.y() - r));
        const Eigen::Vector2d goal(uniform(seed, {k, a, 2}, b.min.x() + r, b.max.x() - r),
                                   uniform(seed, {k, a, 3}, b.min.y() + r, b.max.y() - r));
        if (!sim::disc_is_free(scene, start, r) || !sim::disc_is_free(scene, goal, r)) continue;
        const sim::GeodesicField field(scene, goal, config.oracle.resolution, r);
        const double d = field.distance(start);
        if (!std::isfinite(d) || d < config.min_goal_distance || d > config.max_goal_distance) continue;

        Episode e;
        e.id = fmt::format("ep_{:05d}", index);
        e.instruction = fmt::format("Walk to the point at x={:.2f}, z={:.2f} and stop there.", goal.x(), goal.y());
        e.scene_ref = scene.name;
        e.start.position = start;
        e.start.heading = sim::normalize_heading(uniform(seed, {k, a, 4}, -std::numbers::pi, std::numbers::pi));
        e.goal = goal;
        e.max_steps = config.max_steps;
        e.cadence = config.cadence;
        e.history_frames = config.history_frames;
        return e;
    }
    throw SimError(fmt::format("episode {}: no start/goal pair with geodesic distance in [{}, {}] m after {} attempts",
                               index, config.min_goal_distance, config.max_goal_distance, config.goal_retries));
}

metrics::EpisodeMetrics score_trajectory(const TrajectoryRecord& record, const sim::Scene& scene,
                                         double success_radius, bool euclidean) {
    const Episode& e = record.episode;
    metrics::EpisodeResult result;
    result.path = record.path();
    result.goal = e.goal;
    result.reference_path_length = sim::geodesic_distance(scene, e.start.position, e.goal);
    result.success_radius = success_radius;
    metrics::EpisodeMetrics m;
    if (euclidean) {
        m = metrics::evaluate_episode(result, metrics::EuclideanDistance(e.goal));
    } else {
        m = metrics::evaluate_episode(result, metrics::GeodesicDistance(scene, e.goal));
    }
    m.episode_id = e.id;
    m.tokens_mean = mean_build_tokens(record);
    return m;
}

void run_simulate(const RunConfig& config, const SimulateOptions& options) {
    if (options.episodes < 1) throw ConfigError("simulate: --episodes must be >= 1");
    if (options.policy != "oracle" && options.policy != "explore") {
        throw ConfigError("simulate: --policy must be oracle or explore");
    }
    const sim::Scene scene = io::load_scene(options.scene);
    const MlpProjection mlp = mlp_for(config);
    ensure_dir(options.out);

    std::vector<metrics::EpisodeMetrics> results(options.episodes);
    parallel_for(options.episodes, options.jobs, [&](int k) {
        const Episode episode = sample_episode(scene, config, k);
        const EpisodeConfig ec = episode_config_for(config, k);
        std::unique_ptr<Policy> policy =
            options.policy == "oracle"
                ? oracle_policy(scene, episode.goal, config.oracle)
                : explore_policy(rng::hash_key(config.seed ^ kExploreSalt, {static_cast<std::uint64_t>(k)}));
        std::optional<sim::NoiseSpec> noise;
        if (config.noise.any()) noise = noise_for(config, k);

        io::TrajectoryArchive archive;
        archive.record = run_episode(episode, scene, *policy, mlp, ec, noise);
        archive.scene = scene;
        archive.mlp = mlp;
        archive.config = ec;
        archive.seed = config.seed;
        archive.noise = noise;

        const fs::path dir = options.out / episode.id;
        io::write_archive(dir, archive);
        results[k] = score_trajectory(archive.record, scene, config.success_radius);
        io::write_text(dir / "summary.json", summary_json(archive.record, results[k]).dump(2) + "\n");
        spdlog::debug("{}: {} steps, {} builds", episode.id, archive.record.steps.size(), archive.record.builds.size());
    });
    io::write_text(options.out / "config.json", run_config_to_json(config));
    write_metrics(options.out, results);
}

void run_tokenize(const Overrides& overrides, const TokenizeOptions& options) {
    const io::TrajectoryArchive archive = io::read_archive(options.archive);
    BevConfig bev = archive.config.bev;
    Cadence cadence = archive.record.episode.cadence;
    int history = archive.record.episode.history_frames;
    overrides.apply(bev, cadence, history);

    const auto builds =
        rebuild_bevs(archive.record.frames, archive.mlp, archive.config.camera, bev, cadence, history);
    ensure_dir(options.out);
    json windows = json::array();
    double tokens_sum = 0.0;
    double dense_sum = 0.0;
    for (const ReplayedBuild& b : builds) {
        const std::string stem = fmt::format("bev_{:05d}", b.frame_index);
        io::export_bev_csv(b.build.map, options.out / (stem + ".csv"));
        io::export_occupancy_pgm(b.build.map, options.out / (stem + ".pgm"));
        const std::size_t dense =
            dense_for_window(b.step_index, cadence, archive.record.steps.size(), archive.config.dims);
        const TokenStats& s = b.build.stats;
        windows.push_back({{"frame_index", b.frame_index},
                           {"step_index", b.step_index},
                           {"tokens", s.tokens},
                           {"dense_tokens", dense},
                           {"frames", s.frames},
                           {"visual_points", s.visual_points},
                           {"geometry_points", s.geometry_points},
                           {"dropped_patches", s.dropped_patches},
                           {"discarded_points", s.discarded_points}});
        tokens_sum += static_cast<double>(s.tokens);
        dense_sum += static_cast<double>(dense);
    }
    const double n = builds.empty() ? 1.0 : static_cast<double>(builds.size());
    const json stats = {{"episode_id", archive.record.episode.id},
                        {"cell_size", bev.cell_size},
                        {"range", bev.range},
                        {"history_frames", history},
                        {"cadence", cadence.actions_per_bev()},
                        {"windows", windows},
                        {"tokens_mean", tokens_sum / n},
                        {"dense_mean", dense_sum / n}};
    io::write_text(options.out / "stats.json", stats.dump(2) + "\n");
    spdlog::info("{}: {} windows, mean {:.1f} tokens vs dense {:.1f}", archive.record.episode.id, builds.size(),
                 tokens_sum / n, dense_sum / n);
}

void run_evaluate(const RunConfig& config, const EvaluateOptions& options) {
    if (options.distance != "geodesic" && options.distance != "euclidean") {
        throw ConfigError("evaluate: --distance must be geodesic or euclidean");
    }
    const bool euclidean = options.distance == "euclidean";
    ensure_dir(options.out);
    std::vector<metrics::EpisodeMetrics> results;

    if (options.policy == "replay") {
        if (options.archives.empty()) throw ConfigError("evaluate: replay needs archives");
        results.resize(options.archives.size());
        parallel_for(static_cast<int>(options.archives.size()), options.jobs, [&](int k) {
            const io::TrajectoryArchive a = io::read_archive(options.archives[k]);
            auto policy = replay_policy(a.record.actions());
            const TrajectoryRecord rec = run_episode(a.record.episode, a.scene, *policy, a.mlp, a.config, a.noise);
            results[k] = score_trajectory(rec, a.scene, config.success_radius, euclidean);
        });
        write_metrics(options.out, results);
        return;
    }
    if (options.policy != "oracle") throw ConfigError("evaluate: --policy must be oracle or replay");

    if (options.scene.empty()) {
        if (options.archives.empty()) throw ConfigError("evaluate: give archives or --scene with --episodes");
        for (const fs::path& p : options.archives) {
            const io::TrajectoryArchive a = io::read_archive(p);
            results.push_back(score_trajectory(a.record, a.scene, config.success_radius, euclidean));
        }
        write_metrics(options.out, results);
        return;
    }

    if (options.episodes < 1) throw ConfigError("evaluate: --episodes must be >= 1 in live mode");
    const sim::Scene scene = io::load_scene(options.scene);
    const MlpProjection mlp = mlp_for(config);
    results.resize(options.episodes);
    std::vector<double> reassigned(options.episodes, 0.0);
    parallel_for(options.episodes, options.jobs, [&](int k) {
        const Episode episode = sample_episode(scene, config, k);
        const EpisodeConfig ec = episode_config_for(config, k);
        auto policy = oracle_policy(scene, episode.goal, config.oracle);
        std::optional<sim::NoiseSpec> noise;
        if (config.noise.any()) noise = noise_for(config, k);
        const TrajectoryRecord rec = run_episode(episode, scene, *policy, mlp, ec, noise);
        results[k] = score_trajectory(rec, scene, config.success_radius, euclidean);
        if (noise) reassigned[k] = cell_reassignment_fraction(rec, ec);
    });
    write_metrics(options.out, results);
    if (config.noise.any()) {
        std::string csv = "episode_id,cell_reassignment_fraction\n";
        double sum = 0.0;
        for (int k = 0; k < options.episodes; ++k) {
            csv += fmt::format("{},{:.6f}\n", results[k].episode_id, reassigned[k]);
            sum += reassigned[k];
        }
        csv += fmt::format("mean,{:.6f}\n", sum / options.episodes);
        io::write_text(options.out / "noise.csv", csv);
    }
}

std::vector<CurveRow> token_curve(const io::TrajectoryArchive& archive, double cell_size, int history) {
    BevConfig bev = archive.config.bev;
    bev.cell_size = cell_size;
    const Cadence cadence = archive.record.episode.cadence;
    const auto builds = rebuild_bevs(archive.record.frames, archive.mlp, archive.config.camera, bev, cadence, history);
    const StreamDims& dims = archive.config.dims;
    std::vector<CurveRow> rows;
    std::size_t b = 0;
    for (std::size_t t = 1; t <= archive.record.steps.size(); ++t) {
        while (b + 1 < builds.size() && builds[b + 1].step_index <= static_cast<std::int64_t>(t) - 1) ++b;
        rows.push_back({archive.record.episode.id, cell_size, history, static_cast<std::int64_t>(t),
                        dense_baseline_tokens(t, dims.visual_rows, dims.visual_cols),
                        builds.empty() ? 0 : builds[b].build.stats.tokens});
    }
    return rows;
}

void run_benchmark(const Overrides& overrides, const BenchmarkOptions& options) {
    if (options.archives.empty()) throw ConfigError("benchmark: no archives given");
    std::string csv = "episode_id,cell_size,history,step,dense_tokens,bev_tokens\n";
    for (const fs::path& p : options.archives) {
        io::TrajectoryArchive a = io::read_archive(p);
        for (double cs : options.cell_sizes) {
            for (int h : options.histories) {
                // Validate the sweep point with any range override applied.
                Overrides point = overrides;
                point.cell_size = cs;
                point.history = h;
                point.apply(a.config.bev, a.record.episode.cadence, h);
                for (const CurveRow& r : token_curve(a, cs, h)) {
                    csv += fmt::format("{},{},{},{},{},{}\n", r.episode_id, r.cell_size, r.history, r.step,
                                       r.dense_tokens, r.bev_tokens);
                }
            }
        }
    }
    ensure_dir(options.out.parent_path().empty() ? fs::path(".") : options.out.parent_path());
    io::write_text(options.out, csv);
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return 1;
    if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const SimError*>(&e) ||
        dynamic_cast<const ValidationError*>(&e)) {
        return 2;
    }
    return 3;
}

}  // namespace gabev::cli
