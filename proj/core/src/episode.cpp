#include "gabev/episode.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <string>
#include <tuple>

#include "gabev/errors.hpp"
#include "gabev/random.hpp"

namespace gabev {

void Cadence::validate() const {
    if (actions_per_round < 1 || rounds_per_bev < 1) {
        throw ValidationError("cadence: actions_per_round and rounds_per_bev must be >= 1");
    }
}

bool bev_refresh_due(std::int64_t step_index, const Cadence& cadence) {
    if (step_index < 0) {
        throw ContractViolation("bev_refresh_due: negative step index");
    }
    return step_index % cadence.actions_per_bev() == 0;
}

void Episode::validate() const {
    if (max_steps <= 0) {
        throw ValidationError("episode " + id + ": max_steps must be positive");
    }
    if (history_frames < 1) {
        throw ValidationError("episode " + id + ": history_frames must be >= 1");
    }
    cadence.validate();
}

std::vector<Eigen::Vector2d> TrajectoryRecord::path() const {
    std::vector<Eigen::Vector2d> out;
    out.reserve(steps.size() + 1);
    out.push_back(episode.start.position);
    for (const StepRecord& s : steps) {
        out.push_back(s.state.position);
    }
    return out;
}

std::vector<sim::Action> TrajectoryRecord::actions() const {
    std::vector<sim::Action> out;
    out.reserve(steps.size());
    for (const StepRecord& s : steps) {
        out.push_back(s.action);
    }
    return out;
}

HistoryWindow history_window(std::size_t current_frame, int capacity) {
    const std::size_t end = current_frame + 1;
    const auto cap = static_cast<std::size_t>(std::max(capacity, 1));
    return {end > cap ? end - cap : 0, end};
}

namespace {

class OraclePolicy final : public Policy {
public:
    OraclePolicy(const sim::Scene& scene, const Eigen::Vector2d& goal, const OraclePolicyConfig& config)
        : scene_(scene), config_(config), field_(scene, goal, config.resolution, config.agent.radius + config.clearance_margin) {}

    std::vector<sim::Action> decide(const PolicyQuery& query, int actions_per_round) override {
        std::vector<sim::Action> out;
        sim::AgentState state = query.state;
        while (static_cast<int>(out.size()) < actions_per_round) {
            const sim::Action a = choose(state);
            if (a == sim::Action::Stop) {
                out.resize(actions_per_round, sim::Action::Stop);
                break;
            }
            out.push_back(a);
            state = sim::step(scene_, state, a, config_.agent);
        }
        return out;
    }

private:
    bool moves(const sim::AgentState& state) const {
        const sim::AgentState next = sim::step(scene_, state, sim::Action::Forward, config_.agent);
        return (next.position - state.position).norm() >= 0.5 * config_.agent.step_m;
    }

    sim::Action choose(const sim::AgentState& state) {
        const double d = field_.distance(state.position);
        if (!std::isfinite(d) || d <= config_.stop_radius) {
            pending_.clear();
            return sim::Action::Stop;
        }
        if (!pending_.empty()) {
            const sim::Action a = pending_.front();
            pending_.erase(pending_.begin());
            return a;
        }
        const Eigen::Vector2d delta = field_.waypoint(state.position, config_.lookahead) - state.position;
        const double desired = std::atan2(-delta.x(), delta.y());
        const double err = sim::normalize_heading(desired - state.heading);
        const double tol = config_.heading_tolerance_deg * std::numbers::pi / 180.0;
        if (std::abs(err) > tol) {
            return err > 0.0 ? sim::Action::TurnLeft : sim::Action::TurnRight;
        }
        if (moves(state)) {
            return sim::Action::Forward;
        }
        // Blocked: commit to the smallest turn whose forward step is free and gains ground.
        const int max_turns = static_cast<int>(std::ceil(180.0 / config_.agent.turn_deg));
        for (int k = 1; k <= max_turns; ++k) {
            for (const sim::Action a : {sim::Action::TurnLeft, sim::Action::TurnRight}) {
                sim::AgentState s = state;
                for (int n = 0; n < k; ++n) s = sim::step(scene_, s, a, config_.agent);
                const sim::AgentState next = sim::step(scene_, s, sim::Action::Forward, config_.agent);
                if (moves(s) && field_.distance(next.position) < d) {
                    pending_.assign(static_cast<std::size_t>(k - 1), a);
                    pending_.push_back(sim::Action::Forward);
                    return a;
                }
            }
        }
        return sim::Action::Forward;
    }

    sim::Scene scene_;
    OraclePolicyConfig config_;
    sim::GeodesicField field_;
    std::vector<sim::Action> pending_;
};

class ReplayPolicy final : public Policy {
public:
    explicit ReplayPolicy(std::vector<sim::Action> log) : log_(std::move(log)) {}

    std::vector<sim::Action> decide(const PolicyQuery&, int actions_per_round) override {
        if (next_ >= log_.size()) {
            throw ProtocolError("replay policy: action log exhausted after " + std::to_string(log_.size()) +
                                " actions");
        }
        std::vector<sim::Action> out;
        while (static_cast<int>(out.size()) < actions_per_round && next_ < log_.size()) {
            out.push_back(log_[next_++]);
        }
        // A log ends on Stop or on the step budget; either way the loop ends before padding runs.
        out.resize(actions_per_round, sim::Action::Stop);
        return out;
    }

private:
    std::vector<sim::Action> log_;
    std::size_t next_ = 0;
};

class ExplorePolicy final : public Policy {
public:
    explicit ExplorePolicy(std::uint64_t seed) : seed_(seed) {}

    std::vector<sim::Action> decide(const PolicyQuery&, int actions_per_round) override {
        std::vector<sim::Action> out;
        for (int k = 0; k < actions_per_round; ++k) {
            // Forward twice as likely as each turn so runs actually travel.
            const auto h = rng::hash_key(seed_, {counter_++}) % 4;
            out.push_back(h < 2 ? sim::Action::Forward : (h == 2 ? sim::Action::TurnLeft : sim::Action::TurnRight));
        }
        return out;
    }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

FrameRecord observe(const sim::Scene& scene, const sim::AgentState& state, std::uint64_t frame_index,
                    const EpisodeConfig& config, const std::optional<sim::NoiseSpec>& noise) {
    FrameRecord fr;
    fr.true_pose = sim::camera_pose(state, config.agent.camera_height);
    DepthMap clean =
        sim::render_depth(scene, fr.true_pose, config.camera, config.camera.height, config.camera.width, config.render);
    if (noise && noise->any()) {
        fr.depth = sim::inject_depth_noise(clean, *noise, frame_index);
        fr.pose = sim::inject_pose_noise(fr.true_pose, *noise, frame_index);
        fr.clean_depth = std::move(clean);
    } else {
        fr.depth = std::move(clean);
        fr.pose = fr.true_pose;
    }
    const StreamDims& d = config.dims;
    fr.visual = stub_visual_encode(frame_index, d.visual_rows, d.visual_cols, d.visual_dim, config.feature_seed);
    fr.geometry_raw =
        stub_3dfm_encode(frame_index, d.geometry_rows, d.geometry_cols, d.geometry_dim, config.feature_seed);
    return fr;
}

FrameObservation to_observation(const FrameRecord& fr, const MlpProjection& mlp) {
    return {fr.visual, project_geometry_features(fr.geometry_raw, mlp), fr.depth, fr.pose};
}

}  // namespace

std::unique_ptr<Policy> oracle_policy(const sim::Scene& scene, const Eigen::Vector2d& goal,
                                      const OraclePolicyConfig& config) {
    return std::make_unique<OraclePolicy>(scene, goal, config);
}

std::unique_ptr<Policy> replay_policy(std::vector<sim::Action> action_log) {
    return std::make_unique<ReplayPolicy>(std::move(action_log));
}

std::unique_ptr<Policy> explore_policy(std::uint64_t seed) {
    return std::make_unique<ExplorePolicy>(seed);
}

TrajectoryRecord run_episode(const Episode& episode, const sim::Scene& scene, Policy& policy,
                             const MlpProjection& mlp, const EpisodeConfig& config,
                             const std::optional<sim::NoiseSpec>& noise) {
    episode.validate();
    config.bev.validate();
    if (noise) {
        noise->validate();
    }
    if (!sim::disc_is_free(scene, episode.start.position, config.agent.radius)) {
        throw SimError("episode " + episode.id + ": start is not in free space");
    }

    TrajectoryRecord rec;
    rec.episode = episode;
    const int apr = episode.cadence.actions_per_round;

    sim::AgentState state = episode.start;
    std::int64_t step = 0;
    std::deque<FrameObservation> history;
    std::shared_ptr<const BevSnapshot> bev;
    std::uint64_t next_snapshot = 1;
    int round_in_window = 0;
    std::optional<FeatureMap> prev_frame;
    std::vector<sim::Action> prev_actions;

    while (step < episode.max_steps && !rec.stopped) {
        const std::uint64_t frame_index = rec.frames.size();
        FrameRecord fr = observe(scene, state, frame_index, config, noise);
        fr.step_index = step;
        history.push_back(to_observation(fr, mlp));
        while (static_cast<int>(history.size()) > episode.history_frames) {
            history.pop_front();
        }

        if (bev_refresh_due(step, episode.cadence)) {
            const std::vector<FrameObservation> window(history.begin(), history.end());
            BevBuild build = build_ga_bev(window, fr.pose, config.camera, config.bev);
            build.map.source_step = step;
            auto snap = std::make_shared<BevSnapshot>();
            snap->id = next_snapshot++;
            snap->step_index = step;
            snap->map = std::move(build.map);
            snap->stats = build.stats;
            rec.builds.push_back({snap->id, step, frame_index, snap->stats});
            rec.queries_per_snapshot.push_back(0);
            bev = std::move(snap);
            round_in_window = 0;
        }

        PolicyQuery query;
        query.instruction = &episode.instruction;
        query.bev = bev;
        query.current_frame = &fr.visual;
        if (round_in_window > 0 && prev_frame) {
            query.previous_frame = &*prev_frame;
            query.previous_actions = &prev_actions;
        }
        query.round_in_window = round_in_window;
        query.step_index = step;
        query.state = state;

        const std::vector<sim::Action> actions = policy.decide(query, apr);
        ++rec.queries_per_snapshot.back();
        if (static_cast<int>(actions.size()) != apr) {
            throw ProtocolError("policy returned " + std::to_string(actions.size()) + " actions, expected " +
                                std::to_string(apr));
        }

        std::vector<sim::Action> executed;
        for (const sim::Action a : actions) {
            if (step >= episode.max_steps) {
                break;
            }
            if (a != sim::Action::Stop) {
                state = sim::step(scene, state, a, config.agent);
            }
            rec.steps.push_back({a, state, bev->id, bev->stats.tokens});
            executed.push_back(a);
            ++step;
            if (a == sim::Action::Stop) {
                rec.stopped = true;
                break;
            }
        }
        prev_frame = fr.visual;
        prev_actions = std::move(executed);
        rec.frames.push_back(std::move(fr));
        ++round_in_window;
    }
    return rec;
}

std::vector<ReplayedBuild> rebuild_bevs(const std::vector<FrameRecord>& frames, const MlpProjection& mlp,
                                        const CameraIntrinsics& K, const BevConfig& bev, const Cadence& cadence,
                                        int history_frames) {
    cadence.validate();
    std::vector<std::optional<FrameObservation>> cache(frames.size());
    auto obs = [&](std::size_t f) -> const FrameObservation& {
        if (!cache[f]) {
            cache[f] = to_observation(frames[f], mlp);
        }
        return *cache[f];
    };

    std::vector<ReplayedBuild> out;
    std::int64_t last_step = -1;
    for (std::size_t f = 0; f < frames.size(); ++f) {
        const std::int64_t s = frames[f].step_index;
        if (s == last_step || !bev_refresh_due(s, cadence)) {
            continue;
        }
        last_step = s;
        const HistoryWindow w = history_window(f, history_frames);
        std::vector<FrameObservation> window;
        for (std::size_t k = w.begin; k < w.end; ++k) {
            window.push_back(obs(k));
        }
        BevBuild build = build_ga_bev(window, frames[f].pose, K, bev);
        build.map.source_step = s;
        out.push_back({f, s, std::move(build)});
        for (std::size_t k = 0; k < w.begin; ++k) {
            cache[k].reset();
        }
    }
    return out;
}

double cell_reassignment_fraction(const TrajectoryRecord& record, const EpisodeConfig& config) {
    using Key = std::tuple<int, std::uint32_t, std::uint32_t>;
    std::size_t surviving = 0;
    std::size_t changed = 0;
    const StreamDims& d = config.dims;
    for (const BuildRecord& b : record.builds) {
        const HistoryWindow w = history_window(b.frame_index, record.episode.history_frames);
        std::vector<FrameObservation> clean;
        std::vector<FrameObservation> noisy;
        for (std::size_t k = w.begin; k < w.end; ++k) {
            const FrameRecord& fr = record.frames[k];
            if (!fr.clean_depth) {
                throw ContractViolation("cell_reassignment_fraction: frame " + std::to_string(k) +
                                        " has no clean depth");
            }
            // Only positions matter here; one-channel placeholder features keep lifting cheap.
            FeatureMap v(d.visual_rows, d.visual_cols, 1, Stream::Visual);
            FeatureMap g(d.geometry_rows, d.geometry_cols, 1, Stream::Geometry);
            clean.push_back({v, g, *fr.clean_depth, fr.true_pose});
            noisy.push_back({std::move(v), std::move(g), fr.depth, fr.pose});
        }
        const FrameRecord& cur = record.frames[b.frame_index];
        const PointFeatureSet pc = lift_history(clean, cur.true_pose, config.camera);
        const PointFeatureSet pn = lift_history(noisy, cur.pose, config.camera);
        const CellAssignment ac = bin_points(pc, config.bev);
        const CellAssignment an = bin_points(pn, config.bev);

        std::map<Key, std::optional<CellIndex>> noisy_cells;
        for (std::size_t k = 0; k < pn.size(); ++k) {
            noisy_cells[{static_cast<int>(pn.source[k]), pn.frame_index[k], pn.patch_index[k]}] = an.point_cell[k];
        }
        for (std::size_t k = 0; k < pc.size(); ++k) {
            if (!ac.point_cell[k]) continue;
            ++surviving;
            const auto it = noisy_cells.find({static_cast<int>(pc.source[k]), pc.frame_index[k], pc.patch_index[k]});
            if (it == noisy_cells.end() || !it->second || *it->second != *ac.point_cell[k]) {
                ++changed;
            }
        }
    }
    return surviving == 0 ? 0.0 : static_cast<double>(changed) / static_cast<double>(surviving);
}

}  // namespace gabev
