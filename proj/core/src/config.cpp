#include "gabev/config.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include <fmt/format.h>
#include <json.hpp>

#include "gabev/io.hpp"

namespace gabev {

using nlohmann::json;

namespace {

// 1-based line of the first occurrence of "key" in the text, or 0 if absent.
int line_of_key(const std::string& text, const std::string& key) {
    const auto pos = text.find("\"" + key + "\"");
    if (pos == std::string::npos) {
        return 0;
    }
    return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
}

class Reader {
public:
    Reader(const std::string& text, std::string source) : text_(text), source_(std::move(source)) {}

    [[noreturn]] void fail(const std::string& key, const std::string& message) const {
        const int line = line_of_key(text_, key);
        throw ConfigError(fmt::format("{}:{}: {}", source_, line, message));
    }

    template <typename T>
    void read(const json& obj, const std::string& key, T& out, const std::function<bool(const T&)>& check,
              const char* requirement) const {
        if (!obj.contains(key)) {
            return;
        }
        try {
            out = obj.at(key).get<T>();
        } catch (const json::exception&) {
            fail(key, fmt::format("'{}' has the wrong type", key));
        }
        if (check && !check(out)) {
            fail(key, fmt::format("'{}' {}", key, requirement));
        }
    }

    template <typename T>
    void read(const json& obj, const std::string& key, T& out) const {
        read<T>(obj, key, out, {}, "");
    }

    // Rejects keys outside `allowed` so typos do not pass silently.
    void only(const json& obj, std::initializer_list<const char*> allowed) const {
        for (const auto& [key, value] : obj.items()) {
            if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
                fail(key, fmt::format("unknown key '{}'", key));
            }
        }
    }

    const json* section(const json& root, const std::string& key) const {
        if (!root.contains(key)) {
            return nullptr;
        }
        if (!root.at(key).is_object()) {
            fail(key, fmt::format("'{}' must be an object", key));
        }
        return &root.at(key);
    }

private:
    const std::string& text_;
    std::string source_;
};

const std::function<bool(const double&)> positive = [](const double& v) { return std::isfinite(v) && v > 0.0; };
const std::function<bool(const double&)> non_negative = [](const double& v) { return std::isfinite(v) && v >= 0.0; };
const std::function<bool(const int&)> at_least_one = [](const int& v) { return v >= 1; };

}  // namespace

void RunConfig::finalize() {
    episode.camera = CameraIntrinsics::from_hfov(camera_hfov_deg, episode.camera.width, episode.camera.height);
    episode.bev.embed_dim = episode.dims.visual_dim;
    oracle.agent = episode.agent;
    noise.seed = seed;
    episode.bev.validate();
    cadence.validate();
    noise.validate();
    if (history_frames < 1 || max_steps < 1) {
        throw ValidationError("history_frames and max_steps must be >= 1");
    }
    if (min_goal_distance > max_goal_distance) {
        throw ValidationError("min_goal_distance exceeds max_goal_distance");
    }
}

RunConfig parse_run_config(const std::string& text, const std::string& source) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        const auto byte = std::min<std::size_t>(e.byte, text.size());
        const int line =
            1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
        throw ConfigError(fmt::format("{}:{}: invalid JSON ({})", source, line, e.what()));
    }
    if (!root.is_object()) {
        throw ConfigError(fmt::format("{}:1: top level must be an object", source));
    }

    const Reader r(text, source);
    r.only(root, {"seed", "bev", "features", "camera", "agent", "episode", "noise"});
    RunConfig c;
    r.read<std::uint64_t>(root, "seed", c.seed);

    if (const json* bev = r.section(root, "bev")) {
        r.only(*bev, {"cell_size", "range", "fusion", "embedding", "tau", "y_min", "y_max"});
        r.read<double>(*bev, "cell_size", c.episode.bev.cell_size, positive, "must be > 0");
        r.read<double>(*bev, "range", c.episode.bev.range, positive, "must be > 0");
        std::string fusion = c.episode.bev.fusion == FusionMode::GlobalMean ? "global" : "hierarchical";
        r.read<std::string>(*bev, "fusion", fusion,
                            [](const std::string& s) { return s == "global" || s == "hierarchical"; },
                            "must be \"global\" or \"hierarchical\"");
        c.episode.bev.fusion = fusion == "global" ? FusionMode::GlobalMean : FusionMode::HierarchicalMean;
        std::string emb = "metric";
        r.read<std::string>(*bev, "embedding", emb, [](const std::string& s) { return s == "metric" || s == "index"; },
                            "must be \"metric\" or \"index\"");
        c.episode.bev.embedding = emb == "metric" ? EmbeddingCoords::MetricCenter : EmbeddingCoords::GridIndex;
        r.read<double>(*bev, "tau", c.episode.bev.embedding_tau, positive, "must be > 0");
        if (bev->contains("y_min")) {
            double v = 0.0;
            r.read<double>(*bev, "y_min", v);
            c.episode.bev.y_min = v;
        }
        if (bev->contains("y_max")) {
            double v = 0.0;
            r.read<double>(*bev, "y_max", v);
            c.episode.bev.y_max = v;
        }
        const double n = 2.0 * c.episode.bev.range / c.episode.bev.cell_size;
        if (std::abs(n - std::round(n)) * c.episode.bev.cell_size > 1e-9) {
            r.fail("cell_size", "2*range must be an integer multiple of cell_size");
        }
    }

    if (const json* f = r.section(root, "features")) {
        r.only(*f, {"visual_rows", "visual_cols", "visual_dim", "geometry_rows", "geometry_cols", "geometry_dim",
                    "hidden_dim"});
        StreamDims& d = c.episode.dims;
        r.read<int>(*f, "visual_rows", d.visual_rows, at_least_one, "must be >= 1");
        r.read<int>(*f, "visual_cols", d.visual_cols, at_least_one, "must be >= 1");
        r.read<int>(*f, "visual_dim", d.visual_dim, [](const int& v) { return v >= 4 && v % 4 == 0; },
                    "must be a positive multiple of 4");
        r.read<int>(*f, "geometry_rows", d.geometry_rows, at_least_one, "must be >= 1");
        r.read<int>(*f, "geometry_cols", d.geometry_cols, at_least_one, "must be >= 1");
        r.read<int>(*f, "geometry_dim", d.geometry_dim, at_least_one, "must be >= 1");
        r.read<int>(*f, "hidden_dim", d.hidden_dim, at_least_one, "must be >= 1");
    }

    if (const json* cam = r.section(root, "camera")) {
        r.only(*cam, {"width", "height", "hfov_deg", "max_range"});
        r.read<int>(*cam, "width", c.episode.camera.width, at_least_one, "must be >= 1");
        r.read<int>(*cam, "height", c.episode.camera.height, at_least_one, "must be >= 1");
        r.read<double>(*cam, "hfov_deg", c.camera_hfov_deg, [](const double& v) { return v > 0.0 && v < 180.0; },
                       "must lie in (0, 180)");
        r.read<double>(*cam, "max_range", c.episode.render.max_range, positive, "must be > 0");
    }

    if (const json* ag = r.section(root, "agent")) {
        r.only(*ag, {"radius", "camera_height", "step_m", "turn_deg"});
        r.read<double>(*ag, "radius", c.episode.agent.radius, non_negative, "must be >= 0");
        r.read<double>(*ag, "camera_height", c.episode.agent.camera_height, positive, "must be > 0");
        r.read<double>(*ag, "step_m", c.episode.agent.step_m, positive, "must be > 0");
        r.read<double>(*ag, "turn_deg", c.episode.agent.turn_deg, positive, "must be > 0");
    }

    if (const json* ep = r.section(root, "episode")) {
        r.only(*ep, {"actions_per_round", "rounds_per_bev", "history_frames", "max_steps", "success_radius",
                     "stop_radius", "clearance_margin", "min_goal_distance", "max_goal_distance", "goal_retries"});
        r.read<int>(*ep, "actions_per_round", c.cadence.actions_per_round, at_least_one, "must be >= 1");
        r.read<int>(*ep, "rounds_per_bev", c.cadence.rounds_per_bev, at_least_one, "must be >= 1");
        r.read<int>(*ep, "history_frames", c.history_frames, at_least_one, "must be >= 1");
        r.read<int>(*ep, "max_steps", c.max_steps, at_least_one, "must be >= 1");
        r.read<double>(*ep, "success_radius", c.success_radius, non_negative, "must be >= 0");
        r.read<double>(*ep, "stop_radius", c.oracle.stop_radius, non_negative, "must be >= 0");
        r.read<double>(*ep, "clearance_margin", c.oracle.clearance_margin, non_negative, "must be >= 0");
        r.read<double>(*ep, "min_goal_distance", c.min_goal_distance, non_negative, "must be >= 0");
        r.read<double>(*ep, "max_goal_distance", c.max_goal_distance, positive, "must be > 0");
        r.read<int>(*ep, "goal_retries", c.goal_retries, at_least_one, "must be >= 1");
    }

    if (const json* n = r.section(root, "noise")) {
        r.only(*n, {"depth_sigma", "pose_sigma", "rot_sigma_deg"});
        r.read<double>(*n, "depth_sigma", c.noise.depth_sigma, non_negative, "must be >= 0");
        r.read<double>(*n, "pose_sigma", c.noise.pose_sigma, non_negative, "must be >= 0");
        r.read<double>(*n, "rot_sigma_deg", c.noise.rot_sigma_deg, non_negative, "must be >= 0");
    }

    try {
        c.finalize();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(fmt::format("{}:0: {}", source, e.what()));
    }
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    return parse_run_config(io::read_text(path), path.string());
}

std::string run_config_to_json(const RunConfig& c) {
    const EpisodeConfig& e = c.episode;
    json bev = {{"cell_size", e.bev.cell_size},
                {"range", e.bev.range},
                {"fusion", e.bev.fusion == FusionMode::GlobalMean ? "global" : "hierarchical"},
                {"embedding", e.bev.embedding == EmbeddingCoords::MetricCenter ? "metric" : "index"},
                {"tau", e.bev.embedding_tau}};
    if (e.bev.y_min) bev["y_min"] = *e.bev.y_min;
    if (e.bev.y_max) bev["y_max"] = *e.bev.y_max;
    const json j = {
        {"seed", c.seed},
        {"bev", bev},
        {"features", {{"visual_rows", e.dims.visual_rows}, {"visual_cols", e.dims.visual_cols},
                      {"visual_dim", e.dims.visual_dim}, {"geometry_rows", e.dims.geometry_rows},
                      {"geometry_cols", e.dims.geometry_cols}, {"geometry_dim", e.dims.geometry_dim},
                      {"hidden_dim", e.dims.hidden_dim}}},
        {"camera", {{"width", e.camera.width}, {"height", e.camera.height}, {"hfov_deg", c.camera_hfov_deg},
                    {"max_range", e.render.max_range}}},
        {"agent", {{"radius", e.agent.radius}, {"camera_height", e.agent.camera_height}, {"step_m", e.agent.step_m},
                   {"turn_deg", e.agent.turn_deg}}},
        {"episode", {{"actions_per_round", c.cadence.actions_per_round}, {"rounds_per_bev", c.cadence.rounds_per_bev},
                     {"history_frames", c.history_frames}, {"max_steps", c.max_steps},
                     {"success_radius", c.success_radius}, {"stop_radius", c.oracle.stop_radius},
                     {"clearance_margin", c.oracle.clearance_margin},
                     {"min_goal_distance", c.min_goal_distance}, {"max_goal_distance", c.max_goal_distance},
                     {"goal_retries", c.goal_retries}}},
        {"noise", {{"depth_sigma", c.noise.depth_sigma}, {"pose_sigma", c.noise.pose_sigma},
                   {"rot_sigma_deg", c.noise.rot_sigma_deg}}},
    };
    return j.dump(2) + "\n";
}

}  // namespace gabev
