#include "gabev/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <fmt/format.h>
#include <json.hpp>

#include "gabev/errors.hpp"

namespace gabev {

const char* to_string(IoErrorKind kind) {
    switch (kind) {
        case IoErrorKind::MissingFile: return "missing file";
        case IoErrorKind::BadMagic: return "bad magic";
        case IoErrorKind::DimOverflow: return "dimension overflow";
        case IoErrorKind::Truncated: return "truncated";
        case IoErrorKind::VersionMismatch: return "version mismatch";
        case IoErrorKind::ShapeMismatch: return "shape mismatch";
        case IoErrorKind::NonFinite: return "non-finite value";
        case IoErrorKind::Parse: return "parse error";
        case IoErrorKind::Write: return "write error";
    }
    return "io error";
}

}  // namespace gabev

namespace gabev::io {

using nlohmann::json;

namespace {

constexpr std::array<std::uint8_t, 16> kTensorMagic = {'G', 'A', 'B', 'E', 'V', 'T', 'E', 'N', 0, 0, 0, 0, 0, 0, 0, 1};
constexpr std::array<std::uint8_t, 8> kMlpMagic = {'G', 'A', 'B', 'E', 'V', 'M', 'L', 'P'};
constexpr int kMlpVersion = 1;
constexpr std::uint32_t kMaxRank = 8;
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 36;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(p[b]) << (8 * b);
    return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(p[b]) << (8 * b);
    return v;
}

void put_f32s(std::vector<std::uint8_t>& out, std::span<const float> values) {
    for (float f : values) put_u32(out, std::bit_cast<std::uint32_t>(f));
}

void put_f64s(std::vector<std::uint8_t>& out, std::span<const double> values) {
    for (double d : values) put_u64(out, std::bit_cast<std::uint64_t>(d));
}

std::vector<float> get_f32s(const std::uint8_t* p, std::size_t n) {
    std::vector<float> out(n);
    for (std::size_t k = 0; k < n; ++k) out[k] = std::bit_cast<float>(get_u32(p + 4 * k));
    return out;
}

std::vector<double> get_f64s(const std::uint8_t* p, std::size_t n) {
    std::vector<double> out(n);
    for (std::size_t k = 0; k < n; ++k) out[k] = std::bit_cast<double>(get_u64(p + 8 * k));
    return out;
}

std::size_t dtype_size(DType t) {
    switch (t) {
        case DType::F32: return 4;
        case DType::F64: return 8;
        case DType::U8: return 1;
    }
    return 0;
}

std::string frame_file(const char* prefix, std::size_t f) {
    return fmt::format("{}_{:05d}.bin", prefix, f);
}

json pose_json_free(const sim::AgentState& s) {
    return json::array({s.position.x(), s.position.y(), s.heading});
}

sim::AgentState state_from_json(const json& j) {
    sim::AgentState s;
    s.position = {j.at(0).get<double>(), j.at(1).get<double>()};
    s.heading = j.at(2).get<double>();
    return s;
}

json stats_json(const TokenStats& s) {
    return {{"tokens", s.tokens},
            {"frames", s.frames},
            {"visual_points", s.visual_points},
            {"geometry_points", s.geometry_points},
            {"dropped_patches", s.dropped_patches},
            {"discarded_points", s.discarded_points}};
}

TokenStats stats_from_json(const json& j) {
    TokenStats s;
    s.tokens = j.at("tokens").get<std::size_t>();
    s.frames = j.at("frames").get<std::size_t>();
    s.visual_points = j.at("visual_points").get<std::size_t>();
    s.geometry_points = j.at("geometry_points").get<std::size_t>();
    s.dropped_patches = j.at("dropped_patches").get<std::size_t>();
    s.discarded_points = j.at("discarded_points").get<std::size_t>();
    return s;
}

json parse_json(const std::string& text, const std::string& name) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw IoError(IoErrorKind::Parse, name, e.what());
    }
}

}  // namespace

std::uint64_t Tensor::element_count() const {
    std::uint64_t n = 1;
    for (std::uint64_t d : dims) n *= d;
    return n;
}

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
    if (t.payload.size() != t.element_count() * dtype_size(t.dtype)) {
        throw ContractViolation("encode_tensor: payload length does not match dims");
    }
    std::vector<std::uint8_t> out(kTensorMagic.begin(), kTensorMagic.end());
    put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
    for (std::uint64_t d : t.dims) put_u64(out, d);
    out.push_back(static_cast<std::uint8_t>(t.dtype));
    out.insert(out.end(), t.payload.begin(), t.payload.end());
    return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes, const std::string& name) {
    if (bytes.size() < kTensorMagic.size()) {
        throw IoError(IoErrorKind::Truncated, name, "shorter than the magic");
    }
    if (!std::equal(kTensorMagic.begin(), kTensorMagic.end() - 1, bytes.begin())) {
        throw IoError(IoErrorKind::BadMagic, name, "not a tensor blob");
    }
    if (bytes[kTensorMagic.size() - 1] != kTensorMagic.back()) {
        throw IoError(IoErrorKind::VersionMismatch, name,
                      fmt::format("tensor format version {}", bytes[kTensorMagic.size() - 1]));
    }
    std::size_t pos = kTensorMagic.size();
    if (bytes.size() < pos + 4) {
        throw IoError(IoErrorKind::Truncated, name, "missing rank");
    }
    const std::uint32_t rank = get_u32(bytes.data() + pos);
    pos += 4;
    if (rank > kMaxRank) {
        throw IoError(IoErrorKind::DimOverflow, name, fmt::format("rank {} exceeds {}", rank, kMaxRank));
    }
    if (bytes.size() < pos + 8ull * rank + 1) {
        throw IoError(IoErrorKind::Truncated, name, "header cut short");
    }
    Tensor t;
    std::uint64_t count = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
        const std::uint64_t d = get_u64(bytes.data() + pos);
        pos += 8;
        if (d != 0 && count > kMaxElements / d) {
            throw IoError(IoErrorKind::DimOverflow, name, "element count overflows");
        }
        count *= d;
        t.dims.push_back(d);
    }
    const std::uint8_t code = bytes[pos++];
    if (code < 1 || code > 3) {
        throw IoError(IoErrorKind::Parse, name, fmt::format("unknown dtype code {}", code));
    }
    t.dtype = static_cast<DType>(code);
    const std::uint64_t want = count * dtype_size(t.dtype);
    const std::uint64_t have = bytes.size() - pos;
    if (have < want) {
        throw IoError(IoErrorKind::Truncated, name, fmt::format("payload has {} of {} bytes", have, want));
    }
    if (have > want) {
        throw IoError(IoErrorKind::ShapeMismatch, name, fmt::format("{} trailing bytes", have - want));
    }
    t.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
    return t;
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError(IoErrorKind::MissingFile, path.string(), "cannot open");
    }
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const fs::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError(IoErrorKind::Write, path.string(), "cannot open for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError(IoErrorKind::Write, path.string(), "write failed");
    }
}

void write_text(const fs::path& path, const std::string& text) {
    write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text(const fs::path& path) {
    const auto bytes = read_file(path);
    return std::string(bytes.begin(), bytes.end());
}

void write_tensor(const fs::path& path, const Tensor& t) {
    write_file(path, encode_tensor(t));
}

Tensor read_tensor(const fs::path& path) {
    return decode_tensor(read_file(path), path.string());
}

Tensor tensor_from(const FeatureMap& map) {
    Tensor t;
    t.dims = {static_cast<std::uint64_t>(map.rows()), static_cast<std::uint64_t>(map.cols()),
              static_cast<std::uint64_t>(map.dim())};
    t.dtype = DType::F32;
    put_f32s(t.payload, map.data());
    return t;
}

FeatureMap feature_map_from(const Tensor& t, Stream stream, const std::string& name) {
    if (t.dtype != DType::F32 || t.dims.size() != 3) {
        throw IoError(IoErrorKind::ShapeMismatch, name, "feature map must be a rank-3 f32 tensor");
    }
    auto values = get_f32s(t.payload.data(), t.element_count());
    if (!std::all_of(values.begin(), values.end(), [](float v) { return std::isfinite(v); })) {
        throw IoError(IoErrorKind::NonFinite, name, "feature map holds non-finite values");
    }
    return FeatureMap(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]), static_cast<int>(t.dims[2]),
                      std::move(values), stream);
}

Tensor tensor_from_pose(const Pose& pose) {
    std::array<double, 12> v{};
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) v[r * 3 + c] = pose.rotation()(r, c);
    }
    for (int k = 0; k < 3; ++k) v[9 + k] = pose.translation()[k];
    Tensor t;
    t.dims = {12};
    t.dtype = DType::F64;
    put_f64s(t.payload, v);
    return t;
}

Pose pose_from(const Tensor& t, const std::string& name) {
    if (t.dtype != DType::F64 || t.dims != std::vector<std::uint64_t>{12}) {
        throw IoError(IoErrorKind::ShapeMismatch, name, "pose must be 12 f64 values");
    }
    const auto v = get_f64s(t.payload.data(), 12);
    Eigen::Matrix3d R;
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) R(r, c) = v[r * 3 + c];
    }
    try {
        return Pose(R, Eigen::Vector3d(v[9], v[10], v[11]));
    } catch (const ValidationError& e) {
        throw IoError(IoErrorKind::NonFinite, name, e.what());
    }
}

void write_depth(const fs::path& values_path, const fs::path& mask_path, const DepthMap& depth) {
    Tensor values;
    values.dims = {static_cast<std::uint64_t>(depth.rows()), static_cast<std::uint64_t>(depth.cols())};
    values.dtype = DType::F64;
    put_f64s(values.payload, depth.values());

    Tensor mask;
    const std::size_t n = depth.size();
    mask.dims = {(n + 7) / 8};
    mask.dtype = DType::U8;
    mask.payload.assign((n + 7) / 8, 0);
    for (std::size_t k = 0; k < n; ++k) {
        if (depth.mask()[k]) mask.payload[k / 8] |= static_cast<std::uint8_t>(1u << (k % 8));
    }
    write_tensor(values_path, values);
    write_tensor(mask_path, mask);
}

DepthMap read_depth(const fs::path& values_path, const fs::path& mask_path) {
    const Tensor values = read_tensor(values_path);
    const Tensor mask = read_tensor(mask_path);
    if (values.dtype != DType::F64 || values.dims.size() != 2) {
        throw IoError(IoErrorKind::ShapeMismatch, values_path.string(), "depth must be a rank-2 f64 tensor");
    }
    const auto rows = static_cast<int>(values.dims[0]);
    const auto cols = static_cast<int>(values.dims[1]);
    const std::size_t n = static_cast<std::size_t>(rows) * cols;
    if (mask.dtype != DType::U8 || mask.dims != std::vector<std::uint64_t>{(n + 7) / 8}) {
        throw IoError(IoErrorKind::ShapeMismatch, mask_path.string(), "mask does not match the depth shape");
    }
    const auto v = get_f64s(values.payload.data(), n);
    DepthMap depth(rows, cols, 0.0, false);
    for (std::size_t k = 0; k < n; ++k) {
        if (!(mask.payload[k / 8] & (1u << (k % 8)))) continue;
        if (!std::isfinite(v[k]) || v[k] < 0.0) {
            throw IoError(IoErrorKind::NonFinite, values_path.string(), "valid depth is negative or non-finite");
        }
        depth.set(static_cast<int>(k / cols), static_cast<int>(k % cols), v[k]);
    }
    return depth;
}

void save_mlp_weights(const MlpProjection& mlp, const fs::path& path) {
    mlp.validate();
    const json header = {{"format", "gabev-mlp"},       {"version", kMlpVersion},   {"dtype", "f32"},
                         {"in_dim", mlp.in_dim},       {"hidden_dim", mlp.hidden_dim}, {"out_dim", mlp.out_dim}};
    const std::string text = header.dump();
    std::vector<std::uint8_t> out(kMlpMagic.begin(), kMlpMagic.end());
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());
    put_f32s(out, mlp.w1);
    put_f32s(out, mlp.b1);
    put_f32s(out, mlp.w2);
    put_f32s(out, mlp.b2);
    write_file(path, out);
}

MlpProjection load_mlp_weights(const fs::path& path) {
    const std::string name = path.string();
    const auto bytes = read_file(path);
    if (bytes.size() < kMlpMagic.size() + 4) {
        throw IoError(IoErrorKind::Truncated, name, "shorter than the header");
    }
    if (!std::equal(kMlpMagic.begin(), kMlpMagic.end(), bytes.begin())) {
        throw IoError(IoErrorKind::BadMagic, name, "not an MLP weight file");
    }
    const std::uint32_t header_len = get_u32(bytes.data() + kMlpMagic.size());
    const std::size_t body = kMlpMagic.size() + 4 + header_len;
    if (bytes.size() < body) {
        throw IoError(IoErrorKind::Truncated, name, "JSON header cut short");
    }
    const json header = parse_json(std::string(bytes.begin() + kMlpMagic.size() + 4, bytes.begin() + body), name);
    if (header.value("format", "") != "gabev-mlp" || header.value("dtype", "") != "f32") {
        throw IoError(IoErrorKind::Parse, name, "header format/dtype not recognized");
    }
    if (header.value("version", -1) != kMlpVersion) {
        throw IoError(IoErrorKind::VersionMismatch, name, fmt::format("version {}", header.value("version", -1)));
    }
    MlpProjection m;
    m.in_dim = header.value("in_dim", 0);
    m.hidden_dim = header.value("hidden_dim", 0);
    m.out_dim = header.value("out_dim", 0);
    if (m.in_dim < 1 || m.hidden_dim < 1 || m.out_dim < 1) {
        throw IoError(IoErrorKind::ShapeMismatch, name, "header dims must be >= 1");
    }
    const std::uint64_t n1 = static_cast<std::uint64_t>(m.hidden_dim) * m.in_dim;
    const std::uint64_t n2 = static_cast<std::uint64_t>(m.out_dim) * m.hidden_dim;
    const std::uint64_t floats = n1 + m.hidden_dim + n2 + m.out_dim;
    const std::uint64_t have = bytes.size() - body;
    if (have < 4 * floats) {
        throw IoError(IoErrorKind::Truncated, name, fmt::format("payload has {} of {} bytes", have, 4 * floats));
    }
    if (have > 4 * floats) {
        throw IoError(IoErrorKind::ShapeMismatch, name, fmt::format("{} trailing bytes", have - 4 * floats));
    }
    const std::uint8_t* p = bytes.data() + body;
    m.w1 = get_f32s(p, n1);
    p += 4 * n1;
    m.b1 = get_f32s(p, m.hidden_dim);
    p += 4 * static_cast<std::size_t>(m.hidden_dim);
    m.w2 = get_f32s(p, n2);
    p += 4 * n2;
    m.b2 = get_f32s(p, m.out_dim);
    try {
        m.validate();
    } catch (const ValidationError& e) {
        throw IoError(IoErrorKind::NonFinite, name, e.what());
    }
    return m;
}

std::string scene_to_json(const sim::Scene& scene) {
    json obstacles = json::array();
    for (const sim::Obstacle& o : scene.obstacles) {
        obstacles.push_back({{"min", {o.footprint.min.x(), o.footprint.min.y()}},
                             {"max", {o.footprint.max.x(), o.footprint.max.y()}},
                             {"height", o.height}});
    }
    const json j = {{"name", scene.name},
                    {"bounds",
                     {{"min", {scene.bounds.min.x(), scene.bounds.min.y()}},
                      {"max", {scene.bounds.max.x(), scene.bounds.max.y()}}}},
                    {"wall_height", scene.wall_height},
                    {"floor", scene.floor},
                    {"ceiling", scene.ceiling},
                    {"obstacles", obstacles}};
    return j.dump(2) + "\n";
}

sim::Scene scene_from_json(const std::string& text, const std::string& name) {
    const json j = parse_json(text, name);
    sim::Scene s;
    try {
        auto vec2 = [](const json& a) { return Eigen::Vector2d(a.at(0).get<double>(), a.at(1).get<double>()); };
        s.name = j.value("name", "");
        s.bounds.min = vec2(j.at("bounds").at("min"));
        s.bounds.max = vec2(j.at("bounds").at("max"));
        s.wall_height = j.value("wall_height", 2.5);
        s.floor = j.value("floor", true);
        s.ceiling = j.value("ceiling", true);
        for (const json& o : j.value("obstacles", json::array())) {
            sim::Obstacle ob;
            ob.footprint.min = vec2(o.at("min"));
            ob.footprint.max = vec2(o.at("max"));
            ob.height = o.value("height", 1.0);
            s.obstacles.push_back(ob);
        }
    } catch (const json::exception& e) {
        throw IoError(IoErrorKind::Parse, name, e.what());
    }
    s.validate();
    return s;
}

sim::Scene load_scene(const fs::path& path) {
    return scene_from_json(read_text(path), path.string());
}

void save_scene(const sim::Scene& scene, const fs::path& path) {
    write_text(path, scene_to_json(scene));
}

namespace {

json manifest_json(const TrajectoryArchive& a) {
    const EpisodeConfig& c = a.config;
    const Episode& e = a.record.episode;
    json frames = json::array();
    for (const FrameRecord& f : a.record.frames) {
        frames.push_back({{"step_index", f.step_index}, {"has_clean_depth", f.clean_depth.has_value()}});
    }
    json noise = nullptr;
    if (a.noise) {
        noise = {{"depth_sigma", a.noise->depth_sigma},
                 {"pose_sigma", a.noise->pose_sigma},
                 {"rot_sigma_deg", a.noise->rot_sigma_deg},
                 {"seed", a.noise->seed}};
    }
    return {
        {"schema_version", kArchiveSchemaVersion},
        {"episode_id", e.id},
        {"instruction", e.instruction},
        {"scene_ref", e.scene_ref},
        {"frame_count", a.record.frames.size()},
        {"frames", frames},
        {"seed", a.seed},
        {"feature_seed", c.feature_seed},
        {"camera", {{"fx", c.camera.fx}, {"fy", c.camera.fy}, {"cx", c.camera.cx}, {"cy", c.camera.cy},
                    {"width", c.camera.width}, {"height", c.camera.height}}},
        {"dims", {{"visual_rows", c.dims.visual_rows}, {"visual_cols", c.dims.visual_cols},
                  {"visual_dim", c.dims.visual_dim}, {"geometry_rows", c.dims.geometry_rows},
                  {"geometry_cols", c.dims.geometry_cols}, {"geometry_dim", c.dims.geometry_dim},
                  {"hidden_dim", c.dims.hidden_dim}}},
        {"cadence", {{"actions_per_round", e.cadence.actions_per_round}, {"rounds_per_bev", e.cadence.rounds_per_bev}}},
        {"history_frames", e.history_frames},
        {"max_steps", e.max_steps},
        {"start", pose_json_free(e.start)},
        {"goal", {e.goal.x(), e.goal.y()}},
        {"agent", {{"radius", c.agent.radius}, {"camera_height", c.agent.camera_height}, {"step_m", c.agent.step_m},
                   {"turn_deg", c.agent.turn_deg}, {"contact_margin", c.agent.contact_margin}}},
        {"render", {{"max_range", c.render.max_range}}},
        {"bev", {{"cell_size", c.bev.cell_size}, {"range", c.bev.range}, {"embed_dim", c.bev.embed_dim},
                 {"fusion", c.bev.fusion == FusionMode::GlobalMean ? "global" : "hierarchical"},
                 {"embedding", c.bev.embedding == EmbeddingCoords::MetricCenter ? "metric" : "index"},
                 {"tau", c.bev.embedding_tau}}},
        {"noise", noise},
    };
}

json actions_json(const TrajectoryRecord& r) {
    json actions = json::array();
    json states = json::array();
    json snapshots = json::array();
    json tokens = json::array();
    for (const StepRecord& s : r.steps) {
        actions.push_back(sim::to_string(s.action));
        states.push_back(pose_json_free(s.state));
        snapshots.push_back(s.snapshot);
        tokens.push_back(s.tokens);
    }
    json builds = json::array();
    for (const BuildRecord& b : r.builds) {
        builds.push_back({{"snapshot", b.snapshot},
                          {"step_index", b.step_index},
                          {"frame_index", b.frame_index},
                          {"stats", stats_json(b.stats)}});
    }
    return {{"actions", actions}, {"states", states},     {"snapshots", snapshots},
            {"tokens", tokens},   {"builds", builds},     {"queries_per_snapshot", r.queries_per_snapshot},
            {"stopped", r.stopped}};
}

}  // namespace

void write_archive(const fs::path& dir, const TrajectoryArchive& a) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw IoError(IoErrorKind::Write, dir.string(), ec.message());
    }
    write_text(dir / "manifest.json", manifest_json(a).dump(2) + "\n");
    write_text(dir / "actions.json", actions_json(a.record).dump(2) + "\n");
    save_scene(a.scene, dir / "scene.json");
    save_mlp_weights(a.mlp, dir / "mlp.bin");
    for (std::size_t f = 0; f < a.record.frames.size(); ++f) {
        const FrameRecord& fr = a.record.frames[f];
        write_depth(dir / frame_file("depth", f), dir / frame_file("mask", f), fr.depth);
        if (fr.clean_depth) {
            write_depth(dir / frame_file("clean_depth", f), dir / frame_file("clean_mask", f), *fr.clean_depth);
        }
        write_tensor(dir / frame_file("feat_v", f), tensor_from(fr.visual));
        write_tensor(dir / frame_file("feat_g", f), tensor_from(fr.geometry_raw));
        write_tensor(dir / frame_file("pose", f), tensor_from_pose(fr.pose));
        write_tensor(dir / frame_file("true_pose", f), tensor_from_pose(fr.true_pose));
    }
}

TrajectoryArchive read_archive(const fs::path& dir) {
    const fs::path manifest_path = dir / "manifest.json";
    if (!fs::exists(manifest_path)) {
        throw IoError(IoErrorKind::MissingFile, manifest_path.string(), "archive has no manifest");
    }
    const json m = parse_json(read_text(manifest_path), manifest_path.string());
    const int version = m.value("schema_version", -1);
    if (version != kArchiveSchemaVersion) {
        throw IoError(IoErrorKind::VersionMismatch, manifest_path.string(),
                      fmt::format("schema {} (expected {})", version, kArchiveSchemaVersion));
    }

    TrajectoryArchive a;
    EpisodeConfig& c = a.config;
    Episode& e = a.record.episode;
    std::vector<std::pair<std::int64_t, bool>> frame_meta;
    try {
        e.id = m.at("episode_id").get<std::string>();
        e.instruction = m.at("instruction").get<std::string>();
        e.scene_ref = m.at("scene_ref").get<std::string>();
        a.seed = m.at("seed").get<std::uint64_t>();
        c.feature_seed = m.at("feature_seed").get<std::uint64_t>();
        const json& cam = m.at("camera");
        c.camera.fx = cam.at("fx").get<double>();
        c.camera.fy = cam.at("fy").get<double>();
        c.camera.cx = cam.at("cx").get<double>();
        c.camera.cy = cam.at("cy").get<double>();
        c.camera.width = cam.at("width").get<int>();
        c.camera.height = cam.at("height").get<int>();
        const json& d = m.at("dims");
        c.dims.visual_rows = d.at("visual_rows").get<int>();
        c.dims.visual_cols = d.at("visual_cols").get<int>();
        c.dims.visual_dim = d.at("visual_dim").get<int>();
        c.dims.geometry_rows = d.at("geometry_rows").get<int>();
        c.dims.geometry_cols = d.at("geometry_cols").get<int>();
        c.dims.geometry_dim = d.at("geometry_dim").get<int>();
        c.dims.hidden_dim = d.at("hidden_dim").get<int>();
        e.cadence.actions_per_round = m.at("cadence").at("actions_per_round").get<int>();
        e.cadence.rounds_per_bev = m.at("cadence").at("rounds_per_bev").get<int>();
        e.history_frames = m.at("history_frames").get<int>();
        e.max_steps = m.at("max_steps").get<int>();
        e.start = state_from_json(m.at("start"));
        e.goal = {m.at("goal").at(0).get<double>(), m.at("goal").at(1).get<double>()};
        const json& ag = m.at("agent");
        c.agent.radius = ag.at("radius").get<double>();
        c.agent.camera_height = ag.at("camera_height").get<double>();
        c.agent.step_m = ag.at("step_m").get<double>();
        c.agent.turn_deg = ag.at("turn_deg").get<double>();
        c.agent.contact_margin = ag.at("contact_margin").get<double>();
        c.render.max_range = m.at("render").at("max_range").get<double>();
        const json& b = m.at("bev");
        c.bev.cell_size = b.at("cell_size").get<double>();
        c.bev.range = b.at("range").get<double>();
        c.bev.embed_dim = b.at("embed_dim").get<int>();
        c.bev.fusion = b.at("fusion").get<std::string>() == "global" ? FusionMode::GlobalMean : FusionMode::HierarchicalMean;
        c.bev.embedding = b.at("embedding").get<std::string>() == "metric" ? EmbeddingCoords::MetricCenter
                                                                          : EmbeddingCoords::GridIndex;
        c.bev.embedding_tau = b.at("tau").get<double>();
        if (!m.at("noise").is_null()) {
            const json& n = m.at("noise");
            a.noise = sim::NoiseSpec{n.at("depth_sigma").get<double>(), n.at("pose_sigma").get<double>(),
                                     n.at("rot_sigma_deg").get<double>(), n.at("seed").get<std::uint64_t>()};
        }
        for (const json& f : m.at("frames")) {
            frame_meta.emplace_back(f.at("step_index").get<std::int64_t>(), f.at("has_clean_depth").get<bool>());
        }
        if (m.at("frame_count").get<std::size_t>() != frame_meta.size()) {
            throw IoError(IoErrorKind::ShapeMismatch, manifest_path.string(), "frame_count disagrees with frames list");
        }
    } catch (const json::exception& ex) {
        throw IoError(IoErrorKind::Parse, manifest_path.string(), ex.what());
    }

    std::size_t depth_files = 0;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string fname = entry.path().filename().string();
        if (fname.rfind("depth_", 0) == 0 && entry.path().extension() == ".bin") ++depth_files;
    }
    if (depth_files > frame_meta.size()) {
        throw IoError(IoErrorKind::ShapeMismatch, manifest_path.string(),
                      fmt::format("{} depth blobs present, manifest lists {} frames", depth_files, frame_meta.size()));
    }

    a.scene = load_scene(dir / "scene.json");
    a.mlp = load_mlp_weights(dir / "mlp.bin");

    for (std::size_t f = 0; f < frame_meta.size(); ++f) {
        FrameRecord fr;
        fr.step_index = frame_meta[f].first;
        fr.depth = read_depth(dir / frame_file("depth", f), dir / frame_file("mask", f));
        if (frame_meta[f].second) {
            fr.clean_depth = read_depth(dir / frame_file("clean_depth", f), dir / frame_file("clean_mask", f));
        }
        const fs::path fv = dir / frame_file("feat_v", f);
        const fs::path fg = dir / frame_file("feat_g", f);
        fr.visual = feature_map_from(read_tensor(fv), Stream::Visual, fv.string());
        fr.geometry_raw = feature_map_from(read_tensor(fg), Stream::Geometry, fg.string());
        const fs::path fp = dir / frame_file("pose", f);
        const fs::path ft = dir / frame_file("true_pose", f);
        fr.pose = pose_from(read_tensor(fp), fp.string());
        fr.true_pose = pose_from(read_tensor(ft), ft.string());
        a.record.frames.push_back(std::move(fr));
    }

    const fs::path actions_path = dir / "actions.json";
    if (!fs::exists(actions_path)) {
        throw IoError(IoErrorKind::MissingFile, actions_path.string(), "archive has no action log");
    }
    const json j = parse_json(read_text(actions_path), actions_path.string());
    try {
        const json& acts = j.at("actions");
        const json& states = j.at("states");
        const json& snaps = j.at("snapshots");
        const json& toks = j.at("tokens");
        if (states.size() != acts.size() || snaps.size() != acts.size() || toks.size() != acts.size()) {
            throw IoError(IoErrorKind::ShapeMismatch, actions_path.string(), "per-step arrays differ in length");
        }
        for (std::size_t k = 0; k < acts.size(); ++k) {
            a.record.steps.push_back({sim::action_from_string(acts[k].get<std::string>()), state_from_json(states[k]),
                                      snaps[k].get<std::uint64_t>(), toks[k].get<std::size_t>()});
        }
        for (const json& b : j.at("builds")) {
            a.record.builds.push_back({b.at("snapshot").get<std::uint64_t>(), b.at("step_index").get<std::int64_t>(),
                                       b.at("frame_index").get<std::size_t>(), stats_from_json(b.at("stats"))});
        }
        a.record.queries_per_snapshot = j.at("queries_per_snapshot").get<std::vector<int>>();
        a.record.stopped = j.at("stopped").get<bool>();
    } catch (const json::exception& ex) {
        throw IoError(IoErrorKind::Parse, actions_path.string(), ex.what());
    } catch (const ValidationError& ex) {
        throw IoError(IoErrorKind::Parse, actions_path.string(), ex.what());
    }
    return a;
}

std::string bev_csv(const BevMap& map) {
    std::string out = "i,j,center_x,center_z,count_visual,count_geometry";
    const int d = map.tokens.empty() ? map.config.embed_dim : static_cast<int>(map.tokens.front().feature.size());
    for (int k = 0; k < d; ++k) out += fmt::format(",f{}", k);
    out += '\n';
    for (const BevToken& t : map.tokens) {
        out += fmt::format("{},{},{},{},{},{}", t.cell.i, t.cell.j, t.center_x, t.center_z, t.count_visual,
                           t.count_geometry);
        for (float f : t.feature) out += fmt::format(",{}", f);
        out += '\n';
    }
    return out;
}

std::vector<std::uint8_t> occupancy_pgm(const BevMap& map) {
    const int n = map.config.grid_n();
    const std::string header = fmt::format("P5\n{} {}\n255\n", n, n);
    std::vector<std::uint8_t> out(header.begin(), header.end());
    const std::size_t base = out.size();
    out.resize(base + static_cast<std::size_t>(n) * n, 0);
    // Image row = j (z), column = i (x).
    for (const BevToken& t : map.tokens) {
        out[base + static_cast<std::size_t>(t.cell.j) * n + t.cell.i] = 255;
    }
    return out;
}

void export_bev_csv(const BevMap& map, const fs::path& path) {
    write_text(path, bev_csv(map));
}

void export_occupancy_pgm(const BevMap& map, const fs::path& path) {
    write_file(path, occupancy_pgm(map));
}

}  // namespace gabev::io
