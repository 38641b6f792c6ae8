#include "gabev/bev.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "gabev/errors.hpp"

namespace gabev {

int BevConfig::grid_n() const {
    return static_cast<int>(std::lround(2.0 * range / cell_size));
}

void BevConfig::validate() const {
    if (!(cell_size > 0.0) || !std::isfinite(cell_size)) {
        throw ValidationError("bev: cell_size must be positive");
    }
    if (!(range > 0.0) || !std::isfinite(range)) {
        throw ValidationError("bev: range must be positive");
    }
    if (std::abs(grid_n() * cell_size - 2.0 * range) > 1e-9) {
        throw ValidationError("bev: 2*range must be an integer multiple of cell_size");
    }
    if (embed_dim < 4 || embed_dim % 4 != 0) {
        throw ValidationError("bev: embed_dim must be a positive multiple of 4");
    }
    if (!(embedding_tau > 0.0)) {
        throw ValidationError("bev: embedding_tau must be positive");
    }
    if (y_min && y_max && *y_min > *y_max) {
        throw ValidationError("bev: y_min > y_max");
    }
}

std::optional<int> axis_cell(double coord, const BevConfig& config) {
    const int n = config.grid_n();
    if (!std::isfinite(coord) || coord < config.cell_lower(0) || coord >= config.cell_lower(n)) {
        return std::nullopt;
    }
    int i = static_cast<int>(std::floor((coord + config.range) / config.cell_size));
    i = std::clamp(i, 0, n - 1);
    // Division can round across an edge; settle against the interval bounds themselves.
    while (i > 0 && coord < config.cell_lower(i)) {
        --i;
    }
    while (i < n - 1 && coord >= config.cell_lower(i + 1)) {
        ++i;
    }
    return i;
}

CellAssignment bin_points(const PointFeatureSet& points, const BevConfig& config) {
    CellAssignment out;
    out.point_cell.resize(points.size());
    for (std::size_t k = 0; k < points.size(); ++k) {
        const Eigen::Vector3d& p = points.points[k];
        if ((config.y_min && p.y() < *config.y_min) || (config.y_max && p.y() > *config.y_max)) {
            ++out.discarded;
            continue;
        }
        const auto i = axis_cell(p.x(), config);
        const auto j = axis_cell(p.z(), config);
        if (!i || !j) {
            ++out.discarded;
            continue;
        }
        const CellIndex cell{*i, *j};
        out.point_cell[k] = cell;
        CellMembers& members = out.cells[cell];
        if (points.source[k] == Stream::Visual) {
            members.visual.push_back(k);
        } else {
            members.geometry.push_back(k);
        }
    }
    return out;
}

std::vector<float> position_embedding(double coord_x, double coord_z, int embed_dim, double tau) {
    if (embed_dim < 4 || embed_dim % 4 != 0) {
        throw ContractViolation("position_embedding: embed_dim must be a positive multiple of 4");
    }
    std::vector<float> e(embed_dim);
    const int half = embed_dim / 2;
    for (int k = 0; k < half / 2; ++k) {
        const double inv_freq = std::pow(tau, -4.0 * k / embed_dim);
        e[2 * k] = static_cast<float>(std::sin(coord_x * inv_freq));
        e[2 * k + 1] = static_cast<float>(std::cos(coord_x * inv_freq));
        e[half + 2 * k] = static_cast<float>(std::sin(coord_z * inv_freq));
        e[half + 2 * k + 1] = static_cast<float>(std::cos(coord_z * inv_freq));
    }
    return e;
}

std::vector<float> cell_embedding(const CellIndex& cell, const BevConfig& config) {
    if (config.embedding == EmbeddingCoords::GridIndex) {
        return position_embedding(cell.i, cell.j, config.embed_dim, config.embedding_tau);
    }
    return position_embedding(config.cell_center(cell.i), config.cell_center(cell.j), config.embed_dim,
                              config.embedding_tau);
}

namespace {

// Members sorted by (frame_index, patch_index) so sums are order-independent.
std::vector<std::size_t> canonical(std::vector<std::size_t> idx, const PointFeatureSet& points) {
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (points.frame_index[a] != points.frame_index[b]) {
            return points.frame_index[a] < points.frame_index[b];
        }
        if (points.patch_index[a] != points.patch_index[b]) {
            return points.patch_index[a] < points.patch_index[b];
        }
        return a < b;
    });
    return idx;
}

void accumulate(std::vector<double>& sum, const std::vector<std::size_t>& idx, const PointFeatureSet& points) {
    for (std::size_t k : idx) {
        const auto f = points.feature(k);
        for (std::size_t d = 0; d < sum.size(); ++d) {
            sum[d] += f[d];
        }
    }
}

}  // namespace

BevMap aggregate(const CellAssignment& assignment, const PointFeatureSet& points, const BevConfig& config) {
    config.validate();
    points.check_consistent();
    BevMap map;
    map.config = config;
    if (assignment.cells.empty()) {
        return map;
    }
    if (points.dim != config.embed_dim) {
        throw ContractViolation("aggregate: feature dim " + std::to_string(points.dim) + " != embed_dim " +
                                std::to_string(config.embed_dim));
    }
    const auto dim = static_cast<std::size_t>(points.dim);
    map.tokens.reserve(assignment.cells.size());
    for (const auto& [cell, members] : assignment.cells) {
        if (members.total() == 0) {
            continue;
        }
        const auto visual = canonical(members.visual, points);
        const auto geometry = canonical(members.geometry, points);

        std::vector<double> pooled(dim, 0.0);
        if (config.fusion == FusionMode::GlobalMean) {
            accumulate(pooled, visual, points);
            accumulate(pooled, geometry, points);
            const double n = static_cast<double>(members.total());
            for (double& v : pooled) {
                v /= n;
            }
        } else {
            int streams = 0;
            for (const auto* idx : {&visual, &geometry}) {
                if (idx->empty()) {
                    continue;
                }
                std::vector<double> s(dim, 0.0);
                accumulate(s, *idx, points);
                const double n = static_cast<double>(idx->size());
                for (std::size_t d = 0; d < dim; ++d) {
                    pooled[d] += s[d] / n;
                }
                ++streams;
            }
            for (double& v : pooled) {
                v /= streams;
            }
        }

        BevToken token;
        token.cell = cell;
        token.count_visual = static_cast<std::uint32_t>(visual.size());
        token.count_geometry = static_cast<std::uint32_t>(geometry.size());
        token.center_x = config.cell_center(cell.i);
        token.center_z = config.cell_center(cell.j);
        const auto e = cell_embedding(cell, config);
        token.feature.resize(dim);
        for (std::size_t d = 0; d < dim; ++d) {
            token.feature[d] = static_cast<float>(pooled[d]) + e[d];
        }
        map.tokens.push_back(std::move(token));
    }
    return map;
}

PointFeatureSet lift_history(const std::vector<FrameObservation>& history, const Pose& current_agent_pose,
                             const CameraIntrinsics& K, TokenStats* stats) {
    PointFeatureSet all;
    for (std::size_t f = 0; f < history.size(); ++f) {
        const FrameObservation& obs = history[f];
        const auto frame = static_cast<std::uint32_t>(f);
        for (const FeatureMap* stream : {&obs.visual, &obs.geometry}) {
            if (stream->rows() == 0 || stream->cols() == 0) {
                continue;
            }
            const DepthMap depth = resize_depth(obs.depth, stream->rows(), stream->cols());
            PointFeatureSet pts = backproject_patch_grid(*stream, depth, K, obs.pose, frame);
            if (stats) {
                const std::size_t patches = static_cast<std::size_t>(stream->rows()) * stream->cols();
                stats->dropped_patches += patches - pts.size();
                (stream->stream() == Stream::Visual ? stats->visual_points : stats->geometry_points) += pts.size();
            }
            all.append(pts);
        }
    }
    return world_to_agent(all, current_agent_pose);
}

BevBuild build_ga_bev(const std::vector<FrameObservation>& history, const Pose& current_agent_pose,
                      const CameraIntrinsics& K, const BevConfig& config) {
    if (history.empty()) {
        throw ContractViolation("build_ga_bev: history is empty");
    }
    config.validate();
    BevBuild out;
    out.stats.frames = history.size();
    const PointFeatureSet points = lift_history(history, current_agent_pose, K, &out.stats);
    const CellAssignment assignment = bin_points(points, config);
    out.map = aggregate(assignment, points, config);
    out.stats.discarded_points = assignment.discarded;
    out.stats.tokens = out.map.size();
    return out;
}

std::size_t token_count(const BevMap& map) {
    return map.tokens.size();
}

}  // namespace gabev
