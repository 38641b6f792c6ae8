#include "gabev/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "gabev/errors.hpp"
#include "gabev/random.hpp"

namespace gabev {

namespace {

// Stream salts keep the two stand-in encoders decorrelated under one seed.
constexpr std::uint64_t kGeometrySalt = 0x3D3D3D3D00000001ULL;
constexpr std::uint64_t kVisualSalt = 0x5161501500000002ULL;
constexpr std::uint64_t kMlpSalt = 0x4D4C500000000003ULL;

FeatureMap counter_features(std::uint64_t salt, std::uint64_t frame_index, int rows, int cols, int dim,
                            std::uint64_t seed, Stream stream) {
    if (rows < 1 || cols < 1 || dim < 1) {
        throw ContractViolation("stub encoder: dims must be >= 1");
    }
    FeatureMap map(rows, cols, dim, stream);
    auto data = map.data();
    std::size_t k = 0;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            for (int ch = 0; ch < dim; ++ch) {
                const std::uint64_t h = rng::hash_key(
                    seed ^ salt, {frame_index, static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(c),
                                  static_cast<std::uint64_t>(ch)});
                data[k++] = rng::symmetric_float(h);
            }
        }
    }
    return map;
}

}  // namespace

FeatureMap::FeatureMap(int rows, int cols, int dim, Stream stream)
    : rows_(rows), cols_(cols), dim_(dim), stream_(stream) {
    if (rows < 0 || cols < 0 || dim < 0) {
        throw ContractViolation("FeatureMap: negative dimensions");
    }
    data_.assign(static_cast<std::size_t>(rows) * cols * dim, 0.0f);
}

FeatureMap::FeatureMap(int rows, int cols, int dim, std::vector<float> data, Stream stream)
    : rows_(rows), cols_(cols), dim_(dim), stream_(stream), data_(std::move(data)) {
    if (rows < 0 || cols < 0 || dim < 0) {
        throw ContractViolation("FeatureMap: negative dimensions");
    }
    if (data_.size() != static_cast<std::size_t>(rows) * cols * dim) {
        throw ContractViolation("FeatureMap: data length " + std::to_string(data_.size()) + " != rows*cols*dim");
    }
}

bool FeatureMap::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

MlpProjection MlpProjection::zeros(int in_dim, int hidden_dim, int out_dim) {
    MlpProjection m;
    m.in_dim = in_dim;
    m.hidden_dim = hidden_dim;
    m.out_dim = out_dim;
    m.w1.assign(static_cast<std::size_t>(hidden_dim) * in_dim, 0.0f);
    m.b1.assign(hidden_dim, 0.0f);
    m.w2.assign(static_cast<std::size_t>(out_dim) * hidden_dim, 0.0f);
    m.b2.assign(out_dim, 0.0f);
    m.validate();
    return m;
}

MlpProjection MlpProjection::random(int in_dim, int hidden_dim, int out_dim, std::uint64_t seed) {
    MlpProjection m = zeros(in_dim, hidden_dim, out_dim);
    const float s1 = 1.0f / std::sqrt(static_cast<float>(in_dim));
    const float s2 = 1.0f / std::sqrt(static_cast<float>(hidden_dim));
    auto fill = [&](std::vector<float>& v, std::uint64_t tensor, float scale) {
        for (std::size_t k = 0; k < v.size(); ++k) {
            v[k] = scale * rng::symmetric_float(rng::hash_key(seed ^ kMlpSalt, {tensor, k}));
        }
    };
    fill(m.w1, 0, s1);
    fill(m.b1, 1, s1);
    fill(m.w2, 2, s2);
    fill(m.b2, 3, s2);
    return m;
}

void MlpProjection::validate() const {
    if (in_dim < 1 || hidden_dim < 1 || out_dim < 1) {
        throw ValidationError("mlp: dims must be >= 1");
    }
    if (w1.size() != static_cast<std::size_t>(hidden_dim) * in_dim || b1.size() != static_cast<std::size_t>(hidden_dim) ||
        w2.size() != static_cast<std::size_t>(out_dim) * hidden_dim || b2.size() != static_cast<std::size_t>(out_dim)) {
        throw ValidationError("mlp: weight shapes inconsistent with declared dims");
    }
    auto finite = [](const std::vector<float>& v) {
        return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
    };
    if (!finite(w1) || !finite(b1) || !finite(w2) || !finite(b2)) {
        throw ValidationError("mlp: non-finite weight");
    }
}

double gelu(double z) {
    return 0.5 * z * (1.0 + std::erf(z / std::numbers::sqrt2));
}

FeatureMap project_geometry_features(const FeatureMap& v, const MlpProjection& mlp) {
    if (v.dim() != mlp.in_dim) {
        throw ContractViolation("project_geometry_features: input dim " + std::to_string(v.dim()) +
                                " != mlp in_dim " + std::to_string(mlp.in_dim));
    }
    if (!v.all_finite()) {
        throw ContractViolation("project_geometry_features: input has non-finite entries");
    }
    FeatureMap out(v.rows(), v.cols(), mlp.out_dim, v.stream());
    std::vector<double> hidden(mlp.hidden_dim);
    for (int r = 0; r < v.rows(); ++r) {
        for (int c = 0; c < v.cols(); ++c) {
            const auto x = v.at(r, c);
            for (int h = 0; h < mlp.hidden_dim; ++h) {
                const float* w = mlp.w1.data() + static_cast<std::size_t>(h) * mlp.in_dim;
                double acc = mlp.b1[h];
                for (int i = 0; i < mlp.in_dim; ++i) {
                    acc += static_cast<double>(w[i]) * x[i];
                }
                hidden[h] = gelu(acc);
            }
            auto y = out.at(r, c);
            for (int o = 0; o < mlp.out_dim; ++o) {
                const float* w = mlp.w2.data() + static_cast<std::size_t>(o) * mlp.hidden_dim;
                double acc = mlp.b2[o];
                for (int h = 0; h < mlp.hidden_dim; ++h) {
                    acc += static_cast<double>(w[h]) * hidden[h];
                }
                y[o] = static_cast<float>(acc);
            }
        }
    }
    return out;
}

FeatureMap stub_3dfm_encode(std::uint64_t frame_index, int rows, int cols, int dim, std::uint64_t seed) {
    return counter_features(kGeometrySalt, frame_index, rows, cols, dim, seed, Stream::Geometry);
}

FeatureMap stub_visual_encode(std::uint64_t frame_index, int rows, int cols, int dim, std::uint64_t seed) {
    return counter_features(kVisualSalt, frame_index, rows, cols, dim, seed, Stream::Visual);
}

}  // namespace gabev
