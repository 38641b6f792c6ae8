#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gabev/geometry.hpp"

namespace gabev {

/// Row-major rows x cols grid of dim-length float vectors.
class FeatureMap {
public:
    FeatureMap() = default;
    FeatureMap(int rows, int cols, int dim, Stream stream = Stream::Visual);
    FeatureMap(int rows, int cols, int dim, std::vector<float> data, Stream stream = Stream::Visual);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    int dim() const { return dim_; }
    Stream stream() const { return stream_; }
    void set_stream(Stream s) { stream_ = s; }

    std::span<const float> at(int r, int c) const {
        return std::span<const float>(data_).subspan(offset(r, c), dim_);
    }
    std::span<float> at(int r, int c) { return std::span<float>(data_).subspan(offset(r, c), dim_); }

    std::span<const float> data() const { return data_; }
    std::span<float> data() { return data_; }

    bool all_finite() const;
    bool operator==(const FeatureMap& other) const = default;

private:
    std::size_t offset(int r, int c) const {
        return (static_cast<std::size_t>(r) * cols_ + c) * dim_;
    }

    int rows_ = 0;
    int cols_ = 0;
    int dim_ = 0;
    Stream stream_ = Stream::Visual;
    std::vector<float> data_;
};

/// Linear -> GeLU -> Linear head aligning geometry features to the visual width.
struct MlpProjection {
    int in_dim = 0;
    int hidden_dim = 0;
    int out_dim = 0;
    std::vector<float> w1;  // hidden x in
    std::vector<float> b1;  // hidden
    std::vector<float> w2;  // out x hidden
    std::vector<float> b2;  // out

    static MlpProjection zeros(int in_dim, int hidden_dim, int out_dim);
    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) from the counter-based generator.
    static MlpProjection random(int in_dim, int hidden_dim, int out_dim, std::uint64_t seed);

    void validate() const;
    bool operator==(const MlpProjection& other) const = default;
};

/// Exact erf form: z * Phi(z).
double gelu(double z);

FeatureMap project_geometry_features(const FeatureMap& v, const MlpProjection& mlp);

/// Deterministic stand-in for the 3D foundation model encoder.
FeatureMap stub_3dfm_encode(std::uint64_t frame_index, int rows, int cols, int dim, std::uint64_t seed);

/// Deterministic stand-in for the 2D visual encoder (patch tokens).
FeatureMap stub_visual_encode(std::uint64_t frame_index, int rows, int cols, int dim, std::uint64_t seed);

}  // namespace gabev
