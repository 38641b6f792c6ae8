#include <benchmark/benchmark.h>

#include <vector>

#include "gabev/bev.hpp"
#include "gabev/features.hpp"
#include "gabev/sim.hpp"

using namespace gabev;

namespace {

sim::Scene room() {
    sim::Scene s;
    s.name = "bench";
    s.bounds = {{-6.0, -6.0}, {6.0, 6.0}};
    s.obstacles.push_back({{{-1.0, 2.0}, {1.0, 3.0}}, 1.0});
    s.obstacles.push_back({{{2.5, -3.0}, {3.5, 0.5}}, 2.0});
    return s;
}

// A history of `frames` observations taken while turning in place.
std::vector<FrameObservation> history(int frames, int patches, int dim) {
    const sim::Scene scene = room();
    const CameraIntrinsics K = CameraIntrinsics::from_hfov(60.0, 96, 96);
    const MlpProjection mlp = MlpProjection::random(dim * 2, dim * 4, dim, 3);
    std::vector<FrameObservation> out;
    for (int f = 0; f < frames; ++f) {
        sim::AgentState st;
        st.heading = 0.26 * f;
        const Pose pose = sim::camera_pose(st, 1.25);
        out.push_back({stub_visual_encode(f, patches, patches, dim, 1),
                       project_geometry_features(stub_3dfm_encode(f, patches, patches, dim * 2, 2), mlp),
                       sim::render_depth(scene, pose, K, 96, 96), pose});
    }
    return out;
}

void BM_RenderDepth(benchmark::State& state) {
    const sim::Scene scene = room();
    const int side = static_cast<int>(state.range(0));
    const CameraIntrinsics K = CameraIntrinsics::from_hfov(60.0, side, side);
    const Pose pose = sim::camera_pose({}, 1.25);
    for (auto _ : state) {
        benchmark::DoNotOptimize(sim::render_depth(scene, pose, K, side, side));
    }
    state.SetItemsProcessed(state.iterations() * side * side);
}
BENCHMARK(BM_RenderDepth)->Arg(32)->Arg(96)->Arg(224);

void BM_BinPoints(benchmark::State& state) {
    const auto frames = history(8, 16, 64);
    const PointFeatureSet pts = lift_history(frames, frames.back().pose, CameraIntrinsics::from_hfov(60.0, 96, 96));
    BevConfig c;
    c.cell_size = 0.25;
    for (auto _ : state) {
        benchmark::DoNotOptimize(bin_points(pts, c));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(pts.size()));
}
BENCHMARK(BM_BinPoints);

void BM_BuildGaBev(benchmark::State& state) {
    const auto frames = history(static_cast<int>(state.range(0)), 16, 64);
    const CameraIntrinsics K = CameraIntrinsics::from_hfov(60.0, 96, 96);
    BevConfig c;
    c.cell_size = 0.25;
    c.embed_dim = 64;
    c.fusion = state.range(1) ? FusionMode::HierarchicalMean : FusionMode::GlobalMean;
    for (auto _ : state) {
        benchmark::DoNotOptimize(build_ga_bev(frames, frames.back().pose, K, c));
    }
}
BENCHMARK(BM_BuildGaBev)->Args({1, 0})->Args({8, 0})->Args({8, 1});

}  // namespace

BENCHMARK_MAIN();
