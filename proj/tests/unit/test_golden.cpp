#include <doctest.h>

#include "commands.hpp"
#include "gabev/config.hpp"
#include "gabev/io.hpp"
#include "tempdir.hpp"

using namespace gabev;
namespace fs = std::filesystem;

// Regenerate with:
//   gabev --config tests/data/golden_config.json simulate --scene scenes/room.json --episodes 1 --out <dir>
// and copy <dir>/ep_00000 without summary.json to tests/data/golden_archive.
namespace {

const fs::path kData = GABEV_TEST_DATA;

std::vector<std::size_t> counts_at(const io::TrajectoryArchive& a, double cell_size) {
    BevConfig bev = a.config.bev;
    bev.cell_size = cell_size;
    std::vector<std::size_t> out;
    for (const auto& b : rebuild_bevs(a.record.frames, a.mlp, a.config.camera, bev, a.record.episode.cadence,
                                      a.record.episode.history_frames)) {
        out.push_back(b.build.stats.tokens);
    }
    return out;
}

}  // namespace

TEST_CASE("golden archive loads to the committed token counts") {
    const io::TrajectoryArchive a = io::read_archive(kData / "golden_archive");
    CHECK(a.record.steps.size() == 22);
    CHECK(a.record.frames.size() == 6);
    CHECK(counts_at(a, 0.25) == std::vector<std::size_t>{8, 60, 123});
    CHECK(counts_at(a, 0.5) == std::vector<std::size_t>{6, 52, 103});
    CHECK(counts_at(a, 0.125) == std::vector<std::size_t>{8, 60, 128});
}

TEST_CASE("recorded build counts agree with a rebuild") {
    const io::TrajectoryArchive a = io::read_archive(kData / "golden_archive");
    std::vector<std::size_t> recorded;
    for (const BuildRecord& b : a.record.builds) recorded.push_back(b.stats.tokens);
    CHECK(recorded == counts_at(a, a.config.bev.cell_size));
}

TEST_CASE("simulating the golden config reproduces the archive byte for byte") {
    TempDir tmp;
    cli::SimulateOptions o;
    o.scene = fs::path(GABEV_SOURCE_DIR) / "scenes" / "room.json";
    o.out = tmp.path();
    cli::run_simulate(load_run_config(kData / "golden_config.json"), o);
    auto produced = tree_bytes(tmp / "ep_00000");
    produced.erase("summary.json");
    CHECK(produced == tree_bytes(kData / "golden_archive"));
}
