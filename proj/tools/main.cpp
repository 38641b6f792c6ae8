#include <cstdlib>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "commands.hpp"
#include "gabev/errors.hpp"

namespace {

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("gabev");
    logger->set_pattern("[%l] %v");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::warn);
    if (const char* env = std::getenv("GABEV_LOG")) {
        const auto level = spdlog::level::from_str(env);
        // from_str maps unknown names to off; only "off" itself should silence.
        if (level != spdlog::level::off || std::string_view(env) == "off") spdlog::set_level(level);
    }
}

}  // namespace

int main(int argc, char** argv) {
    using namespace gabev;
    setup_logging();

    CLI::App app{"GA-BEV tokenizer: simulate episodes, build BEV token maps, evaluate, benchmark"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    int jobs = 1;
    std::string out;
    cli::Overrides ov;
    app.add_option("--config", config_path, "JSON run config")->check(CLI::ExistingFile);
    app.add_option("--seed", ov.seed, "root seed");
    app.add_option("--jobs", jobs, "parallel episodes (0 = all cores)")->check(CLI::NonNegativeNumber);
    app.add_option("--cell-size", ov.cell_size, "BEV cell size in meters");
    app.add_option("--range", ov.range, "BEV half-extent in meters");
    app.add_option("--history", ov.history, "frames kept in the history window");
    app.add_option("--cadence", ov.cadence, "actions between BEV refreshes");
    app.add_option("--fusion", ov.fusion, "stream fusion")->check(CLI::IsMember({"global", "hierarchical"}));
    app.add_option("--noise-depth", ov.noise_depth, "depth noise sigma (m)");
    app.add_option("--noise-pose", ov.noise_pose, "pose translation noise sigma (m)");
    app.add_option("--noise-rot", ov.noise_rot, "pose yaw noise sigma (deg)");
    app.add_option("--out", out, "output directory (file for benchmark)");

    cli::SimulateOptions sim_opt;
    auto* simulate = app.add_subcommand("simulate", "sample episodes, run a policy, write trajectory archives");
    simulate->add_option("--scene", sim_opt.scene, "scene JSON")->required()->check(CLI::ExistingFile);
    simulate->add_option("--episodes", sim_opt.episodes, "episode count")->capture_default_str();
    simulate->add_option("--policy", sim_opt.policy)->check(CLI::IsMember({"oracle", "explore"}))->capture_default_str();

    cli::TokenizeOptions tok_opt;
    auto* tokenize = app.add_subcommand("tokenize", "rebuild BEV maps from an archive and export them");
    tokenize->add_option("archive", tok_opt.archive, "archive directory")->required();

    cli::EvaluateOptions eval_opt;
    auto* evaluate = app.add_subcommand("evaluate", "score archives or live episodes");
    evaluate->add_option("archives", eval_opt.archives, "archive directories");
    evaluate->add_option("--scene", eval_opt.scene, "scene JSON for live episodes")->check(CLI::ExistingFile);
    evaluate->add_option("--episodes", eval_opt.episodes, "live episode count");
    evaluate->add_option("--policy", eval_opt.policy)->check(CLI::IsMember({"oracle", "replay"}))->capture_default_str();
    evaluate->add_option("--distance", eval_opt.distance, "goal distance for NE/SR/OSR")
        ->check(CLI::IsMember({"geodesic", "euclidean"}))
        ->capture_default_str();

    cli::BenchmarkOptions bench_opt;
    auto* benchmark = app.add_subcommand("benchmark", "per-step token curves, dense baseline vs BEV");
    benchmark->add_option("archives", bench_opt.archives, "archive directories")->required();
    benchmark->add_option("--cell-sizes", bench_opt.cell_sizes, "cell sizes to sweep")->delimiter(',');
    benchmark->add_option("--histories", bench_opt.histories, "history windows to sweep")->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    if (jobs == 0) jobs = static_cast<int>(std::max(1U, std::thread::hardware_concurrency()));

    try {
        if (*tokenize) {
            tok_opt.out = out.empty() ? "bev" : out;
            cli::run_tokenize(ov, tok_opt);
            return 0;
        }
        if (*benchmark) {
            bench_opt.out = out.empty() ? "token_curve.csv" : out;
            cli::run_benchmark(ov, bench_opt);
            return 0;
        }

        RunConfig config;
        if (!config_path.empty()) {
            config = load_run_config(config_path);
        } else {
            config.finalize();
        }
        try {
            ov.apply(config);
        } catch (const ValidationError& e) {
            throw ConfigError(e.what());
        }

        if (*simulate) {
            sim_opt.out = out.empty() ? "runs" : out;
            sim_opt.jobs = jobs;
            cli::run_simulate(config, sim_opt);
        } else if (*evaluate) {
            eval_opt.out = out.empty() ? "eval" : out;
            eval_opt.jobs = jobs;
            cli::run_evaluate(config, eval_opt);
        }
        return 0;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return cli::exit_code_for(e);
    }
}
