#include "gabev/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "gabev/errors.hpp"

namespace gabev::metrics {

void EpisodeResult::validate() const {
    if (path.empty()) {
        throw ValidationError("episode result: path is empty");
    }
    if (!(reference_path_length >= 0.0) || !(success_radius >= 0.0)) {
        throw ValidationError("episode result: lengths must be >= 0");
    }
}

double navigation_error(const EpisodeResult& result, const GoalDistance& distance) {
    result.validate();
    return distance(result.path.back());
}

bool success(const EpisodeResult& result, const GoalDistance& distance) {
    return navigation_error(result, distance) <= result.success_radius;
}

bool oracle_success(const EpisodeResult& result, const GoalDistance& distance) {
    result.validate();
    return std::any_of(result.path.begin(), result.path.end(),
                       [&](const Eigen::Vector2d& p) { return distance(p) <= result.success_radius; });
}

double path_length(const std::vector<Eigen::Vector2d>& path) {
    double total = 0.0;
    for (std::size_t k = 1; k < path.size(); ++k) {
        total += (path[k] - path[k - 1]).norm();
    }
    return total;
}

double spl(const EpisodeResult& result, const GoalDistance& distance) {
    if (!success(result, distance)) {
        return 0.0;
    }
    const double ell = result.reference_path_length;
    const double p = path_length(result.path);
    if (ell == 0.0) {
        return 1.0;
    }
    return ell / std::max(p, ell);
}

EpisodeMetrics evaluate_episode(const EpisodeResult& result, const GoalDistance& distance) {
    EpisodeMetrics m;
    m.ne = navigation_error(result, distance);
    m.success = m.ne <= result.success_radius;
    m.oracle_success = oracle_success(result, distance);
    m.spl = spl(result, distance);
    m.steps = result.path.size() - 1;
    return m;
}

MetricsTable aggregate(const std::vector<EpisodeMetrics>& results) {
    if (results.empty()) {
        throw ContractViolation("metrics aggregate: empty result set");
    }
    MetricsTable t;
    t.episodes = results.size();
    double ne_sum = 0.0;
    std::size_t finite = 0;
    double sr = 0.0;
    double osr = 0.0;
    double spl_sum = 0.0;
    for (const EpisodeMetrics& m : results) {
        if (std::isfinite(m.ne)) {
            ne_sum += m.ne;
            ++finite;
        } else {
            ++t.disconnected;
        }
        sr += m.success ? 1.0 : 0.0;
        osr += m.oracle_success ? 1.0 : 0.0;
        spl_sum += m.spl;
    }
    const double n = static_cast<double>(results.size());
    t.ne = finite == 0 ? std::numeric_limits<double>::infinity() : ne_sum / static_cast<double>(finite);
    t.sr = 100.0 * sr / n;
    t.osr = 100.0 * osr / n;
    t.spl = 100.0 * spl_sum / n;
    return t;
}

std::string format_percent(double value) {
    return fmt::format("{:.1f}", value);
}

std::string format_meters(double value) {
    if (!std::isfinite(value)) {
        return "inf";
    }
    return fmt::format("{:.2f}", value);
}

std::string results_csv(const std::vector<EpisodeMetrics>& results) {
    std::string out = "episode_id,ne,sr,osr,spl,steps,tokens_mean\n";
    for (const EpisodeMetrics& m : results) {
        out += fmt::format("{},{},{},{},{:.4f},{},{:.2f}\n", m.episode_id, format_meters(m.ne), m.success ? 1 : 0,
                           m.oracle_success ? 1 : 0, m.spl, m.steps, m.tokens_mean);
    }
    return out;
}

std::string aggregate_csv(const MetricsTable& t) {
    return fmt::format("episodes,disconnected,ne,sr,osr,spl\n{},{},{},{},{},{}\n", t.episodes, t.disconnected,
                       format_meters(t.ne), format_percent(t.sr), format_percent(t.osr), format_percent(t.spl));
}

}  // namespace gabev::metrics
