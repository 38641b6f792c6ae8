#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gabev/sim.hpp"

namespace gabev::metrics {

/// Distance-to-goal measure used for NE/SR/OSR.
class GoalDistance {
public:
    virtual ~GoalDistance() = default;
    virtual double operator()(const Eigen::Vector2d& p) const = 0;
};

class EuclideanDistance final : public GoalDistance {
public:
    explicit EuclideanDistance(Eigen::Vector2d goal) : goal_(std::move(goal)) {}
    double operator()(const Eigen::Vector2d& p) const override { return (p - goal_).norm(); }

private:
    Eigen::Vector2d goal_;
};

class GeodesicDistance final : public GoalDistance {
public:
    GeodesicDistance(const sim::Scene& scene, const Eigen::Vector2d& goal, double resolution = 0.05)
        : field_(scene, goal, resolution) {}
    double operator()(const Eigen::Vector2d& p) const override { return field_.distance(p); }

private:
    sim::GeodesicField field_;
};

struct EpisodeResult {
    std::vector<Eigen::Vector2d> path;
    Eigen::Vector2d goal{0.0, 0.0};
    double reference_path_length = 0.0;
    double success_radius = 3.0;

    void validate() const;
};

double navigation_error(const EpisodeResult& result, const GoalDistance& distance);
bool success(const EpisodeResult& result, const GoalDistance& distance);
bool oracle_success(const EpisodeResult& result, const GoalDistance& distance);
double path_length(const std::vector<Eigen::Vector2d>& path);
double spl(const EpisodeResult& result, const GoalDistance& distance);

struct EpisodeMetrics {
    std::string episode_id;
    double ne = 0.0;  // +inf when disconnected
    bool success = false;
    bool oracle_success = false;
    double spl = 0.0;
    std::size_t steps = 0;
    double tokens_mean = 0.0;
};

EpisodeMetrics evaluate_episode(const EpisodeResult& result, const GoalDistance& distance);

struct MetricsTable {
    std::size_t episodes = 0;
    std::size_t disconnected = 0;
    double ne = 0.0;  // mean over finite NE
    double sr = 0.0;  // percent
    double osr = 0.0;
    double spl = 0.0;
};

MetricsTable aggregate(const std::vector<EpisodeMetrics>& results);

/// "61.0"-style percentage and "4.80"-style meters.
std::string format_percent(double value);
std::string format_meters(double value);

std::string results_csv(const std::vector<EpisodeMetrics>& results);
std::string aggregate_csv(const MetricsTable& table);

}  // namespace gabev::metrics
