#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dva/checkpoint.hpp"
#include "dva/micro_env.hpp"
#include "dva/network.hpp"
#include "dva/preprocess.hpp"

namespace dva {

struct ScoreStats {
  double mean = 0;
  double std = 0;  // sample standard deviation (n - 1)
  std::size_t n = 0;
  double min = 0;
  double max = 0;

  static ScoreStats of(const std::vector<double>& values);
  double std_error() const { return n > 0 ? std / std::sqrt(static_cast<double>(n)) : 0.0; }
};

struct EpisodeOutcome {
  double score = 0;
  int decisions = 0;
  bool killed = false;
};

struct EvalConfig {
  Scenario scenario = Scenario::kBasicShooting;
  ViewVariant view = ViewVariant::kDual;
  DropConfig drop;
  std::size_t episodes = 100;
  std::uint64_t seed = 0;
  bool greedy = false;
};

struct EvalResult {
  ScoreStats score;
  ScoreStats decisions;  // episode length in agent decisions
  std::vector<EpisodeOutcome> episodes;
};

/// Plays `episodes` seeded episodes with the network policy, blacking out
/// views per cfg.drop at every decision. Episode i depends only on
/// (seed, i), so results do not depend on how episodes are scheduled.
EvalResult evaluate(const ArchSpec& arch, const ParamSet<float>& params, const EvalConfig& cfg);

/// Same, loading the network from a checkpoint. Throws if the checkpoint's
/// view variant differs from cfg.view.
EvalResult evaluate(const Checkpoint& ckpt, const EvalConfig& cfg);

/// Uniform-random policy over the same seeded episodes.
EvalResult evaluate_random(const EvalConfig& cfg);

/// (S_a - S_min) / (S_max - S_min), not clamped.
double score_percentage(double s_a, double s_min, double s_max);

struct Baselines {
  double s_min = 0;
  ScoreStats random;
  std::string notes;
};

/// S_min as the mean score of a uniform-random policy.
Baselines estimate_baselines(Scenario scenario, ViewVariant view, std::size_t episodes,
                             std::uint64_t seed);

struct GridCell {
  double p_generic = 0;
  std::optional<double> p_center;  // empty for single-stream variants
  ScoreStats stats;
  ScoreStats decisions;
  double s_p = 0;
};

struct RobustnessGrid {
  ViewVariant view = ViewVariant::kDual;
  std::vector<double> p_values;
  std::vector<GridCell> cells;  // p_generic-major, p_center minor
  double s_min = 0;
  double s_max = 0;
  std::size_t baseline_n = 0;
  std::size_t max_n = 0;

  /// For single-stream variants pass p_center = nullopt.
  const GridCell& cell(double p_generic, std::optional<double> p_center = std::nullopt) const;

  void write_csv(const std::filesystem::path& path) const;
  void write_baselines_csv(const std::filesystem::path& path) const;
  /// Text table with center-view rows (descending) and generic columns.
  std::string format_table() const;
};

/// Evaluates every drop cell with one shared (S_min, S_max). S_max is the
/// zero-drop evaluation under the same episode seeds as the grid cells.
RobustnessGrid robustness_grid(const Checkpoint& ckpt, Scenario scenario, ViewVariant view,
                               const std::vector<double>& p_values, std::size_t episodes,
                               std::uint64_t seed, bool greedy = false);

/// Same on in-memory parameters.
RobustnessGrid robustness_grid(const ArchSpec& arch, const ParamSet<float>& params,
                               Scenario scenario, const std::vector<double>& p_values,
                               std::size_t episodes, std::uint64_t seed, bool greedy = false);

}  // namespace dva
