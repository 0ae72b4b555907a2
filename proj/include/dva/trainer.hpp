#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include "dva/adam.hpp"
#include "dva/checkpoint.hpp"
#include "dva/micro_env.hpp"
#include "dva/network.hpp"
#include "dva/preprocess.hpp"
#include "dva/random.hpp"

namespace dva {

struct TrainConfig {
  Scenario scenario = Scenario::kBasicShooting;
  ViewVariant view = ViewVariant::kDual;
  int workers = 8;
  std::uint64_t frame_budget = 5'000'000;
  int t_max = 20;
  double gamma = 0.99;
  double entropy_weight = 0.01;
  double value_coeff = 0.5;
  double lr = 1e-4;
  double grad_clip = 40.0;
  /// Multiplies environment rewards before they enter the loss. Logged
  /// episode scores are always in raw score units.
  double reward_scale = 0.01;
  std::uint64_t seed = 0;
  std::filesystem::path checkpoint_path;
  std::filesystem::path log_path;
  /// Periodic checkpoint interval in env frames; 0 writes only the final one.
  std::uint64_t checkpoint_every = 1'000'000;
  bool train_drops = false;
  DropConfig drop;

  void validate() const;
  /// Every field that influences the result, as metadata for checkpoints
  /// and run manifests.
  Metadata to_metadata() const;
  LossConfig loss() const { return {gamma, entropy_weight, value_coeff}; }
  AdamConfig adam() const { return {lr, 0.9, 0.999, 1e-8}; }
};

/// Shared parameters, shared Adam state and the global counters. Snapshot
/// and apply are each atomic with respect to each other.
class SharedParams {
 public:
  SharedParams(ParamSet<float> params, AdamConfig adam);

  /// Copies the current parameters into `out` (resized on first use) and
  /// returns the update counter they correspond to.
  std::uint64_t snapshot(ParamSet<float>& out) const;

  /// One Adam step with the given (already clipped) gradients. Non-finite
  /// gradients are rejected and counted; returns whether the update applied.
  bool apply_gradients(const ParamSet<float>& grads);

  std::uint64_t updates() const { return updates_.load(); }
  std::uint64_t rejected() const { return rejected_.load(); }
  std::uint64_t frames() const { return frames_.load(); }
  std::uint64_t add_frames(std::uint64_t n) { return frames_.fetch_add(n) + n; }

  Checkpoint to_checkpoint(Metadata meta) const;

 private:
  mutable std::mutex mutex_;
  ParamSet<float> params_;
  AdamState<float> adam_;
  AdamConfig adam_cfg_;
  std::atomic<std::uint64_t> updates_{0};
  std::atomic<std::uint64_t> rejected_{0};
  std::atomic<std::uint64_t> frames_{0};
};

struct LogRow {
  double wall_s = 0;
  std::uint64_t env_frames = 0;
  int worker = 0;
  double episode_reward = 0;
};

class TrainingLog {
 public:
  void add(const LogRow& row);
  /// Builds the row under the log's lock, so counters read inside `make`
  /// are ordered consistently with the rows.
  template <class F>
  void append(F&& make) {
    std::lock_guard lock(mutex_);
    rows_.push_back(make());
  }
  std::vector<LogRow> rows() const;
  std::size_t size() const;
  void write_csv(const std::filesystem::path& path) const;
  static std::vector<LogRow> read_csv(const std::filesystem::path& path);

 private:
  mutable std::mutex mutex_;
  std::vector<LogRow> rows_;
};

/// Mean of the last `window` episode rewards ending at each row.
std::vector<double> trailing_mean(const std::vector<LogRow>& rows, std::size_t window = 100);

struct CompletedEpisode {
  double reward = 0;
  int decisions = 0;
};

/// One actor: a private environment, action RNG, recurrent state and
/// network workspace.
class Worker {
 public:
  Worker(const TrainConfig& cfg, const ArchSpec& arch, int id);

  int id() const { return id_; }
  const LstmState<float>& lstm_state() const { return lstm_; }
  MicroEnv& environment() { return env_; }

  /// Samples up to t_max decisions with `params`. Stops early at episode
  /// end (bootstrap 0) and otherwise bootstraps from the value of the next
  /// observation. Env ticks are reported through `on_ticks`, finished
  /// episodes through `on_episode`.
  Rollout<float> collect_rollout(const ParamSet<float>& params, int t_max,
                                 const std::function<void(int)>& on_ticks = {},
                                 const std::function<void(const CompletedEpisode&)>&
                                     on_episode = {});

  /// Loss and gradients of the last collected rollout, reusing the
  /// activations recorded while acting (same params required).
  LossBreakdown<float> rollout_gradients(const ParamSet<float>& params,
                                         const Rollout<float>& rollout,
                                         ParamSet<float>& grads);

  /// Abandons the current episode and starts a fresh one.
  void restart_episode();

  std::uint64_t env_ticks() const { return env_ticks_; }

 private:
  Observation<float> observe(const Frame& frame);

  TrainConfig cfg_;
  ArchSpec arch_;
  int id_;
  MicroEnv env_;
  Rng action_rng_;
  Rng drop_rng_;
  PolicyNetwork<float> net_;
  LstmState<float> lstm_;
  Observation<float> obs_;
  std::uint64_t episode_index_ = 0;
  double episode_reward_ = 0;
  int episode_decisions_ = 0;
  std::uint64_t env_ticks_ = 0;
  std::vector<std::size_t> actions_;
  std::vector<float> rewards_;
};

struct TrainResult {
  std::uint64_t env_frames = 0;
  std::uint64_t updates = 0;
  std::uint64_t rejected_updates = 0;
  std::uint64_t episodes = 0;
  std::uint64_t numeric_restarts = 0;
  double wall_seconds = 0;
  std::vector<LogRow> log;
  Checkpoint final_checkpoint;
};

struct TrainProgress {
  std::uint64_t env_frames = 0;
  std::uint64_t updates = 0;
  std::size_t episodes = 0;
  double trailing_mean = 0;  // last 100 episode rewards
  double wall_s = 0;
};

using ProgressFn = std::function<void(const TrainProgress&)>;

/// Runs A3C until the env-frame budget is consumed. workers == 1 runs on
/// the calling thread and is bit-reproducible for a fixed seed.
/// `on_progress` fires roughly every `progress_every` env frames.
TrainResult train(const TrainConfig& cfg, const ProgressFn& on_progress = {},
                  std::uint64_t progress_every = 100'000);

}  // namespace dva
