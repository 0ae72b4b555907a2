#include "dva/trainer.hpp"

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace dva {

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  if (workers < 1) throw std::invalid_argument("workers must be >= 1");
  if (t_max < 1) throw std::invalid_argument("t_max must be >= 1");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in [0,1]");
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (!(grad_clip > 0.0)) throw std::invalid_argument("grad_clip must be positive");
  if (!(reward_scale > 0.0)) throw std::invalid_argument("reward_scale must be positive");
  if (entropy_weight < 0.0 || value_coeff < 0.0) {
    throw std::invalid_argument("loss weights must be non-negative");
  }
  drop.validate();
}

Metadata TrainConfig::to_metadata() const {
  Metadata m;
  m["scenario"] = std::string(to_string(scenario));
  m["view"] = std::string(to_string(view));
  m["workers"] = std::to_string(workers);
  m["frame_budget"] = std::to_string(frame_budget);
  m["t_max"] = std::to_string(t_max);
  m["gamma"] = fmt_double(gamma);
  m["entropy_weight"] = fmt_double(entropy_weight);
  m["value_coeff"] = fmt_double(value_coeff);
  m["lr"] = fmt_double(lr);
  m["grad_clip"] = fmt_double(grad_clip);
  m["reward_scale"] = fmt_double(reward_scale);
  m["seed"] = std::to_string(seed);
  m["checkpoint_every"] = std::to_string(checkpoint_every);
  m["train_drops"] = train_drops ? "1" : "0";
  m["drop_generic"] = fmt_double(drop.p_generic);
  m["drop_center"] = fmt_double(drop.p_center);
  m["drop_main"] = fmt_double(drop.p_main);
  return m;
}

// ---- SharedParams -------------------------------------------------------------

SharedParams::SharedParams(ParamSet<float> params, AdamConfig adam)
    : params_(std::move(params)),
      adam_(AdamState<float>::for_params(params_)),
      adam_cfg_(adam) {}

std::uint64_t SharedParams::snapshot(ParamSet<float>& out) const {
  std::lock_guard lock(mutex_);
  if (out.same_layout(params_)) {
    out.assign_values(params_);
  } else {
    out = params_;
  }
  return updates_.load();
}

bool SharedParams::apply_gradients(const ParamSet<float>& grads) {
  std::lock_guard lock(mutex_);
  if (!grads.all_finite()) {
    rejected_.fetch_add(1);
    return false;
  }
  adam_update(params_, grads, adam_, adam_cfg_);
  updates_.fetch_add(1);
  return true;
}

Checkpoint SharedParams::to_checkpoint(Metadata meta) const {
  std::lock_guard lock(mutex_);
  meta["updates"] = std::to_string(updates_.load());
  return Checkpoint{params_, adam_, std::move(meta)};
}

// ---- TrainingLog ----------------------------------------------------------------

void TrainingLog::add(const LogRow& row) {
  std::lock_guard lock(mutex_);
  rows_.push_back(row);
}

std::vector<LogRow> TrainingLog::rows() const {
  std::lock_guard lock(mutex_);
  return rows_;
}

std::size_t TrainingLog::size() const {
  std::lock_guard lock(mutex_);
  return rows_.size();
}

void TrainingLog::write_csv(const std::filesystem::path& path) const {
  const auto rows = this->rows();
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write training log " + path.string());
  os << "wall_s,env_frames,worker,episode_reward\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.3f,%llu,%d,%.17g\n", r.wall_s,
                  static_cast<unsigned long long>(r.env_frames), r.worker, r.episode_reward);
    os << buf;
  }
  if (!os) throw std::runtime_error("failed writing training log " + path.string());
}

std::vector<LogRow> TrainingLog::read_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read training log " + path.string());
  std::string line;
  std::getline(is, line);
  if (line != "wall_s,env_frames,worker,episode_reward") {
    throw std::runtime_error(path.string() + " has an unexpected header");
  }
  std::vector<LogRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    LogRow r;
    unsigned long long frames = 0;
    if (std::sscanf(line.c_str(), "%lf,%llu,%d,%lf", &r.wall_s, &frames, &r.worker,
                    &r.episode_reward) != 4) {
      throw std::runtime_error("malformed training log row: " + line);
    }
    r.env_frames = frames;
    rows.push_back(r);
  }
  return rows;
}

std::vector<double> trailing_mean(const std::vector<LogRow>& rows, std::size_t window) {
  std::vector<double> out(rows.size());
  double sum = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    sum += rows[i].episode_reward;
    if (i >= window) sum -= rows[i - window].episode_reward;
    out[i] = sum / static_cast<double>(std::min(i + 1, window));
  }
  return out;
}

// ---- Worker ---------------------------------------------------------------------

Worker::Worker(const TrainConfig& cfg, const ArchSpec& arch, int id)
    : cfg_(cfg),
      arch_(arch),
      id_(id),
      env_(ScenarioConfig::for_scenario(cfg.scenario)),
      action_rng_(derive_seed(cfg.seed + static_cast<std::uint64_t>(id), streams::kAction)),
      drop_rng_(derive_seed(cfg.seed + static_cast<std::uint64_t>(id), streams::kDrop)),
      net_(arch),
      lstm_(LstmState<float>::zeros(arch.lstm_units)) {
  restart_episode();
}

Observation<float> Worker::observe(const Frame& frame) {
  Observation<float> obs = make_observation(frame, arch_.variant);
  if (cfg_.train_drops) apply_drop(obs, cfg_.drop, drop_rng_);
  return obs;
}

void Worker::restart_episode() {
  const std::uint64_t seed =
      derive_seed(cfg_.seed + static_cast<std::uint64_t>(id_), streams::kEnv, episode_index_++);
  obs_ = observe(env_.reset(seed));
  lstm_ = LstmState<float>::zeros(arch_.lstm_units);
  episode_reward_ = 0;
  episode_decisions_ = 0;
}

Rollout<float> Worker::collect_rollout(
    const ParamSet<float>& params, int t_max, const std::function<void(int)>& on_ticks,
    const std::function<void(const CompletedEpisode&)>& on_episode) {
  Rollout<float> rollout;
  rollout.initial_state = lstm_;
  net_.begin_tape(lstm_);
  const float scale = static_cast<float>(cfg_.reward_scale);
  for (int t = 0; t < t_max; ++t) {
    const PolicyValue<float> pv = net_.tape_step(params, obs_);
    const std::size_t action = action_rng_.categorical<float>(pv.policy);
    StepResult res = env_.step(static_cast<int>(action));
    env_ticks_ += static_cast<std::uint64_t>(res.info.ticks);
    if (on_ticks) on_ticks(res.info.ticks);
    episode_reward_ += res.reward;
    ++episode_decisions_;
    rollout.steps.push_back(
        {std::move(obs_), action, static_cast<float>(res.reward) * scale, pv.value});
    if (res.done) {
      rollout.terminal = true;
      rollout.bootstrap = 0.0f;
      if (on_episode) on_episode({episode_reward_, episode_decisions_});
      restart_episode();
      return rollout;
    }
    obs_ = observe(res.frame);
  }
  lstm_ = net_.tape_state();
  LstmState<float> probe = lstm_;
  // step() runs on its own scratch cache and leaves the tape intact.
  rollout.bootstrap = net_.step(params, obs_, probe).value;
  return rollout;
}

LossBreakdown<float> Worker::rollout_gradients(const ParamSet<float>& params,
                                               const Rollout<float>& rollout,
                                               ParamSet<float>& grads) {
  if (net_.tape_length() != rollout.steps.size()) {
    throw std::logic_error("rollout_gradients: rollout was not collected by this worker");
  }
  actions_.clear();
  rewards_.clear();
  for (const auto& s : rollout.steps) {
    actions_.push_back(s.action);
    rewards_.push_back(s.reward);
  }
  return net_.tape_loss_and_grads(params, actions_, rewards_, rollout.bootstrap, cfg_.loss(),
                                  grads);
}

// ---- train ----------------------------------------------------------------------

TrainResult train(const TrainConfig& cfg, const ProgressFn& on_progress,
                  std::uint64_t progress_every) {
  cfg.validate();
  const ScenarioConfig env_cfg = ScenarioConfig::for_scenario(cfg.scenario);
  const ArchSpec arch = ArchSpec::standard(cfg.view, static_cast<std::size_t>(env_cfg.n_actions()));
  SharedParams shared(build_network<float>(arch, cfg.seed), cfg.adam());
  TrainingLog log;
  Metadata meta = cfg.to_metadata();
  store_arch(arch, meta);

  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };
  std::mutex ckpt_mutex;
  auto make_checkpoint = [&] {
    Metadata m = meta;
    m["env_frames"] = std::to_string(shared.frames());
    return shared.to_checkpoint(std::move(m));
  };
  auto persist = [&](const Checkpoint& ckpt) {
    std::lock_guard lock(ckpt_mutex);
    if (!cfg.checkpoint_path.empty()) write_checkpoint(cfg.checkpoint_path, ckpt);
    if (!cfg.log_path.empty()) log.write_csv(cfg.log_path);
  };

  std::atomic<std::uint64_t> next_ckpt{cfg.checkpoint_every};
  std::atomic<std::uint64_t> restarts{0};
  std::atomic<std::uint64_t> next_report{progress_every};
  std::atomic<bool> abort{false};

  auto worker_loop = [&](int id) {
    Worker worker(cfg, arch, id);
    ParamSet<float> snapshot, grads;
    auto on_ticks = [&](int ticks) { shared.add_frames(static_cast<std::uint64_t>(ticks)); };
    auto on_episode = [&](const CompletedEpisode& ep) {
      log.append([&] { return LogRow{elapsed(), shared.frames(), id, ep.reward}; });
    };
    while (shared.frames() < cfg.frame_budget && !abort.load()) {
      shared.snapshot(snapshot);
      Rollout<float> rollout = worker.collect_rollout(snapshot, cfg.t_max, on_ticks, on_episode);
      try {
        worker.rollout_gradients(snapshot, rollout, grads);
      } catch (const NumericError& e) {
        restarts.fetch_add(1);
        std::cerr << "worker " << id << ": " << e.what() << ", restarting episode\n";
        worker.restart_episode();
        continue;
      }
      clip_global_norm(grads, cfg.grad_clip);
      shared.apply_gradients(grads);

      if (cfg.checkpoint_every > 0) {
        std::uint64_t due = next_ckpt.load();
        const std::uint64_t now = shared.frames();
        if (now >= due && now < cfg.frame_budget &&
            next_ckpt.compare_exchange_strong(due, due + cfg.checkpoint_every)) {
          persist(make_checkpoint());
        }
      }
      if (on_progress && progress_every > 0) {
        std::uint64_t due = next_report.load();
        const std::uint64_t now = shared.frames();
        if (now >= due && next_report.compare_exchange_strong(due, due + progress_every)) {
          const auto rows = log.rows();
          const auto means = trailing_mean(rows);
          on_progress({now, shared.updates(), rows.size(), means.empty() ? 0.0 : means.back(),
                       elapsed()});
        }
      }
    }
  };

  if (cfg.frame_budget > 0) {
    if (cfg.workers == 1) {
      worker_loop(0);
    } else {
      std::vector<std::thread> threads;
      std::vector<std::exception_ptr> errors(static_cast<std::size_t>(cfg.workers));
      for (int id = 0; id < cfg.workers; ++id) {
        threads.emplace_back([&, id] {
          omp_set_num_threads(1);
          try {
            worker_loop(id);
          } catch (...) {
            errors[static_cast<std::size_t>(id)] = std::current_exception();
            abort.store(true);
          }
        });
      }
      for (auto& t : threads) t.join();
      for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }
    }
  }

  TrainResult result;
  result.final_checkpoint = make_checkpoint();
  persist(result.final_checkpoint);
  result.env_frames = shared.frames();
  result.updates = shared.updates();
  result.rejected_updates = shared.rejected();
  result.numeric_restarts = restarts.load();
  result.log = log.rows();
  result.episodes = result.log.size();
  result.wall_seconds = elapsed();
  return result;
}

}  // namespace dva
