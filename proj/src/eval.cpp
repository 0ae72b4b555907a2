#include "dva/eval.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "dva/random.hpp"

namespace dva {

ScoreStats ScoreStats::of(const std::vector<double>& values) {
  ScoreStats s;
  s.n = values.size();
  if (values.empty()) return s;
  double sum = 0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(s.n);
  double sq = 0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.std = s.n > 1 ? std::sqrt(sq / static_cast<double>(s.n - 1)) : 0.0;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  s.min = *lo;
  s.max = *hi;
  return s;
}

namespace {

enum class PolicyKind { kNetwork, kUniform };

EpisodeOutcome play_episode(PolicyKind kind, PolicyNetwork<float>* net,
                            const ParamSet<float>* params, const EvalConfig& cfg,
                            std::size_t index) {
  const ScenarioConfig env_cfg = ScenarioConfig::for_scenario(cfg.scenario);
  auto [state, frame] = reset(env_cfg, derive_seed(cfg.seed, streams::kEnv, index));
  Rng action_rng(derive_seed(cfg.seed, streams::kAction, index));
  Rng drop_rng(derive_seed(cfg.seed, streams::kDrop, index));
  LstmState<float> lstm;
  if (net) lstm = LstmState<float>::zeros(net->arch().lstm_units);
  EpisodeOutcome out;
  while (!state.done) {
    std::size_t action;
    if (kind == PolicyKind::kUniform) {
      action = action_rng.uniform_int(static_cast<std::uint64_t>(env_cfg.n_actions()));
    } else {
      Observation<float> obs = make_observation(frame, cfg.view);
      apply_drop(obs, cfg.drop, drop_rng);
      const PolicyValue<float> pv = net->step(*params, obs, lstm);
      if (cfg.greedy) {
        action = static_cast<std::size_t>(
            std::max_element(pv.policy.begin(), pv.policy.end()) - pv.policy.begin());
      } else {
        action = action_rng.categorical<float>(pv.policy);
      }
    }
    StepResult res = step(state, static_cast<int>(action));
    out.score += res.reward;
    out.killed = out.killed || res.info.killed;
    ++out.decisions;
    frame = std::move(res.frame);
  }
  return out;
}

EvalResult run_episodes(PolicyKind kind, const ArchSpec* arch, const ParamSet<float>* params,
                        const EvalConfig& cfg) {
  if (cfg.episodes == 0) throw std::invalid_argument("evaluation needs at least one episode");
  cfg.drop.validate();
  std::vector<EpisodeOutcome> outcomes(cfg.episodes);
  const long n = static_cast<long>(cfg.episodes);
  std::exception_ptr error;
#pragma omp parallel
  {
    std::optional<PolicyNetwork<float>> net;
    if (arch) net.emplace(*arch);
#pragma omp for schedule(dynamic)
    for (long i = 0; i < n; ++i) {
      try {
        outcomes[static_cast<std::size_t>(i)] =
            play_episode(kind, net ? &*net : nullptr, params, cfg, static_cast<std::size_t>(i));
      } catch (...) {
#pragma omp critical
        error = std::current_exception();
      }
    }
  }
  if (error) std::rethrow_exception(error);

  EvalResult r;
  std::vector<double> scores, lengths;
  for (const auto& o : outcomes) {
    scores.push_back(o.score);
    lengths.push_back(o.decisions);
  }
  r.score = ScoreStats::of(scores);
  r.decisions = ScoreStats::of(lengths);
  r.episodes = std::move(outcomes);
  return r;
}

}  // namespace

EvalResult evaluate(const ArchSpec& arch, const ParamSet<float>& params, const EvalConfig& cfg) {
  if (arch.variant != cfg.view) {
    throw std::invalid_argument("network is " + std::string(to_string(arch.variant)) +
                                " but evaluation requested --view " +
                                std::string(to_string(cfg.view)));
  }
  PolicyNetwork<float>(arch).check_params(params);
  return run_episodes(PolicyKind::kNetwork, &arch, &params, cfg);
}

EvalResult evaluate(const Checkpoint& ckpt, const EvalConfig& cfg) {
  return evaluate(ckpt.arch(), ckpt.params, cfg);
}

EvalResult evaluate_random(const EvalConfig& cfg) {
  return run_episodes(PolicyKind::kUniform, nullptr, nullptr, cfg);
}

double score_percentage(double s_a, double s_min, double s_max) {
  if (!(s_max > s_min)) {
    throw std::invalid_argument("score_percentage requires S_max > S_min");
  }
  return (s_a - s_min) / (s_max - s_min);
}

Baselines estimate_baselines(Scenario scenario, ViewVariant view, std::size_t episodes,
                             std::uint64_t seed) {
  EvalConfig cfg;
  cfg.scenario = scenario;
  cfg.view = view;
  cfg.episodes = episodes;
  cfg.seed = seed;
  const EvalResult r = evaluate_random(cfg);
  Baselines b;
  b.s_min = r.score.mean;
  b.random = r.score;
  b.notes = "uniform-random policy over " + std::to_string(episodes) + " episodes";
  return b;
}

const GridCell& RobustnessGrid::cell(double p_generic, std::optional<double> p_center) const {
  for (const auto& c : cells) {
    if (c.p_generic == p_generic && c.p_center == p_center) return c;
  }
  throw std::out_of_range("no such robustness grid cell");
}

void RobustnessGrid::write_csv(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "p_generic,p_center,mean,std,n,s_p\n";
  char buf[256];
  for (const auto& c : cells) {
    std::string pc = c.p_center ? std::to_string(*c.p_center) : "";
    if (c.p_center) {
      std::snprintf(buf, sizeof(buf), "%g", *c.p_center);
      pc = buf;
    }
    std::snprintf(buf, sizeof(buf), "%g,%s,%.6f,%.6f,%zu,%.6f\n", c.p_generic, pc.c_str(),
                  c.stats.mean, c.stats.std, c.stats.n, c.s_p);
    os << buf;
  }
}

void RobustnessGrid::write_baselines_csv(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "quantity,value,n\n";
  char buf[128];
  std::snprintf(buf, sizeof(buf), "s_min,%.6f,%zu\ns_max,%.6f,%zu\n", s_min, baseline_n, s_max,
                max_n);
  os << buf;
}

std::string RobustnessGrid::format_table() const {
  std::ostringstream os;
  char buf[64];
  if (view == ViewVariant::kDual) {
    for (auto it = p_values.rbegin(); it != p_values.rend(); ++it) {
      std::snprintf(buf, sizeof(buf), "center %-4g |", *it);
      os << buf;
      for (double pg : p_values) {
        std::snprintf(buf, sizeof(buf), " %6.1f%%", 100.0 * cell(pg, *it).s_p);
        os << buf;
      }
      os << '\n';
    }
    os << "            ";
    for (double pg : p_values) {
      std::snprintf(buf, sizeof(buf), " %7g", pg);
      os << buf;
    }
    os << "\n            generic view P_drop\n";
  } else {
    for (double p : p_values) {
      std::snprintf(buf, sizeof(buf), " %6.1f%%", 100.0 * cell(p).s_p);
      os << buf;
    }
    os << '\n';
    for (double p : p_values) {
      std::snprintf(buf, sizeof(buf), " %7g", p);
      os << buf;
    }
    os << "\n  " << (view == ViewVariant::kSingle ? "main" : "generic") << " view P_drop\n";
  }
  return os.str();
}

RobustnessGrid robustness_grid(const ArchSpec& arch, const ParamSet<float>& params,
                               Scenario scenario, const std::vector<double>& p_values,
                               std::size_t episodes, std::uint64_t seed, bool greedy) {
  if (p_values.empty()) throw std::invalid_argument("robustness grid needs p-values");
  for (double p : p_values) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("p-values must lie in [0,1]");
  }
  RobustnessGrid grid;
  grid.view = arch.variant;
  grid.p_values = p_values;

  EvalConfig base;
  base.scenario = scenario;
  base.view = arch.variant;
  base.episodes = episodes;
  base.seed = seed;
  base.greedy = greedy;

  const Baselines baselines = estimate_baselines(scenario, arch.variant, episodes, seed);
  const EvalResult undropped = evaluate(arch, params, base);
  grid.s_min = baselines.s_min;
  grid.baseline_n = baselines.random.n;
  grid.s_max = undropped.score.mean;
  grid.max_n = undropped.score.n;

  auto add_cell = [&](double pg, std::optional<double> pc) {
    EvalConfig cfg = base;
    if (arch.variant == ViewVariant::kSingle) {
      cfg.drop.p_main = pg;
    } else {
      cfg.drop.p_generic = pg;
      cfg.drop.p_center = pc.value_or(0.0);
    }
    const bool zero_drop = pg == 0.0 && pc.value_or(0.0) == 0.0;
    const EvalResult r = zero_drop ? undropped : evaluate(arch, params, cfg);
    GridCell c;
    c.p_generic = pg;
    c.p_center = pc;
    c.stats = r.score;
    c.decisions = r.decisions;
    c.s_p = score_percentage(r.score.mean, grid.s_min, grid.s_max);
    grid.cells.push_back(c);
  };
  for (double pg : p_values) {
    if (arch.variant == ViewVariant::kDual) {
      for (double pc : p_values) add_cell(pg, pc);
    } else {
      add_cell(pg, std::nullopt);
    }
  }
  return grid;
}

RobustnessGrid robustness_grid(const Checkpoint& ckpt, Scenario scenario, ViewVariant view,
                               const std::vector<double>& p_values, std::size_t episodes,
                               std::uint64_t seed, bool greedy) {
  const ArchSpec arch = ckpt.arch();
  if (arch.variant != view) {
    throw std::invalid_argument("checkpoint is " + std::string(to_string(arch.variant)) +
                                " but --view " + std::string(to_string(view)) + " was requested");
  }
  return robustness_grid(arch, ckpt.params, scenario, p_values, episodes, seed, greedy);
}

}  // namespace dva
