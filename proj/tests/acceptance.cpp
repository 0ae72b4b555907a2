// Acceptance suite: one PASS/FAIL line per criterion. Trained agents are
// cached under DVA_ACCEPTANCE_CACHE and reused when their recorded
// configuration matches; missing or stale entries are retrained.

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "dva/checkpoint.hpp"
#include "dva/eval.hpp"
#include "dva/gradcheck.hpp"
#include "dva/micro_env.hpp"
#include "dva/network.hpp"
#include "dva/preprocess.hpp"
#include "dva/saliency.hpp"
#include "dva/trainer.hpp"

#ifndef DVA_ACCEPTANCE_CACHE
#define DVA_ACCEPTANCE_CACHE "acceptance_cache"
#endif

namespace fs = std::filesystem;
using namespace dva;

namespace {

// ---- pinned thresholds -----------------------------------------------------------

constexpr double kGradTolerance = 1e-5;
constexpr std::size_t kGradTrials = 100;
constexpr double kGradRuntimeLimit_s = 300;
constexpr std::size_t kSingleParams = 1'199'412;
constexpr std::size_t kDualParams = 692'580;
constexpr double kMinReduction = 0.25;
constexpr double kConvergedReward = 80.0;
constexpr double kBasicScoreRange = 99.0 - (-75.0);
constexpr double kParityFraction = 0.10;
constexpr std::size_t kEvalEpisodes = 100;
constexpr double kSignificance = 0.05;
constexpr double kFullDropCeiling = 0.1;
constexpr double kMonotoneSlack = 0.05;
constexpr double kOneViewFloor = 0.2;
constexpr std::uint64_t kDeterminismFrames = 100'000;
constexpr double kAffineTolerance = 1e-9;
constexpr int kDropSamples = 10'000;
constexpr double kZ995 = 2.5758293035489004;  // two-sided 99%
constexpr double kChi2Df1Crit01 = 6.6348966010212145;
constexpr std::size_t kSaliencyFrames = 100;
constexpr double kSaliencyRatio = 2.0;
constexpr double kSaliencyShare = 0.70;

constexpr std::uint64_t kEvalSeed = 20'000;
const std::vector<std::uint64_t> kTrainSeeds{1, 2, 3};

int g_failures = 0;

void report(int id, bool pass, const std::string& title, const std::string& detail,
            bool soft = false) {
  const char* status = pass ? "PASS" : (soft ? "WARN" : "FAIL");
  std::printf("[%s] %d. %s: %s\n", status, id, title.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass && !soft) ++g_failures;
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

// ---- cached training -------------------------------------------------------------

TrainConfig basic_config(ViewVariant view, std::uint64_t seed) {
  TrainConfig c;
  c.scenario = Scenario::kBasicShooting;
  c.view = view;
  c.workers = 8;
  c.frame_budget = 5'000'000;
  c.seed = seed;
  return c;
}

struct TrainedAgent {
  Checkpoint ckpt;
  std::vector<LogRow> log;
};

bool cache_valid(const fs::path& ckpt_path, const fs::path& log_path, const TrainConfig& cfg) {
  if (!fs::exists(ckpt_path) || !fs::exists(log_path)) return false;
  try {
    const auto c = read_checkpoint(ckpt_path);
    for (const auto& [k, v] : cfg.to_metadata()) {
      const auto it = c.meta.find(k);
      if (it == c.meta.end() || it->second != v) return false;
    }
    const auto frames = c.meta.find("env_frames");
    return frames != c.meta.end() && std::stoull(frames->second) >= cfg.frame_budget;
  } catch (const std::exception&) {
    return false;
  }
}

struct NotCached : std::runtime_error {
  using std::runtime_error::runtime_error;
};

TrainedAgent trained_agent(ViewVariant view, std::uint64_t seed, bool allow_training) {
  const fs::path dir = DVA_ACCEPTANCE_CACHE;
  fs::create_directories(dir);
  const std::string stem =
      "basic_" + std::string(to_string(view)) + "_s" + std::to_string(seed) + ".dva";
  const fs::path ckpt_path = dir / stem;
  const fs::path log_path = dir / (stem + ".log.csv");
  TrainConfig cfg = basic_config(view, seed);
  if (!cache_valid(ckpt_path, log_path, cfg)) {
    if (!allow_training) throw NotCached(stem + " is not cached");
    std::printf("  training %s (5M frames, 8 workers)...\n", stem.c_str());
    std::fflush(stdout);
    cfg.checkpoint_path = ckpt_path;
    cfg.log_path = log_path;
    train(cfg);
  } else {
    std::printf("  reusing cached %s\n", stem.c_str());
  }
  return {read_checkpoint(ckpt_path), TrainingLog::read_csv(log_path)};
}

double converged_reward(const std::vector<LogRow>& log) {
  const auto tm = trailing_mean(log, 100);
  return tm.empty() ? -1e9 : tm.back();
}

EvalConfig eval_config(ViewVariant view, std::uint64_t seed) {
  EvalConfig c;
  c.scenario = Scenario::kBasicShooting;
  c.view = view;
  c.episodes = kEvalEpisodes;
  c.seed = seed;
  return c;
}

/// One-sided Welch test of mean(a) > mean(b).
double welch_p_greater(const ScoreStats& a, const ScoreStats& b) {
  const double va = a.std * a.std / a.n, vb = b.std * b.std / b.n;
  const double se = std::sqrt(va + vb);
  if (se == 0) return a.mean > b.mean ? 0.0 : 1.0;
  const double t = (a.mean - b.mean) / se;
  const double df = (va + vb) * (va + vb) /
                    (va * va / (a.n - 1.0) + vb * vb / (b.n - 1.0));
  return boost::math::cdf(boost::math::complement(boost::math::students_t(df), t));
}

std::vector<unsigned char> slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// ---- criteria --------------------------------------------------------------------

SuiteReport criterion_gradients() {
  SuiteOptions opt;
  opt.trials = kGradTrials;
  opt.seed = 1;
  opt.check.tolerance = kGradTolerance;
  opt.check.step = 1e-5;
  const SuiteReport r = run_gradcheck_suite(opt);
  std::size_t a3c = 0;
  for (const auto& c : r.cases) a3c += c.name.rfind("a3c", 0) == 0;
  const bool pass = r.passed() && r.max_rel_error() <= kGradTolerance && a3c == 3 &&
                    r.seconds <= kGradRuntimeLimit_s;
  std::string detail = std::to_string(r.cases.size()) + " cases x " +
                       std::to_string(kGradTrials) + " trials, max rel error " +
                       fmt("%.2e", r.max_rel_error()) + ", " + fmt("%.1f", r.seconds) + " s";
  report(1, pass, "gradient correctness", detail);
  return r;
}

void criterion_parameters() {
  const auto single = ArchSpec::standard(ViewVariant::kSingle);
  const auto dual = ArchSpec::standard(ViewVariant::kDual);
  const auto ps = build_network<float>(single, 0), pd = build_network<float>(dual, 0);
  const double red = reduction_ratio(pd, ps);
  const bool pass = ps.count() == kSingleParams && pd.count() == kDualParams &&
                    expected_param_count(single) == ps.count() &&
                    expected_param_count(dual) == pd.count() && red >= kMinReduction;
  report(2, pass, "parameter reduction",
         "single " + std::to_string(ps.count()) + ", dual " + std::to_string(pd.count()) +
             ", reduction " + fmt("%.2f%%", 100 * red) + " (reference claim: almost 30%)");
}

void criterion_convergence(const std::map<std::string, TrainedAgent>& agents) {
  bool all_converged = true;
  double sum_single = 0, sum_dual = 0;
  std::string detail;
  for (auto seed : kTrainSeeds) {
    const double s = converged_reward(agents.at("single" + std::to_string(seed)).log);
    const double d = converged_reward(agents.at("dual" + std::to_string(seed)).log);
    all_converged = all_converged && s >= kConvergedReward && d >= kConvergedReward;
    sum_single += s;
    sum_dual += d;
    detail += "s" + std::to_string(seed) + " single " + fmt("%.1f", s) + " dual " +
              fmt("%.1f", d) + "; ";
  }
  const double n = static_cast<double>(kTrainSeeds.size());
  const double gap = std::abs(sum_single / n - sum_dual / n);
  detail += "mean gap " + fmt("%.2f", gap) + " (limit " +
            fmt("%.1f", kParityFraction * kBasicScoreRange) + ")";
  report(3, all_converged && gap <= kParityFraction * kBasicScoreRange, "convergence parity",
         detail);
}

void criterion_generic_deficit(const std::map<std::string, TrainedAgent>& agents) {
  bool pass = true;
  std::string detail;
  for (auto seed : kTrainSeeds) {
    const auto g = evaluate(agents.at("generic" + std::to_string(seed)).ckpt,
                            eval_config(ViewVariant::kGenericOnly, kEvalSeed + seed));
    const auto d = evaluate(agents.at("dual" + std::to_string(seed)).ckpt,
                            eval_config(ViewVariant::kDual, kEvalSeed + seed));
    const double p = welch_p_greater(g.decisions, d.decisions);
    pass = pass && g.decisions.mean > d.decisions.mean && p < kSignificance;
    detail += "s" + std::to_string(seed) + " generic " + fmt("%.2f", g.decisions.mean) +
              " vs dual " + fmt("%.2f", d.decisions.mean) + " decisions, p=" +
              fmt("%.2g", p) + "; ";
  }
  report(4, pass, "generic-only episode length deficit", detail);
}

void criterion_grid(const std::map<std::string, TrainedAgent>& agents) {
  const std::vector<double> ps{0.0, 0.2, 0.5, 0.8, 1.0};
  const auto grid = robustness_grid(agents.at("dual1").ckpt, Scenario::kBasicShooting,
                                    ViewVariant::kDual, ps, kEvalEpisodes, kEvalSeed);
  std::printf("%s", grid.format_table().c_str());
  const double origin = grid.cell(0.0, 0.0).s_p;
  const double both = grid.cell(1.0, 1.0).s_p;
  double worst_violation = 0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    for (std::size_t j = 0; j + 1 < ps.size(); ++j) {
      // Along p_center with p_generic fixed, then along p_generic.
      worst_violation = std::max(worst_violation, grid.cell(ps[i], ps[j + 1]).s_p -
                                                      grid.cell(ps[i], ps[j]).s_p);
      worst_violation = std::max(worst_violation, grid.cell(ps[j + 1], ps[i]).s_p -
                                                      grid.cell(ps[j], ps[i]).s_p);
    }
  }
  const double generic_gone = grid.cell(1.0, 0.0).s_p;
  const double center_gone = grid.cell(0.0, 1.0).s_p;

  const auto single = robustness_grid(agents.at("single1").ckpt, Scenario::kBasicShooting,
                                      ViewVariant::kSingle, {0.0, 1.0}, kEvalEpisodes, kEvalSeed);
  const double single_gone = single.cell(1.0).s_p;

  const bool pass = origin == 1.0 && both <= kFullDropCeiling &&
                    worst_violation <= kMonotoneSlack && generic_gone >= kOneViewFloor &&
                    center_gone >= kOneViewFloor && single_gone <= kFullDropCeiling;
  report(5, pass, "robustness grid shape",
         "S_p(0,0)=" + fmt("%.3f", origin) + " S_p(1,1)=" + fmt("%.3f", both) +
             " max monotone violation " + fmt("%.3f", worst_violation) +
             " S_p(generic dropped)=" + fmt("%.3f", generic_gone) +
             " S_p(center dropped)=" + fmt("%.3f", center_gone) +
             " single S_p(p_main=1)=" + fmt("%.3f", single_gone));
}

void criterion_score_percentage() {
  bool pass = std::abs(score_percentage(110, 10, 110) - 1.0) <= kAffineTolerance &&
              std::abs(score_percentage(10, 10, 110)) <= kAffineTolerance &&
              std::abs(score_percentage(60, 10, 110) - 0.5) <= kAffineTolerance;
  Rng rng(6);
  double worst = 0;
  for (int i = 0; i < 10'000; ++i) {
    const double lo = rng.uniform(-100, 100), hi = lo + rng.uniform(0.5, 200);
    const double s = rng.uniform(-200, 300), a = rng.uniform(0.01, 50), b = rng.uniform(-1e3, 1e3);
    worst = std::max(worst, std::abs(score_percentage(a * s + b, a * lo + b, a * hi + b) -
                                     score_percentage(s, lo, hi)));
  }
  pass = pass && worst <= kAffineTolerance;
  report(6, pass, "score percentage properties",
         "examples exact, max affine deviation " + fmt("%.2e", worst));
}

void criterion_determinism() {
  const fs::path dir = fs::temp_directory_path() / "dva_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto run = [&](const std::string& name) {
    TrainConfig c = basic_config(ViewVariant::kDual, 11);
    c.workers = 1;
    c.frame_budget = kDeterminismFrames;
    c.checkpoint_every = 0;
    c.checkpoint_path = dir / name;
    c.log_path = dir / (name + ".log.csv");
    return train(c);
  };
  const auto a = run("a.dva");
  run("b.dva");
  const bool training = slurp(dir / "a.dva") == slurp(dir / "b.dva");

  const auto back = read_checkpoint(dir / "a.dva");
  write_checkpoint(dir / "c.dva", back);
  const bool round_trip = back.params == a.final_checkpoint.params &&
                          slurp(dir / "a.dva") == slurp(dir / "c.dva");

  auto cfg = eval_config(ViewVariant::kDual, 3);
  cfg.episodes = 20;
  cfg.drop = {0.3, 0.3, 0.0};
  const auto e1 = evaluate(back, cfg), e2 = evaluate(back, cfg);
  bool eval_same = e1.episodes.size() == e2.episodes.size();
  for (std::size_t i = 0; eval_same && i < e1.episodes.size(); ++i) {
    eval_same = e1.episodes[i].score == e2.episodes[i].score &&
                e1.episodes[i].decisions == e2.episodes[i].decisions;
  }
  fs::remove_all(dir);
  report(7, training && round_trip && eval_same, "determinism",
         std::string("training ") + (training ? "identical" : "DIFFERS") + ", round trip " +
             (round_trip ? "exact" : "INEXACT") + ", evaluation " +
             (eval_same ? "identical" : "DIFFERS"));
}

struct DropStats {
  double rate_generic = 0, rate_center = 0, halfwidth = 0, chi2 = 0;
  bool accepted() const {
    return std::abs(rate_generic - p) <= halfwidth && std::abs(rate_center - p) <= halfwidth &&
           chi2 < kChi2Df1Crit01;
  }
  double p = 0;
};

DropStats drop_stats(double p, std::uint64_t seed) {
  Rng rng(seed);
  Observation<float> o{ViewVariant::kDual, {Frame({42, 42}), Frame({42, 42})}};
  double table[2][2] = {};
  for (int k = 0; k < kDropSamples; ++k) {
    const auto m = apply_drop(o, DropConfig{p, p, 0.0}, rng);
    table[m.dropped[0]][m.dropped[1]] += 1;
  }
  DropStats s;
  s.p = p;
  s.rate_generic = (table[1][0] + table[1][1]) / kDropSamples;
  s.rate_center = (table[0][1] + table[1][1]) / kDropSamples;
  s.halfwidth = kZ995 * std::sqrt(p * (1 - p) / kDropSamples);
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      const double e = (table[a][0] + table[a][1]) * (table[0][b] + table[1][b]) / kDropSamples;
      s.chi2 += (table[a][b] - e) * (table[a][b] - e) / e;
    }
  }
  return s;
}

void criterion_drops() {
  bool pass = true;
  std::string detail;
  for (double p : {0.2, 0.5, 0.8}) {
    const auto s = drop_stats(p, derive_seed(8, streams::kDrop, static_cast<std::uint64_t>(p * 10)));
    pass = pass && s.accepted();
    detail += "p=" + fmt("%.1f", p) + " rates " + fmt("%.4f", s.rate_generic) + "/" +
              fmt("%.4f", s.rate_center) + " (+-" + fmt("%.4f", s.halfwidth) + ") chi2 " +
              fmt("%.2f", s.chi2) + "; ";
  }
  // Diagnostic only: how often the same checks reject on fresh streams.
  constexpr int kStreams = 200;
  int rejected = 0;
  for (int k = 0; k < kStreams; ++k) {
    for (double p : {0.2, 0.5, 0.8}) {
      rejected += !drop_stats(p, derive_seed(9, streams::kDrop, k * 10 + static_cast<int>(p * 10))).accepted();
    }
  }
  detail += "rejection rate of the three 1% checks over " + std::to_string(3 * kStreams) +
            " fresh streams " +
            fmt("%.3f", rejected / (3.0 * kStreams));
  report(8, pass, "drop injector statistics", detail);
}

void criterion_saliency(const SuiteReport& grads, const Checkpoint& dual) {
  bool fd_ok = true;
  std::size_t fd_cases = 0;
  for (const auto& c : grads.cases) {
    if (c.name.find("saliency") == std::string::npos) continue;
    ++fd_cases;
    fd_ok = fd_ok && c.failures == 0 && c.max_rel_error <= kGradTolerance;
  }
  fd_ok = fd_ok && fd_cases > 0;
  report(9, fd_ok, "saliency finite-difference agreement",
         std::to_string(fd_cases) + " saliency cases within " + fmt("%.0e", kGradTolerance));

  // Soft part: generic-view value saliency inside the monster's box.
  const ArchSpec arch = dual.arch();
  const auto cfg = ScenarioConfig::basic();
  std::size_t frames = 0, concentrated = 0;
  double ratio_sum = 0;
  Rng action_rng(derive_seed(kEvalSeed, streams::kSaliency));
  for (std::uint64_t ep = 0; frames < kSaliencyFrames && ep < 10'000; ++ep) {
    MicroEnv env(cfg);
    Frame frame = env.reset(derive_seed(kEvalSeed, streams::kEnv, ep));
    auto state = LstmState<float>::zeros(arch.lstm_units);
    bool done = false;
    while (!done && frames < kSaliencyFrames) {
      const auto obs = make_observation(frame, arch.variant);
      const auto box = monster_screen_box(env.state());
      if (box && !box->empty()) {
        const auto maps = compute_saliency(dual, obs, state);
        const auto& m = maps.views[0].value_map;  // generic view, half resolution
        double in = 0, out = 0;
        std::size_t n_in = 0, n_out = 0;
        for (std::size_t r = 0; r < m.shape()[0]; ++r) {
          for (std::size_t c = 0; c < m.shape()[1]; ++c) {
            const int sx = static_cast<int>(2 * c), sy = static_cast<int>(2 * r);
            const bool inside = box->contains(sx, sy) || box->contains(sx + 1, sy) ||
                                box->contains(sx, sy + 1) || box->contains(sx + 1, sy + 1);
            (inside ? in : out) += m.at(r, c);
            ++(inside ? n_in : n_out);
          }
        }
        if (n_in > 0 && n_out > 0) {
          const double mean_out = out / n_out;
          const double ratio = mean_out > 0 ? (in / n_in) / mean_out : 0.0;
          ratio_sum += ratio;
          concentrated += ratio >= kSaliencyRatio;
          ++frames;
        }
      }
      auto [pv, next] = forward(arch, dual.params, obs, state);
      state = std::move(next);
      const auto action = action_rng.categorical(std::span<const float>(pv.policy));
      const auto r = env.step(static_cast<int>(action));
      done = r.done;
      frame = r.frame;
    }
  }
  const double share = frames ? static_cast<double>(concentrated) / frames : 0.0;
  report(9, share >= kSaliencyShare, "saliency concentrates on the monster (soft)",
         std::to_string(concentrated) + "/" + std::to_string(frames) +
             " frames with inside/outside ratio >= 2, mean ratio " +
             fmt("%.2f", frames ? ratio_sum / frames : 0.0),
         true);
}

void criterion_environment() {
  bool pass = true;
  std::string detail;

  // BASIC random play.
  const auto basic = ScenarioConfig::basic();
  Rng rng(derive_seed(10, streams::kAction));
  double lo = 1e9, hi = -1e9;
  for (int ep = 0; ep < 2000; ++ep) {
    auto s = reset(basic, derive_seed(10, streams::kEnv, ep)).state;
    double total = 0;
    bool done = false;
    while (!done) {
      const auto r = step(s, static_cast<int>(rng.uniform_int(3)));
      pass = pass && r.reward == (r.info.killed ? 99.0 : -1.0);
      total += r.reward;
      done = r.done;
    }
    lo = std::min(lo, total);
    hi = std::max(hi, total);
  }
  pass = pass && lo >= -75.0 && hi <= 99.0;
  detail += "basic rewards in [" + fmt("%.0f", lo) + ", " + fmt("%.0f", hi) + "]; ";

  // HEALTH random play, then a survivor that must hit the frame limit.
  const auto health = ScenarioConfig::health();
  int longest = 0;
  for (int ep = 0; ep < 200; ++ep) {
    auto s = reset(health, derive_seed(10, streams::kEnv, 5000 + ep)).state;
    int n = 0;
    bool done = false;
    while (!done) {
      const auto r = step(s, static_cast<int>(rng.uniform_int(3)));
      pass = pass && r.reward == (r.info.died ? 0.0 : 1.0) + 5.0 * r.info.medkits_collected;
      done = r.done;
      ++n;
    }
    longest = std::max(longest, n);
  }
  auto immortal = health;
  immortal.health_decay = 1e-3;
  auto s = reset(immortal, 1).state;
  int n = 1;
  while (!step(s, actions::kTurnRight).done) ++n;
  pass = pass && longest <= 525 && n == 525;
  detail += "health longest random " + std::to_string(longest) + ", survivor " +
            std::to_string(n) + " decisions; ";

  // Scripted sequences.
  bool scripted = true;
  {
    auto b = reset(basic, 5).state;
    b.monster.x = b.agent.x + 2.0;
    scripted = scripted && step(b, actions::kShoot).reward == -1.0;
    b.monster.x = b.agent.x;
    const auto r = step(b, actions::kShoot);
    scripted = scripted && r.reward == 99.0 && r.done;
  }
  {
    auto b = reset(basic, 6).state;
    double total = 0;
    int k = 0;
    bool done = false;
    while (!done) {
      const auto r = step(b, actions::kMoveLeft);
      total += r.reward;
      done = r.done;
      ++k;
    }
    scripted = scripted && k == 75 && total == -75.0;
  }
  {
    auto cfg = health;
    cfg.medkit_count = 0;
    auto h = reset(cfg, 1).state;
    double total = 0;
    int completed = 0;
    bool done = false;
    while (!done) {
      const auto r = step(h, actions::kTurnLeft);
      total += r.reward;
      completed += !r.info.died;
      done = r.done;
    }
    const int death_tick = static_cast<int>(std::ceil(100.0 / cfg.health_decay - 1e-9));
    scripted = scripted && h.tick == death_tick && total == completed &&
               completed == (death_tick - 1) / cfg.skip_count;
  }
  {
    auto h = reset(health, 2).state;
    h.medkits = {{h.agent.x + std::cos(h.agent.heading) * 0.3,
                  h.agent.y + std::sin(h.agent.heading) * 0.3}};
    h.health = 50.0;
    const auto r = step(h, actions::kForward);
    scripted = scripted && r.reward == 6.0 && r.info.medkits_collected == 1;
  }
  pass = pass && scripted;
  detail += std::string("scripted sequences ") + (scripted ? "exact" : "MISMATCH");
  report(10, pass, "environment accounting", detail);
}

}  // namespace

int main(int argc, char** argv) {
  // --no-train reports uncached agents as failures instead of training them.
  const bool allow_training = !(argc > 1 && std::string(argv[1]) == "--no-train");
  const auto t0 = std::chrono::steady_clock::now();
  std::printf("acceptance suite, cache %s\n", DVA_ACCEPTANCE_CACHE);
  try {
    const SuiteReport grads = criterion_gradients();
    criterion_parameters();
    criterion_score_percentage();
    criterion_determinism();
    criterion_drops();
    criterion_environment();

    std::map<std::string, TrainedAgent> agents;
    for (auto seed : kTrainSeeds) {
      for (auto view : {ViewVariant::kDual, ViewVariant::kSingle, ViewVariant::kGenericOnly}) {
        agents[std::string(to_string(view)) + std::to_string(seed)] =
            trained_agent(view, seed, allow_training);
      }
    }
    criterion_convergence(agents);
    criterion_generic_deficit(agents);
    criterion_grid(agents);
    criterion_saliency(grads, agents.at("dual1").ckpt);
  } catch (const std::exception& e) {
    std::printf("[FAIL] aborted: %s\n", e.what());
    ++g_failures;
  }
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%d hard criteria failed, %.0f s\n", g_failures, wall);
  return g_failures == 0 ? 0 : 1;
}
