// dva: train, evaluate and inspect dual-view A3C agents.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
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

#ifndef DVA_VERSION
#define DVA_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Exit codes: 1 runtime failure, 2 usage error, 3 check failed.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CheckFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class Manifest {
 public:
  Manifest(std::string command, int argc, char** argv) : started_(utc_now()) {
    doc_["command"] = std::move(command);
    doc_["tool_version"] = DVA_VERSION;
    json args = json::array();
    for (int i = 0; i < argc; ++i) args.push_back(argv[i]);
    doc_["argv"] = args;
  }
  json& config() { return doc_["config"]; }
  void output(const fs::path& p) { doc_["outputs"].push_back(p.string()); }
  void result(const std::string& key, json value) { doc_["result"][key] = std::move(value); }

  void write(const fs::path& path) {
    doc_["started_utc"] = started_;
    doc_["finished_utc"] = utc_now();
    if (!doc_.contains("outputs")) doc_["outputs"] = json::array();
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write manifest " + path.string());
    os << doc_.dump(2) << '\n';
  }

 private:
  json doc_;
  std::string started_;
};

struct Common {
  std::string scenario = "basic";
  std::string view = "dual";
  std::uint64_t seed = 0;
  std::string out;
  std::string manifest;
};

void add_common(CLI::App* app, Common& c, bool needs_seed, bool needs_out) {
  app->add_option("--scenario", c.scenario, "basic | health")
      ->check(CLI::IsMember({"basic", "health"}))
      ->capture_default_str();
  app->add_option("--view", c.view, "single | dual | generic")
      ->check(CLI::IsMember({"single", "dual", "generic"}))
      ->capture_default_str();
  auto* seed = app->add_option("--seed", c.seed, "Seed for every random stream");
  if (needs_seed) seed->required();
  auto* out = app->add_option("--out", c.out, "Output path");
  if (needs_out) out->required();
  app->add_option("--manifest", c.manifest, "Run manifest path (default: derived from --out)");
}

fs::path manifest_path(const Common& c, const std::string& command) {
  if (!c.manifest.empty()) return c.manifest;
  if (c.out.empty()) return "dva_" + command + ".manifest.json";
  const fs::path out(c.out);
  if (fs::is_directory(out)) return out / "manifest.json";
  return fs::path(c.out + ".manifest.json");
}

dva::DropConfig drop_config(double pg, double pc, double pm) {
  dva::DropConfig d{pg, pc, pm};
  try {
    d.validate();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  return d;
}

dva::Checkpoint load_checked(const std::string& path, dva::ViewVariant view) {
  if (!fs::exists(path)) throw UsageError("checkpoint not found: " + path);
  dva::Checkpoint ckpt = dva::read_checkpoint(path);
  const dva::ViewVariant have = ckpt.arch().variant;
  if (have != view) {
    throw UsageError("checkpoint " + path + " is a " + std::string(dva::to_string(have)) +
                     " network but --view " + std::string(dva::to_string(view)) +
                     " was given");
  }
  return ckpt;
}

json stats_json(const dva::ScoreStats& s) {
  return {{"mean", s.mean}, {"std", s.std}, {"n", s.n}, {"min", s.min}, {"max", s.max}};
}

std::vector<double> parse_p_values(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw UsageError("bad --p-values entry '" + item + "'");
    }
    if (used != item.size() || !(v >= 0.0 && v <= 1.0)) {
      throw UsageError("bad --p-values entry '" + item + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw UsageError("--p-values is empty");
  return out;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  Common common;
  dva::TrainConfig cfg;
  std::string log_path;
  bool quiet = false;
};

void setup_train(CLI::App& root, TrainArgs& a) {
  auto* app = root.add_subcommand("train", "Train an agent with asynchronous actor-critic");
  add_common(app, a.common, true, true);
  auto& c = a.cfg;
  app->add_option("--workers", c.workers)->capture_default_str();
  app->add_option("--frames,--frame-budget", c.frame_budget, "Env-frame budget")
      ->capture_default_str();
  app->add_option("--t-max", c.t_max)->capture_default_str();
  app->add_option("--gamma", c.gamma)->capture_default_str();
  app->add_option("--entropy-weight", c.entropy_weight)->capture_default_str();
  app->add_option("--value-coeff", c.value_coeff)->capture_default_str();
  app->add_option("--lr", c.lr)->capture_default_str();
  app->add_option("--grad-clip", c.grad_clip)->capture_default_str();
  app->add_option("--reward-scale", c.reward_scale)->capture_default_str();
  app->add_option("--checkpoint-every", c.checkpoint_every)->capture_default_str();
  app->add_option("--log", a.log_path, "Episode log CSV (default: <out>.log.csv)");
  app->add_flag("--train-drops", c.train_drops, "Apply view drops during training");
  app->add_option("--p-generic", c.drop.p_generic)->capture_default_str();
  app->add_option("--p-center", c.drop.p_center)->capture_default_str();
  app->add_option("--p-main", c.drop.p_main)->capture_default_str();
  app->add_flag("--quiet", a.quiet, "No progress lines");
}

int run_train(TrainArgs& a, Manifest& m) {
  auto& c = a.cfg;
  c.scenario = dva::parse_scenario(a.common.scenario);
  c.view = dva::parse_view(a.common.view);
  c.seed = a.common.seed;
  c.checkpoint_path = a.common.out;
  c.log_path = a.log_path.empty() ? a.common.out + ".log.csv" : a.log_path;
  if (c.checkpoint_path.has_parent_path()) fs::create_directories(c.checkpoint_path.parent_path());
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  for (const auto& [k, v] : c.to_metadata()) m.config()[k] = v;
  m.config()["checkpoint_path"] = c.checkpoint_path.string();
  m.config()["log_path"] = c.log_path.string();

  dva::ProgressFn progress;
  if (!a.quiet) {
    progress = [](const dva::TrainProgress& p) {
      std::fprintf(stderr, "frames %llu updates %llu episodes %zu trailing100 %.2f wall %.0fs\n",
                   static_cast<unsigned long long>(p.env_frames),
                   static_cast<unsigned long long>(p.updates), p.episodes, p.trailing_mean,
                   p.wall_s);
    };
  }
  const dva::TrainResult r = dva::train(c, progress);
  const auto means = dva::trailing_mean(r.log);
  json res = {{"env_frames", r.env_frames},
              {"updates", r.updates},
              {"rejected_updates", r.rejected_updates},
              {"numeric_restarts", r.numeric_restarts},
              {"episodes", r.episodes},
              {"trailing100_mean", means.empty() ? 0.0 : means.back()},
              {"wall_seconds", r.wall_seconds}};
  for (auto& [k, v] : res.items()) m.result(k, v);
  m.output(c.checkpoint_path);
  m.output(c.log_path);
  std::cout << res.dump() << '\n';
  return 0;
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
  Common common;
  std::string ckpt;
  std::size_t episodes = 100;
  bool greedy = false;
  double pg = 0, pc = 0, pm = 0;
};

void setup_eval(CLI::App& root, EvalArgs& a) {
  auto* app = root.add_subcommand("eval", "Evaluate a checkpoint over seeded episodes");
  add_common(app, a.common, true, false);
  app->add_option("--ckpt", a.ckpt, "Checkpoint")->required();
  app->add_option("--episodes", a.episodes)->capture_default_str();
  app->add_flag("--greedy", a.greedy, "Argmax actions instead of sampling");
  app->add_option("--p-generic", a.pg)->capture_default_str();
  app->add_option("--p-center", a.pc)->capture_default_str();
  app->add_option("--p-main", a.pm)->capture_default_str();
}

int run_eval(EvalArgs& a, Manifest& m) {
  dva::EvalConfig cfg;
  cfg.scenario = dva::parse_scenario(a.common.scenario);
  cfg.view = dva::parse_view(a.common.view);
  cfg.drop = drop_config(a.pg, a.pc, a.pm);
  cfg.episodes = a.episodes;
  cfg.seed = a.common.seed;
  cfg.greedy = a.greedy;
  if (cfg.episodes == 0) throw UsageError("--episodes must be positive");
  const dva::Checkpoint ckpt = load_checked(a.ckpt, cfg.view);
  m.config() = {{"ckpt", a.ckpt},         {"scenario", a.common.scenario},
                {"view", a.common.view},  {"episodes", a.episodes},
                {"seed", a.common.seed},  {"greedy", a.greedy},
                {"p_generic", a.pg},      {"p_center", a.pc},
                {"p_main", a.pm}};
  const dva::EvalResult r = dva::evaluate(ckpt, cfg);
  if (!a.common.out.empty()) {
    std::ofstream os(a.common.out);
    if (!os) throw std::runtime_error("cannot write " + a.common.out);
    os << "episode,score,decisions,killed\n";
    for (std::size_t i = 0; i < r.episodes.size(); ++i) {
      const auto& e = r.episodes[i];
      os << i << ',' << e.score << ',' << e.decisions << ',' << (e.killed ? 1 : 0) << '\n';
    }
    m.output(a.common.out);
  }
  const json res = {{"score", stats_json(r.score)}, {"decisions", stats_json(r.decisions)}};
  m.result("score", res["score"]);
  m.result("decisions", res["decisions"]);
  std::cout << res.dump() << '\n';
  return 0;
}

// ---- grid -------------------------------------------------------------------

struct GridArgs {
  Common common;
  std::string ckpt;
  std::string p_values = "0,0.2,0.5,0.8,1.0";
  std::size_t episodes = 100;
  bool greedy = false;
};

void setup_grid(CLI::App& root, GridArgs& a) {
  auto* app = root.add_subcommand("grid", "Score-percentage grid over view-drop probabilities");
  add_common(app, a.common, true, true);
  app->add_option("--ckpt", a.ckpt, "Checkpoint")->required();
  app->add_option("--p-values", a.p_values, "Comma-separated drop probabilities")
      ->capture_default_str();
  app->add_option("--episodes", a.episodes, "Episodes per cell")->capture_default_str();
  app->add_flag("--greedy", a.greedy);
}

int run_grid(GridArgs& a, Manifest& m) {
  const auto view = dva::parse_view(a.common.view);
  const auto ps = parse_p_values(a.p_values);
  if (a.episodes == 0) throw UsageError("--episodes must be positive");
  const dva::Checkpoint ckpt = load_checked(a.ckpt, view);
  m.config() = {{"ckpt", a.ckpt},       {"scenario", a.common.scenario},
                {"view", a.common.view}, {"p_values", ps},
                {"episodes", a.episodes}, {"seed", a.common.seed},
                {"greedy", a.greedy}};
  const dva::RobustnessGrid g = dva::robustness_grid(
      ckpt, dva::parse_scenario(a.common.scenario), view, ps, a.episodes, a.common.seed, a.greedy);
  const fs::path out(a.common.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  g.write_csv(out);
  fs::path base = out;
  base.replace_extension();
  const fs::path baselines = base.string() + "_baselines.csv";
  g.write_baselines_csv(baselines);
  m.output(out);
  m.output(baselines);
  m.result("s_min", g.s_min);
  m.result("s_max", g.s_max);
  std::cout << g.format_table();
  return 0;
}

// ---- baseline ---------------------------------------------------------------

struct BaselineArgs {
  Common common;
  std::size_t episodes = 100;
};

void setup_baseline(CLI::App& root, BaselineArgs& a) {
  auto* app = root.add_subcommand("baseline", "Uniform-random policy score (S_min)");
  add_common(app, a.common, true, false);
  app->add_option("--episodes", a.episodes)->capture_default_str();
}

int run_baseline(BaselineArgs& a, Manifest& m) {
  if (a.episodes == 0) throw UsageError("--episodes must be positive");
  m.config() = {{"scenario", a.common.scenario},
                {"view", a.common.view},
                {"episodes", a.episodes},
                {"seed", a.common.seed}};
  const dva::Baselines b = dva::estimate_baselines(dva::parse_scenario(a.common.scenario),
                                                   dva::parse_view(a.common.view), a.episodes,
                                                   a.common.seed);
  if (!a.common.out.empty()) {
    std::ofstream os(a.common.out);
    if (!os) throw std::runtime_error("cannot write " + a.common.out);
    os << "quantity,value,n\n" << "s_min," << b.s_min << ',' << b.random.n << '\n';
    m.output(a.common.out);
  }
  const json res = {{"s_min", b.s_min}, {"random", stats_json(b.random)}};
  m.result("s_min", b.s_min);
  std::cout << res.dump() << '\n';
  return 0;
}

// ---- saliency ---------------------------------------------------------------

struct SaliencyArgs {
  Common common;
  std::string ckpt;
  std::size_t frames = 16;
  std::string policy_scalar = "probability";
};

void setup_saliency(CLI::App& root, SaliencyArgs& a) {
  auto* app = root.add_subcommand("saliency", "Export value/policy saliency maps along an episode");
  add_common(app, a.common, true, true);
  app->add_option("--ckpt", a.ckpt, "Checkpoint")->required();
  app->add_option("--frames", a.frames, "Decisions to export")->capture_default_str();
  app->add_option("--policy-scalar", a.policy_scalar, "probability | logit")
      ->check(CLI::IsMember({"probability", "logit"}))
      ->capture_default_str();
}

int run_saliency(SaliencyArgs& a, Manifest& m) {
  const auto view = dva::parse_view(a.common.view);
  const dva::Checkpoint ckpt = load_checked(a.ckpt, view);
  const dva::ArchSpec arch = ckpt.arch();
  m.config() = {{"ckpt", a.ckpt},          {"scenario", a.common.scenario},
                {"view", a.common.view},   {"frames", a.frames},
                {"seed", a.common.seed},   {"policy_scalar", a.policy_scalar}};
  const auto scalar = a.policy_scalar == "logit" ? dva::PolicyScalar::kArgmaxLogit
                                                 : dva::PolicyScalar::kArgmaxProbability;
  const fs::path dir(a.common.out);
  dva::SaliencyIndex index(dir);

  const auto env_cfg = dva::ScenarioConfig::for_scenario(dva::parse_scenario(a.common.scenario));
  auto [state, frame] =
      dva::reset(env_cfg, dva::derive_seed(a.common.seed, dva::streams::kEnv, 0));
  dva::Rng action_rng(dva::derive_seed(a.common.seed, dva::streams::kAction, 0));
  dva::PolicyNetwork<float> net(arch);
  auto lstm = dva::LstmState<float>::zeros(arch.lstm_units);
  std::size_t exported = 0;
  while (exported < a.frames && !state.done) {
    const auto obs = dva::make_observation(frame, view);
    const auto maps = dva::compute_saliency(ckpt, obs, lstm, scalar);
    index.add(dva::export_maps(maps, dir, exported));
    ++exported;
    const auto pv = net.step(ckpt.params, obs, lstm);
    const std::size_t action = action_rng.categorical<float>(pv.policy);
    frame = dva::step(state, static_cast<int>(action)).frame;
  }
  m.output(index.path());
  m.result("frames_exported", exported);
  std::cout << json{{"frames_exported", exported}, {"index", index.path().string()}}.dump()
            << '\n';
  return 0;
}

// ---- params -----------------------------------------------------------------

struct ParamsArgs {
  Common common;
  std::size_t actions = 3;
};

void setup_params(CLI::App& root, ParamsArgs& a) {
  auto* app = root.add_subcommand("params", "Per-tensor parameter table");
  add_common(app, a.common, false, false);
  app->add_option("--actions", a.actions)->capture_default_str();
}

int run_params(ParamsArgs& a, Manifest& m) {
  if (a.actions < 2) throw UsageError("--actions must be at least 2");
  const auto arch = dva::ArchSpec::standard(dva::parse_view(a.common.view), a.actions);
  const auto single = dva::ArchSpec::standard(dva::ViewVariant::kSingle, a.actions);
  m.config() = {{"view", a.common.view}, {"actions", a.actions}};
  std::ostringstream os;
  std::size_t total = 0;
  char buf[160];
  for (const auto& [name, shape] : dva::network_layout(arch)) {
    const std::size_t n = dva::shape_numel(shape);
    total += n;
    std::snprintf(buf, sizeof(buf), "%-22s %-18s %10zu\n", name.c_str(),
                  dva::shape_str(shape).c_str(), n);
    os << buf;
  }
  const std::size_t ref = dva::expected_param_count(single);
  const double reduction = 1.0 - static_cast<double>(total) / static_cast<double>(ref);
  std::snprintf(buf, sizeof(buf), "total %zu\nreduction vs single %.2f%%\n", total,
                100.0 * reduction);
  os << buf;
  std::cout << os.str();
  if (!a.common.out.empty()) {
    std::ofstream f(a.common.out);
    if (!f) throw std::runtime_error("cannot write " + a.common.out);
    f << os.str();
    m.output(a.common.out);
  }
  m.result("total", total);
  m.result("reduction_vs_single", reduction);
  return 0;
}

// ---- gradcheck --------------------------------------------------------------

struct GradcheckArgs {
  Common common;
  dva::SuiteOptions opt;
};

void setup_gradcheck(CLI::App& root, GradcheckArgs& a) {
  auto* app = root.add_subcommand("gradcheck", "Finite-difference check of every backward pass");
  add_common(app, a.common, true, false);
  app->add_option("--trials", a.opt.trials, "Trials per case")->capture_default_str();
  app->add_option("--tolerance", a.opt.check.tolerance)->capture_default_str();
  app->add_option("--entries", a.opt.check.max_entries, "Entries checked per tensor (0 = all)")
      ->capture_default_str();
}

int run_gradcheck(GradcheckArgs& a, Manifest& m) {
  a.opt.seed = a.common.seed;
  if (a.opt.trials == 0) throw UsageError("--trials must be positive");
  m.config() = {{"seed", a.opt.seed},
                {"trials", a.opt.trials},
                {"tolerance", a.opt.check.tolerance},
                {"step", a.opt.check.step},
                {"abs_floor", a.opt.check.abs_floor},
                {"entries", a.opt.check.max_entries}};
  const dva::SuiteReport r = dva::run_gradcheck_suite(a.opt);
  std::ostringstream os;
  os << "case,trials,entries,skipped,failures,max_rel_error\n";
  char buf[160];
  for (const auto& c : r.cases) {
    std::snprintf(buf, sizeof(buf), "%s,%zu,%zu,%zu,%zu,%.3e\n", c.name.c_str(), c.trials,
                  c.entries, c.skipped, c.failures, c.max_rel_error);
    os << buf;
  }
  std::cout << os.str();
  std::snprintf(buf, sizeof(buf), "max_rel_error %.3e tolerance %.1e %s (%.1fs)\n",
                r.max_rel_error(), r.tolerance, r.passed() ? "PASS" : "FAIL", r.seconds);
  std::cout << buf;
  if (!a.common.out.empty()) {
    std::ofstream f(a.common.out);
    if (!f) throw std::runtime_error("cannot write " + a.common.out);
    f << os.str();
    m.output(a.common.out);
  }
  m.result("max_rel_error", r.max_rel_error());
  m.result("skipped_at_kinks", r.skipped());
  m.result("passed", r.passed());
  if (!r.passed()) throw CheckFailed("gradient check exceeded tolerance");
  return 0;
}

void print_error(const char* kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-view A3C agents: training, evaluation and analysis"};
  app.set_version_flag("--version", DVA_VERSION);
  app.require_subcommand(1);

  TrainArgs train_args;
  EvalArgs eval_args;
  GridArgs grid_args;
  BaselineArgs baseline_args;
  SaliencyArgs saliency_args;
  ParamsArgs params_args;
  GradcheckArgs gradcheck_args;
  setup_train(app, train_args);
  setup_eval(app, eval_args);
  setup_grid(app, grid_args);
  setup_baseline(app, baseline_args);
  setup_saliency(app, saliency_args);
  setup_params(app, params_args);
  setup_gradcheck(app, gradcheck_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  Manifest manifest(command, argc, argv);
  const Common* common = nullptr;
  try {
    int rc = 0;
    if (command == "train") {
      common = &train_args.common;
      rc = run_train(train_args, manifest);
    } else if (command == "eval") {
      common = &eval_args.common;
      rc = run_eval(eval_args, manifest);
    } else if (command == "grid") {
      common = &grid_args.common;
      rc = run_grid(grid_args, manifest);
    } else if (command == "baseline") {
      common = &baseline_args.common;
      rc = run_baseline(baseline_args, manifest);
    } else if (command == "saliency") {
      common = &saliency_args.common;
      rc = run_saliency(saliency_args, manifest);
    } else if (command == "params") {
      common = &params_args.common;
      rc = run_params(params_args, manifest);
    } else {
      common = &gradcheck_args.common;
      rc = run_gradcheck(gradcheck_args, manifest);
    }
    manifest.write(manifest_path(*common, command));
    return rc;
  } catch (const UsageError& e) {
    print_error("usage", e.what());
    return 2;
  } catch (const CheckFailed& e) {
    if (common) manifest.write(manifest_path(*common, command));
    print_error("check_failed", e.what());
    return 3;
  } catch (const std::exception& e) {
    print_error("runtime", e.what());
    return 1;
  }
}
