#include "dva/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dva/layers.hpp"
#include "dva/network.hpp"
#include "dva/random.hpp"

namespace dva {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

double GradCheckReport::max_rel_error() const {
  double m = 0;
  for (const auto& t : tensors) m = std::max(m, t.max_rel_error);
  return m;
}

std::size_t GradCheckReport::failures() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.failures;
  return n;
}

namespace {

std::vector<std::size_t> pick_entries(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (k == 0 || k >= n) return idx;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

Probe checked_probe(const ProbeFn& fn, const ParamSet<double>& p) {
  Probe r = fn(p);
  if (!std::isfinite(r.loss)) throw NumericError("grad_check: non-finite loss");
  return r;
}

}  // namespace

GradCheckReport grad_check(const LossFn& loss, const ParamSet<double>& params,
                           const ParamSet<double>& analytic, const GradCheckOptions& options) {
  return grad_check([&](const ParamSet<double>& p) { return Probe{loss(p), {}}; }, params,
                    analytic, options);
}

GradCheckReport grad_check(const ProbeFn& fn, const ParamSet<double>& params,
                           const ParamSet<double>& analytic, const GradCheckOptions& options) {
  if (!params.same_layout(analytic)) throw ShapeError("grad_check: gradients do not mirror params");
  const std::vector<bool> base = checked_probe(fn, params).pattern;
  GradCheckReport report;
  report.tolerance = options.tolerance;
  Rng rng(options.seed);
  ParamSet<double> probe = params;
  for (std::size_t t = 0; t < params.size(); ++t) {
    TensorCheck tc;
    tc.name = params.name(t);
    for (std::size_t i : pick_entries(params.tensor(t).size(), options.max_entries, rng)) {
      double& x = probe.tensor(t)[i];
      const double x0 = x;
      x = x0 + options.step;
      const Probe up = checked_probe(fn, probe);
      x = x0 - options.step;
      const Probe down = checked_probe(fn, probe);
      x = x0;
      if (up.pattern != base || down.pattern != base) {
        ++tc.skipped;
        continue;
      }
      const double numeric = (up.loss - down.loss) / (2.0 * options.step);
      const double a = analytic.tensor(t)[i];
      const double rel = relative_error(a, numeric, options.abs_floor);
      if (rel > tc.max_rel_error) {
        tc.max_rel_error = rel;
        tc.worst_index = i;
      }
      tc.max_abs_error = std::max(tc.max_abs_error, std::abs(a - numeric));
      if (!(rel <= options.tolerance)) ++tc.failures;
      ++tc.checked;
    }
    report.tensors.push_back(tc);
  }
  return report;
}

std::size_t GradCheckReport::skipped() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.skipped;
  return n;
}

double SuiteReport::max_rel_error() const {
  double m = 0;
  for (const auto& c : cases) m = std::max(m, c.max_rel_error);
  return m;
}

std::size_t SuiteReport::skipped() const {
  std::size_t n = 0;
  for (const auto& c : cases) n += c.skipped;
  return n;
}

bool SuiteReport::passed() const {
  return std::all_of(cases.begin(), cases.end(),
                     [](const SuiteCase& c) { return c.failures == 0 && c.trials > 0; });
}

namespace {

Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::size_t rand_between(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.uniform_int(hi - lo + 1));
}

// Each trial projects the layer output onto a random direction u, so the
// scalar loss is u . f(inputs) and the analytic gradient is the layer's
// vector-Jacobian product with u.

GradCheckReport conv_trial(Rng& rng, const GradCheckOptions& opt) {
  const std::size_t cin = rand_between(rng, 1, 3), cout = rand_between(rng, 1, 3);
  const std::size_t k = rand_between(rng, 1, 4), stride = rand_between(rng, 1, 3);
  const std::size_t h = rand_between(rng, k, k + 6), w = rand_between(rng, k, k + 6);
  ParamSet<double> p;
  p.add("x", random_tensor({cin, h, w}, rng));
  p.add("w", random_tensor({cout, cin, k, k}, rng));
  p.add("b", random_tensor({cout}, rng));
  const Tensor<double> y = conv2d(p["x"], p["w"], p["b"], stride);
  const Tensor<double> u = random_tensor(y.shape(), rng);
  const ConvGrads<double> g = conv2d_backward(p["x"], p["w"], stride, u);
  ParamSet<double> a;
  a.add("x", g.d_input);
  a.add("w", g.d_weights);
  a.add("b", g.d_bias);
  auto loss = [&](const ParamSet<double>& q) {
    return dot(u, conv2d(q["x"], q["w"], q["b"], stride));
  };
  return grad_check(loss, p, a, opt);
}

GradCheckReport fc_trial(Rng& rng, const GradCheckOptions& opt) {
  const std::size_t n_in = rand_between(rng, 1, 8), n_out = rand_between(rng, 1, 6);
  ParamSet<double> p;
  p.add("x", random_tensor({n_in}, rng));
  p.add("w", random_tensor({n_out, n_in}, rng));
  p.add("b", random_tensor({n_out}, rng));
  const Tensor<double> u = random_tensor({n_out}, rng);
  const LinearGrads<double> g = fully_connected_backward(p["x"], p["w"], u);
  ParamSet<double> a;
  a.add("x", g.d_x);
  a.add("w", g.d_weights);
  a.add("b", g.d_bias);
  auto loss = [&](const ParamSet<double>& q) {
    return dot(u, fully_connected(q["x"], q["w"], q["b"]));
  };
  return grad_check(loss, p, a, opt);
}

GradCheckReport elu_trial(Rng& rng, const GradCheckOptions& opt) {
  const std::size_t n = rand_between(rng, 1, 16);
  ParamSet<double> p;
  p.add("x", random_tensor({n}, rng, -3.0, 3.0));
  const Tensor<double> u = random_tensor({n}, rng);
  ParamSet<double> a;
  a.add("x", elu_backward(p["x"], u));
  auto loss = [&](const ParamSet<double>& q) { return dot(u, elu(q["x"])); };
  return grad_check(loss, p, a, opt);
}

GradCheckReport softmax_trial(Rng& rng, const GradCheckOptions& opt) {
  const std::size_t n = rand_between(rng, 1, 8);
  ParamSet<double> p;
  p.add("z", random_tensor({n}, rng, -4.0, 4.0));
  const Tensor<double> u = random_tensor({n}, rng);
  ParamSet<double> a;
  a.add("z", softmax_backward(softmax(p["z"]), u));
  auto loss = [&](const ParamSet<double>& q) { return dot(u, softmax(q["z"])); };
  return grad_check(loss, p, a, opt);
}

GradCheckReport lstm_trial(Rng& rng, const GradCheckOptions& opt) {
  const std::size_t n_in = rand_between(rng, 1, 5), hidden = rand_between(rng, 1, 4);
  ParamSet<double> p;
  p.add("x", random_tensor({n_in}, rng));
  p.add("h", random_tensor({hidden}, rng));
  p.add("c", random_tensor({hidden}, rng));
  p.add("w", random_tensor({4 * hidden, n_in + hidden}, rng));
  p.add("b", random_tensor({4 * hidden}, rng));
  const Tensor<double> uh = random_tensor({hidden}, rng);
  const Tensor<double> uc = random_tensor({hidden}, rng);
  const LstmGrads<double> g =
      lstm_step_backward(p["x"], p["h"], p["c"], p["w"], p["b"], uh, uc);
  ParamSet<double> a;
  a.add("x", g.d_x);
  a.add("h", g.d_h);
  a.add("c", g.d_c);
  a.add("w", g.d_weights);
  a.add("b", g.d_bias);
  auto loss = [&](const ParamSet<double>& q) {
    const LstmStepResult<double> r = lstm_step(q["x"], q["h"], q["c"], q["w"], q["b"]);
    return dot(uh, r.h) + dot(uc, r.c);
  };
  return grad_check(loss, p, a, opt);
}

ArchSpec small_arch(ViewVariant variant, Rng& rng) {
  ArchSpec arch;
  arch.variant = variant;
  arch.n_actions = rand_between(rng, 2, 4);
  arch.frame_size = 16;
  arch.conv1 = {3, 4, 2};
  arch.conv2 = {4, 3, 1};
  arch.fc_units = 8;
  arch.lstm_units = 6;
  return arch;
}

// Initialized biases are zero; random ones keep pre-activations off the
// ELU boundary when a view is blacked out.
ParamSet<double> random_params(const ArchSpec& arch, Rng& rng) {
  ParamSet<double> p = build_network<double>(arch, rng.next());
  for (auto& e : p) {
    if (e.name.ends_with(".b")) {
      for (double& v : e.tensor.data()) v += rng.uniform(-0.1, 0.1);
    }
  }
  return p;
}

Observation<double> random_observation(const ArchSpec& arch, Rng& rng) {
  Observation<double> obs{arch.variant, {}};
  const std::size_t s = arch.view_size();
  for (std::size_t v = 0; v < arch.stream_count(); ++v) {
    Tensor<double> view = random_tensor({s, s}, rng, 0.0, 1.0);
    if (rng.bernoulli(0.15)) view.fill(0.0);
    obs.views.push_back(std::move(view));
  }
  return obs;
}

LstmState<double> random_state(const ArchSpec& arch, Rng& rng) {
  return {random_tensor({arch.lstm_units}, rng, -0.5, 0.5),
          random_tensor({arch.lstm_units}, rng, -0.5, 0.5)};
}

GradCheckReport a3c_trial(ViewVariant variant, std::size_t length, Rng& rng,
                          const GradCheckOptions& opt) {
  const ArchSpec arch = small_arch(variant, rng);
  const ParamSet<double> params = random_params(arch, rng);
  Rollout<double> rollout;
  rollout.initial_state = random_state(arch, rng);
  for (std::size_t t = 0; t < length; ++t) {
    rollout.steps.push_back({random_observation(arch, rng),
                             static_cast<std::size_t>(rng.uniform_int(arch.n_actions)),
                             rng.uniform(-1.0, 1.0), 0.0});
  }
  rollout.terminal = rng.bernoulli(0.5);
  rollout.bootstrap = rollout.terminal ? 0.0 : rng.uniform(-1.0, 1.0);
  const LossConfig cfg;
  const auto [breakdown, grads] = a3c_loss_and_grads(arch, rollout, params, cfg);
  const std::vector<double> adv = rollout_advantages(arch, rollout, params, cfg);
  std::vector<std::size_t> actions;
  std::vector<double> rewards;
  for (const auto& s : rollout.steps) {
    actions.push_back(s.action);
    rewards.push_back(s.reward);
  }
  PolicyNetwork<double> net(arch);
  ProbeFn probe = [&](const ParamSet<double>& q) {
    net.begin_tape(rollout.initial_state);
    for (const auto& s : rollout.steps) net.tape_step(q, s.obs);
    return Probe{net.tape_loss(actions, rewards, rollout.bootstrap, cfg, adv).total,
                 net.tape_activation_pattern()};
  };
  return grad_check(probe, params, grads, opt);
}

GradCheckReport saliency_trial(ViewVariant variant, HeadScalar head, Rng& rng,
                               const GradCheckOptions& opt) {
  if (head == HeadScalar::kArgmaxLogit) {
    throw std::invalid_argument("saliency finite differences cover value and probability heads");
  }
  const ArchSpec arch = small_arch(variant, rng);
  const ParamSet<double> params = random_params(arch, rng);
  const Observation<double> obs = random_observation(arch, rng);
  const LstmState<double> state = random_state(arch, rng);
  PolicyNetwork<double> net(arch);
  std::vector<Tensor<double>> d_in;
  const PolicyValue<double> pv = net.input_gradient(params, obs, state, head, d_in);
  const std::size_t a_star = static_cast<std::size_t>(
      std::max_element(pv.policy.begin(), pv.policy.end()) - pv.policy.begin());

  ParamSet<double> views, analytic;
  const auto names = arch.stream_names();
  for (std::size_t v = 0; v < obs.views.size(); ++v) {
    views.add(names[v], obs.views[v]);
    analytic.add(names[v], d_in[v]);
  }
  PolicyNetwork<double> probe_net(arch);
  ProbeFn probe = [&](const ParamSet<double>& q) {
    Observation<double> o{arch.variant, {}};
    for (std::size_t v = 0; v < q.size(); ++v) o.views.push_back(q.tensor(v));
    probe_net.begin_tape(state);
    const PolicyValue<double> out = probe_net.tape_step(params, o);
    const double y = head == HeadScalar::kValue ? out.value : out.policy[a_star];
    return Probe{y, probe_net.tape_activation_pattern()};
  };
  return grad_check(probe, views, analytic, opt);
}

void merge(SuiteCase& c, const GradCheckReport& r) {
  ++c.trials;
  for (const auto& t : r.tensors) {
    c.entries += t.checked;
    c.skipped += t.skipped;
    c.failures += t.failures;
    c.max_rel_error = std::max(c.max_rel_error, t.max_rel_error);
  }
}

}  // namespace

SuiteReport run_gradcheck_suite(const SuiteOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  using Trial = std::function<GradCheckReport(std::size_t, Rng&, const GradCheckOptions&)>;
  struct Case {
    std::string name;
    Trial run;
  };
  std::vector<Case> cases = {
      {"conv2d", [](std::size_t, Rng& r, const GradCheckOptions& o) { return conv_trial(r, o); }},
      {"fully_connected",
       [](std::size_t, Rng& r, const GradCheckOptions& o) { return fc_trial(r, o); }},
      {"elu", [](std::size_t, Rng& r, const GradCheckOptions& o) { return elu_trial(r, o); }},
      {"softmax",
       [](std::size_t, Rng& r, const GradCheckOptions& o) { return softmax_trial(r, o); }},
      {"lstm", [](std::size_t, Rng& r, const GradCheckOptions& o) { return lstm_trial(r, o); }},
  };
  for (ViewVariant v : {ViewVariant::kSingle, ViewVariant::kDual, ViewVariant::kGenericOnly}) {
    cases.push_back({"a3c_loss_" + std::string(to_string(v)),
                     [v](std::size_t i, Rng& r, const GradCheckOptions& o) {
                       return a3c_trial(v, 1 + i % 5, r, o);
                     }});
  }
  for (ViewVariant v : {ViewVariant::kSingle, ViewVariant::kDual, ViewVariant::kGenericOnly}) {
    cases.push_back({"saliency_value_" + std::string(to_string(v)),
                     [v](std::size_t, Rng& r, const GradCheckOptions& o) {
                       return saliency_trial(v, HeadScalar::kValue, r, o);
                     }});
    cases.push_back({"saliency_policy_" + std::string(to_string(v)),
                     [v](std::size_t, Rng& r, const GradCheckOptions& o) {
                       return saliency_trial(v, HeadScalar::kArgmaxProbability, r, o);
                     }});
  }

  const std::size_t n_cases = cases.size();
  const std::size_t trials = options.trials;
  std::vector<GradCheckReport> reports(n_cases * trials);
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (long job = 0; job < static_cast<long>(reports.size()); ++job) {
    const std::size_t c = static_cast<std::size_t>(job) / trials;
    const std::size_t i = static_cast<std::size_t>(job) % trials;
    try {
      Rng rng(derive_seed(options.seed, c, i));
      GradCheckOptions opt = options.check;
      opt.seed = rng.next();
      reports[static_cast<std::size_t>(job)] = cases[c].run(i, rng, opt);
    } catch (...) {
#pragma omp critical
      error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);

  SuiteReport out;
  out.tolerance = options.check.tolerance;
  for (std::size_t c = 0; c < n_cases; ++c) {
    SuiteCase sc;
    sc.name = cases[c].name;
    for (std::size_t i = 0; i < trials; ++i) merge(sc, reports[c * trials + i]);
    out.cases.push_back(sc);
  }
  out.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace dva
