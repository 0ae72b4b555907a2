#include "dva/network.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dva/random.hpp"

namespace dva {

std::string_view to_string(ViewVariant v) {
  switch (v) {
    case ViewVariant::kSingle: return "single";
    case ViewVariant::kDual: return "dual";
    case ViewVariant::kGenericOnly: return "generic";
  }
  return "?";
}

ViewVariant parse_view(std::string_view s) {
  if (s == "single") return ViewVariant::kSingle;
  if (s == "dual") return ViewVariant::kDual;
  if (s == "generic") return ViewVariant::kGenericOnly;
  throw std::invalid_argument("unknown view variant '" + std::string(s) +
                              "' (expected single|dual|generic)");
}

std::vector<std::string> ArchSpec::stream_names() const {
  switch (variant) {
    case ViewVariant::kSingle: return {"main"};
    case ViewVariant::kDual: return {"generic", "center"};
    case ViewVariant::kGenericOnly: return {"generic"};
  }
  return {};
}

ConvGeometry ArchSpec::conv1_geometry() const {
  return {1, view_size(), view_size(), conv1.channels, conv1.kernel, conv1.stride};
}

ConvGeometry ArchSpec::conv2_geometry() const {
  const ConvGeometry g1 = conv1_geometry();
  return {conv1.channels, g1.out_h(), g1.out_w(), conv2.channels, conv2.kernel,
          conv2.stride};
}

void ArchSpec::validate() const {
  if (n_actions < 2) throw std::invalid_argument("network needs at least 2 actions");
  if (variant != ViewVariant::kSingle && frame_size % 2 != 0) {
    throw std::invalid_argument("split views need an even frame size");
  }
  if (conv1.channels == 0 || conv2.channels == 0 || conv1.stride == 0 ||
      conv2.stride == 0 || conv1.kernel == 0 || conv2.kernel == 0 || fc_units == 0 ||
      lstm_units == 0) {
    throw std::invalid_argument("layer sizes must be positive");
  }
  if (view_size() < conv1.kernel) throw ShapeError("view smaller than conv1 kernel");
  const ConvGeometry g1 = conv1_geometry();
  if (g1.out_h() < conv2.kernel) throw ShapeError("conv1 output smaller than conv2 kernel");
}

std::vector<std::pair<std::string, Shape>> network_layout(const ArchSpec& arch) {
  arch.validate();
  std::vector<std::pair<std::string, Shape>> out;
  const auto& c1 = arch.conv1;
  const auto& c2 = arch.conv2;
  for (const auto& s : arch.stream_names()) {
    out.push_back({s + ".conv1.w", {c1.channels, 1, c1.kernel, c1.kernel}});
    out.push_back({s + ".conv1.b", {c1.channels}});
    out.push_back({s + ".conv2.w", {c2.channels, c1.channels, c2.kernel, c2.kernel}});
    out.push_back({s + ".conv2.b", {c2.channels}});
  }
  const std::size_t L = arch.lstm_units;
  out.push_back({"fc.w", {arch.fc_units, arch.feature_size()}});
  out.push_back({"fc.b", {arch.fc_units}});
  out.push_back({"lstm.w", {4 * L, arch.fc_units + L}});
  out.push_back({"lstm.b", {4 * L}});
  out.push_back({"policy.w", {arch.n_actions, L}});
  out.push_back({"policy.b", {arch.n_actions}});
  out.push_back({"value.w", {1, L}});
  out.push_back({"value.b", {1}});
  return out;
}

std::size_t expected_param_count(const ArchSpec& arch) {
  std::size_t n = 0;
  for (const auto& [name, shape] : network_layout(arch)) n += shape_numel(shape);
  return n;
}

template <class T>
ParamSet<T> build_network(const ArchSpec& arch, std::uint64_t seed) {
  Rng rng(derive_seed(seed, streams::kInit));
  ParamSet<T> params;
  for (auto& [name, shape] : network_layout(arch)) {
    Tensor<T> t(shape);
    if (shape.size() >= 2) {
      std::size_t fan_in = 1;
      for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (T& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
    } else if (name == "lstm.b") {
      const std::size_t L = arch.lstm_units;
      for (std::size_t j = L; j < 2 * L; ++j) t[j] = T{1};  // forget gate
    }
    params.add(name, std::move(t));
  }
  return params;
}

template <class T>
std::vector<T> n_step_returns(std::span<const T> rewards, T bootstrap, T gamma) {
  std::vector<T> out(rewards.size());
  T R = bootstrap;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    R = rewards[t] + gamma * R;
    out[t] = R;
  }
  return out;
}

template <class T>
T entropy(std::span<const T> probs) {
  T h = 0;
  for (T p : probs) {
    if (p > T{0}) h -= p * std::log(p);
  }
  return h;
}

template <class T>
void Rollout<T>::validate() const {
  if (steps.empty()) throw std::invalid_argument("rollout is empty");
  if (terminal && bootstrap != T{0}) {
    throw std::invalid_argument("terminal rollout must bootstrap from 0");
  }
}

// ---- PolicyNetwork -----------------------------------------------------------

template <class T>
PolicyNetwork<T>::PolicyNetwork(ArchSpec arch)
    : arch_(std::move(arch)),
      layout_(network_layout(arch_)),
      g1_(arch_.conv1_geometry()),
      g2_(arch_.conv2_geometry()) {
  std::size_t i = 0;
  for (std::size_t s = 0; s < arch_.stream_count(); ++s, i += 4) {
    stream_idx_.push_back({i, i + 1, i + 2, i + 3});
  }
  fc_w_ = i++;
  fc_b_ = i++;
  lstm_w_ = i++;
  lstm_b_ = i++;
  pol_w_ = i++;
  pol_b_ = i++;
  val_w_ = i++;
  val_b_ = i++;
  tape_initial_ = LstmState<T>::zeros(arch_.lstm_units);
}

template <class T>
void PolicyNetwork<T>::check_params(const ParamSet<T>& params) const {
  if (params.size() != layout_.size()) {
    throw ShapeError("parameter set does not match the " +
                     std::string(to_string(arch_.variant)) + " architecture");
  }
  for (std::size_t i = 0; i < layout_.size(); ++i) {
    if (params.name(i) != layout_[i].first ||
        params.tensor(i).shape() != layout_[i].second) {
      throw ShapeError("parameter " + params.name(i) + " " +
                       shape_str(params.tensor(i).shape()) + " does not match expected " +
                       layout_[i].first + " " + shape_str(layout_[i].second));
    }
  }
}

template <class T>
void PolicyNetwork<T>::check_observation(const Observation<T>& obs) const {
  if (obs.variant != arch_.variant) {
    throw std::invalid_argument("observation variant " + std::string(to_string(obs.variant)) +
                                " does not match network variant " +
                                std::string(to_string(arch_.variant)));
  }
  if (obs.views.size() != arch_.stream_count()) {
    throw ShapeError("observation has the wrong number of views");
  }
  const Shape want{arch_.view_size(), arch_.view_size()};
  for (const auto& v : obs.views) {
    if (v.shape() != want) {
      throw ShapeError("view shape " + shape_str(v.shape()) + " expected " +
                       shape_str(want));
    }
  }
}

template <class T>
void PolicyNetwork<T>::forward(const ParamSet<T>& params, const Observation<T>& obs,
                               std::span<const T> h_prev, std::span<const T> c_prev,
                               StepCache& cache, std::span<T> c_out) {
  const std::size_t F = arch_.stream_features();
  cache.streams.resize(arch_.stream_count());
  cache.features.resize(arch_.feature_size());
  for (std::size_t s = 0; s < arch_.stream_count(); ++s) {
    StreamCache& sc = cache.streams[s];
    const StreamIdx& ix = stream_idx_[s];
    sc.cols1.resize(g1_.patch() * g1_.positions());
    kernels::im2col<T>(g1_, obs.views[s].data(), sc.cols1);
    sc.pre1.resize(g1_.output_size());
    kernels::conv2d_forward_cols<T>(g1_, sc.cols1, params.tensor(ix.conv1_w).data(),
                                    params.tensor(ix.conv1_b).data(), sc.pre1);
    sc.act1.resize(sc.pre1.size());
    for (std::size_t i = 0; i < sc.pre1.size(); ++i) sc.act1[i] = elu(sc.pre1[i]);
    sc.cols2.resize(g2_.patch() * g2_.positions());
    kernels::im2col<T>(g2_, sc.act1, sc.cols2);
    sc.pre2.resize(g2_.output_size());
    kernels::conv2d_forward_cols<T>(g2_, sc.cols2, params.tensor(ix.conv2_w).data(),
                                    params.tensor(ix.conv2_b).data(), sc.pre2);
    T* feat = cache.features.data() + s * F;
    for (std::size_t i = 0; i < F; ++i) feat[i] = elu(sc.pre2[i]);
  }

  const std::size_t FC = arch_.fc_units, L = arch_.lstm_units, A = arch_.n_actions;
  cache.fc_pre.resize(FC);
  kernels::linear_forward<T>(FC, cache.features.size(), cache.features,
                             params.tensor(fc_w_).data(), params.tensor(fc_b_).data(),
                             cache.fc_pre);
  cache.fc_act.resize(FC);
  for (std::size_t i = 0; i < FC; ++i) cache.fc_act[i] = elu(cache.fc_pre[i]);

  cache.h.resize(L);
  lstm_forward<T>(FC, L, cache.fc_act, h_prev, c_prev, params.tensor(lstm_w_).data(),
                  params.tensor(lstm_b_).data(), cache.lstm, cache.h, c_out);

  cache.log_probs.resize(A);
  kernels::linear_forward<T>(A, L, cache.h, params.tensor(pol_w_).data(),
                             params.tensor(pol_b_).data(), cache.log_probs);
  T value{};
  kernels::linear_forward<T>(1, L, cache.h, params.tensor(val_w_).data(),
                             params.tensor(val_b_).data(), std::span<T>(&value, 1));
  if (!std::isfinite(value)) throw NumericError("network produced a non-finite value");
  cache.value = value;
  cache.policy.resize(A);
  softmax<T>(cache.log_probs, cache.policy);
  // log-softmax from the same logits
  const T mx = *std::max_element(cache.log_probs.begin(), cache.log_probs.end());
  T sum = 0;
  for (T z : cache.log_probs) sum += std::exp(z - mx);
  const T lse = mx + std::log(sum);
  for (T& z : cache.log_probs) z -= lse;
}

template <class T>
void PolicyNetwork<T>::backward(const ParamSet<T>& params, const StepCache& cache,
                                std::span<const T> d_logits, T d_value, std::span<T> d_h,
                                std::span<const T> d_c, std::span<T> d_h_prev,
                                std::span<T> d_c_prev, ParamSet<T>& grads,
                                std::vector<Tensor<T>>* d_inputs, T* lstm_dz, T* fc_d) {
  const std::size_t FC = arch_.fc_units, L = arch_.lstm_units, A = arch_.n_actions;
  const std::size_t F = arch_.stream_features();

  kernels::linear_backward<T>(A, L, cache.h, params.tensor(pol_w_).data(), d_logits, d_h,
                              grads.tensor(pol_w_).data(), grads.tensor(pol_b_).data());
  kernels::linear_backward<T>(1, L, cache.h, params.tensor(val_w_).data(),
                              std::span<const T>(&d_value, 1), d_h,
                              grads.tensor(val_w_).data(), grads.tensor(val_b_).data());

  d_fc_.assign(FC, T{0});
  lstm_backward<T>(FC, L, cache.lstm, params.tensor(lstm_w_).data(), d_h, d_c, d_fc_,
                   d_h_prev, d_c_prev,
                   lstm_dz ? std::span<T>{} : grads.tensor(lstm_w_).data(),
                   grads.tensor(lstm_b_).data(), lstm_scratch_);
  if (lstm_dz) std::copy_n(lstm_scratch_.begin(), 4 * L, lstm_dz);
  for (std::size_t i = 0; i < FC; ++i) d_fc_[i] *= elu_grad(cache.fc_pre[i]);
  if (fc_d) std::copy(d_fc_.begin(), d_fc_.end(), fc_d);

  d_features_.assign(cache.features.size(), T{0});
  kernels::linear_backward<T>(FC, cache.features.size(), cache.features,
                              params.tensor(fc_w_).data(), d_fc_, d_features_,
                              fc_d ? std::span<T>{} : grads.tensor(fc_w_).data(),
                              grads.tensor(fc_b_).data());

  if (d_inputs) d_inputs->clear();
  for (std::size_t s = 0; s < arch_.stream_count(); ++s) {
    const StreamCache& sc = cache.streams[s];
    const StreamIdx& ix = stream_idx_[s];
    std::span<T> d_pre2(d_features_.data() + s * F, F);
    for (std::size_t i = 0; i < F; ++i) d_pre2[i] *= elu_grad(sc.pre2[i]);

    d_cols_.resize(g2_.patch() * g2_.positions());
    kernels::conv2d_backward_cols<T>(g2_, sc.cols2, params.tensor(ix.conv2_w).data(), d_pre2,
                                     d_cols_, grads.tensor(ix.conv2_w).data(),
                                     grads.tensor(ix.conv2_b).data());
    d_act1_.assign(g1_.output_size(), T{0});
    kernels::col2im_add<T>(g2_, d_cols_, d_act1_);
    for (std::size_t i = 0; i < d_act1_.size(); ++i) d_act1_[i] *= elu_grad(sc.pre1[i]);

    if (d_inputs) {
      d_cols_.resize(g1_.patch() * g1_.positions());
      kernels::conv2d_backward_cols<T>(g1_, sc.cols1, params.tensor(ix.conv1_w).data(),
                                       d_act1_, d_cols_, grads.tensor(ix.conv1_w).data(),
                                       grads.tensor(ix.conv1_b).data());
      Tensor<T> d_in({g1_.in_h, g1_.in_w});
      kernels::col2im_add<T>(g1_, d_cols_, d_in.data());
      d_inputs->push_back(std::move(d_in));
    } else {
      kernels::conv2d_backward_cols<T>(g1_, sc.cols1, params.tensor(ix.conv1_w).data(),
                                       d_act1_, std::span<T>{},
                                       grads.tensor(ix.conv1_w).data(),
                                       grads.tensor(ix.conv1_b).data());
    }
  }
}

template <class T>
PolicyValue<T> PolicyNetwork<T>::step(const ParamSet<T>& params, const Observation<T>& obs,
                                      LstmState<T>& state) {
  check_params(params);
  check_observation(obs);
  std::vector<T> c_out(arch_.lstm_units);
  forward(params, obs, state.h.data(), state.c.data(), scratch_step_, c_out);
  std::copy(scratch_step_.h.begin(), scratch_step_.h.end(), state.h.data().begin());
  std::copy(c_out.begin(), c_out.end(), state.c.data().begin());
  return {scratch_step_.policy, scratch_step_.value};
}

template <class T>
void PolicyNetwork<T>::begin_tape(const LstmState<T>& initial) {
  if (initial.h.size() != arch_.lstm_units || initial.c.size() != arch_.lstm_units) {
    throw ShapeError("initial LSTM state has the wrong size");
  }
  tape_initial_ = initial;
  tape_len_ = 0;
}

template <class T>
LstmState<T> PolicyNetwork<T>::tape_state() const {
  if (tape_len_ == 0) return tape_initial_;
  const StepCache& last = tape_[tape_len_ - 1];
  const std::size_t L = arch_.lstm_units;
  return {Tensor<T>({L}, last.h), Tensor<T>({L}, last.lstm.c)};
}

template <class T>
std::vector<bool> PolicyNetwork<T>::tape_activation_pattern() const {
  std::vector<bool> bits;
  auto add = [&](const std::vector<T>& pre) {
    for (T v : pre) bits.push_back(v > T{0});
  };
  for (std::size_t t = 0; t < tape_len_; ++t) {
    for (const auto& sc : tape_[t].streams) {
      add(sc.pre1);
      add(sc.pre2);
    }
    add(tape_[t].fc_pre);
  }
  return bits;
}

template <class T>
PolicyValue<T> PolicyNetwork<T>::tape_step(const ParamSet<T>& params,
                                           const Observation<T>& obs) {
  check_params(params);
  check_observation(obs);
  if (tape_.size() <= tape_len_) tape_.emplace_back();
  std::span<const T> h_prev, c_prev;
  if (tape_len_ == 0) {
    h_prev = tape_initial_.h.data();
    c_prev = tape_initial_.c.data();
  } else {
    h_prev = tape_[tape_len_ - 1].h;
    c_prev = tape_[tape_len_ - 1].lstm.c;
  }
  tape_c_.resize(arch_.lstm_units);
  StepCache& cache = tape_[tape_len_];
  forward(params, obs, h_prev, c_prev, cache, tape_c_);
  ++tape_len_;
  return {cache.policy, cache.value};
}

namespace {

template <class T>
void check_rollout_inputs(std::size_t len, std::span<const std::size_t> actions,
                          std::span<const T> rewards, std::size_t n_actions) {
  if (len == 0) throw std::invalid_argument("loss over an empty rollout");
  if (actions.size() != len || rewards.size() != len) {
    throw std::invalid_argument("actions/rewards length does not match the taped steps");
  }
  for (std::size_t a : actions) {
    if (a >= n_actions) throw std::invalid_argument("action index out of range");
  }
}

}  // namespace

template <class T>
LossBreakdown<T> PolicyNetwork<T>::tape_loss(std::span<const std::size_t> actions,
                                             std::span<const T> rewards, T bootstrap,
                                             const LossConfig& cfg,
                                             std::span<const T> advantages) const {
  check_rollout_inputs<T>(tape_len_, actions, rewards, arch_.n_actions);
  if (advantages.size() != tape_len_) throw std::invalid_argument("advantages length");
  const auto returns = n_step_returns<T>(rewards, bootstrap, static_cast<T>(cfg.gamma));
  const T vc = static_cast<T>(cfg.value_coeff), beta = static_cast<T>(cfg.entropy_weight);
  LossBreakdown<T> out;
  for (std::size_t t = 0; t < tape_len_; ++t) {
    const StepCache& c = tape_[t];
    const T err = returns[t] - c.value;
    const T h = entropy<T>(c.policy);
    out.policy += -c.log_probs[actions[t]] * advantages[t];
    out.value += vc * err * err;
    out.entropy += h;
  }
  out.total = out.policy + out.value - beta * out.entropy;
  return out;
}

template <class T>
LossBreakdown<T> PolicyNetwork<T>::tape_loss_and_grads(const ParamSet<T>& params,
                                                       std::span<const std::size_t> actions,
                                                       std::span<const T> rewards,
                                                       T bootstrap, const LossConfig& cfg,
                                                       ParamSet<T>& grads) {
  check_params(params);
  check_rollout_inputs<T>(tape_len_, actions, rewards, arch_.n_actions);
  if (grads.same_layout(params)) {
    grads.zero();
  } else {
    grads = params.zeros_like();
  }
  const auto returns = n_step_returns<T>(rewards, bootstrap, static_cast<T>(cfg.gamma));
  std::vector<T> adv(tape_len_);
  for (std::size_t t = 0; t < tape_len_; ++t) adv[t] = returns[t] - tape_[t].value;
  LossBreakdown<T> out = tape_loss(actions, rewards, bootstrap, cfg, adv);
  if (!std::isfinite(out.total)) throw NumericError("non-finite A3C loss");

  const std::size_t L = arch_.lstm_units, A = arch_.n_actions;
  const T vc = static_cast<T>(cfg.value_coeff), beta = static_cast<T>(cfg.entropy_weight);
  std::vector<T> d_h(L), d_c(L, T{0}), d_h_next(L, T{0}), d_h_prev(L), d_c_prev(L);
  std::vector<T> d_logits(A);
  const std::size_t FC = arch_.fc_units;
  dz_tape_.resize(tape_len_ * 4 * L);
  dfc_tape_.resize(tape_len_ * FC);
  for (std::size_t t = tape_len_; t-- > 0;) {
    const StepCache& c = tape_[t];
    const T h = entropy<T>(c.policy);
    for (std::size_t j = 0; j < A; ++j) {
      const T p = c.policy[j];
      T d = adv[t] * (p - (j == actions[t] ? T{1} : T{0}));
      if (p > T{0}) d += beta * p * (c.log_probs[j] + h);
      d_logits[j] = d;
    }
    const T d_value = T{-2} * vc * (returns[t] - c.value);
    d_h = d_h_next;
    backward(params, c, d_logits, d_value, d_h, d_c, d_h_prev, d_c_prev, grads, nullptr,
             dz_tape_.data() + t * 4 * L, dfc_tape_.data() + t * FC);
    d_h_next.swap(d_h_prev);
    d_c.swap(d_c_prev);
  }
  std::vector<const T*> dys, xs;
  for (std::size_t t = 0; t < tape_len_; ++t) {
    dys.push_back(dz_tape_.data() + t * 4 * L);
    xs.push_back(tape_[t].lstm.xh.data());
  }
  kernels::outer_accumulate<T>(4 * L, FC + L, dys, xs, grads.tensor(lstm_w_).data(),
                               grads.tensor(lstm_b_).data());
  dys.clear();
  xs.clear();
  for (std::size_t t = 0; t < tape_len_; ++t) {
    dys.push_back(dfc_tape_.data() + t * FC);
    xs.push_back(tape_[t].features.data());
  }
  kernels::outer_accumulate<T>(FC, tape_[0].features.size(), dys, xs,
                               grads.tensor(fc_w_).data(), grads.tensor(fc_b_).data());
  if (!grads.all_finite()) throw NumericError("non-finite A3C gradient");
  return out;
}

template <class T>
PolicyValue<T> PolicyNetwork<T>::input_gradient(const ParamSet<T>& params,
                                                const Observation<T>& obs,
                                                const LstmState<T>& state, HeadScalar head,
                                                std::vector<Tensor<T>>& out) {
  check_params(params);
  check_observation(obs);
  const std::size_t L = arch_.lstm_units, A = arch_.n_actions;
  std::vector<T> c_out(L);
  forward(params, obs, state.h.data(), state.c.data(), scratch_step_, c_out);
  const auto& pol = scratch_step_.policy;
  const std::size_t best =
      static_cast<std::size_t>(std::max_element(pol.begin(), pol.end()) - pol.begin());
  std::vector<T> d_logits(A, T{0});
  T d_value{};
  switch (head) {
    case HeadScalar::kValue: d_value = T{1}; break;
    case HeadScalar::kArgmaxProbability:
      for (std::size_t j = 0; j < A; ++j) {
        d_logits[j] = pol[best] * ((j == best ? T{1} : T{0}) - pol[j]);
      }
      break;
    case HeadScalar::kArgmaxLogit: d_logits[best] = T{1}; break;
  }
  ParamSet<T> scratch_grads = params.zeros_like();
  std::vector<T> d_h(L, T{0}), d_c(L, T{0}), d_h_prev(L), d_c_prev(L);
  backward(params, scratch_step_, d_logits, d_value, d_h, d_c, d_h_prev, d_c_prev,
           scratch_grads, &out);
  for (const auto& t : out) {
    if (!t.all_finite()) throw NumericError("non-finite input gradient");
  }
  return {pol, scratch_step_.value};
}

// ---- free functions ----------------------------------------------------------

template <class T>
std::pair<PolicyValue<T>, LstmState<T>> forward(const ArchSpec& arch,
                                                const ParamSet<T>& params,
                                                const Observation<T>& obs,
                                                const LstmState<T>& state) {
  PolicyNetwork<T> net(arch);
  LstmState<T> next = state;
  PolicyValue<T> pv = net.step(params, obs, next);
  return {std::move(pv), std::move(next)};
}

namespace {

template <class T>
void tape_rollout(PolicyNetwork<T>& net, const Rollout<T>& rollout, const ParamSet<T>& params,
                  std::vector<std::size_t>& actions, std::vector<T>& rewards) {
  rollout.validate();
  net.begin_tape(rollout.initial_state);
  for (const auto& s : rollout.steps) {
    net.tape_step(params, s.obs);
    actions.push_back(s.action);
    rewards.push_back(s.reward);
  }
}

}  // namespace

template <class T>
std::pair<LossBreakdown<T>, ParamSet<T>> a3c_loss_and_grads(const ArchSpec& arch,
                                                            const Rollout<T>& rollout,
                                                            const ParamSet<T>& params,
                                                            const LossConfig& cfg) {
  PolicyNetwork<T> net(arch);
  std::vector<std::size_t> actions;
  std::vector<T> rewards;
  tape_rollout(net, rollout, params, actions, rewards);
  ParamSet<T> grads;
  auto loss = net.tape_loss_and_grads(params, actions, rewards, rollout.bootstrap, cfg, grads);
  return {loss, std::move(grads)};
}

template <class T>
std::vector<T> rollout_advantages(const ArchSpec& arch, const Rollout<T>& rollout,
                                  const ParamSet<T>& params, const LossConfig& cfg) {
  PolicyNetwork<T> net(arch);
  std::vector<std::size_t> actions;
  std::vector<T> rewards;
  rollout.validate();
  net.begin_tape(rollout.initial_state);
  std::vector<T> values;
  for (const auto& s : rollout.steps) {
    values.push_back(net.tape_step(params, s.obs).value);
    rewards.push_back(s.reward);
  }
  auto adv = n_step_returns<T>(rewards, rollout.bootstrap, static_cast<T>(cfg.gamma));
  for (std::size_t t = 0; t < adv.size(); ++t) adv[t] -= values[t];
  return adv;
}

template <class T>
T a3c_surrogate_loss(const ArchSpec& arch, const Rollout<T>& rollout,
                     const ParamSet<T>& params, const LossConfig& cfg,
                     std::span<const T> advantages) {
  PolicyNetwork<T> net(arch);
  std::vector<std::size_t> actions;
  std::vector<T> rewards;
  tape_rollout(net, rollout, params, actions, rewards);
  return net.tape_loss(actions, rewards, rollout.bootstrap, cfg, advantages).total;
}

#define DVA_INSTANTIATE(T)                                                              \
  template ParamSet<T> build_network<T>(const ArchSpec&, std::uint64_t);               \
  template std::vector<T> n_step_returns<T>(std::span<const T>, T, T);                 \
  template T entropy<T>(std::span<const T>);                                           \
  template struct Rollout<T>;                                                          \
  template class PolicyNetwork<T>;                                                     \
  template std::pair<PolicyValue<T>, LstmState<T>> forward<T>(                         \
      const ArchSpec&, const ParamSet<T>&, const Observation<T>&, const LstmState<T>&); \
  template std::pair<LossBreakdown<T>, ParamSet<T>> a3c_loss_and_grads<T>(             \
      const ArchSpec&, const Rollout<T>&, const ParamSet<T>&, const LossConfig&);      \
  template std::vector<T> rollout_advantages<T>(const ArchSpec&, const Rollout<T>&,    \
                                                const ParamSet<T>&, const LossConfig&); \
  template T a3c_surrogate_loss<T>(const ArchSpec&, const Rollout<T>&,                 \
                                   const ParamSet<T>&, const LossConfig&,              \
                                   std::span<const T>);

DVA_INSTANTIATE(float)
DVA_INSTANTIATE(double)

#undef DVA_INSTANTIATE

}  // namespace dva
