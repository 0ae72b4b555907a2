#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dva/kernels.hpp"
#include "dva/layers.hpp"
#include "dva/tensor.hpp"

namespace dva {

enum class ViewVariant { kSingle, kDual, kGenericOnly };

std::string_view to_string(ViewVariant v);
/// Accepts "single", "dual", "generic".
ViewVariant parse_view(std::string_view s);

struct ConvLayerSpec {
  std::size_t channels;
  std::size_t kernel;
  std::size_t stride;
};

/// Network shape. The defaults are the agent's real architecture; tests
/// shrink the sizes to make finite-difference checks affordable.
struct ArchSpec {
  ViewVariant variant = ViewVariant::kDual;
  std::size_t n_actions = 3;
  std::size_t frame_size = 84;
  ConvLayerSpec conv1{16, 8, 4};
  ConvLayerSpec conv2{32, 4, 2};
  std::size_t fc_units = 256;
  std::size_t lstm_units = 256;

  static ArchSpec standard(ViewVariant variant, std::size_t n_actions = 3) {
    ArchSpec a;
    a.variant = variant;
    a.n_actions = n_actions;
    return a;
  }

  /// Stream names in parameter/observation order.
  std::vector<std::string> stream_names() const;
  std::size_t stream_count() const { return variant == ViewVariant::kDual ? 2 : 1; }
  /// Side length of each stream's square input.
  std::size_t view_size() const {
    return variant == ViewVariant::kSingle ? frame_size : frame_size / 2;
  }
  ConvGeometry conv1_geometry() const;
  ConvGeometry conv2_geometry() const;
  std::size_t stream_features() const { return conv2_geometry().output_size(); }
  std::size_t feature_size() const { return stream_count() * stream_features(); }

  void validate() const;
};

/// What the network consumes at one decision: one view for SINGLE and
/// GENERIC_ONLY, (generic, center) for DUAL. Each view is [H, W] in [0,1].
template <class T>
struct Observation {
  ViewVariant variant = ViewVariant::kDual;
  std::vector<Tensor<T>> views;

  template <class U>
  Observation<U> cast() const {
    Observation<U> o{variant, {}};
    for (const auto& v : views) o.views.push_back(v.template cast<U>());
    return o;
  }
};

template <class T>
struct LstmState {
  Tensor<T> h;
  Tensor<T> c;

  static LstmState zeros(std::size_t units) {
    return {Tensor<T>({units}), Tensor<T>({units})};
  }
  template <class U>
  LstmState<U> cast() const {
    return {h.template cast<U>(), c.template cast<U>()};
  }
  friend bool operator==(const LstmState&, const LstmState&) = default;
};

template <class T>
struct PolicyValue {
  std::vector<T> policy;
  T value{};
};

template <class T>
struct RolloutStep {
  Observation<T> obs;
  std::size_t action = 0;
  T reward{};
  T value{};
};

/// One on-policy trajectory segment: the unit of a single A3C update.
template <class T>
struct Rollout {
  std::vector<RolloutStep<T>> steps;
  LstmState<T> initial_state;
  T bootstrap{};
  bool terminal = false;

  /// Throws std::invalid_argument when empty or when the bootstrap rule is
  /// violated (bootstrap must be exactly 0 for terminal rollouts).
  void validate() const;

  template <class U>
  Rollout<U> cast() const {
    Rollout<U> r;
    for (const auto& s : steps) {
      r.steps.push_back({s.obs.template cast<U>(), s.action, static_cast<U>(s.reward),
                         static_cast<U>(s.value)});
    }
    r.initial_state = initial_state.template cast<U>();
    r.bootstrap = static_cast<U>(bootstrap);
    r.terminal = terminal;
    return r;
  }
};

struct LossConfig {
  double gamma = 0.99;
  double entropy_weight = 0.01;
  double value_coeff = 0.5;
};

template <class T>
struct LossBreakdown {
  T total{};
  T policy{};
  T value{};
  T entropy{};  // sum of per-step entropies (before weighting)
};

/// Which scalar to differentiate for input gradients.
enum class HeadScalar { kValue, kArgmaxProbability, kArgmaxLogit };

/// Creates initialized parameters in declaration order:
/// per stream conv1.w/b, conv2.w/b; fc.w/b; lstm.w/b; policy.w/b; value.w/b.
template <class T>
ParamSet<T> build_network(const ArchSpec& arch, std::uint64_t seed);

/// Names and shapes build_network would produce, without allocating values.
std::vector<std::pair<std::string, Shape>> network_layout(const ArchSpec& arch);

/// Exact closed-form parameter count for an architecture.
std::size_t expected_param_count(const ArchSpec& arch);

template <class T>
std::size_t param_count(const ParamSet<T>& params) {
  return params.count();
}

/// 1 - count(smaller) / count(reference). Identical sets give 0.
template <class T>
double reduction_ratio(const ParamSet<T>& candidate, const ParamSet<T>& reference) {
  if (reference.count() == 0) return 0.0;
  return 1.0 - static_cast<double>(candidate.count()) /
                   static_cast<double>(reference.count());
}

/// Backward recursion R <- r_t + gamma * R seeded with the bootstrap value.
template <class T>
std::vector<T> n_step_returns(std::span<const T> rewards, T bootstrap, T gamma);

/// Shannon entropy in nats with 0 ln 0 := 0.
template <class T>
T entropy(std::span<const T> probs);

/// Runs the network forward with cached activations. One instance per
/// thread; parameters are passed in on every call and never stored.
template <class T>
class PolicyNetwork {
 public:
  explicit PolicyNetwork(ArchSpec arch);

  const ArchSpec& arch() const { return arch_; }

  /// Throws ShapeError if params do not match this architecture.
  void check_params(const ParamSet<T>& params) const;
  void check_observation(const Observation<T>& obs) const;

  /// Uncached step: advances `state` in place.
  PolicyValue<T> step(const ParamSet<T>& params, const Observation<T>& obs,
                      LstmState<T>& state);

  // ---- taped rollout evaluation -------------------------------------------
  void begin_tape(const LstmState<T>& initial);
  PolicyValue<T> tape_step(const ParamSet<T>& params, const Observation<T>& obs);
  std::size_t tape_length() const { return tape_len_; }
  /// Recurrent state after the last taped step.
  LstmState<T> tape_state() const;
  /// Sign of every ELU pre-activation on the tape (true = positive branch).
  std::vector<bool> tape_activation_pattern() const;

  /// A3C loss over the taped steps and its gradient (written into `grads`,
  /// which is resized/zeroed to mirror params). Advantages are computed from
  /// the taped values and treated as constants in the policy term.
  LossBreakdown<T> tape_loss_and_grads(const ParamSet<T>& params,
                                       std::span<const std::size_t> actions,
                                       std::span<const T> rewards, T bootstrap,
                                       const LossConfig& cfg, ParamSet<T>& grads);

  /// Loss value only, with caller-supplied constant advantages.
  LossBreakdown<T> tape_loss(std::span<const std::size_t> actions,
                             std::span<const T> rewards, T bootstrap,
                             const LossConfig& cfg, std::span<const T> advantages) const;

  /// d(head scalar)/d(input views) for a single step from `state`. The
  /// recurrent state is treated as a constant. Fills `out` with one tensor
  /// per view and returns the forward result.
  PolicyValue<T> input_gradient(const ParamSet<T>& params, const Observation<T>& obs,
                                const LstmState<T>& state, HeadScalar head,
                                std::vector<Tensor<T>>& out);

 private:
  struct StreamCache {
    std::vector<T> cols1, pre1, act1, cols2, pre2;
  };
  struct StepCache {
    std::vector<StreamCache> streams;
    std::vector<T> features, fc_pre, fc_act;
    LstmCache<T> lstm;
    std::vector<T> h, log_probs, policy;
    T value{};
  };
  struct StreamIdx {
    std::size_t conv1_w, conv1_b, conv2_w, conv2_b;
  };

  void forward(const ParamSet<T>& params, const Observation<T>& obs,
               std::span<const T> h_prev, std::span<const T> c_prev, StepCache& cache,
               std::span<T> c_out);
  /// Backward through one step. d_h is consumed (it already holds the
  /// recurrent contribution). If d_inputs is non-null, input-pixel
  /// gradients are written there. When lstm_dz / fc_d are non-null the LSTM
  /// and FC weight gradients are not accumulated; their output gradients
  /// are stored there for a batched update instead.
  void backward(const ParamSet<T>& params, const StepCache& cache,
                std::span<const T> d_logits, T d_value, std::span<T> d_h,
                std::span<const T> d_c, std::span<T> d_h_prev, std::span<T> d_c_prev,
                ParamSet<T>& grads, std::vector<Tensor<T>>* d_inputs, T* lstm_dz = nullptr,
                T* fc_d = nullptr);

  ArchSpec arch_;
  std::vector<std::pair<std::string, Shape>> layout_;
  ConvGeometry g1_, g2_;
  std::vector<StreamIdx> stream_idx_;
  std::size_t fc_w_, fc_b_, lstm_w_, lstm_b_, pol_w_, pol_b_, val_w_, val_b_;

  std::vector<StepCache> tape_;
  std::size_t tape_len_ = 0;
  LstmState<T> tape_initial_;
  std::vector<T> tape_c_;  // cell state after the last taped step
  StepCache scratch_step_;
  std::vector<T> lstm_scratch_, d_act1_, d_cols_, d_features_, d_fc_;
  std::vector<T> dz_tape_, dfc_tape_;
};

/// forward(obs, state, params) -> (PolicyValue, next LstmState).
template <class T>
std::pair<PolicyValue<T>, LstmState<T>> forward(const ArchSpec& arch,
                                                const ParamSet<T>& params,
                                                const Observation<T>& obs,
                                                const LstmState<T>& state);

/// Full A3C loss and gradient for a rollout, unrolling the LSTM from the
/// rollout's stored initial state.
template <class T>
std::pair<LossBreakdown<T>, ParamSet<T>> a3c_loss_and_grads(const ArchSpec& arch,
                                                            const Rollout<T>& rollout,
                                                            const ParamSet<T>& params,
                                                            const LossConfig& cfg);

/// Advantages R_t - V_t for a rollout under the given parameters.
template <class T>
std::vector<T> rollout_advantages(const ArchSpec& arch, const Rollout<T>& rollout,
                                  const ParamSet<T>& params, const LossConfig& cfg);

/// Loss value with the advantages held fixed; the function whose gradient
/// a3c_loss_and_grads returns.
template <class T>
T a3c_surrogate_loss(const ArchSpec& arch, const Rollout<T>& rollout,
                     const ParamSet<T>& params, const LossConfig& cfg,
                     std::span<const T> advantages);

}  // namespace dva
