#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dva/tensor.hpp"

namespace dva {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-5;
  /// Denominator floor of the relative error, so gradients that are zero
  /// up to finite-difference noise do not divide by ~0.
  double abs_floor = 1e-4;
  /// Entries checked per tensor; 0 checks every entry.
  std::size_t max_entries = 0;
  std::uint64_t seed = 0;
};

/// |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor);

struct TensorCheck {
  std::string name;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // probes that crossed a piecewise boundary
  std::size_t failures = 0;
  double max_rel_error = 0;
  double max_abs_error = 0;
  std::size_t worst_index = 0;
};

struct GradCheckReport {
  std::vector<TensorCheck> tensors;
  double tolerance = 0;

  double max_rel_error() const;
  std::size_t failures() const;
  std::size_t skipped() const;
  bool passed() const { return failures() == 0; }
};

using LossFn = std::function<double(const ParamSet<double>&)>;

/// Loss value plus the branch pattern of every piecewise activation it
/// passed through. Central differences are only valid when both probes stay
/// in the branch of the base point.
struct Probe {
  double loss = 0;
  std::vector<bool> pattern;
};

using ProbeFn = std::function<Probe(const ParamSet<double>&)>;

/// Compares `analytic` against central differences of `loss` around
/// `params`. Throws NumericError if the loss is non-finite at any probe.
GradCheckReport grad_check(const LossFn& loss, const ParamSet<double>& params,
                           const ParamSet<double>& analytic, const GradCheckOptions& options);

/// Same, skipping (and counting) entries whose +-h probes change the
/// activation pattern.
GradCheckReport grad_check(const ProbeFn& probe, const ParamSet<double>& params,
                           const ParamSet<double>& analytic, const GradCheckOptions& options);

struct SuiteCase {
  std::string name;
  std::size_t trials = 0;
  std::size_t entries = 0;
  std::size_t skipped = 0;
  std::size_t failures = 0;
  double max_rel_error = 0;
};

struct SuiteOptions {
  std::size_t trials = 100;
  std::uint64_t seed = 0;
  GradCheckOptions check{.max_entries = 8};
};

struct SuiteReport {
  std::vector<SuiteCase> cases;
  double tolerance = 0;
  double seconds = 0;

  double max_rel_error() const;
  std::size_t skipped() const;
  bool passed() const;
};

/// Randomized finite-difference checks for conv2d, fully_connected, elu,
/// softmax and lstm_step, the A3C rollout loss (lengths 1..5) for every
/// view variant and the saliency input gradients. Trials run in parallel.
SuiteReport run_gradcheck_suite(const SuiteOptions& options);

}  // namespace dva
