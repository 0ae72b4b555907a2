#pragma once

#include "dva/micro_env.hpp"
#include "dva/network.hpp"
#include "dva/random.hpp"

namespace dva {

inline constexpr std::size_t kViewSize = 42;
inline constexpr std::size_t kCenterOffset = 21;

/// 2x2 mean pooling of an 84x84 frame.
Frame make_generic(const Frame& frame);

/// Exact copy of rows/cols 21..62 of an 84x84 frame.
Frame make_center(const Frame& frame);

/// Builds the observation a network of the given variant consumes.
Observation<float> make_observation(const Frame& frame, ViewVariant variant);

/// Per-view blackout probabilities. SINGLE uses p_main; DUAL uses p_generic
/// and p_center; GENERIC_ONLY uses p_generic.
struct DropConfig {
  double p_generic = 0.0;
  double p_center = 0.0;
  double p_main = 0.0;

  void validate() const;
  static DropConfig none() { return {}; }
};

/// Which views apply_drop blacked out.
struct DropMask {
  std::vector<bool> dropped;
};

/// Independently per view (in view order), replaces the view with zeros with
/// its probability. Exactly one uniform draw per view is consumed whatever
/// the probabilities, so drop decisions are coupled across configs that
/// share a seed.
template <class T>
DropMask apply_drop(Observation<T>& obs, const DropConfig& cfg, Rng& rng);

}  // namespace dva
