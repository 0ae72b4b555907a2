#include "dva/preprocess.hpp"

#include <stdexcept>

namespace dva {

namespace {

void require_full_frame(const Frame& frame) {
  if (frame.shape() != Shape{kFrameSize, kFrameSize}) {
    throw ShapeError("expected an 84x84 frame, got " + shape_str(frame.shape()));
  }
}

}  // namespace

Frame make_generic(const Frame& frame) {
  require_full_frame(frame);
  Frame out({kViewSize, kViewSize});
  for (std::size_t i = 0; i < kViewSize; ++i) {
    for (std::size_t j = 0; j < kViewSize; ++j) {
      const float s = frame.at(2 * i, 2 * j) + frame.at(2 * i, 2 * j + 1) +
                      frame.at(2 * i + 1, 2 * j) + frame.at(2 * i + 1, 2 * j + 1);
      out.at(i, j) = s * 0.25f;
    }
  }
  return out;
}

Frame make_center(const Frame& frame) {
  require_full_frame(frame);
  Frame out({kViewSize, kViewSize});
  for (std::size_t i = 0; i < kViewSize; ++i) {
    for (std::size_t j = 0; j < kViewSize; ++j) {
      out.at(i, j) = frame.at(i + kCenterOffset, j + kCenterOffset);
    }
  }
  return out;
}

Observation<float> make_observation(const Frame& frame, ViewVariant variant) {
  Observation<float> obs{variant, {}};
  switch (variant) {
    case ViewVariant::kSingle:
      require_full_frame(frame);
      obs.views.push_back(frame);
      break;
    case ViewVariant::kDual:
      obs.views.push_back(make_generic(frame));
      obs.views.push_back(make_center(frame));
      break;
    case ViewVariant::kGenericOnly:
      obs.views.push_back(make_generic(frame));
      break;
  }
  return obs;
}

void DropConfig::validate() const {
  for (double p : {p_generic, p_center, p_main}) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("drop probability outside [0,1]");
  }
}

template <class T>
DropMask apply_drop(Observation<T>& obs, const DropConfig& cfg, Rng& rng) {
  DropMask mask;
  for (std::size_t i = 0; i < obs.views.size(); ++i) {
    double p = 0.0;
    switch (obs.variant) {
      case ViewVariant::kSingle: p = cfg.p_main; break;
      case ViewVariant::kDual: p = i == 0 ? cfg.p_generic : cfg.p_center; break;
      case ViewVariant::kGenericOnly: p = cfg.p_generic; break;
    }
    const bool drop = rng.bernoulli(p);
    if (drop) obs.views[i].fill(T{0});
    mask.dropped.push_back(drop);
  }
  return mask;
}

template DropMask apply_drop<float>(Observation<float>&, const DropConfig&, Rng&);
template DropMask apply_drop<double>(Observation<double>&, const DropConfig&, Rng&);

}  // namespace dva
