#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "dva/checkpoint.hpp"
#include "dva/network.hpp"

namespace dva {

enum class PolicyScalar { kArgmaxProbability, kArgmaxLogit };

template <class T>
struct ViewSaliency {
  std::string view;
  Tensor<T> input;
  Tensor<T> value_map;   // |dV/d input|
  Tensor<T> policy_map;  // |d pi_a* / d input|, or the logit under kArgmaxLogit
};

template <class T>
struct SaliencyMaps {
  std::vector<ViewSaliency<T>> views;
  std::size_t argmax_action = 0;
  T value{};
};

/// Absolute input Jacobians of the value head and of the argmax policy
/// output for one step from `state`. The recurrent state is a constant.
/// Throws NumericError on non-finite gradients.
template <class T>
SaliencyMaps<T> compute_saliency(const ArchSpec& arch, const ParamSet<T>& params,
                                 const Observation<T>& obs, const LstmState<T>& state,
                                 PolicyScalar scalar = PolicyScalar::kArgmaxProbability);

SaliencyMaps<float> compute_saliency(const Checkpoint& ckpt, const Observation<float>& obs,
                                     const LstmState<float>& state,
                                     PolicyScalar scalar = PolicyScalar::kArgmaxProbability);

struct SaliencyIndexRow {
  std::size_t frame_idx = 0;
  std::string view;
  std::string head;  // "value", "policy" or "input"
  std::filesystem::path path;
  double min = 0;
  double max = 0;
};

/// Writes `<frame_idx>_<view>_<head>.pgm` for both maps and the raw input of
/// every view. Maps are min-max normalized; inputs are written unscaled.
std::vector<SaliencyIndexRow> export_maps(const SaliencyMaps<float>& maps,
                                          const std::filesystem::path& directory,
                                          std::size_t frame_idx = 0);

/// Appends export rows to `<directory>/index.csv`, writing the header once.
class SaliencyIndex {
 public:
  explicit SaliencyIndex(const std::filesystem::path& directory);
  void add(const std::vector<SaliencyIndexRow>& rows);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream os_;
};

}  // namespace dva
