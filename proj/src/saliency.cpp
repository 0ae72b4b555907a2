#include "dva/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "dva/image_io.hpp"

namespace dva {

namespace {

template <class T>
Tensor<T> abs_map(const Tensor<T>& g) {
  if (!g.all_finite()) throw NumericError("non-finite saliency gradient");
  Tensor<T> out(g.shape());
  std::transform(g.data().begin(), g.data().end(), out.data().begin(),
                 [](T v) { return std::abs(v); });
  return out;
}

}  // namespace

template <class T>
SaliencyMaps<T> compute_saliency(const ArchSpec& arch, const ParamSet<T>& params,
                                 const Observation<T>& obs, const LstmState<T>& state,
                                 PolicyScalar scalar) {
  PolicyNetwork<T> net(arch);
  std::vector<Tensor<T>> d_value, d_policy;
  const PolicyValue<T> pv = net.input_gradient(params, obs, state, HeadScalar::kValue, d_value);
  const HeadScalar head = scalar == PolicyScalar::kArgmaxLogit ? HeadScalar::kArgmaxLogit
                                                               : HeadScalar::kArgmaxProbability;
  net.input_gradient(params, obs, state, head, d_policy);

  SaliencyMaps<T> maps;
  maps.value = pv.value;
  maps.argmax_action = static_cast<std::size_t>(
      std::max_element(pv.policy.begin(), pv.policy.end()) - pv.policy.begin());
  const auto names = arch.stream_names();
  for (std::size_t v = 0; v < obs.views.size(); ++v) {
    maps.views.push_back(
        {names[v], obs.views[v], abs_map(d_value[v]), abs_map(d_policy[v])});
  }
  return maps;
}

template SaliencyMaps<float> compute_saliency(const ArchSpec&, const ParamSet<float>&,
                                              const Observation<float>&,
                                              const LstmState<float>&, PolicyScalar);
template SaliencyMaps<double> compute_saliency(const ArchSpec&, const ParamSet<double>&,
                                               const Observation<double>&,
                                               const LstmState<double>&, PolicyScalar);

SaliencyMaps<float> compute_saliency(const Checkpoint& ckpt, const Observation<float>& obs,
                                     const LstmState<float>& state, PolicyScalar scalar) {
  return compute_saliency(ckpt.arch(), ckpt.params, obs, state, scalar);
}

std::vector<SaliencyIndexRow> export_maps(const SaliencyMaps<float>& maps,
                                          const std::filesystem::path& directory,
                                          std::size_t frame_idx) {
  std::filesystem::create_directories(directory);
  std::vector<SaliencyIndexRow> rows;
  auto emit = [&](const std::string& view, const char* head, const Tensor<float>& t, bool raw) {
    char name[128];
    std::snprintf(name, sizeof(name), "%zu_%s_%s.pgm", frame_idx, view.c_str(), head);
    const auto path = directory / name;
    write_pgm(path, raw ? to_gray_image(t) : normalized_gray_image(t));
    const auto [lo, hi] = std::minmax_element(t.data().begin(), t.data().end());
    rows.push_back({frame_idx, view, head, path, *lo, *hi});
  };
  for (const auto& v : maps.views) {
    emit(v.view, "value", v.value_map, false);
    emit(v.view, "policy", v.policy_map, false);
    emit(v.view, "input", v.input, true);
  }
  return rows;
}

SaliencyIndex::SaliencyIndex(const std::filesystem::path& directory)
    : path_(directory / "index.csv") {
  std::filesystem::create_directories(directory);
  os_.open(path_, std::ios::trunc);
  if (!os_) throw std::runtime_error("cannot write " + path_.string());
  os_ << "frame_idx,view,head,path,min,max\n";
}

void SaliencyIndex::add(const std::vector<SaliencyIndexRow>& rows) {
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), ",%.9g,%.9g\n", r.min, r.max);
    os_ << r.frame_idx << ',' << r.view << ',' << r.head << ',' << r.path.filename().string()
        << buf;
  }
  os_.flush();
  if (!os_) throw std::runtime_error("failed writing " + path_.string());
}

}  // namespace dva
