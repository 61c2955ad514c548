#include "swarmcam/gradcam.hpp"

#include <algorithm>
#include <cmath>

#include "swarmcam/errors.hpp"
#include "swarmcam/kernels.hpp"

namespace swarmcam::gradcam {

ad::Tensor feature_grads(const model::ForwardCache& cache, Label cls) {
  if (!cache.graph) throw ContractError("feature_grads: forward cache holds no graph");
  const ad::Var score = model::class_score(cache, cls);
  const ad::GradStore grads = cache.graph->backward(score);
  if (!grads.has(cache.tap_node)) return ad::Tensor(cache.feature_maps.shape(), 0.0);
  return grads.at(cache.tap_node);
}

ChannelWeights channel_weights(const ad::Tensor& grads) {
  if (grads.rank() != 3) throw ShapeError("channel_weights: expected [K, h, w], got " + ad::to_string(grads.shape()));
  const std::size_t k = grads.dim(0);
  const std::size_t cells = grads.dim(1) * grads.dim(2);
  const double z = static_cast<double>(cells);
  ChannelWeights out{std::vector<double>(k, 0.0)};
  for (std::size_t c = 0; c < k; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < cells; ++i) s += grads[c * cells + i];
    out.a[c] = s / z;
  }
  return out;
}

ImportanceMap importance_map(const ChannelWeights& weights, const ad::Tensor& features, Label cls) {
  if (features.rank() != 3) throw ShapeError("importance_map: expected [K, h, w], got " + ad::to_string(features.shape()));
  const std::size_t k = features.dim(0);
  if (weights.a.size() != k)
    throw ValidationError("importance_map: " + std::to_string(weights.a.size()) + " weights for " +
                          std::to_string(k) + " feature maps");
  ImportanceMap m;
  m.height = m.source_height = features.dim(1);
  m.width = m.source_width = features.dim(2);
  m.cls = cls;
  const std::size_t cells = m.height * m.width;
  std::vector<double> acc(cells, 0.0);
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t i = 0; i < cells; ++i) acc[i] += weights.a[c] * features[c * cells + i];
  m.values.resize(cells);
  for (std::size_t i = 0; i < cells; ++i) m.values[i] = acc[i] > 0.0 ? acc[i] : 0.0;
  return m;
}

std::size_t gate_rank(std::size_t n, double q) {
  if (!(q > 0.0 && q < 1.0)) throw ValidationError("top fraction must lie in (0, 1)");
  if (n == 0) return 0;
  // Guard against (1 - q) n landing a hair above an integer.
  const double r = std::ceil((1.0 - q) * static_cast<double>(n) - 1e-9);
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(r, 1.0)), 1, n);
}

namespace {

double threshold_of(std::vector<double> values, double q) {
  const std::size_t k = gate_rank(values.size(), q);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k - 1), values.end());
  return values[k - 1];
}

bool all_zero(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

ImportanceMap apply_threshold(const ImportanceMap& map, double threshold) {
  ImportanceMap out = map;
  out.gated = true;
  for (auto& v : out.values)
    if (v < threshold) v = 0.0;
  return out;
}

}  // namespace

ImportanceMap gate_top_fraction(const ImportanceMap& map, double q) {
  gate_rank(map.values.size(), q);  // validates q
  if (map.values.empty() || all_zero(map.values)) {
    ImportanceMap out = map;
    out.gated = true;
    return out;
  }
  return apply_threshold(map, threshold_of(map.values, q));
}

std::vector<ImportanceMap> gate_top_fraction_pooled(std::span<const ImportanceMap> maps, double q) {
  std::vector<double> pooled;
  for (const auto& m : maps) pooled.insert(pooled.end(), m.values.begin(), m.values.end());
  std::vector<ImportanceMap> out;
  if (pooled.empty() || all_zero(pooled)) {
    for (const auto& m : maps) {
      out.push_back(m);
      out.back().gated = true;
    }
    return out;
  }
  const double t = threshold_of(std::move(pooled), q);
  for (const auto& m : maps) out.push_back(apply_threshold(m, t));
  return out;
}

double catmull_rom(double x) {
  constexpr double a = -0.5;
  const double t = std::fabs(x);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

std::vector<kernels::CubicTaps> cubic_taps(std::size_t in, std::size_t out) {
  std::vector<kernels::CubicTaps> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  const auto last = static_cast<long long>(in) - 1;
  for (std::size_t d = 0; d < out; ++d) {
    const double s = (static_cast<double>(d) + 0.5) * scale - 0.5;
    const double base = std::floor(s);
    const double t = s - base;
    for (int j = 0; j < 4; ++j) {
      const long long idx = static_cast<long long>(base) - 1 + j;
      taps[d].index[j] = static_cast<std::size_t>(std::clamp<long long>(idx, 0, last));
      taps[d].weight[j] = catmull_rom(t - static_cast<double>(j - 1));
    }
  }
  return taps;
}

ImportanceMap upsample_bicubic(const ImportanceMap& map, std::size_t out_h, std::size_t out_w) {
  if (out_h < map.height || out_w < map.width)
    throw ValidationError("upsample_bicubic: target smaller than source");
  if (map.values.size() != map.height * map.width) throw ShapeError("upsample_bicubic: map size mismatch");
  const auto rows = cubic_taps(map.height, out_h);
  const auto cols = cubic_taps(map.width, out_w);
  ImportanceMap out = map;
  out.height = out_h;
  out.width = out_w;
  out.values.assign(out_h * out_w, 0.0);
  kernels::resample_separable(map.values, map.height, map.width, rows, cols, out.values);
  for (auto& v : out.values)
    if (v < 0.0) v = 0.0;
  return out;
}

RgbImage overlay(const GrayImage& frame, const ImportanceMap& map) {
  if (frame.height != map.height || frame.width != map.width)
    throw ValidationError("overlay: frame is " + std::to_string(frame.height) + "x" + std::to_string(frame.width) +
                          ", map is " + std::to_string(map.height) + "x" + std::to_string(map.width));
  const double peak = map.values.empty() ? 0.0 : *std::max_element(map.values.begin(), map.values.end());
  RgbImage out(frame.height, frame.width);
  for (std::size_t i = 0; i < frame.pixels.size(); ++i) {
    const double g = frame.pixels[i];
    const double alpha = peak > 0.0 && map.values[i] > 0.0 ? kOverlayMaxAlpha * (map.values[i] / peak) : 0.0;
    const double keep = (1.0 - alpha) * g;
    out.data[3 * i] = keep + alpha;
    out.data[3 * i + 1] = keep;
    out.data[3 * i + 2] = keep;
  }
  return out;
}

std::size_t argmax(const ImportanceMap& map) {
  if (map.values.empty()) throw ValidationError("argmax of an empty map");
  return static_cast<std::size_t>(std::max_element(map.values.begin(), map.values.end()) - map.values.begin());
}

Explanation explain(const model::Model& model, const ad::Tensor& input, Label cls, std::size_t out_h,
                    std::size_t out_w, double q) {
  const model::ForwardCache cache = model::forward_with_cache(model, input);
  const ad::Tensor g = feature_grads(cache, cls);
  Explanation e;
  e.logit = cache.logit;
  e.raw = importance_map(channel_weights(g), cache.feature_maps, cls);
  e.gated = gate_top_fraction(e.raw, q);
  e.upsampled = upsample_bicubic(e.gated, out_h, out_w);
  return e;
}

}  // namespace swarmcam::gradcam
