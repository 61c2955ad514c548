#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "swarmcam/flow.hpp"
#include "swarmcam/image.hpp"
#include "swarmcam/kernels.hpp"
#include "swarmcam/model.hpp"
#include "swarmcam/tensor.hpp"

namespace swarmcam::gradcam {

struct ChannelWeights {
  std::vector<double> a;
};

/// Non-negative class importance over an h x w grid.
struct ImportanceMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;
  Label cls = Label::Unstable;
  bool gated = false;
  std::size_t source_height = 0;  // grid the map was computed on
  std::size_t source_width = 0;

  double at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
};

inline constexpr double kDefaultTopFraction = 0.05;
inline constexpr double kOverlayMaxAlpha = 0.6;

/// d(class score)/d(tap activations), shape [K, h, w].
ad::Tensor feature_grads(const model::ForwardCache& cache, Label cls);

/// a_k = mean of g^k over its grid.
ChannelWeights channel_weights(const ad::Tensor& grads);

/// M = max(0, sum_k a_k f^k).
ImportanceMap importance_map(const ChannelWeights& weights, const ad::Tensor& features,
                             Label cls = Label::Unstable);

/// Nearest-rank threshold index: the k-th smallest of n values, k = ceil((1-q) n).
std::size_t gate_rank(std::size_t n, double q);

/// Keeps entries at or above the nearest-rank (1-q)-quantile and zeroes the
/// rest. All-zero maps are returned unchanged.
ImportanceMap gate_top_fraction(const ImportanceMap& map, double q = kDefaultTopFraction);

/// Gates several maps against one threshold pooled over all their entries.
std::vector<ImportanceMap> gate_top_fraction_pooled(std::span<const ImportanceMap> maps,
                                                    double q = kDefaultTopFraction);

/// Catmull-Rom kernel (a = -0.5).
double catmull_rom(double x);

/// Taps for resampling `in` samples to `out` with half-pixel centres and
/// edge-clamped indices.
std::vector<kernels::CubicTaps> cubic_taps(std::size_t in, std::size_t out);

/// Bicubic upsampling; negative ringing is clipped to zero.
ImportanceMap upsample_bicubic(const ImportanceMap& map, std::size_t out_h, std::size_t out_w);

/// Red heat overlay: alpha = 0.6 m / max(m), pixel = (1 - alpha) gray + alpha red.
RgbImage overlay(const GrayImage& frame, const ImportanceMap& map);

/// First row-major index of the maximum value.
std::size_t argmax(const ImportanceMap& map);

struct Explanation {
  ImportanceMap raw;        // post-rectifier, tap resolution
  ImportanceMap gated;      // tap resolution
  ImportanceMap upsampled;  // gated, at the requested resolution
  double logit = 0.0;
};

/// Forward, backward and map construction for one input.
Explanation explain(const model::Model& model, const ad::Tensor& input, Label cls,
                    std::size_t out_h, std::size_t out_w, double q = kDefaultTopFraction);

}  // namespace swarmcam::gradcam
