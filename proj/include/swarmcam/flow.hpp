#pragma once

#include <cstddef>
#include <utility>

#include "swarmcam/image.hpp"
#include "swarmcam/tensor.hpp"

namespace swarmcam {

enum class Label : int { Stable = 0, Unstable = 1 };

inline constexpr std::size_t kSampleSize = 64;
inline constexpr std::size_t kSampleChannels = 4;

/// One classifier input: channels (u_t, v_t, u_t+d, v_t+d), each 64x64.
struct Sample {
  ad::Tensor tensor;
  Label label = Label::Stable;
  double timestamp = 0.0;
};

/// Rec.601 luma. Throws ValidationError for channel values outside [0, 1].
GrayImage to_gray(const RgbImage& rgb);

struct HornSchunckParams {
  double alpha = 1.0;
  int iterations = 200;
  bool operator==(const HornSchunckParams&) const = default;
};

/// Horn-Schunck flow from frame `a` to frame `b` by Jacobi relaxation.
///
/// Ix, Iy are central differences averaged over both frames; It is b - a
/// smoothed by a 2x2 mean. Borders replicate the edge pixel.
FlowField horn_schunck(const GrayImage& a, const GrayImage& b, const HornSchunckParams& params = {});

/// Non-overlapping block mean. Input dims must be integer multiples of the
/// output dims.
FlowField downsample(const FlowField& field, std::size_t out_h = kSampleSize,
                     std::size_t out_w = kSampleSize);
GrayImage downsample(const GrayImage& image, std::size_t out_h = kSampleSize,
                     std::size_t out_w = kSampleSize);

Sample make_sample(const FlowField& first, const FlowField& second, Label label, double timestamp);
std::pair<FlowField, FlowField> unpack_sample(const Sample& sample);

}  // namespace swarmcam
