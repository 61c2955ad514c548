#include "swarmcam/flow.hpp"

#include <algorithm>
#include <string>

#include "swarmcam/errors.hpp"
#include "swarmcam/kernels.hpp"

namespace swarmcam {

GrayImage to_gray(const RgbImage& rgb) {
  GrayImage out(rgb.height, rgb.width);
  for (std::size_t i = 0; i < rgb.height * rgb.width; ++i) {
    const double r = rgb.data[3 * i], g = rgb.data[3 * i + 1], b = rgb.data[3 * i + 2];
    if (!(r >= 0.0 && r <= 1.0 && g >= 0.0 && g <= 1.0 && b >= 0.0 && b <= 1.0))
      throw ValidationError("to_gray: channel value outside [0,1] at pixel " + std::to_string(i));
    out.pixels[i] = 0.299 * r + 0.587 * g + 0.114 * b;
  }
  return out;
}

namespace {

kernels::FlowTerms flow_terms(const GrayImage& a, const GrayImage& b, double alpha) {
  const std::size_t h = a.height, w = a.width;
  kernels::FlowTerms t{h, w, std::vector<double>(h * w), std::vector<double>(h * w),
                       std::vector<double>(h * w), std::vector<double>(h * w)};
  const double alpha2 = alpha * alpha;
  for (std::size_t y = 0; y < h; ++y) {
    const std::size_t ym = y == 0 ? 0 : y - 1;
    const std::size_t yp = y + 1 == h ? y : y + 1;
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t xm = x == 0 ? 0 : x - 1;
      const std::size_t xp = x + 1 == w ? x : x + 1;
      const double ix = 0.25 * ((a.at(y, xp) - a.at(y, xm)) + (b.at(y, xp) - b.at(y, xm)));
      const double iy = 0.25 * ((a.at(yp, x) - a.at(ym, x)) + (b.at(yp, x) - b.at(ym, x)));
      const double it = 0.25 * ((b.at(y, x) - a.at(y, x)) + (b.at(y, xp) - a.at(y, xp)) +
                                (b.at(yp, x) - a.at(yp, x)) + (b.at(yp, xp) - a.at(yp, xp)));
      const std::size_t i = y * w + x;
      t.ix[i] = ix;
      t.iy[i] = iy;
      t.it[i] = it;
      t.inv_denom[i] = 1.0 / (alpha2 + ix * ix + iy * iy);
    }
  }
  return t;
}

}  // namespace

FlowField horn_schunck(const GrayImage& a, const GrayImage& b, const HornSchunckParams& params) {
  if (a.height != b.height || a.width != b.width)
    throw ValidationError("horn_schunck: frame dimensions differ");
  if (a.height == 0 || a.width == 0) throw ValidationError("horn_schunck: empty frames");
  if (!(params.alpha > 0.0)) throw ValidationError("horn_schunck: alpha must be positive");
  if (params.iterations < 1) throw ValidationError("horn_schunck: iterations must be >= 1");

  const auto terms = flow_terms(a, b, params.alpha);
  FlowField cur(a.height, a.width), next(a.height, a.width);
  for (int k = 0; k < params.iterations; ++k) {
    kernels::horn_schunck_sweep(terms, cur.u, cur.v, next.u, next.v);
    std::swap(cur, next);
  }
  return cur;
}

namespace {

void check_block_dims(std::size_t h, std::size_t w, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0 || h == 0 || w == 0 || h % out_h != 0 || w % out_w != 0)
    throw ValidationError("downsample: " + std::to_string(h) + "x" + std::to_string(w) +
                          " is not an integer multiple of " + std::to_string(out_h) + "x" +
                          std::to_string(out_w));
}

std::vector<double> block_mean(const std::vector<double>& src, std::size_t h, std::size_t w,
                               std::size_t out_h, std::size_t out_w) {
  const std::size_t fy = h / out_h, fx = w / out_w;
  const double inv = 1.0 / static_cast<double>(fy * fx);
  std::vector<double> out(out_h * out_w);
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      double acc = 0.0;
      for (std::size_t dy = 0; dy < fy; ++dy)
        for (std::size_t dx = 0; dx < fx; ++dx) acc += src[(oy * fy + dy) * w + ox * fx + dx];
      out[oy * out_w + ox] = acc * inv;
    }
  }
  return out;
}

}  // namespace

FlowField downsample(const FlowField& field, std::size_t out_h, std::size_t out_w) {
  check_block_dims(field.height, field.width, out_h, out_w);
  FlowField out;
  out.height = out_h;
  out.width = out_w;
  out.u = block_mean(field.u, field.height, field.width, out_h, out_w);
  out.v = block_mean(field.v, field.height, field.width, out_h, out_w);
  return out;
}

GrayImage downsample(const GrayImage& image, std::size_t out_h, std::size_t out_w) {
  check_block_dims(image.height, image.width, out_h, out_w);
  GrayImage out;
  out.height = out_h;
  out.width = out_w;
  out.pixels = block_mean(image.pixels, image.height, image.width, out_h, out_w);
  return out;
}

Sample make_sample(const FlowField& first, const FlowField& second, Label label, double timestamp) {
  for (const FlowField* f : {&first, &second}) {
    if (f->height != kSampleSize || f->width != kSampleSize)
      throw ValidationError("make_sample: flow fields must be 64x64, got " + std::to_string(f->height) +
                            "x" + std::to_string(f->width));
  }
  constexpr std::size_t plane = kSampleSize * kSampleSize;
  std::vector<double> data(kSampleChannels * plane);
  std::copy(first.u.begin(), first.u.end(), data.begin());
  std::copy(first.v.begin(), first.v.end(), data.begin() + plane);
  std::copy(second.u.begin(), second.u.end(), data.begin() + 2 * plane);
  std::copy(second.v.begin(), second.v.end(), data.begin() + 3 * plane);
  return Sample{ad::Tensor({kSampleChannels, kSampleSize, kSampleSize}, std::move(data)), label, timestamp};
}

std::pair<FlowField, FlowField> unpack_sample(const Sample& sample) {
  if (sample.tensor.shape() != ad::Shape{kSampleChannels, kSampleSize, kSampleSize})
    throw ValidationError("unpack_sample: sample tensor must be [4,64,64]");
  constexpr std::size_t plane = kSampleSize * kSampleSize;
  const auto d = sample.tensor.data();
  FlowField a(kSampleSize, kSampleSize), b(kSampleSize, kSampleSize);
  std::copy(d.begin(), d.begin() + plane, a.u.begin());
  std::copy(d.begin() + plane, d.begin() + 2 * plane, a.v.begin());
  std::copy(d.begin() + 2 * plane, d.begin() + 3 * plane, b.u.begin());
  std::copy(d.begin() + 3 * plane, d.end(), b.v.begin());
  return {std::move(a), std::move(b)};
}

}  // namespace swarmcam
