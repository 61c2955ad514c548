#include "swarmcam/kernels.hpp"

#include <algorithm>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace swarmcam::kernels {
namespace {

// Work units. The serial and omp entry points differ only in how they
// iterate over units, so per-element arithmetic is shared.

void conv_forward_unit(const ConvGeometry& g, std::size_t o, std::span<const double> input,
                       std::span<const double> weight, std::span<const double> bias,
                       std::span<double> output) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  double* out = output.data() + o * oh * ow;
  std::fill(out, out + oh * ow, bias[o]);
  const long pad = static_cast<long>(g.pad);
  const long stride = static_cast<long>(g.stride);
  const long ih = static_cast<long>(g.in_height), iw = static_cast<long>(g.in_width);
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    const double* in = input.data() + c * g.in_height * g.in_width;
    const double* w = weight.data() + (o * g.in_channels + c) * g.kernel_h * g.kernel_w;
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
        const double wv = w[ky * g.kernel_w + kx];
        for (std::size_t y = 0; y < oh; ++y) {
          const long iy = static_cast<long>(y) * stride - pad + static_cast<long>(ky);
          if (iy < 0 || iy >= ih) continue;
          const double* in_row = in + iy * iw;
          double* out_row = out + y * ow;
          const long off = static_cast<long>(kx) - pad;
          if (stride == 1) {
            const long x_lo = std::max(0L, -off);
            const long x_hi = std::min(static_cast<long>(ow), iw - off);
            for (long x = x_lo; x < x_hi; ++x) out_row[x] += wv * in_row[x + off];
          } else {
            for (std::size_t x = 0; x < ow; ++x) {
              const long ix = static_cast<long>(x) * stride + off;
              if (ix >= 0 && ix < iw) out_row[x] += wv * in_row[ix];
            }
          }
        }
      }
    }
  }
}

void conv_backward_input_unit(const ConvGeometry& g, std::size_t c,
                              std::span<const double> weight,
                              std::span<const double> grad_output,
                              std::span<double> grad_input) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const long pad = static_cast<long>(g.pad);
  const long stride = static_cast<long>(g.stride);
  const long ih = static_cast<long>(g.in_height), iw = static_cast<long>(g.in_width);
  double* gin = grad_input.data() + c * g.in_height * g.in_width;
  for (std::size_t o = 0; o < g.out_channels; ++o) {
    const double* gout = grad_output.data() + o * oh * ow;
    const double* w = weight.data() + (o * g.in_channels + c) * g.kernel_h * g.kernel_w;
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
        const double wv = w[ky * g.kernel_w + kx];
        const long off = static_cast<long>(kx) - pad;
        for (std::size_t y = 0; y < oh; ++y) {
          const long iy = static_cast<long>(y) * stride - pad + static_cast<long>(ky);
          if (iy < 0 || iy >= ih) continue;
          double* gin_row = gin + iy * iw;
          const double* gout_row = gout + y * ow;
          if (stride == 1) {
            const long x_lo = std::max(0L, -off);
            const long x_hi = std::min(static_cast<long>(ow), iw - off);
            for (long x = x_lo; x < x_hi; ++x) gin_row[x + off] += wv * gout_row[x];
          } else {
            for (std::size_t x = 0; x < ow; ++x) {
              const long ix = static_cast<long>(x) * stride + off;
              if (ix >= 0 && ix < iw) gin_row[ix] += wv * gout_row[x];
            }
          }
        }
      }
    }
  }
}

void conv_backward_weight_unit(const ConvGeometry& g, std::size_t o,
                               std::span<const double> input,
                               std::span<const double> grad_output,
                               std::span<double> grad_weight, std::span<double> grad_bias) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const long pad = static_cast<long>(g.pad);
  const long stride = static_cast<long>(g.stride);
  const long ih = static_cast<long>(g.in_height), iw = static_cast<long>(g.in_width);
  const double* gout = grad_output.data() + o * oh * ow;
  double bsum = 0.0;
  for (std::size_t i = 0; i < oh * ow; ++i) bsum += gout[i];
  grad_bias[o] += bsum;
  std::vector<double> lanes(ow);
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    const double* in = input.data() + c * g.in_height * g.in_width;
    double* gw = grad_weight.data() + (o * g.in_channels + c) * g.kernel_h * g.kernel_w;
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
        const long off = static_cast<long>(kx) - pad;
        double acc = 0.0;
        // Column-wise partial sums keep the inner loop free of a carried
        // dependency; they are folded in a fixed order afterwards.
        std::fill(lanes.begin(), lanes.end(), 0.0);
        for (std::size_t y = 0; y < oh; ++y) {
          const long iy = static_cast<long>(y) * stride - pad + static_cast<long>(ky);
          if (iy < 0 || iy >= ih) continue;
          const double* in_row = in + iy * iw;
          const double* gout_row = gout + y * ow;
          if (stride == 1) {
            const long x_lo = std::max(0L, -off);
            const long x_hi = std::min(static_cast<long>(ow), iw - off);
            double* __restrict lane = lanes.data();
            for (long x = x_lo; x < x_hi; ++x) lane[x] += gout_row[x] * in_row[x + off];
          } else {
            for (std::size_t x = 0; x < ow; ++x) {
              const long ix = static_cast<long>(x) * stride + off;
              if (ix >= 0 && ix < iw) acc += gout_row[x] * in_row[ix];
            }
          }
        }
        for (double l : lanes) acc += l;
        gw[ky * g.kernel_w + kx] += acc;
      }
    }
  }
}

// Neighbour average with weights 1/6 (edge) and 1/12 (corner).
constexpr double kTwelfth = 1.0 / 12.0;

void horn_schunck_row(const FlowTerms& t, std::size_t y, std::span<const double> u,
                      std::span<const double> v, std::span<double> u_next,
                      std::span<double> v_next) {
  const std::size_t w = t.width, h = t.height;
  const std::size_t ym = y == 0 ? 0 : y - 1;
  const std::size_t yp = y + 1 == h ? y : y + 1;
  const double* __restrict ur = u.data() + y * w;
  const double* __restrict uu = u.data() + ym * w;
  const double* __restrict ud = u.data() + yp * w;
  const double* __restrict vr = v.data() + y * w;
  const double* __restrict vu = v.data() + ym * w;
  const double* __restrict vd = v.data() + yp * w;
  const double* __restrict ix = t.ix.data() + y * w;
  const double* __restrict iy = t.iy.data() + y * w;
  const double* __restrict it = t.it.data() + y * w;
  const double* __restrict inv = t.inv_denom.data() + y * w;
  double* __restrict un = u_next.data() + y * w;
  double* __restrict vn = v_next.data() + y * w;

  auto cell = [=](std::size_t x, std::size_t xm, std::size_t xp) {
    const double ubar = (2.0 * (ur[xm] + ur[xp] + uu[x] + ud[x]) + (uu[xm] + uu[xp] + ud[xm] + ud[xp])) * kTwelfth;
    const double vbar = (2.0 * (vr[xm] + vr[xp] + vu[x] + vd[x]) + (vu[xm] + vu[xp] + vd[xm] + vd[xp])) * kTwelfth;
    const double ratio = (ix[x] * ubar + iy[x] * vbar + it[x]) * inv[x];
    un[x] = ubar - ix[x] * ratio;
    vn[x] = vbar - iy[x] * ratio;
  };
  if (w == 1) {
    cell(0, 0, 0);
    return;
  }
  cell(0, 0, 1);
  // Interior columns need no clamping; kept branch-free so it vectorizes.
#pragma omp simd
  for (std::size_t x = 1; x < w - 1; ++x) {
    const double ubar =
        (2.0 * (ur[x - 1] + ur[x + 1] + uu[x] + ud[x]) + (uu[x - 1] + uu[x + 1] + ud[x - 1] + ud[x + 1])) * kTwelfth;
    const double vbar =
        (2.0 * (vr[x - 1] + vr[x + 1] + vu[x] + vd[x]) + (vu[x - 1] + vu[x + 1] + vd[x - 1] + vd[x + 1])) * kTwelfth;
    const double ratio = (ix[x] * ubar + iy[x] * vbar + it[x]) * inv[x];
    un[x] = ubar - ix[x] * ratio;
    vn[x] = vbar - iy[x] * ratio;
  }
  cell(w - 1, w - 2, w - 1);
}

void resample_row_pass(std::span<const double> src, std::size_t r, std::size_t cols_in,
                       std::span<const CubicTaps> col_taps, double* tmp_row) {
  const double* s = src.data() + r * cols_in;
  for (std::size_t c = 0; c < col_taps.size(); ++c) {
    const CubicTaps& t = col_taps[c];
    tmp_row[c] = t.weight[0] * s[t.index[0]] + t.weight[1] * s[t.index[1]] +
                 t.weight[2] * s[t.index[2]] + t.weight[3] * s[t.index[3]];
  }
}

void resample_col_pass(const std::vector<double>& tmp, std::size_t r, std::size_t cols_out,
                       std::span<const CubicTaps> row_taps, std::span<double> dst) {
  const CubicTaps& t = row_taps[r];
  const double* a = tmp.data() + t.index[0] * cols_out;
  const double* b = tmp.data() + t.index[1] * cols_out;
  const double* c = tmp.data() + t.index[2] * cols_out;
  const double* d = tmp.data() + t.index[3] * cols_out;
  double* out = dst.data() + r * cols_out;
  for (std::size_t x = 0; x < cols_out; ++x) {
    out[x] = t.weight[0] * a[x] + t.weight[1] * b[x] + t.weight[2] * c[x] + t.weight[3] * d[x];
  }
}

}  // namespace

namespace serial {

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output) {
  for (std::size_t o = 0; o < g.out_channels; ++o) conv_forward_unit(g, o, input, weight, bias, output);
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> weight,
                           std::span<const double> grad_output, std::span<double> grad_input) {
  for (std::size_t c = 0; c < g.in_channels; ++c)
    conv_backward_input_unit(g, c, weight, grad_output, grad_input);
}

void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> input,
                            std::span<const double> grad_output, std::span<double> grad_weight,
                            std::span<double> grad_bias) {
  for (std::size_t o = 0; o < g.out_channels; ++o)
    conv_backward_weight_unit(g, o, input, grad_output, grad_weight, grad_bias);
}

void horn_schunck_sweep(const FlowTerms& terms, std::span<const double> u,
                        std::span<const double> v, std::span<double> u_next,
                        std::span<double> v_next) {
  for (std::size_t y = 0; y < terms.height; ++y) horn_schunck_row(terms, y, u, v, u_next, v_next);
}

void resample_separable(std::span<const double> src, std::size_t rows_in, std::size_t cols_in,
                        std::span<const CubicTaps> row_taps, std::span<const CubicTaps> col_taps,
                        std::span<double> dst) {
  const std::size_t cols_out = col_taps.size();
  std::vector<double> tmp(rows_in * cols_out);
  for (std::size_t r = 0; r < rows_in; ++r)
    resample_row_pass(src, r, cols_in, col_taps, tmp.data() + r * cols_out);
  for (std::size_t r = 0; r < row_taps.size(); ++r) resample_col_pass(tmp, r, cols_out, row_taps, dst);
}

}  // namespace serial

namespace omp {

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output) {
  const long n = static_cast<long>(g.out_channels);
#pragma omp parallel for schedule(static)
  for (long o = 0; o < n; ++o) conv_forward_unit(g, static_cast<std::size_t>(o), input, weight, bias, output);
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> weight,
                           std::span<const double> grad_output, std::span<double> grad_input) {
  const long n = static_cast<long>(g.in_channels);
#pragma omp parallel for schedule(static)
  for (long c = 0; c < n; ++c)
    conv_backward_input_unit(g, static_cast<std::size_t>(c), weight, grad_output, grad_input);
}

void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> input,
                            std::span<const double> grad_output, std::span<double> grad_weight,
                            std::span<double> grad_bias) {
  const long n = static_cast<long>(g.out_channels);
#pragma omp parallel for schedule(static)
  for (long o = 0; o < n; ++o)
    conv_backward_weight_unit(g, static_cast<std::size_t>(o), input, grad_output, grad_weight, grad_bias);
}

void horn_schunck_sweep(const FlowTerms& terms, std::span<const double> u,
                        std::span<const double> v, std::span<double> u_next,
                        std::span<double> v_next) {
  const long h = static_cast<long>(terms.height);
#pragma omp parallel for schedule(static)
  for (long y = 0; y < h; ++y) horn_schunck_row(terms, static_cast<std::size_t>(y), u, v, u_next, v_next);
}

void resample_separable(std::span<const double> src, std::size_t rows_in, std::size_t cols_in,
                        std::span<const CubicTaps> row_taps, std::span<const CubicTaps> col_taps,
                        std::span<double> dst) {
  const std::size_t cols_out = col_taps.size();
  std::vector<double> tmp(rows_in * cols_out);
  const long n_in = static_cast<long>(rows_in);
  const long n_out = static_cast<long>(row_taps.size());
#pragma omp parallel
  {
#pragma omp for schedule(static)
    for (long r = 0; r < n_in; ++r)
      resample_row_pass(src, static_cast<std::size_t>(r), cols_in, col_taps,
                        tmp.data() + static_cast<std::size_t>(r) * cols_out);
#pragma omp for schedule(static)
    for (long r = 0; r < n_out; ++r)
      resample_col_pass(tmp, static_cast<std::size_t>(r), cols_out, row_taps, dst);
  }
}

}  // namespace omp

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace swarmcam::kernels
