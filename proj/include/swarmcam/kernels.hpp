#pragma once

// Hot loops shared by the tensor engine, optical flow and resampling.
//
// Each kernel exists twice: `serial::` is the reference, `omp::` splits the
// outermost independent loop across OpenMP threads. Both variants perform
// the same floating point operations in the same order for every output
// element, so their results are bitwise identical (tests/kernels_test.cpp).
// The unqualified entry points dispatch to `omp::`.

#include <cstddef>
#include <span>
#include <vector>

namespace swarmcam::kernels {

struct ConvGeometry {
  std::size_t in_channels, in_height, in_width;
  std::size_t out_channels, kernel_h, kernel_w;
  std::size_t stride, pad;

  std::size_t out_height() const { return (in_height + 2 * pad - kernel_h) / stride + 1; }
  std::size_t out_width() const { return (in_width + 2 * pad - kernel_w) / stride + 1; }
};

/// Precomputed derivative fields for Horn-Schunck relaxation.
struct FlowTerms {
  std::size_t height, width;
  std::vector<double> ix, iy, it;
  std::vector<double> inv_denom;  // 1 / (alpha^2 + ix^2 + iy^2)
};

/// Four taps of a cubic resampling kernel for one output coordinate.
struct CubicTaps {
  std::size_t index[4];
  double weight[4];
};

namespace serial {
void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output);
/// Accumulates into grad_input.
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> weight,
                           std::span<const double> grad_output, std::span<double> grad_input);
/// Accumulates into grad_weight and grad_bias.
void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> input,
                            std::span<const double> grad_output, std::span<double> grad_weight,
                            std::span<double> grad_bias);
/// One Jacobi sweep: reads (u, v), writes (u_next, v_next).
void horn_schunck_sweep(const FlowTerms& terms, std::span<const double> u,
                        std::span<const double> v, std::span<double> u_next,
                        std::span<double> v_next);
/// Separable resampling of a row-major [rows_in, cols_in] grid.
void resample_separable(std::span<const double> src, std::size_t rows_in, std::size_t cols_in,
                        std::span<const CubicTaps> row_taps, std::span<const CubicTaps> col_taps,
                        std::span<double> dst);
}  // namespace serial

namespace omp {
void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output);
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> weight,
                           std::span<const double> grad_output, std::span<double> grad_input);
void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> input,
                            std::span<const double> grad_output, std::span<double> grad_weight,
                            std::span<double> grad_bias);
void horn_schunck_sweep(const FlowTerms& terms, std::span<const double> u,
                        std::span<const double> v, std::span<double> u_next,
                        std::span<double> v_next);
void resample_separable(std::span<const double> src, std::size_t rows_in, std::size_t cols_in,
                        std::span<const CubicTaps> row_taps, std::span<const CubicTaps> col_taps,
                        std::span<double> dst);
}  // namespace omp

using omp::conv2d_backward_input;
using omp::conv2d_backward_weight;
using omp::conv2d_forward;
using omp::horn_schunck_sweep;
using omp::resample_separable;

/// Number of threads the omp variants will use (1 without OpenMP).
int max_threads();

}  // namespace swarmcam::kernels
