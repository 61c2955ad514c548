// Serial vs OpenMP kernels on the shapes the pipeline runs.

#include <vector>

#include <benchmark/benchmark.h>

#include "swarmcam/gradcam.hpp"
#include "swarmcam/kernels.hpp"
#include "swarmcam/rng.hpp"

using namespace swarmcam;
using namespace swarmcam::kernels;

namespace {

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

// Conv stages of the default classifier, indexed by range(0).
ConvGeometry stage(int i) {
  static const ConvGeometry g[] = {{4, 64, 64, 8, 3, 3, 1, 1},
                                   {8, 32, 32, 16, 3, 3, 1, 1},
                                   {16, 16, 16, 32, 3, 3, 1, 1},
                                   {32, 8, 8, 64, 3, 3, 1, 1}};
  return g[i];
}

struct ConvData {
  ConvGeometry g;
  std::vector<double> in, w, b, out, gout, gin, gw, gb;
  explicit ConvData(int i) : g(stage(i)) {
    const std::size_t out_n = g.out_channels * g.out_height() * g.out_width();
    in = random_vector(g.in_channels * g.in_height * g.in_width, 1);
    w = random_vector(g.out_channels * g.in_channels * g.kernel_h * g.kernel_w, 2);
    b = random_vector(g.out_channels, 3);
    out.assign(out_n, 0.0);
    gout = random_vector(out_n, 4);
    gin.assign(in.size(), 0.0);
    gw.assign(w.size(), 0.0);
    gb.assign(b.size(), 0.0);
  }
};

template <auto Fwd>
void BM_ConvForward(benchmark::State& state) {
  ConvData d(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    Fwd(d.g, d.in, d.w, d.b, d.out);
    benchmark::DoNotOptimize(d.out.data());
  }
}

template <auto BwdIn, auto BwdW>
void BM_ConvBackward(benchmark::State& state) {
  ConvData d(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    BwdIn(d.g, d.w, d.gout, d.gin);
    BwdW(d.g, d.in, d.gout, d.gw, d.gb);
    benchmark::DoNotOptimize(d.gw.data());
  }
}

FlowTerms flow_terms(std::size_t n) {
  FlowTerms t{n, n, random_vector(n * n, 5), random_vector(n * n, 6), random_vector(n * n, 7), {}};
  t.inv_denom.resize(n * n);
  for (std::size_t i = 0; i < n * n; ++i) t.inv_denom[i] = 1.0 / (1.0 + t.ix[i] * t.ix[i] + t.iy[i] * t.iy[i]);
  return t;
}

template <auto Sweep>
void BM_HornSchunckSweep(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const FlowTerms t = flow_terms(n);
  std::vector<double> u(n * n, 0.0), v(n * n, 0.0), un(n * n), vn(n * n);
  for (auto _ : state) {
    Sweep(t, u, v, un, vn);
    u.swap(un);
    v.swap(vn);
    benchmark::DoNotOptimize(u.data());
  }
}

template <auto Resample>
void BM_BicubicUpsample(benchmark::State& state) {
  const auto out = static_cast<std::size_t>(state.range(0));
  const auto src = random_vector(64, 8);
  const auto taps = gradcam::cubic_taps(8, out);
  std::vector<double> dst(out * out);
  for (auto _ : state) {
    Resample(src, 8, 8, taps, taps, dst);
    benchmark::DoNotOptimize(dst.data());
  }
}

}  // namespace

BENCHMARK(BM_ConvForward<serial::conv2d_forward>)->Name("conv_forward/serial")->DenseRange(0, 3);
BENCHMARK(BM_ConvForward<omp::conv2d_forward>)->Name("conv_forward/omp")->DenseRange(0, 3);
BENCHMARK(BM_ConvBackward<serial::conv2d_backward_input, serial::conv2d_backward_weight>)
    ->Name("conv_backward/serial")
    ->DenseRange(0, 3);
BENCHMARK(BM_ConvBackward<omp::conv2d_backward_input, omp::conv2d_backward_weight>)
    ->Name("conv_backward/omp")
    ->DenseRange(0, 3);
BENCHMARK(BM_HornSchunckSweep<serial::horn_schunck_sweep>)->Name("hs_sweep/serial")->Arg(128)->Arg(512);
BENCHMARK(BM_HornSchunckSweep<omp::horn_schunck_sweep>)->Name("hs_sweep/omp")->Arg(128)->Arg(512);
BENCHMARK(BM_BicubicUpsample<serial::resample_separable>)->Name("bicubic_8_to_n/serial")->Arg(128)->Arg(512);
BENCHMARK(BM_BicubicUpsample<omp::resample_separable>)->Name("bicubic_8_to_n/omp")->Arg(128)->Arg(512);

BENCHMARK_MAIN();
