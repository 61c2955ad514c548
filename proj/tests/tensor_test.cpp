#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "swarmcam/errors.hpp"
#include "swarmcam/rng.hpp"
#include "swarmcam/tensor.hpp"

using namespace swarmcam;
using namespace swarmcam::ad;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.normal(0.0, scale);
  return t;
}

// Six nested loops, zero padding, no shared code with the kernels.
Tensor conv_oracle(const Tensor& in, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad) {
  const std::size_t C = in.dim(0), H = in.dim(1), W = in.dim(2);
  const std::size_t O = w.dim(0), KH = w.dim(2), KW = w.dim(3);
  const std::size_t OH = (H + 2 * pad - KH) / stride + 1, OW = (W + 2 * pad - KW) / stride + 1;
  Tensor out({O, OH, OW});
  for (std::size_t o = 0; o < O; ++o)
    for (std::size_t y = 0; y < OH; ++y)
      for (std::size_t x = 0; x < OW; ++x) {
        double acc = b[o];
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t ky = 0; ky < KH; ++ky)
            for (std::size_t kx = 0; kx < KW; ++kx) {
              const long iy = static_cast<long>(y * stride + ky) - static_cast<long>(pad);
              const long ix = static_cast<long>(x * stride + kx) - static_cast<long>(pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) || ix >= static_cast<long>(W)) continue;
              acc += in.at({c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)}) * w.at({o, c, ky, kx});
            }
        out.at({o, y, x}) = acc;
      }
  return out;
}

double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-300});
}

// Gradient-oracle tolerance: relative 1e-4, or absolute 1e-7 for tiny grads.
void expect_grad_close(const Tensor& analytic, const Tensor& numeric) {
  ASSERT_EQ(analytic.shape(), numeric.shape());
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    if (std::fabs(analytic[i]) < 1e-6) EXPECT_LT(std::fabs(analytic[i] - numeric[i]), 1e-7) << "i=" << i;
    else EXPECT_LT(rel_err(analytic[i], numeric[i]), 1e-4) << "i=" << i;
  }
}

}  // namespace

TEST(TensorTest, ShapeInvariants) {
  Tensor t({2, 3, 4}, 1.5);
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(t.rank(), 3u);
  t.at({1, 2, 3}) = 7.0;
  EXPECT_EQ(t[1 * 12 + 2 * 4 + 3], 7.0);
  EXPECT_THROW(Tensor({2, 0}), ShapeError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>(3)), ShapeError);
  EXPECT_THROW(t.at({2, 0, 0}), ShapeError);
}

TEST(Conv2dTest, AllOnesCounting) {
  Graph g;
  auto x = g.constant(Tensor({1, 3, 3}, 1.0));
  auto w = g.leaf(Tensor({1, 1, 3, 3}, 1.0));
  auto b = g.leaf(Tensor({1}, 0.0));
  const Tensor& y = conv2d(x, w, b, 1, 1).value();
  EXPECT_EQ(y.at({0, 1, 1}), 9.0);
  EXPECT_EQ(y.at({0, 0, 0}), 4.0);
  EXPECT_EQ(y.at({0, 2, 2}), 4.0);
  EXPECT_EQ(y.at({0, 0, 1}), 6.0);
}

TEST(Conv2dTest, DeltaKernelIsIdentity) {
  Rng rng(1);
  Graph g;
  const Tensor in = random_tensor({1, 5, 5}, rng);
  Tensor k({1, 1, 3, 3}, 0.0);
  k.at({0, 0, 1, 1}) = 1.0;
  auto y = conv2d(g.constant(in), g.leaf(k), g.leaf(Tensor({1}, 0.0)), 1, 1);
  EXPECT_EQ(y.value(), in);
}

TEST(Conv2dTest, MatchesNestedLoopOracle) {
  Rng rng(2);
  const Tensor in = random_tensor({2, 4, 4}, rng), w = random_tensor({3, 2, 3, 3}, rng), b = random_tensor({3}, rng);
  for (std::size_t stride : {1u, 2u})
    for (std::size_t pad : {0u, 1u, 2u}) {
      Graph g;
      const Tensor y = conv2d(g.constant(in), g.leaf(w), g.leaf(b), stride, pad).value();
      const Tensor o = conv_oracle(in, w, b, stride, pad);
      ASSERT_EQ(y.shape(), o.shape());
      for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], o[i], 1e-12);
    }
}

TEST(Conv2dTest, ShapeErrors) {
  Graph g;
  auto x = g.constant(Tensor({2, 4, 4}));
  EXPECT_THROW(conv2d(x, g.leaf(Tensor({1, 3, 3, 3})), g.leaf(Tensor({1}))), ShapeError);
  EXPECT_THROW(conv2d(x, g.leaf(Tensor({1, 2, 5, 5})), g.leaf(Tensor({1}))), ShapeError);
  EXPECT_THROW(conv2d(x, g.leaf(Tensor({1, 2, 3, 3})), g.leaf(Tensor({2}))), ShapeError);
  EXPECT_THROW(conv2d(x, g.leaf(Tensor({1, 2, 3, 3})), g.leaf(Tensor({1})), 0), ShapeError);
}

TEST(MaxPoolTest, PicksMaxAndRecordsArgmax) {
  Graph g;
  auto x = g.leaf(Tensor({1, 2, 2}, std::vector<double>{1, 2, 3, 4}));
  auto y = maxpool2d(x, 2);
  EXPECT_EQ(y.value()[0], 4.0);
  EXPECT_EQ(g.argmax(y.id())[0], 3u);  // (1, 1)
}

TEST(MaxPoolTest, TiesPickFirstInScanOrder) {
  Graph g;
  auto x = g.leaf(Tensor({1, 4, 4}, 2.5));
  auto y = maxpool2d(x, 2);
  EXPECT_EQ(y.value(), Tensor({1, 2, 2}, 2.5));
  const auto am = g.argmax(y.id());
  EXPECT_EQ(am[0], 0u);
  EXPECT_EQ(am[1], 2u);
  EXPECT_EQ(am[2], 8u);
  EXPECT_EQ(am[3], 10u);
  const auto grads = g.backward(sum(y));
  const Tensor& gx = grads.at(x);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(gx[i], (i == 0 || i == 2 || i == 8 || i == 10) ? 1.0 : 0.0);
}

TEST(MaxPoolTest, MatchesWindowScanOracle) {
  Rng rng(3);
  const Tensor in = random_tensor({1, 8, 8}, rng);
  Graph g;
  const Tensor y = maxpool2d(g.constant(in), 2).value();
  for (std::size_t oy = 0; oy < 4; ++oy)
    for (std::size_t ox = 0; ox < 4; ++ox) {
      double m = -INFINITY;
      for (std::size_t dy = 0; dy < 2; ++dy)
        for (std::size_t dx = 0; dx < 2; ++dx) m = std::max(m, in.at({0, 2 * oy + dy, 2 * ox + dx}));
      EXPECT_EQ(y.at({0, oy, ox}), m);
    }
}

TEST(MaxPoolTest, BackwardConservesGradientMass) {
  Rng rng(4);
  Graph g;
  auto x = g.leaf(random_tensor({3, 6, 6}, rng));
  auto y = maxpool2d(x, 2);
  auto c = g.constant(random_tensor({3, 3, 3}, rng));
  const auto grads = g.backward(sum(mul(y, c)));
  const auto gx = grads.at(x).data();
  const auto gc = c.value().data();
  EXPECT_NEAR(std::accumulate(gx.begin(), gx.end(), 0.0), std::accumulate(gc.begin(), gc.end(), 0.0), 1e-12);
}

TEST(MaxPoolTest, NonDivisibleDimsRejected) {
  Graph g;
  EXPECT_THROW(maxpool2d(g.constant(Tensor({1, 5, 4})), 2), ShapeError);
}

TEST(DenseTest, IdentityAndHandArithmetic) {
  Graph g;
  Tensor eye({3, 3}, 0.0);
  for (std::size_t i = 0; i < 3; ++i) eye.at({i, i}) = 1.0;
  const Tensor x({3}, std::vector<double>{1.5, -2.0, 0.25});
  EXPECT_EQ(dense(g.constant(x), g.leaf(eye), g.leaf(Tensor({3}, 0.0))).value(), x);
  auto y = dense(g.constant(Tensor({2}, std::vector<double>{2, 3})), g.leaf(Tensor({1, 2}, 1.0)),
                 g.leaf(Tensor({1}, 0.5)));
  EXPECT_EQ(y.value()[0], 5.5);
}

TEST(DenseTest, MatchesDotProductOracle) {
  Rng rng(5);
  const Tensor x = random_tensor({6}, rng), w = random_tensor({4, 6}, rng), b = random_tensor({4}, rng);
  Graph g;
  const Tensor y = dense(g.constant(x), g.leaf(w), g.leaf(b)).value();
  for (std::size_t i = 0; i < 4; ++i) {
    double acc = b[i];
    for (std::size_t j = 0; j < 6; ++j) acc += w.at({i, j}) * x[j];
    EXPECT_NEAR(y[i], acc, 1e-12);
  }
  EXPECT_THROW(dense(g.constant(x), g.leaf(Tensor({4, 5})), g.leaf(b)), ShapeError);
}

TEST(UnaryTest, ReluAndSigmoid) {
  Graph g;
  auto x = g.leaf(Tensor({3}, std::vector<double>{-2.0, 3.0, 0.0}));
  auto r = relu(x);
  EXPECT_EQ(r.value()[0], 0.0);
  EXPECT_EQ(r.value()[1], 3.0);
  const auto gr = g.backward(sum(r));
  EXPECT_EQ(gr.at(x)[2], 0.0);  // derivative at exactly 0
  EXPECT_EQ(gr.at(x)[1], 1.0);

  Graph h;
  auto z = h.leaf(Tensor::scalar(0.0));
  auto s = sigmoid(z);
  EXPECT_EQ(s.value()[0], 0.5);
  const double analytic = h.backward(s).at(z)[0];
  EXPECT_EQ(analytic, 0.25);
  const Tensor fd = finite_diff_grad([](const Tensor& t) { return 1.0 / (1.0 + std::exp(-t[0])); },
                                     Tensor::scalar(0.0), 1e-5);
  EXPECT_NEAR(fd[0], analytic, 1e-8);
}

TEST(BceTest, AnalyticValues) {
  auto loss = [](double p, int y) {
    Graph g;
    return bce_loss(g.leaf(Tensor::scalar(p)), y).value()[0];
  };
  EXPECT_NEAR(loss(0.5, 0), std::log(2.0), 1e-15);
  EXPECT_NEAR(loss(0.5, 1), std::log(2.0), 1e-15);
  EXPECT_NEAR(loss(1.0 - kBceClamp, 1), 1e-7, 1e-12);
  EXPECT_NEAR(loss(0.8, 0), 1.6094379124341003, 1e-12);
  EXPECT_TRUE(std::isfinite(loss(1.0, 0)));
  EXPECT_TRUE(std::isfinite(loss(0.0, 1)));
}

TEST(BackwardTest, SumGivesOnes) {
  Graph g;
  auto x = g.leaf(Tensor({4}, 3.0));
  EXPECT_EQ(g.backward(sum(x)).at(x), Tensor({4}, 1.0));
}

TEST(BackwardTest, SigmoidChain) {
  Graph g;
  auto w = g.leaf(Tensor({1, 1}, 1.0));
  auto x = g.leaf(Tensor({1}, 0.0));
  auto y = sigmoid(dense(x, w, g.constant(Tensor({1}, 0.0))));
  const auto grads = g.backward(y);
  EXPECT_EQ(grads.at(w)[0], 0.0);
  EXPECT_EQ(grads.at(x)[0], 0.25);
}

TEST(BackwardTest, NonScalarOutputIsContractViolation) {
  Graph g;
  auto x = g.leaf(Tensor({2}, 1.0));
  EXPECT_THROW(g.backward(x), ContractError);
  Graph other;
  EXPECT_THROW(other.backward(sum(x)), ContractError);
}

TEST(BackwardTest, IntermediateActivationsGetGradients) {
  Graph g;
  auto x = g.leaf(Tensor({2}, std::vector<double>{1.0, -1.0}));
  auto h = relu(x);
  auto y = sum(scale(h, 3.0));
  const auto grads = g.backward(y);
  EXPECT_EQ(grads.at(h), Tensor({2}, 3.0));
  EXPECT_EQ(grads.at(x)[0], 3.0);
  EXPECT_EQ(grads.at(x)[1], 0.0);
}

TEST(BackwardTest, Linearity) {
  Rng rng(6);
  Graph g;
  auto x = g.leaf(random_tensor({5}, rng));
  auto w = g.leaf(random_tensor({3, 5}, rng));
  auto b = g.leaf(random_tensor({3}, rng));
  auto f = sum(relu(dense(x, w, b)));
  auto h = sum(sigmoid(dense(x, w, b)));
  const double a = 2.5, c = -0.75;
  auto combo = add(scale(f, a), scale(h, c));
  const auto gf = g.backward(f), gh = g.backward(h), gc = g.backward(combo);
  for (const Var& v : {x, w, b})
    for (std::size_t i = 0; i < v.value().size(); ++i)
      EXPECT_NEAR(gc.at(v)[i], a * gf.at(v)[i] + c * gh.at(v)[i], 1e-12);
}

TEST(FiniteDiffTest, Basics) {
  const Tensor g = finite_diff_grad([](const Tensor& t) { return t[0] * t[0]; }, Tensor::scalar(3.0), 1e-5);
  EXPECT_NEAR(g[0], 6.0, 1e-6);
  const Tensor z = finite_diff_grad([](const Tensor&) { return 4.0; }, Tensor({3}, 1.0), 1e-5);
  EXPECT_EQ(z, Tensor({3}, 0.0));
  EXPECT_THROW(finite_diff_grad([](const Tensor&) { return 0.0; }, Tensor({1}), 0.0), ValidationError);
}

namespace {

// Two-layer network loss as a function of one parameter tensor, rebuilt per call.
struct TwoLayer {
  Tensor x, w1, b1, w2, b2;
  double eval(const Tensor* over, int which) const {
    Graph g;
    auto in = g.constant(x);
    auto W1 = g.leaf(which == 0 ? *over : w1), B1 = g.leaf(which == 1 ? *over : b1);
    auto W2 = g.leaf(which == 2 ? *over : w2), B2 = g.leaf(which == 3 ? *over : b2);
    return bce_loss(sigmoid(dense(relu(dense(in, W1, B1)), W2, B2)), 1).value()[0];
  }
};

}  // namespace

TEST(GradientOracleTest, TwoLayerNetworkMatchesFiniteDifferences) {
  Rng rng(7);
  TwoLayer net{random_tensor({6}, rng), random_tensor({5, 6}, rng, 0.5), random_tensor({5}, rng, 0.1),
               random_tensor({1, 5}, rng, 0.5), random_tensor({1}, rng, 0.1)};
  Graph g;
  auto in = g.constant(net.x);
  auto W1 = g.leaf(net.w1), B1 = g.leaf(net.b1), W2 = g.leaf(net.w2), B2 = g.leaf(net.b2);
  const auto grads = g.backward(bce_loss(sigmoid(dense(relu(dense(in, W1, B1)), W2, B2)), 1));
  const Var params[] = {W1, B1, W2, B2};
  for (int p = 0; p < 4; ++p) {
    const Tensor fd = finite_diff_grad([&](const Tensor& t) { return net.eval(&t, p); }, params[p].value(), 1e-5);
    expect_grad_close(grads.at(params[p]), fd);
  }
}

TEST(GradientOracleTest, ConvPoolDenseCompositeMatchesFiniteDifferences) {
  Rng rng(8);
  const Tensor x = random_tensor({2, 6, 6}, rng), w = random_tensor({3, 2, 3, 3}, rng, 0.4),
               b = random_tensor({3}, rng, 0.1), wd = random_tensor({1, 27}, rng, 0.3),
               bd = random_tensor({1}, rng, 0.1);
  auto f = [&](const Tensor& xx, const Tensor& ww, const Tensor& wdd) {
    Graph g;
    auto out = dense(flatten(maxpool2d(relu(conv2d(g.constant(xx), g.leaf(ww), g.leaf(b), 1, 1)), 2)),
                     g.leaf(wdd), g.leaf(bd));
    return sum(out).value()[0];
  };
  Graph g;
  auto X = g.leaf(x), W = g.leaf(w), WD = g.leaf(wd);
  // 6x6 -> pool 3x3, 3 channels -> 27 features
  const auto grads = g.backward(
      sum(dense(flatten(maxpool2d(relu(conv2d(X, W, g.leaf(b), 1, 1)), 2)), WD, g.leaf(bd))));
  expect_grad_close(grads.at(X), finite_diff_grad([&](const Tensor& t) { return f(t, w, wd); }, x, 1e-5));
  expect_grad_close(grads.at(W), finite_diff_grad([&](const Tensor& t) { return f(x, t, wd); }, w, 1e-5));
  expect_grad_close(grads.at(WD), finite_diff_grad([&](const Tensor& t) { return f(x, w, t); }, wd, 1e-5));
}

TEST(DeterminismTest, ForwardOpsAreBitwiseRepeatable) {
  Rng rng(9);
  const Tensor x = random_tensor({3, 16, 16}, rng), w = random_tensor({4, 3, 3, 3}, rng),
               b = random_tensor({4}, rng), wd = random_tensor({5, 256}, rng), bd = random_tensor({5}, rng);
  auto run = [&] {
    Graph g;
    auto c = conv2d(g.constant(x), g.leaf(w), g.leaf(b), 1, 1);
    auto p = maxpool2d(c, 2);
    auto d = dense(flatten(p), g.leaf(wd), g.leaf(bd));
    return std::make_tuple(c.value(), p.value(), d.value());
  };
  EXPECT_EQ(run(), run());
}
