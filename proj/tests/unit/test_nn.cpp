#include <gtest/gtest.h>

#include <random>

#include "gradcheck.hpp"
#include "oodp/nn.hpp"

using namespace oodp;
using namespace oodp::nn;
using oodp::testing::dot;
using oodp::testing::max_rel_error;
using oodp::testing::random_tensor;

namespace {

constexpr double kTol = 1e-3;

// Checks d<g, layer(x)>/dx and /dparams against central differences.
void check_layer(Layer<double>& layer, Shape in_shape, bool training, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor<double> x = random_tensor(in_shape, rng);
  const Tensor<double> y0 = layer.forward(x, training);
  const Tensor<double> g = random_tensor(y0.shape(), rng);
  zero_grad(layer.parameters());
  const Tensor<double> dx = layer.backward(g);
  auto f = [&] { return dot(g, layer.forward(x, training)); };
  EXPECT_LT(max_rel_error(x.span(), dx.span(), f), kTol) << "input";
  for (auto* p : layer.parameters()) {
    const Tensor<double> analytic = p->grad;
    EXPECT_LT(max_rel_error(p->value.span(), analytic.span(), f), kTol) << p->name;
  }
}

}  // namespace

TEST(Conv2d, OutputSizeAndGradient) {
  std::mt19937_64 rng(1);
  Conv2d<double> conv("c", 2, 3, 3, 2, 1, rng);
  EXPECT_EQ(conv.out_size(8), 4);
  Conv2d<double> conv5("c5", 3, 2, 5, 2, 2, rng);
  EXPECT_EQ(conv5.out_size(80), 40);
  check_layer(conv, {2, 2, 8, 8}, true, 2);
  check_layer(conv5, {1, 3, 7, 7}, true, 3);
}

TEST(Conv2d, MatchesDirectConvolution) {
  std::mt19937_64 rng(5);
  Conv2d<double> conv("c", 2, 3, 3, 1, 1, rng);
  const Tensor<double> x = random_tensor({1, 2, 5, 6}, rng);
  const Tensor<double> y = conv.forward(x, false);
  const auto& w = conv.weight().value;
  const auto& b = conv.bias().value;
  for (int o = 0; o < 3; ++o) {
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < 6; ++j) {
        double acc = b[static_cast<std::size_t>(o)];
        for (int c = 0; c < 2; ++c)
          for (int di = 0; di < 3; ++di)
            for (int dj = 0; dj < 3; ++dj) {
              const int yy = i + di - 1, xx = j + dj - 1;
              if (yy < 0 || yy >= 5 || xx < 0 || xx >= 6) continue;
              acc += w[static_cast<std::size_t>(o * 18 + c * 9 + di * 3 + dj)] * x(0, c, yy, xx);
            }
        EXPECT_NEAR(y(0, o, i, j), acc, 1e-12);
      }
    }
  }
}

TEST(ConvTranspose2d, DoublesResolutionAndGradient) {
  std::mt19937_64 rng(4);
  ConvTranspose2d<double> deconv("d", 3, 2, 3, 2, 1, 1, rng);
  EXPECT_EQ(deconv.out_size(5), 10);
  check_layer(deconv, {2, 3, 3, 3}, true, 6);
}

TEST(BatchNorm2d, TrainingGradient) {
  BatchNorm2d<double> bn("bn", 3);
  check_layer(bn, {4, 3, 3, 3}, true, 7);
}

TEST(BatchNorm2d, EvalGradient) {
  BatchNorm2d<double> bn("bn", 2);
  std::mt19937_64 rng(8);
  bn.forward(random_tensor({4, 2, 3, 3}, rng, -3, 5), true);
  check_layer(bn, {2, 2, 3, 3}, false, 9);
}

TEST(BatchNorm2d, NormalizesAndTracksRunningStats) {
  BatchNorm2d<double> bn("bn", 1);
  Tensor<double> x(2, 1, 1, 2);
  x[0] = 1, x[1] = 3, x[2] = 5, x[3] = 7;  // mean 4, var 5
  const auto y = bn.forward(x, true);
  double mean = 0, sq = 0;
  for (double v : y.span()) mean += v / 4;
  for (double v : y.span()) sq += v * v / 4;
  EXPECT_NEAR(mean, 0, 1e-12);
  EXPECT_NEAR(sq, 5.0 / (5.0 + 1e-5), 1e-9);
  const auto bufs = bn.buffers();
  ASSERT_EQ(bufs.size(), 2u);
  // running = 0.9 * running + 0.1 * batch
  EXPECT_NEAR((*bufs[0].second)[0], 0.1 * 4, 1e-12);
  // the running variance tracks the unbiased estimate, 20 / 3
  EXPECT_NEAR((*bufs[1].second)[0], 0.9 * 1 + 0.1 * 20.0 / 3.0, 1e-9);
}

TEST(Linear, Gradient) {
  std::mt19937_64 rng(10);
  Linear<double> fc("fc", 12, 5, rng);
  check_layer(fc, {3, 3, 2, 2}, true, 11);
}

TEST(Activations, Gradients) {
  Relu<double> relu;
  Tanh<double> tanh_layer;
  check_layer(relu, {2, 2, 3, 3}, true, 12);
  check_layer(tanh_layer, {2, 2, 3, 3}, true, 13);
}

TEST(Reshape, RoundTrip) {
  Reshape<double> r(2, 3, 4);
  std::mt19937_64 rng(14);
  const auto x = random_tensor({2, 24, 1, 1}, rng);
  const auto y = r.forward(x, true);
  EXPECT_EQ(y.shape(), (Shape{2, 2, 3, 4}));
  EXPECT_EQ(r.backward(y), x);
}

TEST(Sequential, GradientThroughStack) {
  std::mt19937_64 rng(15);
  Sequential<double> seq;
  add_conv_bn_relu(seq, "a", 2, 4, 3, 2, rng);
  seq.add<Linear<double>>("fc", 4 * 3 * 3, 3, rng);
  Tensor<double> x = random_tensor({3, 2, 6, 6}, rng);
  const auto y0 = seq.forward(x, true);
  const auto g = random_tensor(y0.shape(), rng);
  zero_grad(seq.parameters());
  const auto dx = seq.backward(g);
  auto f = [&] { return dot(g, seq.forward(x, true)); };
  EXPECT_LT(max_rel_error(x.span(), dx.span(), f), kTol);
  for (auto* p : seq.parameters()) {
    const auto analytic = p->grad;
    EXPECT_LT(max_rel_error(p->value.span(), analytic.span(), f), kTol) << p->name;
  }
}

TEST(Sequential, CopyIsDeep) {
  std::mt19937_64 rng(16);
  Sequential<double> a;
  a.add<Linear<double>>("fc", 3, 2, rng);
  Sequential<double> b = a;
  b.parameters()[0]->value[0] += 1;
  EXPECT_NE(a.parameters()[0]->value[0], b.parameters()[0]->value[0]);
}

TEST(Init, DeterministicInSeed) {
  std::mt19937_64 r1(3), r2(3);
  Conv2d<float> a("c", 3, 8, 3, 1, 1, r1), b("c", 3, 8, 3, 1, 1, r2);
  EXPECT_EQ(a.weight().value, b.weight().value);
}

TEST(Adam, ZeroLearningRateLeavesParameters) {
  std::mt19937_64 rng(17);
  Linear<double> fc("fc", 4, 3, rng);
  const auto before = fc.weight().value;
  for (auto* p : fc.parameters()) p->grad.fill(0.5);
  Adam<double> opt(fc.parameters(), {0.0});
  opt.step();
  EXPECT_EQ(fc.weight().value, before);
  EXPECT_EQ(opt.steps_taken(), 1);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // With bias correction the first update is lr * g / (|g| + eps) = ±lr.
  std::mt19937_64 rng(18);
  Linear<double> fc("fc", 2, 1, rng);
  const auto before = fc.weight().value;
  fc.weight().grad[0] = 3.0;
  fc.weight().grad[1] = -0.2;
  fc.bias().grad[0] = 0.0;
  Adam<double> opt(fc.parameters(), {0.01});
  opt.step();
  EXPECT_NEAR(fc.weight().value[0], before[0] - 0.01, 1e-9);
  EXPECT_NEAR(fc.weight().value[1], before[1] + 0.01, 1e-9);
}

TEST(Adam, MinimizesQuadratic) {
  Parameter<double> p{"x", Tensor<double>(1, 1, 1, 2), Tensor<double>(1, 1, 1, 2)};
  p.value[0] = 3, p.value[1] = -2;
  Adam<double> opt({&p}, {0.05});
  for (int i = 0; i < 2000; ++i) {
    p.grad[0] = 2 * (p.value[0] - 1);
    p.grad[1] = 2 * (p.value[1] + 1);
    opt.step();
  }
  EXPECT_NEAR(p.value[0], 1, 1e-2);
  EXPECT_NEAR(p.value[1], -1, 1e-2);
}
