#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "scnt/kernels.hpp"
#include "scnt/rng.hpp"
#include "scnt/tensor.hpp"

namespace scnt {
namespace {

// Independent straight-line reference: per output element, bounds-checked
// sliding window. Deliberately structured differently from the production
// kernel so the two can cross-check each other.
Tensor conv_reference(const Tensor& x, const Tensor& w, int stride, int pad, int groups) {
  const Shape4 os = conv2d_output_shape(x.shape(), w.shape(), stride, pad, groups);
  Tensor out(os);
  const int cg = w.c(), ocg = os.c / groups, k = w.h();
  for (int n = 0; n < os.n; ++n)
    for (int oc = 0; oc < os.c; ++oc)
      for (int oh = 0; oh < os.h; ++oh)
        for (int ow = 0; ow < os.w; ++ow) {
          const int g = oc / ocg;
          double acc = 0.0;
          for (int icl = 0; icl < cg; ++icl)
            for (int kh = 0; kh < k; ++kh)
              for (int kw = 0; kw < k; ++kw) {
                const int ih = oh * stride - pad + kh;
                const int iw = ow * stride - pad + kw;
                if (ih < 0 || ih >= x.h() || iw < 0 || iw >= x.w()) continue;
                acc += static_cast<double>(x.at(n, g * cg + icl, ih, iw)) *
                       w.at(oc, icl, kh, kw);
              }
          out.at(n, oc, oh, ow) = static_cast<float>(acc);
        }
  return out;
}

void expect_close(const Tensor& a, const Tensor& b, float tol) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(a.data()[i], b.data()[i], tol) << "at flat index " << i;
  }
}

TEST(Conv2d, HandWindowSum) {
  Tensor x(Shape4{1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor w(1, 1, 3, 3);
  w.fill(1.0f);
  Tensor y = conv2d_forward(x, w, 1, 1, 1);
  ASSERT_EQ(y.shape(), (Shape4{1, 1, 2, 2}));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_FLOAT_EQ(y.data()[i], 10.0f);
}

TEST(Conv2d, ZeroWeightAnnihilates) {
  Rng r(1);
  Tensor x(2, 3, 5, 5);
  x.fill_normal(r, 0.0f, 1.0f);
  Tensor w(4, 3, 3, 3);
  Tensor y = conv2d_forward(x, w, 1, 1, 1);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_EQ(y.data()[i], 0.0f);
}

TEST(Conv2d, PointwiseIdentity) {
  Rng r(2);
  Tensor x(2, 3, 4, 4);
  x.fill_normal(r, 0.0f, 1.0f);
  Tensor w(3, 3, 1, 1);
  for (int i = 0; i < 3; ++i) w.at(i, i, 0, 0) = 1.0f;
  Tensor y = conv2d_forward(x, w, 1, 0, 1);
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
}

TEST(Conv2d, Linearity) {
  Rng r(3);
  Tensor x(1, 2, 6, 6), y(1, 2, 6, 6);
  x.fill_normal(r, 0.0f, 1.0f);
  y.fill_normal(r, 0.0f, 1.0f);
  Tensor w(3, 2, 3, 3);
  w.fill_normal(r, 0.0f, 0.5f);
  const float a = 1.7f, b = -0.6f;
  Tensor mix(x.shape());
  for (std::size_t i = 0; i < mix.size(); ++i) mix.data()[i] = a * x.data()[i] + b * y.data()[i];
  Tensor lhs = conv2d_forward(mix, w, 1, 1, 1);
  Tensor cx = conv2d_forward(x, w, 1, 1, 1);
  Tensor cy = conv2d_forward(y, w, 1, 1, 1);
  for (std::size_t i = 0; i < lhs.size(); ++i) {
    EXPECT_NEAR(lhs.data()[i], a * cx.data()[i] + b * cy.data()[i], 1e-5f);
  }
}

TEST(Conv2d, MatchesReferenceAcrossConfigs) {
  Rng r(4);
  struct Cfg {
    int n, c, h, w, oc, k, stride, pad, groups;
  };
  const std::vector<Cfg> cfgs = {
      {2, 3, 6, 6, 4, 3, 1, 1, 1}, {1, 4, 7, 7, 6, 5, 2, 2, 1}, {2, 4, 6, 6, 4, 3, 1, 1, 4},
      {1, 8, 5, 5, 8, 3, 2, 1, 8}, {2, 6, 4, 4, 4, 1, 1, 0, 2}, {1, 3, 9, 9, 2, 7, 2, 3, 1},
  };
  for (const auto& c : cfgs) {
    Tensor x(c.n, c.c, c.h, c.w);
    x.fill_normal(r, 0.0f, 1.0f);
    Tensor w(c.oc, c.c / c.groups, c.k, c.k);
    w.fill_normal(r, 0.0f, 0.4f);
    Tensor got = conv2d_forward(x, w, c.stride, c.pad, c.groups);
    Tensor want = conv_reference(x, w, c.stride, c.pad, c.groups);
    expect_close(got, want, 1e-4f);
  }
}

TEST(Conv2d, ShapeErrorsNameOffendingAxes) {
  Tensor x(1, 7, 6, 6);
  Tensor w(4, 8, 3, 3);
  try {
    conv2d_forward(x, w, 1, 1, 1);
    FAIL() << "expected channel mismatch to throw";
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("7"), std::string::npos) << msg;
    EXPECT_NE(msg.find("8"), std::string::npos) << msg;
  }
  Tensor bad_kernel(4, 7, 3, 5);
  EXPECT_THROW(conv2d_forward(x, bad_kernel, 1, 1, 1), std::invalid_argument);
  Tensor small(1, 7, 2, 2);
  Tensor w7(4, 7, 7, 7);
  EXPECT_THROW(conv2d_forward(small, w7, 1, 0, 1), std::invalid_argument);
  EXPECT_THROW(conv2d_forward(x, Tensor(4, 7, 3, 3), 0, 1, 1), std::invalid_argument);
  EXPECT_THROW(conv2d_forward(x, Tensor(5, 7, 3, 3), 1, 1, 2), std::invalid_argument);
}

TEST(Conv2d, StridedOutputShape) {
  Tensor x(1, 3, 16, 16);
  Tensor w(8, 3, 3, 3);
  EXPECT_EQ(conv2d_output_shape(x.shape(), w.shape(), 2, 1, 1), (Shape4{1, 8, 8, 8}));
}

TEST(BatchNorm, EvalWithUnitStatsIsNearIdentity) {
  Rng r(5);
  Tensor x(3, 2, 4, 4);
  x.fill_normal(r, 0.0f, 2.0f);
  Tensor gamma(1, 2, 1, 1), beta(1, 2, 1, 1), rm(1, 2, 1, 1), rv(1, 2, 1, 1);
  gamma.fill(1.0f);
  rv.fill(1.0f);
  Tensor y = batchnorm_forward_eval<float>(x, gamma, beta, rm, rv, 1e-5f, nullptr);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y.data()[i], x.data()[i], 1e-4f);
}

TEST(BatchNorm, TrainNormalizesPerChannel) {
  Rng r(6);
  Tensor x(4, 3, 5, 5);
  x.fill_normal(r, 1.5f, 2.0f);
  Tensor gamma(1, 3, 1, 1), beta(1, 3, 1, 1), rm(1, 3, 1, 1), rv(1, 3, 1, 1);
  gamma.fill(1.0f);
  rv.fill(1.0f);
  Tensor y = batchnorm_forward_train<float>(x, gamma, beta, rm, rv, 0.1f, 1e-5f, nullptr);
  for (int c = 0; c < 3; ++c) {
    double sum = 0, sq = 0;
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 25; ++i) {
        const float v = y.data()[y.index(n, c, 0, 0) + i];
        sum += v;
        sq += static_cast<double>(v) * v;
      }
    const double mean = sum / 100.0;
    EXPECT_NEAR(mean, 0.0, 1e-4);
    EXPECT_NEAR(sq / 100.0 - mean * mean, 1.0, 1e-3);
  }
}

TEST(BatchNorm, AffineAppliesAfterNormalization) {
  Rng r(7);
  Tensor x(4, 2, 3, 3);
  x.fill_normal(r, -0.3f, 1.2f);
  Tensor g1(1, 2, 1, 1), b0(1, 2, 1, 1), rm(1, 2, 1, 1), rv(1, 2, 1, 1);
  g1.fill(1.0f);
  rv.fill(1.0f);
  Tensor xhat = batchnorm_forward_train<float>(x, g1, b0, rm, rv, 0.1f, 1e-5f, nullptr);
  Tensor g2(1, 2, 1, 1), b1(1, 2, 1, 1), rm2(1, 2, 1, 1), rv2(1, 2, 1, 1);
  g2.fill(2.0f);
  b1.fill(1.0f);
  rv2.fill(1.0f);
  Tensor y = batchnorm_forward_train<float>(x, g2, b1, rm2, rv2, 0.1f, 1e-5f, nullptr);
  for (std::size_t i = 0; i < y.size(); ++i) {
    EXPECT_NEAR(y.data()[i], 2.0f * xhat.data()[i] + 1.0f, 1e-5f);
  }
}

TEST(BatchNorm, RunningStatsUpdateWithMomentum) {
  Tensor x(Shape4{2, 1, 1, 2}, {1, 2, 3, 4});
  Tensor gamma(1, 1, 1, 1), beta(1, 1, 1, 1), rm(1, 1, 1, 1), rv(1, 1, 1, 1);
  gamma.fill(1.0f);
  rv.fill(1.0f);
  batchnorm_forward_train<float>(x, gamma, beta, rm, rv, 0.1f, 1e-5f, nullptr);
  // batch mean 2.5, biased variance 1.25; EMA from (0, 1) with momentum 0.1
  EXPECT_NEAR(rm.data()[0], 0.25f, 1e-6f);
  EXPECT_NEAR(rv.data()[0], 0.9f + 0.1f * 1.25f, 1e-6f);
}

TEST(BatchNorm, RejectsTinyTrainBatch) {
  Tensor x(1, 2, 4, 4);
  Tensor gamma(1, 2, 1, 1), beta(1, 2, 1, 1), rm(1, 2, 1, 1), rv(1, 2, 1, 1);
  EXPECT_THROW(
      batchnorm_forward_train<float>(x, gamma, beta, rm, rv, 0.1f, 1e-5f, nullptr),
      std::invalid_argument);
}

TEST(Activation, PointValues) {
  Tensor x(Shape4{1, 1, 1, 4}, {-1.0f, 2.0f, 7.0f, 0.0f});
  Tensor relu = activation_forward(x, ActKind::Relu);
  EXPECT_EQ(relu.data()[0], 0.0f);
  EXPECT_EQ(relu.data()[1], 2.0f);
  Tensor relu6 = activation_forward(x, ActKind::Relu6);
  EXPECT_EQ(relu6.data()[2], 6.0f);
  EXPECT_EQ(relu6.data()[1], 2.0f);
  Tensor sig = activation_forward(x, ActKind::Sigmoid);
  EXPECT_FLOAT_EQ(sig.data()[3], 0.5f);
}

TEST(GlobalAvgPool, HandAverage) {
  Tensor x(Shape4{1, 2, 2, 2}, {1, 2, 3, 4, 10, 20, 30, 40});
  Tensor y = global_avg_pool_forward(x);
  ASSERT_EQ(y.shape(), (Shape4{1, 2, 1, 1}));
  EXPECT_FLOAT_EQ(y.at(0, 0, 0, 0), 2.5f);
  EXPECT_FLOAT_EQ(y.at(0, 1, 0, 0), 25.0f);
}

TEST(Linear, HandMatrix) {
  Tensor x(Shape4{1, 3, 1, 1}, {1, 2, 3});
  Tensor w(Shape4{2, 3, 1, 1}, {1, 0, -1, 0.5f, 0.5f, 0.5f});
  Tensor y = linear_forward(x, w);
  ASSERT_EQ(y.shape(), (Shape4{1, 2, 1, 1}));
  EXPECT_FLOAT_EQ(y.at(0, 0, 0, 0), -2.0f);
  EXPECT_FLOAT_EQ(y.at(0, 1, 0, 0), 3.0f);
}

TEST(Softmax, UniformLogitsGiveLogC) {
  Tensor logits(2, 4, 1, 1);
  logits.fill(0.37f);
  auto res = softmax_cross_entropy(logits, {0, 3});
  EXPECT_NEAR(res.loss, std::log(4.0), 1e-6);
}

TEST(Softmax, LargeMarginDrivesLossToZero) {
  Tensor logits(1, 4, 1, 1);
  logits.at(0, 2, 0, 0) = 50.0f;
  auto res = softmax_cross_entropy(logits, {2});
  EXPECT_LT(res.loss, 1e-6);
  EXPECT_EQ(res.predictions[0], 2);
}

TEST(Softmax, HandBatchOfTwo) {
  Tensor logits(Shape4{2, 3, 1, 1}, {1.0f, 2.0f, 0.5f, -1.0f, 0.0f, 1.0f});
  const std::vector<int> labels = {1, 0};
  auto res = softmax_cross_entropy(logits, labels);
  // Independent route: direct probability arithmetic in double.
  double want = 0.0;
  const double row0[3] = {1.0, 2.0, 0.5}, row1[3] = {-1.0, 0.0, 1.0};
  const double* rows[2] = {row0, row1};
  for (int n = 0; n < 2; ++n) {
    double z = 0.0;
    for (int c = 0; c < 3; ++c) z += std::exp(rows[n][c]);
    want += -std::log(std::exp(rows[n][labels[n]]) / z);
  }
  want /= 2.0;
  EXPECT_NEAR(res.loss, want, 1e-6);
  // Gradient rows sum to zero (softmax minus one-hot, scaled by 1/n).
  for (int n = 0; n < 2; ++n) {
    float s = 0.0f;
    for (int c = 0; c < 3; ++c) s += res.grad_logits.at(n, c, 0, 0);
    EXPECT_NEAR(s, 0.0f, 1e-6f);
  }
}

TEST(Softmax, LabelOutOfRangeThrows) {
  Tensor logits(1, 4, 1, 1);
  EXPECT_THROW(softmax_cross_entropy(logits, {4}), std::invalid_argument);
  EXPECT_THROW(softmax_cross_entropy(logits, {-1}), std::invalid_argument);
  EXPECT_THROW(softmax_cross_entropy(logits, {0, 1}), std::invalid_argument);
}

TEST(Kernels, DeterministicAcrossRuns) {
  auto run = [] {
    Rng r(99);
    Tensor x(2, 3, 8, 8);
    x.fill_normal(r, 0.0f, 1.0f);
    Tensor w(5, 3, 3, 3);
    w.fill_normal(r, 0.0f, 0.3f);
    return conv2d_forward(x, w, 2, 1, 1);
  };
  Tensor a = run(), b = run();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_EQ(a.data()[i], b.data()[i]);
}

}  // namespace
}  // namespace scnt
