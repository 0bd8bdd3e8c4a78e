#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "khtext/error.hpp"
#include "khtext/nn.hpp"
#include "test_support.hpp"

namespace khtext::nn {
namespace {

using khtext::testing::central_difference;
using khtext::testing::random_vector;
using khtext::testing::rel_error;

constexpr double kTol = 1e-4;

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 0.5) {
  Tensor t(std::move(shape));
  init_uniform(t, scale, rng);
  return t;
}

double weighted_sum(std::span<const double> v, std::span<const double> r) {
  double s = 0;
  for (std::size_t i = 0; i < v.size(); ++i) s += v[i] * r[i];
  return s;
}

// Compares every entry of `values` (perturbed in place) against `analytic`.
template <typename F>
void expect_gradient(std::vector<double>& values, const std::vector<double>& analytic, F&& loss,
                     const std::string& what) {
  ASSERT_EQ(values.size(), analytic.size()) << what;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double numeric = central_difference(values[i], loss);
    EXPECT_LT(rel_error(analytic[i], numeric), kTol) << what << "[" << i << "] analytic "
                                                     << analytic[i] << " numeric " << numeric;
  }
}

TEST(Affine, Examples) {
  Tensor eye({2, 2});
  eye.at(0, 0) = eye.at(1, 1) = 1;
  EXPECT_EQ(affine_forward(Vec{3, -4}, eye, Vec{0, 0}), (Vec{3, -4}));
  EXPECT_EQ(affine_forward(Vec{3, -4}, Tensor({2, 2}), Vec{1, 2}), (Vec{1, 2}));
  Tensor w({2, 2});
  w.data = {1, 1, 0, 3};
  EXPECT_EQ(affine_forward(Vec{1, 2}, w, Vec{0, 1}), (Vec{3, 7}));
  EXPECT_THROW(affine_forward(Vec{1, 2, 3}, w, Vec{0, 1}), InvalidInput);
  EXPECT_THROW(affine_forward(Vec{1, 2}, w, Vec{0}), InvalidInput);
}

TEST(Affine, GradientCheck) {
  Rng rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t p = 1 + rng.below(5), q = 1 + rng.below(5);
    Vec x = random_vector(p, rng), b = random_vector(q, rng), r = random_vector(q, rng);
    Tensor w = random_tensor({q, p}, rng);
    Tensor dw = zeros_like(w);
    Vec db(q, 0.0), dx(p, 0.0);
    affine_backward(x, w, r, dw, db, dx);
    auto loss = [&] { return weighted_sum(affine_forward(x, w, b), r); };
    expect_gradient(x, dx, loss, "x");
    expect_gradient(w.data, dw.data, loss, "W");
    expect_gradient(b, db, loss, "b");
  }
}

TEST(Activations, SoftmaxExamplesAndStability) {
  EXPECT_EQ(softmax(Vec{0, 0}), (Vec{0.5, 0.5}));
  const auto p = softmax(Vec{std::numbers::ln2, 0});
  EXPECT_NEAR(p[0], 2.0 / 3, 1e-15);
  EXPECT_NEAR(p[1], 1.0 / 3, 1e-15);

  Rng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto z = random_vector(1 + rng.below(10), rng, 1e3);
    const auto s = softmax(z);
    double sum = 0;
    for (double v : s) {
      ASSERT_TRUE(std::isfinite(v));
      sum += v;
    }
    ASSERT_NEAR(sum, 1.0, 1e-9);
  }
  EXPECT_EQ(softmax(Vec{1000, -1000}), (Vec{1, 0}));
}

TEST(Activations, SigmoidAndRelu) {
  EXPECT_EQ(sigmoid(0.0), 0.5);
  EXPECT_EQ(sigmoid(1000.0), 1.0);
  EXPECT_EQ(sigmoid(-1000.0), 0.0);
  EXPECT_NEAR(sigmoid(2.0), 1 / (1 + std::exp(-2.0)), 1e-15);
  EXPECT_NEAR(sigmoid(-2.0), 1 / (1 + std::exp(2.0)), 1e-15);
  EXPECT_EQ(relu(Vec{-1, 0, 2}), (Vec{0, 0, 2}));
  EXPECT_EQ(relu_backward(Vec{-1, 0, 2}, Vec{5, 5, 5}), (Vec{0, 0, 5}));
}

TEST(Dropout, IdentityCasesAndExpectation) {
  Rng rng(3);
  const Vec x{1, -2, 3};
  EXPECT_EQ(dropout(x, 0.0, rng, true), x);
  EXPECT_EQ(dropout(x, 0.5, rng, false), x);
  EXPECT_THROW(dropout(x, 1.0, rng, true), InvalidInput);
  EXPECT_THROW(dropout(x, -0.1, rng, true), InvalidInput);

  for (double p : {0.1, 0.5, 0.8}) {
    constexpr int kTrials = 100'000;
    Vec mean(4, 0.0);
    for (int t = 0; t < kTrials; ++t) {
      const auto y = dropout(Vec(4, 1.0), p, rng, true);
      for (std::size_t i = 0; i < 4; ++i) {
        ASSERT_TRUE(y[i] == 0.0 || std::abs(y[i] - 1 / (1 - p)) < 1e-12);
        mean[i] += y[i] / kTrials;
      }
    }
    for (double m : mean) EXPECT_NEAR(m, 1.0, 0.01) << "p=" << p;
  }
}

TEST(Losses, CrossEntropy) {
  auto lg = cross_entropy(Vec{0.3, 0.3}, 1);
  EXPECT_NEAR(lg.loss, std::numbers::ln2, 1e-15);
  EXPECT_THROW(cross_entropy(Vec{0, 0}, 2), InvalidInput);

  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t k = 2 + rng.below(6);
    Vec z = random_vector(k, rng, 3.0);
    const std::size_t label = rng.below(k);
    const auto res = cross_entropy(z, label);
    double sum = 0;
    for (double g : res.grad) sum += g;
    EXPECT_NEAR(sum, 0.0, 1e-12);
    auto loss = [&] { return cross_entropy(z, label).loss; };
    for (std::size_t i = 0; i < k; ++i) {
      EXPECT_LT(rel_error(res.grad[i], central_difference(z[i], loss)), 1e-6);
    }
  }
  const auto big = cross_entropy(Vec{1000, -1000}, 1);
  EXPECT_NEAR(big.loss, 2000, 1e-9);
}

TEST(Losses, BinaryCrossEntropy) {
  EXPECT_NEAR(binary_cross_entropy(Vec{0}, Vec{1}).loss, std::numbers::ln2, 1e-15);
  const auto sat = binary_cross_entropy(Vec{50}, Vec{1});
  EXPECT_TRUE(std::isfinite(sat.loss));
  EXPECT_LT(sat.loss, 1e-20);
  EXPECT_NEAR(binary_cross_entropy(Vec{-1000}, Vec{1}).loss, 1000, 1e-9);
  EXPECT_THROW(binary_cross_entropy(Vec{0}, Vec{0.5}), InvalidInput);
  EXPECT_THROW(binary_cross_entropy(Vec{0, 1}, Vec{1}), InvalidInput);

  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t k = 1 + rng.below(6);
    Vec z = random_vector(k, rng, 4.0), t(k);
    for (auto& v : t) v = static_cast<double>(rng.below(2));
    const auto res = binary_cross_entropy(z, t);
    for (std::size_t i = 0; i < k; ++i) {
      EXPECT_NEAR(res.grad[i], (sigmoid(z[i]) - t[i]) / static_cast<double>(k), 1e-15);
    }
    auto loss = [&] { return binary_cross_entropy(z, t).loss; };
    for (std::size_t i = 0; i < k; ++i) {
      EXPECT_LT(rel_error(res.grad[i], central_difference(z[i], loss)), 1e-6);
    }
  }
}

TEST(Lstm, ZeroParamsGiveZeroState) {
  LstmDirection p(3, 2);
  const auto s = lstm_step(Vec{1, 2, 3}, Vec{0, 0}, Vec{0, 0}, p);
  EXPECT_EQ(s.h, (Vec{0, 0}));
  EXPECT_EQ(s.c, (Vec{0, 0}));
}

TEST(Lstm, ScalarHandEvaluation) {
  LstmDirection p(1, 1);
  // Rows in gate order input, forget, cell, output.
  p.wx.data = {0.5, -1.0, 2.0, 0.3};
  p.wh.data = {0.1, 0.2, -0.4, 0.6};
  p.bx.data = {0.0, 1.0, 0.0, -0.2};
  p.bh.data = {0.05, 0.0, 0.1, 0.0};
  const double x = 0.7, h0 = -0.3, c0 = 0.9;
  const double zi = 0.5 * x + 0.1 * h0 + 0.05;
  const double zf = -1.0 * x + 0.2 * h0 + 1.0;
  const double zg = 2.0 * x - 0.4 * h0 + 0.1;
  const double zo = 0.3 * x + 0.6 * h0 - 0.2;
  auto sig = [](double z) { return 1 / (1 + std::exp(-z)); };
  const double c = sig(zf) * c0 + sig(zi) * std::tanh(zg);
  const double h = sig(zo) * std::tanh(c);
  const auto s = lstm_step(Vec{x}, Vec{h0}, Vec{c0}, p);
  EXPECT_NEAR(s.c[0], c, 1e-15);
  EXPECT_NEAR(s.h[0], h, 1e-15);
}

TEST(Lstm, SaturatedForgetGateCarriesCell) {
  LstmDirection p(1, 1);
  p.bx.data = {-40, 40, 0, 0};  // input gate closed, forget gate open
  const auto s = lstm_step(Vec{0.5}, Vec{0.2}, Vec{25.0}, p);
  EXPECT_NEAR(s.c[0], 25.0, 1e-6);
}

TEST(Lstm, StepGradientCheck) {
  Rng rng(6);
  const std::size_t m = 3, h = 2;
  LstmDirection p(m, h);
  for (Tensor* t : {&p.wx, &p.wh, &p.bx, &p.bh}) init_uniform(*t, 0.8, rng);
  Vec x = random_vector(m, rng), h0 = random_vector(h, rng), c0 = random_vector(h, rng);
  const Vec rh = random_vector(h, rng), rc = random_vector(h, rng);

  LstmStepCache cache;
  lstm_step(x, h0, c0, p, &cache);
  LstmDirection g(m, h);
  Vec dx, dh0, dc0;
  lstm_step_backward(cache, p, rh, rc, g, dx, dh0, dc0);
  auto loss = [&] {
    const auto s = lstm_step(x, h0, c0, p);
    return weighted_sum(s.h, rh) + weighted_sum(s.c, rc);
  };
  expect_gradient(x, dx, loss, "x");
  expect_gradient(h0, dh0, loss, "h_prev");
  expect_gradient(c0, dc0, loss, "c_prev");
  expect_gradient(p.wx.data, g.wx.data, loss, "W_x");
  expect_gradient(p.wh.data, g.wh.data, loss, "W_h");
  expect_gradient(p.bx.data, g.bx.data, loss, "b_x");
  expect_gradient(p.bh.data, g.bh.data, loss, "b_h");
}

LstmParams random_lstm(std::size_t m, std::size_t h, Rng& rng) {
  LstmParams p{LstmDirection(m, h), LstmDirection(m, h)};
  for (auto* d : {&p.fwd, &p.bwd}) {
    for (Tensor* t : {&d->wx, &d->wh, &d->bx, &d->bh}) init_uniform(*t, 0.8, rng);
  }
  return p;
}

TEST(BiLstm, Examples) {
  Rng rng(7);
  auto p = random_lstm(2, 3, rng);
  p.bwd = p.fwd;
  Tensor one({1, 2});
  one.data = {0.4, -0.9};
  const auto out = bilstm_encode(one, 1, p);
  ASSERT_EQ(out.size(), 6u);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(out[j], out[3 + j]);

  const LstmParams zero{LstmDirection(2, 3), LstmDirection(2, 3)};
  EXPECT_EQ(bilstm_encode(one, 1, zero), Vec(6, 0.0));
  EXPECT_THROW(bilstm_encode(one, 0, zero), InvalidInput);
}

TEST(BiLstm, ReversedInputSwapsHalvesWithTiedWeights) {
  Rng rng(8);
  auto p = random_lstm(3, 2, rng);
  p.bwd = p.fwd;
  const Tensor seq = random_tensor({5, 3}, rng, 1.0);
  Tensor rev({5, 3});
  for (std::size_t t = 0; t < 5; ++t) {
    std::copy(seq.row(4 - t).begin(), seq.row(4 - t).end(), rev.row(t).begin());
  }
  const auto a = bilstm_encode(seq, 5, p);
  const auto b = bilstm_encode(rev, 5, p);
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_EQ(b[j], a[2 + j]);
    EXPECT_EQ(b[2 + j], a[j]);
  }
}

TEST(BiLstm, IgnoresRowsBeyondLength) {
  Rng rng(9);
  const auto p = random_lstm(3, 2, rng);
  Tensor seq = random_tensor({6, 3}, rng, 1.0);
  const auto a = bilstm_encode(seq, 4, p);
  for (std::size_t c = 0; c < 3; ++c) seq.at(5, c) = 123.0;
  EXPECT_EQ(bilstm_encode(seq, 4, p), a);
}

TEST(BiLstm, GradientCheck) {
  Rng rng(10);
  auto p = random_lstm(3, 2, rng);
  Tensor seq = random_tensor({5, 3}, rng, 1.0);
  const std::size_t length = 4;
  const Vec r = random_vector(4, rng);
  BiLstmCache cache;
  bilstm_encode(seq, length, p, &cache);
  LstmParams g{LstmDirection(3, 2), LstmDirection(3, 2)};
  Tensor dseq = zeros_like(seq);
  bilstm_backward(cache, p, r, g, &dseq);
  auto loss = [&] { return weighted_sum(bilstm_encode(seq, length, p), r); };
  expect_gradient(seq.data, dseq.data, loss, "seq");
  for (auto [pd, gd] : {std::pair{&p.fwd, &g.fwd}, std::pair{&p.bwd, &g.bwd}}) {
    expect_gradient(pd->wx.data, gd->wx.data, loss, "W_x");
    expect_gradient(pd->wh.data, gd->wh.data, loss, "W_h");
    expect_gradient(pd->bx.data, gd->bx.data, loss, "b_x");
    expect_gradient(pd->bh.data, gd->bh.data, loss, "b_h");
  }
}

TEST(Conv, Examples) {
  ConvSpec spec{{2, 3}, 4};
  const ConvParams zero(spec, 3);
  Rng rng(11);
  const Tensor seq = random_tensor({5, 3}, rng, 1.0);
  EXPECT_EQ(conv_maxpool(seq, 5, spec, zero), Vec(8, 0.0));
  EXPECT_THROW(conv_maxpool(seq, 2, spec, zero), InvalidInput);

  // One size-1 filter summing the row.
  ConvSpec sum_spec{{1}, 1};
  ConvParams sum(sum_spec, 2);
  sum.weights[0].data = {1, 1};
  Tensor rows({3, 2});
  rows.data = {1, 0, 3, 1, -2, 0.5};
  EXPECT_EQ(conv_maxpool(rows, 3, sum_spec, sum), Vec{4});

  // Constant input: every window gives the same activation.
  ConvParams p(spec, 3);
  for (auto& w : p.weights) init_uniform(w, 1.0, rng);
  for (auto& b : p.biases) init_uniform(b, 1.0, rng);
  Tensor flat({6, 3});
  for (std::size_t t = 0; t < 6; ++t) flat.row(t)[0] = 0.3, flat.row(t)[1] = -0.7, flat.row(t)[2] = 1.1;
  const auto pooled = conv_maxpool(flat, 6, spec, p);
  const auto first = conv_maxpool(flat, 3, spec, p);
  EXPECT_EQ(pooled, first);
}

TEST(Conv, GradientCheck) {
  Rng rng(12);
  const ConvSpec spec{{1, 2, 3}, 3};
  ConvParams p(spec, 3);
  for (auto& w : p.weights) init_uniform(w, 1.0, rng);
  for (auto& b : p.biases) init_uniform(b, 0.5, rng);
  Tensor seq = random_tensor({6, 3}, rng, 1.0);
  const Vec r = random_vector(spec.output_size(), rng);
  ConvCache cache;
  conv_maxpool(seq, 6, spec, p, &cache);
  ConvParams g(spec, 3);
  Tensor dseq = zeros_like(seq);
  conv_maxpool_backward(cache, seq, spec, p, r, g, &dseq);
  auto loss = [&] { return weighted_sum(conv_maxpool(seq, 6, spec, p), r); };
  expect_gradient(seq.data, dseq.data, loss, "seq");
  for (std::size_t a = 0; a < spec.sizes.size(); ++a) {
    expect_gradient(p.weights[a].data, g.weights[a].data, loss, "filters");
    expect_gradient(p.biases[a].data, g.biases[a].data, loss, "biases");
  }
}

TEST(CountParameters, MatchesPublishedCounts) {
  ArchConfig cfg;
  cfg.arch = Arch::linear;
  EXPECT_EQ(count_parameters(cfg), 21'607u);
  cfg.arch = Arch::birnn;
  EXPECT_EQ(count_parameters(cfg), 163'007u);
  cfg.arch = Arch::cnn;
  EXPECT_EQ(count_parameters(cfg), 46'207u);
}

TEST(CountParameters, FormulaByHand) {
  ArchConfig cfg;
  cfg.m = 3;
  cfg.k = 2;
  cfg.linear_hidden = 4;
  cfg.rnn_hidden = 5;
  cfg.conv = {{1, 2}, 6};
  cfg.arch = Arch::linear;
  EXPECT_EQ(count_parameters(cfg), 3u * 4 + 4 + 4 * 2 + 2);
  cfg.arch = Arch::birnn;
  EXPECT_EQ(count_parameters(cfg), 2u * 4 * (3 * 5 + 25 + 10) + 10 * 2 + 2);
  cfg.arch = Arch::cnn;
  EXPECT_EQ(count_parameters(cfg), (6u * 3 + 6) + (6u * 6 + 6) + 12 * 2 + 2);
}

TEST(Tensor, ShapeAndFiniteness) {
  Tensor t({2, 3});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_TRUE(t.all_finite());
  t.at(1, 2) = std::nan("");
  EXPECT_FALSE(t.all_finite());
  t.zero();
  EXPECT_TRUE(t.all_finite());
}

}  // namespace
}  // namespace khtext::nn
