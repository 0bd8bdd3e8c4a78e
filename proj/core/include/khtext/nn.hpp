#pragma once

// Dense layers with hand-written backward passes. Everything here is a pure
// function over explicit parameter containers; backward functions accumulate
// into gradient containers of the same shapes.

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "khtext/rng.hpp"

namespace khtext::nn {

using Vec = std::vector<double>;

/// Row-major dense tensor of 64-bit reals.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> extents);

  std::size_t size() const { return data.size(); }
  std::size_t dim(std::size_t axis) const { return shape.at(axis); }
  std::size_t rows() const { return shape.at(0); }
  std::size_t cols() const { return shape.size() > 1 ? data.size() / shape[0] : 1; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols(), cols()}; }
  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  void zero();
  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

Tensor zeros_like(const Tensor& t);

/// Fills with draws from U(-bound, bound).
void init_uniform(Tensor& t, double bound, Rng& rng);

// ---------------------------------------------------------------------------
// Affine

/// y = W x + b with W of shape (q, p).
Vec affine_forward(std::span<const double> x, const Tensor& W, std::span<const double> b);

/// Accumulates dW += dy x^T, db += dy and (if dx is non-empty) dx += W^T dy.
void affine_backward(std::span<const double> x, const Tensor& W, std::span<const double> dy,
                     Tensor& dW, std::span<double> db, std::span<double> dx);

// ---------------------------------------------------------------------------
// Pointwise

double sigmoid(double z);
Vec sigmoid(std::span<const double> z);
/// Max-subtracted softmax.
Vec softmax(std::span<const double> z);
Vec relu(std::span<const double> x);
/// dx = dy where x > 0.
Vec relu_backward(std::span<const double> x, std::span<const double> dy);

/// Inverted dropout mask: each entry is 0 with probability p, else 1/(1-p).
Vec dropout_mask(std::size_t n, double p, Rng& rng);
/// Training mode draws a mask and applies it (returned through *mask when
/// given); inference mode is the identity.
Vec dropout(std::span<const double> x, double p, Rng& rng, bool training, Vec* mask = nullptr);

// ---------------------------------------------------------------------------
// Losses

struct LossGrad {
  double loss = 0;
  Vec grad;
};

/// -log softmax(logits)[label]; gradient softmax - onehot.
LossGrad cross_entropy(std::span<const double> logits, std::size_t label);

/// Mean over components of the logistic loss, in the overflow-free form
/// max(z,0) - z t + log(1 + e^-|z|). Gradient (s(z) - t) / k.
LossGrad binary_cross_entropy(std::span<const double> logits, std::span<const double> targets);

// ---------------------------------------------------------------------------
// LSTM

/// One direction. Gate blocks are stacked (input, forget, cell, output).
struct LstmDirection {
  Tensor wx;  // 4h x m
  Tensor wh;  // 4h x h
  Tensor bx;  // 4h
  Tensor bh;  // 4h

  LstmDirection() = default;
  LstmDirection(std::size_t input, std::size_t hidden);

  std::size_t input_size() const { return wx.cols(); }
  std::size_t hidden_size() const { return wh.cols(); }
  std::size_t parameter_count() const { return wx.size() + wh.size() + bx.size() + bh.size(); }
};

struct LstmParams {
  LstmDirection fwd;
  LstmDirection bwd;
};

struct LstmStepCache {
  Vec x, h_prev, c_prev;
  Vec i, f, g, o;
  Vec c, tanh_c;
};

struct LstmState {
  Vec h;
  Vec c;
};

LstmState lstm_step(std::span<const double> x, std::span<const double> h_prev,
                    std::span<const double> c_prev, const LstmDirection& p,
                    LstmStepCache* cache = nullptr);

/// Backpropagates (dh, dc) through one cached step. Accumulates parameter
/// gradients into `grads`; writes dx, dh_prev and dc_prev.
void lstm_step_backward(const LstmStepCache& cache, const LstmDirection& p,
                        std::span<const double> dh, std::span<const double> dc,
                        LstmDirection& grads, Vec& dx, Vec& dh_prev, Vec& dc_prev);

struct BiLstmCache {
  std::vector<LstmStepCache> fwd;
  std::vector<LstmStepCache> bwd;  // in processing order: position length-1 first
};

/// Runs the forward direction over rows 0..length-1 and the backward
/// direction over length-1..0, returning [h_fwd(last) ; h_bwd(first)].
Vec bilstm_encode(const Tensor& seq, std::size_t length, const LstmParams& p,
                  BiLstmCache* cache = nullptr);

/// Accumulates into `grads` and, when dseq is non-null, into its first
/// `length` rows.
void bilstm_backward(const BiLstmCache& cache, const LstmParams& p, std::span<const double> dout,
                     LstmParams& grads, Tensor* dseq);

// ---------------------------------------------------------------------------
// Convolution + max-pool over time

struct ConvSpec {
  std::vector<std::size_t> sizes{2, 3, 4};
  std::size_t filters = 50;

  std::size_t max_window() const;
  std::size_t output_size() const { return sizes.size() * filters; }
  void validate() const;
};

struct ConvParams {
  std::vector<Tensor> weights;  // per size s: filters x (s * m), row = window rows flattened
  std::vector<Tensor> biases;   // per size: filters

  ConvParams() = default;
  ConvParams(const ConvSpec& spec, std::size_t m);
  std::size_t parameter_count() const;
};

struct ConvCache {
  std::vector<std::size_t> argmax;  // per output component, window start
  Vec pooled_pre;                   // pre-activation at argmax
};

/// For every size s and filter j: max over t in [0, rows-s] of
/// ReLU(<W_j, seq[t..t+s)> + b_j); components ordered (size, filter).
/// Only the first `rows` rows of seq take part; rows >= max window.
Vec conv_maxpool(const Tensor& seq, std::size_t rows, const ConvSpec& spec, const ConvParams& p,
                 ConvCache* cache = nullptr);

void conv_maxpool_backward(const ConvCache& cache, const Tensor& seq, const ConvSpec& spec,
                           const ConvParams& p, std::span<const double> dout, ConvParams& grads,
                           Tensor* dseq);

// ---------------------------------------------------------------------------
// Architecture sizing

enum class Arch : std::uint8_t { linear = 0, birnn = 1, cnn = 2 };

const char* to_string(Arch arch);
Arch parse_arch(std::string_view name);

struct ArchConfig {
  Arch arch = Arch::linear;
  std::size_t m = 100;              // embedding width
  std::size_t k = 7;                // labels
  std::size_t linear_hidden = 200;  // linear model's hidden width
  std::size_t rnn_hidden = 100;     // per-direction LSTM width
  ConvSpec conv;
};

/// Closed-form trainable parameter count (embedding table excluded):
///   linear  m*hl + hl + hl*k + k
///   birnn   2*4*(m*h + h*h + 2h) + 2h*k + k
///   cnn     sum_s (f*s*m + f) + |sizes|*f*k + k
std::uint64_t count_parameters(const ArchConfig& cfg);

}  // namespace khtext::nn
