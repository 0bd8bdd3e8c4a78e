#include "khtext/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "khtext/error.hpp"

namespace khtext::nn {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw InvalidInput(std::string("shape mismatch: ") + what);
}

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> extents) : shape(std::move(extents)) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  data.assign(n, 0.0);
}

void Tensor::zero() { std::fill(data.begin(), data.end(), 0.0); }

bool Tensor::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

Tensor zeros_like(const Tensor& t) { return Tensor(t.shape); }

void init_uniform(Tensor& t, double bound, Rng& rng) {
  for (double& v : t.data) v = rng.uniform(-bound, bound);
}

// ---------------------------------------------------------------------------

Vec affine_forward(std::span<const double> x, const Tensor& W, std::span<const double> b) {
  require(W.shape.size() == 2, "affine weight must be 2-D");
  const std::size_t q = W.rows(), p = W.cols();
  require(x.size() == p, "affine input width");
  require(b.size() == q, "affine bias length");
  Vec y(q);
  for (std::size_t i = 0; i < q; ++i) y[i] = dot(W.data.data() + i * p, x.data(), p) + b[i];
  return y;
}

void affine_backward(std::span<const double> x, const Tensor& W, std::span<const double> dy,
                     Tensor& dW, std::span<double> db, std::span<double> dx) {
  const std::size_t q = W.rows(), p = W.cols();
  require(x.size() == p && dy.size() == q && db.size() == q && dW.size() == W.size(),
          "affine backward");
  require(dx.empty() || dx.size() == p, "affine backward input gradient");
  for (std::size_t i = 0; i < q; ++i) {
    const double g = dy[i];
    db[i] += g;
    if (g == 0) continue;
    double* dwr = dW.data.data() + i * p;
    const double* wr = W.data.data() + i * p;
    for (std::size_t j = 0; j < p; ++j) dwr[j] += g * x[j];
    if (!dx.empty()) {
      for (std::size_t j = 0; j < p; ++j) dx[j] += g * wr[j];
    }
  }
}

// ---------------------------------------------------------------------------

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Vec sigmoid(std::span<const double> z) {
  Vec out(z.size());
  std::transform(z.begin(), z.end(), out.begin(), [](double v) { return sigmoid(v); });
  return out;
}

Vec softmax(std::span<const double> z) {
  if (z.empty()) throw InvalidInput("softmax of an empty vector");
  const double mx = *std::max_element(z.begin(), z.end());
  Vec out(z.size());
  double sum = 0;
  for (std::size_t i = 0; i < z.size(); ++i) sum += out[i] = std::exp(z[i] - mx);
  for (double& v : out) v /= sum;
  return out;
}

Vec relu(std::span<const double> x) {
  Vec out(x.size());
  std::transform(x.begin(), x.end(), out.begin(), [](double v) { return v > 0 ? v : 0.0; });
  return out;
}

Vec relu_backward(std::span<const double> x, std::span<const double> dy) {
  require(x.size() == dy.size(), "relu backward");
  Vec dx(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0 ? dy[i] : 0.0;
  return dx;
}

Vec dropout_mask(std::size_t n, double p, Rng& rng) {
  if (!(p >= 0 && p < 1)) throw InvalidInput("dropout probability must lie in [0, 1)");
  Vec mask(n, 1.0);
  if (p == 0) return mask;
  const double keep = 1.0 / (1.0 - p);
  for (double& v : mask) v = rng.uniform() < p ? 0.0 : keep;
  return mask;
}

Vec dropout(std::span<const double> x, double p, Rng& rng, bool training, Vec* mask) {
  if (!(p >= 0 && p < 1)) throw InvalidInput("dropout probability must lie in [0, 1)");
  Vec out(x.begin(), x.end());
  if (!training) {
    if (mask) mask->assign(x.size(), 1.0);
    return out;
  }
  Vec m = dropout_mask(x.size(), p, rng);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= m[i];
  if (mask) *mask = std::move(m);
  return out;
}

// ---------------------------------------------------------------------------

LossGrad cross_entropy(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) {
    throw InvalidInput("label " + std::to_string(label) + " out of range for " +
                       std::to_string(logits.size()) + " classes");
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0;
  for (double z : logits) sum += std::exp(z - mx);
  LossGrad out;
  out.loss = -(logits[label] - mx - std::log(sum));
  out.grad = softmax(logits);
  out.grad[label] -= 1.0;
  return out;
}

LossGrad binary_cross_entropy(std::span<const double> logits, std::span<const double> targets) {
  require(logits.size() == targets.size() && !logits.empty(), "binary cross-entropy");
  const auto k = static_cast<double>(logits.size());
  LossGrad out;
  out.grad.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i], t = targets[i];
    if (t != 0.0 && t != 1.0) throw InvalidInput("binary cross-entropy targets must be 0 or 1");
    out.loss += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
    out.grad[i] = (sigmoid(z) - t) / k;
  }
  out.loss /= k;
  return out;
}

// ---------------------------------------------------------------------------

LstmDirection::LstmDirection(std::size_t input, std::size_t hidden)
    : wx({4 * hidden, input}), wh({4 * hidden, hidden}), bx({4 * hidden}), bh({4 * hidden}) {}

LstmState lstm_step(std::span<const double> x, std::span<const double> h_prev,
                    std::span<const double> c_prev, const LstmDirection& p,
                    LstmStepCache* cache) {
  const std::size_t m = p.input_size(), h = p.hidden_size();
  require(x.size() == m, "lstm input width");
  require(h_prev.size() == h && c_prev.size() == h, "lstm state width");

  Vec z(4 * h);
  for (std::size_t r = 0; r < 4 * h; ++r) {
    z[r] = dot(p.wx.data.data() + r * m, x.data(), m) + dot(p.wh.data.data() + r * h, h_prev.data(), h) +
           p.bx.data[r] + p.bh.data[r];
  }
  LstmState s{Vec(h), Vec(h)};
  Vec gi(h), gf(h), gg(h), go(h), tc(h);
  for (std::size_t j = 0; j < h; ++j) {
    gi[j] = sigmoid(z[j]);
    gf[j] = sigmoid(z[h + j]);
    gg[j] = std::tanh(z[2 * h + j]);
    go[j] = sigmoid(z[3 * h + j]);
    s.c[j] = gf[j] * c_prev[j] + gi[j] * gg[j];
    tc[j] = std::tanh(s.c[j]);
    s.h[j] = go[j] * tc[j];
  }
  if (cache) {
    cache->x.assign(x.begin(), x.end());
    cache->h_prev.assign(h_prev.begin(), h_prev.end());
    cache->c_prev.assign(c_prev.begin(), c_prev.end());
    cache->i = std::move(gi);
    cache->f = std::move(gf);
    cache->g = std::move(gg);
    cache->o = std::move(go);
    cache->c = s.c;
    cache->tanh_c = std::move(tc);
  }
  return s;
}

void lstm_step_backward(const LstmStepCache& cache, const LstmDirection& p,
                        std::span<const double> dh, std::span<const double> dc,
                        LstmDirection& grads, Vec& dx, Vec& dh_prev, Vec& dc_prev) {
  const std::size_t m = p.input_size(), h = p.hidden_size();
  Vec dz(4 * h);
  dc_prev.assign(h, 0.0);
  for (std::size_t j = 0; j < h; ++j) {
    const double i = cache.i[j], f = cache.f[j], g = cache.g[j], o = cache.o[j];
    const double tc = cache.tanh_c[j];
    const double dct = dc[j] + dh[j] * o * (1 - tc * tc);
    dz[j] = dct * g * i * (1 - i);
    dz[h + j] = dct * cache.c_prev[j] * f * (1 - f);
    dz[2 * h + j] = dct * i * (1 - g * g);
    dz[3 * h + j] = dh[j] * tc * o * (1 - o);
    dc_prev[j] = dct * f;
  }
  dx.assign(m, 0.0);
  dh_prev.assign(h, 0.0);
  for (std::size_t r = 0; r < 4 * h; ++r) {
    const double g = dz[r];
    grads.bx.data[r] += g;
    grads.bh.data[r] += g;
    if (g == 0) continue;
    double* gwx = grads.wx.data.data() + r * m;
    const double* wx = p.wx.data.data() + r * m;
    for (std::size_t c = 0; c < m; ++c) {
      gwx[c] += g * cache.x[c];
      dx[c] += g * wx[c];
    }
    double* gwh = grads.wh.data.data() + r * h;
    const double* wh = p.wh.data.data() + r * h;
    for (std::size_t c = 0; c < h; ++c) {
      gwh[c] += g * cache.h_prev[c];
      dh_prev[c] += g * wh[c];
    }
  }
}

Vec bilstm_encode(const Tensor& seq, std::size_t length, const LstmParams& p, BiLstmCache* cache) {
  if (length == 0) throw InvalidInput("bidirectional LSTM needs a non-empty sequence");
  require(length <= seq.rows(), "sequence length exceeds rows");
  require(seq.cols() == p.fwd.input_size() && seq.cols() == p.bwd.input_size(),
          "sequence width vs LSTM input");
  const std::size_t h = p.fwd.hidden_size();
  require(p.bwd.hidden_size() == h, "directional hidden widths differ");
  if (cache) {
    cache->fwd.assign(length, {});
    cache->bwd.assign(length, {});
  }

  LstmState fs{Vec(h, 0.0), Vec(h, 0.0)};
  for (std::size_t t = 0; t < length; ++t) {
    fs = lstm_step(seq.row(t), fs.h, fs.c, p.fwd, cache ? &cache->fwd[t] : nullptr);
  }
  LstmState bs{Vec(h, 0.0), Vec(h, 0.0)};
  for (std::size_t s = 0; s < length; ++s) {
    bs = lstm_step(seq.row(length - 1 - s), bs.h, bs.c, p.bwd, cache ? &cache->bwd[s] : nullptr);
  }
  Vec out(fs.h);
  out.insert(out.end(), bs.h.begin(), bs.h.end());
  return out;
}

void bilstm_backward(const BiLstmCache& cache, const LstmParams& p, std::span<const double> dout,
                     LstmParams& grads, Tensor* dseq) {
  const std::size_t h = p.fwd.hidden_size();
  const std::size_t length = cache.fwd.size();
  require(dout.size() == 2 * h, "bilstm output gradient");

  auto run = [&](const std::vector<LstmStepCache>& steps, const LstmDirection& dir,
                 LstmDirection& g, std::span<const double> dlast, bool reversed) {
    Vec dh(dlast.begin(), dlast.end()), dc(h, 0.0), dx, dh_prev, dc_prev;
    for (std::size_t s = steps.size(); s-- > 0;) {
      lstm_step_backward(steps[s], dir, dh, dc, g, dx, dh_prev, dc_prev);
      if (dseq) {
        const std::size_t pos = reversed ? length - 1 - s : s;
        auto row = dseq->row(pos);
        for (std::size_t c = 0; c < dx.size(); ++c) row[c] += dx[c];
      }
      dh.swap(dh_prev);
      dc.swap(dc_prev);
    }
  };
  run(cache.fwd, p.fwd, grads.fwd, dout.subspan(0, h), false);
  run(cache.bwd, p.bwd, grads.bwd, dout.subspan(h, h), true);
}

// ---------------------------------------------------------------------------

std::size_t ConvSpec::max_window() const {
  return sizes.empty() ? 0 : *std::max_element(sizes.begin(), sizes.end());
}

void ConvSpec::validate() const {
  if (sizes.empty()) throw InvalidInput("convolution needs at least one window size");
  for (auto s : sizes) {
    if (s < 1) throw InvalidInput("convolution window sizes must be >= 1");
  }
  if (filters < 1) throw InvalidInput("convolution needs at least one filter per size");
}

ConvParams::ConvParams(const ConvSpec& spec, std::size_t m) {
  spec.validate();
  for (auto s : spec.sizes) {
    weights.emplace_back(std::vector<std::size_t>{spec.filters, s * m});
    biases.emplace_back(std::vector<std::size_t>{spec.filters});
  }
}

std::size_t ConvParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& w : weights) n += w.size();
  for (const auto& b : biases) n += b.size();
  return n;
}

Vec conv_maxpool(const Tensor& seq, std::size_t rows, const ConvSpec& spec, const ConvParams& p,
                 ConvCache* cache) {
  spec.validate();
  require(rows <= seq.rows(), "convolution rows exceed sequence");
  if (rows < spec.max_window()) {
    throw InvalidInput("sequence of " + std::to_string(rows) + " rows is shorter than window " +
                       std::to_string(spec.max_window()) + "; pad first");
  }
  const std::size_t m = seq.cols();
  require(p.weights.size() == spec.sizes.size(), "convolution parameter count");
  Vec out(spec.output_size());
  if (cache) {
    cache->argmax.assign(out.size(), 0);
    cache->pooled_pre.assign(out.size(), 0.0);
  }
  std::size_t comp = 0;
  for (std::size_t a = 0; a < spec.sizes.size(); ++a) {
    const std::size_t s = spec.sizes[a];
    const Tensor& W = p.weights[a];
    require(W.rows() == spec.filters && W.cols() == s * m, "convolution filter shape");
    for (std::size_t j = 0; j < spec.filters; ++j, ++comp) {
      const double* wj = W.data.data() + j * s * m;
      double best = 0;
      std::size_t arg = 0;
      for (std::size_t t = 0; t + s <= rows; ++t) {
        const double pre = dot(wj, seq.data.data() + t * m, s * m) + p.biases[a].data[j];
        if (t == 0 || pre > best) {
          best = pre;
          arg = t;
        }
      }
      out[comp] = best > 0 ? best : 0.0;
      if (cache) {
        cache->argmax[comp] = arg;
        cache->pooled_pre[comp] = best;
      }
    }
  }
  return out;
}

void conv_maxpool_backward(const ConvCache& cache, const Tensor& seq, const ConvSpec& spec,
                           const ConvParams& p, std::span<const double> dout, ConvParams& grads,
                           Tensor* dseq) {
  require(dout.size() == spec.output_size(), "convolution output gradient");
  const std::size_t m = seq.cols();
  std::size_t comp = 0;
  for (std::size_t a = 0; a < spec.sizes.size(); ++a) {
    const std::size_t s = spec.sizes[a];
    for (std::size_t j = 0; j < spec.filters; ++j, ++comp) {
      if (cache.pooled_pre[comp] <= 0 || dout[comp] == 0) continue;
      const double g = dout[comp];
      const std::size_t t = cache.argmax[comp];
      const double* window = seq.data.data() + t * m;
      double* gw = grads.weights[a].data.data() + j * s * m;
      for (std::size_t i = 0; i < s * m; ++i) gw[i] += g * window[i];
      grads.biases[a].data[j] += g;
      if (dseq) {
        const double* wj = p.weights[a].data.data() + j * s * m;
        double* dw = dseq->data.data() + t * m;
        for (std::size_t i = 0; i < s * m; ++i) dw[i] += g * wj[i];
      }
    }
  }
}

// ---------------------------------------------------------------------------

const char* to_string(Arch arch) {
  switch (arch) {
    case Arch::linear:
      return "linear";
    case Arch::birnn:
      return "birnn";
    case Arch::cnn:
      return "cnn";
  }
  return "?";
}

Arch parse_arch(std::string_view name) {
  if (name == "linear") return Arch::linear;
  if (name == "birnn") return Arch::birnn;
  if (name == "cnn") return Arch::cnn;
  throw InvalidInput("unknown architecture \"" + std::string(name) + "\"");
}

std::uint64_t count_parameters(const ArchConfig& cfg) {
  const std::uint64_t m = cfg.m, k = cfg.k;
  switch (cfg.arch) {
    case Arch::linear: {
      const std::uint64_t hl = cfg.linear_hidden;
      return m * hl + hl + hl * k + k;
    }
    case Arch::birnn: {
      const std::uint64_t h = cfg.rnn_hidden;
      return 2 * 4 * (m * h + h * h + 2 * h) + 2 * h * k + k;
    }
    case Arch::cnn: {
      const std::uint64_t f = cfg.conv.filters;
      std::uint64_t n = 0;
      for (auto s : cfg.conv.sizes) n += f * s * m + f;
      return n + cfg.conv.sizes.size() * f * k + k;
    }
  }
  return 0;
}

}  // namespace khtext::nn
