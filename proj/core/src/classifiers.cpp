#include "khtext/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include "binary_io.hpp"
#include "khtext/error.hpp"

namespace khtext {

namespace {
constexpr char kMagic[5] = "KTXC";
constexpr std::uint32_t kVersion = 1;

std::span<const double> view(const nn::Tensor& t) { return t.data; }
std::span<double> view(nn::Tensor& t) { return t.data; }

double glorot(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

std::size_t min_rows(const ClassifierConfig& config) {
  return config.arch == nn::Arch::cnn ? std::max<std::size_t>(1, config.conv.max_window()) : 1;
}

std::size_t feature_width(const ClassifierConfig& c) {
  switch (c.arch) {
    case nn::Arch::linear:
      return c.linear_hidden;
    case nn::Arch::birnn:
      return 2 * c.rnn_hidden;
    case nn::Arch::cnn:
      return c.conv.output_size();
  }
  return 0;
}

}  // namespace

const char* to_string(Optimizer opt) { return opt == Optimizer::adam ? "adam" : "sgd"; }

Optimizer parse_optimizer(std::string_view name) {
  if (name == "adam") return Optimizer::adam;
  if (name == "sgd") return Optimizer::sgd;
  throw InvalidInput("unknown optimizer \"" + std::string(name) + "\"");
}

nn::ArchConfig ClassifierConfig::arch_config() const {
  return {arch, m, k, linear_hidden, rnn_hidden, conv};
}

void ClassifierConfig::validate() const {
  if (task == Task::multiclass && k < 2) throw InvalidInput("multiclass needs k >= 2");
  if (task == Task::multilabel && k < 1) throw InvalidInput("multilabel needs k >= 1");
  if (m < 1) throw InvalidInput("embedding width must be >= 1");
  if (!(dropout >= 0 && dropout < 1)) throw InvalidInput("dropout must lie in [0, 1)");
  if (!(lr > 0)) throw InvalidInput("learning rate must be > 0");
  if (epochs < 0) throw InvalidInput("epochs must be >= 0");
  if (batch < 1) throw InvalidInput("batch size must be >= 1");
  if (max_len < 1) throw InvalidInput("max sequence length must be >= 1");
  switch (arch) {
    case nn::Arch::linear:
      if (linear_hidden < 1) throw InvalidInput("linear hidden width must be >= 1");
      break;
    case nn::Arch::birnn:
      if (rnn_hidden < 1) throw InvalidInput("recurrent hidden width must be >= 1");
      break;
    case nn::Arch::cnn:
      conv.validate();
      if (max_len < conv.max_window()) {
        throw InvalidInput("max sequence length is shorter than the widest convolution window");
      }
      break;
  }
}

// ---------------------------------------------------------------------------

DocMatrix vectorize(const Document& doc, const EmbeddingModel& embedding,
                    const ClassifierConfig& config) {
  if (doc.tokens.empty()) throw InvalidInput("cannot vectorize an empty document");
  if (embedding.dim() != config.m) {
    throw InvalidInput("embedding width " + std::to_string(embedding.dim()) +
                       " does not match classifier width " + std::to_string(config.m));
  }
  DocMatrix out;
  out.length = std::min(doc.tokens.size(), config.max_len);
  out.rows = nn::Tensor({std::max(out.length, min_rows(config)), config.m});
  for (std::size_t t = 0; t < out.length; ++t) {
    auto v = embedding.word_vector(doc.tokens[t]);
    std::copy(v.begin(), v.end(), out.rows.row(t).begin());
  }
  return out;
}

DocMatrix pad_rows(const DocMatrix& doc, std::size_t rows) {
  DocMatrix out;
  out.length = doc.length;
  const std::size_t m = doc.rows.cols();
  out.rows = nn::Tensor({std::max(rows, doc.rows.rows()), m});
  std::copy(doc.rows.data.begin(), doc.rows.data.end(), out.rows.data.begin());
  return out;
}

// ---------------------------------------------------------------------------

ClassifierParams ClassifierParams::allocate(const ClassifierConfig& c) {
  ClassifierParams p;
  switch (c.arch) {
    case nn::Arch::linear:
      p.hidden_w = nn::Tensor({c.linear_hidden, c.m});
      p.hidden_b = nn::Tensor({c.linear_hidden});
      break;
    case nn::Arch::birnn:
      p.lstm.fwd = nn::LstmDirection(c.m, c.rnn_hidden);
      p.lstm.bwd = nn::LstmDirection(c.m, c.rnn_hidden);
      break;
    case nn::Arch::cnn:
      p.conv = nn::ConvParams(c.conv, c.m);
      break;
  }
  p.out_w = nn::Tensor({c.k, feature_width(c)});
  p.out_b = nn::Tensor({c.k});
  return p;
}

ClassifierParams ClassifierParams::initialize(const ClassifierConfig& c, Rng& rng) {
  ClassifierParams p = allocate(c);
  switch (c.arch) {
    case nn::Arch::linear:
      nn::init_uniform(p.hidden_w, glorot(c.m, c.linear_hidden), rng);
      break;
    case nn::Arch::birnn: {
      const double bound = 1.0 / std::sqrt(static_cast<double>(c.rnn_hidden));
      for (auto* dir : {&p.lstm.fwd, &p.lstm.bwd}) {
        nn::init_uniform(dir->wx, bound, rng);
        nn::init_uniform(dir->wh, bound, rng);
        for (std::size_t j = 0; j < c.rnn_hidden; ++j) dir->bx.data[c.rnn_hidden + j] = 1.0;
      }
      break;
    }
    case nn::Arch::cnn:
      for (std::size_t a = 0; a < c.conv.sizes.size(); ++a) {
        nn::init_uniform(p.conv.weights[a], glorot(c.conv.sizes[a] * c.m, c.conv.filters), rng);
      }
      break;
  }
  nn::init_uniform(p.out_w, glorot(feature_width(c), c.k), rng);
  return p;
}

std::vector<nn::Tensor*> ClassifierParams::tensors() {
  std::vector<nn::Tensor*> out;
  for (auto* t : {&hidden_w, &hidden_b}) {
    if (t->size()) out.push_back(t);
  }
  for (auto* dir : {&lstm.fwd, &lstm.bwd}) {
    for (auto* t : {&dir->wx, &dir->wh, &dir->bx, &dir->bh}) {
      if (t->size()) out.push_back(t);
    }
  }
  for (auto& t : conv.weights) out.push_back(&t);
  for (auto& t : conv.biases) out.push_back(&t);
  out.push_back(&out_w);
  out.push_back(&out_b);
  return out;
}

std::vector<const nn::Tensor*> ClassifierParams::tensors() const {
  auto mut = const_cast<ClassifierParams*>(this)->tensors();
  return {mut.begin(), mut.end()};
}

std::size_t ClassifierParams::count() const {
  std::size_t n = 0;
  for (const auto* t : tensors()) n += t->size();
  return n;
}

void ClassifierParams::zero() {
  for (auto* t : tensors()) t->zero();
}

bool operator==(const ClassifierParams& a, const ClassifierParams& b) {
  auto ta = a.tensors(), tb = b.tensors();
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (!(*ta[i] == *tb[i])) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------

nn::Vec forward(const ClassifierConfig& c, const ClassifierParams& p, const DocMatrix& doc,
                bool training, Rng* rng, ForwardCache* cache) {
  if (doc.length == 0) throw InvalidInput("document has no tokens");
  if (doc.rows.cols() != c.m || doc.rows.rows() < doc.length) {
    throw InvalidInput("document matrix does not match the classifier width");
  }
  if (training && !rng) throw InvalidInput("training-mode forward needs a random generator");
  ForwardCache local;
  ForwardCache& fc = cache ? *cache : local;

  nn::Vec pre_dropout;
  switch (c.arch) {
    case nn::Arch::linear: {
      fc.features.assign(c.m, 0.0);
      for (std::size_t t = 0; t < doc.length; ++t) {
        auto r = doc.rows.row(t);
        for (std::size_t j = 0; j < c.m; ++j) fc.features[j] += r[j];
      }
      for (double& v : fc.features) v /= static_cast<double>(doc.length);
      fc.hidden_pre = nn::affine_forward(fc.features, p.hidden_w, view(p.hidden_b));
      fc.hidden_act = nn::relu(fc.hidden_pre);
      pre_dropout = fc.hidden_act;
      break;
    }
    case nn::Arch::birnn:
      fc.features = nn::bilstm_encode(doc.rows, doc.length, p.lstm, cache ? &fc.lstm : nullptr);
      pre_dropout = fc.features;
      break;
    case nn::Arch::cnn: {
      const std::size_t rows = std::max(doc.length, c.conv.max_window());
      if (rows > doc.rows.rows()) {
        throw InvalidInput("document matrix is not padded to the widest convolution window");
      }
      fc.features = nn::conv_maxpool(doc.rows, rows, c.conv, p.conv, cache ? &fc.conv : nullptr);
      pre_dropout = fc.features;
      break;
    }
  }
  if (training) {
    fc.dropped = nn::dropout(pre_dropout, c.dropout, *rng, true, &fc.dropout_mask);
  } else {
    fc.dropout_mask.assign(pre_dropout.size(), 1.0);
    fc.dropped = std::move(pre_dropout);
  }
  return nn::affine_forward(fc.dropped, p.out_w, view(p.out_b));
}

void backward(const ClassifierConfig& c, const ClassifierParams& p, const DocMatrix& doc,
              const ForwardCache& fc, std::span<const double> dlogits, ClassifierParams& g,
              nn::Tensor* dinput) {
  nn::Vec ddropped(fc.dropped.size(), 0.0);
  nn::affine_backward(fc.dropped, p.out_w, dlogits, g.out_w, view(g.out_b), ddropped);
  nn::Vec dfeat(ddropped.size());
  for (std::size_t i = 0; i < dfeat.size(); ++i) dfeat[i] = ddropped[i] * fc.dropout_mask[i];

  switch (c.arch) {
    case nn::Arch::linear: {
      auto dpre = nn::relu_backward(fc.hidden_pre, dfeat);
      nn::Vec dmean(c.m, 0.0);
      nn::affine_backward(fc.features, p.hidden_w, dpre, g.hidden_w, view(g.hidden_b), dmean);
      if (dinput) {
        const double inv = 1.0 / static_cast<double>(doc.length);
        for (std::size_t t = 0; t < doc.length; ++t) {
          auto r = dinput->row(t);
          for (std::size_t j = 0; j < c.m; ++j) r[j] += dmean[j] * inv;
        }
      }
      break;
    }
    case nn::Arch::birnn:
      nn::bilstm_backward(fc.lstm, p.lstm, dfeat, g.lstm, dinput);
      break;
    case nn::Arch::cnn:
      nn::conv_maxpool_backward(fc.conv, doc.rows, c.conv, p.conv, dfeat, g.conv, dinput);
      break;
  }
}

nn::LossGrad document_loss(const ClassifierConfig& c, std::span<const double> logits,
                           const std::vector<int>& labels) {
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= c.k) {
      throw InvalidInput("label id " + std::to_string(l) + " >= k=" + std::to_string(c.k));
    }
  }
  if (c.task == Task::multiclass) {
    if (labels.size() != 1) throw InvalidInput("multiclass documents need exactly one label");
    return nn::cross_entropy(logits, static_cast<std::size_t>(labels[0]));
  }
  if (labels.empty()) throw InvalidInput("multilabel documents need at least one label");
  nn::Vec targets(c.k, 0.0);
  for (int l : labels) targets[static_cast<std::size_t>(l)] = 1.0;
  return nn::binary_cross_entropy(logits, targets);
}

Prediction decide(Task task, std::span<const double> scores) {
  if (scores.empty()) throw InvalidInput("no scores to decide on");
  Prediction out;
  const auto best = static_cast<int>(std::max_element(scores.begin(), scores.end()) - scores.begin());
  if (task == Task::multiclass) {
    out.probabilities = nn::softmax(scores);
    out.labels = {best};
    return out;
  }
  out.probabilities = nn::sigmoid(scores);
  for (std::size_t i = 0; i < out.probabilities.size(); ++i) {
    if (out.probabilities[i] >= 0.5) out.labels.push_back(static_cast<int>(i));
  }
  if (out.labels.empty()) out.labels = {best};
  return out;
}

// ---------------------------------------------------------------------------

ClassifierModel::ClassifierModel(ClassifierConfig config, ClassifierParams params,
                                 std::vector<std::string> labels,
                                 std::uint64_t embedding_fingerprint)
    : config_(std::move(config)),
      params_(std::move(params)),
      labels_(std::move(labels)),
      embedding_fingerprint_(embedding_fingerprint) {
  config_.validate();
  if (labels_.size() != config_.k) {
    throw InvalidInput("label catalog has " + std::to_string(labels_.size()) +
                       " entries but k=" + std::to_string(config_.k));
  }
  auto expected = ClassifierParams::allocate(config_);
  auto want = expected.tensors();
  auto have = params_.tensors();
  bool ok = want.size() == have.size();
  for (std::size_t i = 0; ok && i < want.size(); ++i) ok = want[i]->shape == have[i]->shape;
  if (!ok) throw InvalidInput("classifier weights do not match the configuration");
}

void ClassifierModel::save(std::ostream& out) const {
  io::Writer w(out);
  w.magic(kMagic);
  w.u32(kVersion);
  const auto& c = config_;
  w.u8(static_cast<std::uint8_t>(c.arch));
  w.u8(static_cast<std::uint8_t>(c.task));
  w.u64(c.k);
  w.u64(c.m);
  w.u64(c.linear_hidden);
  w.u64(c.rnn_hidden);
  w.u64(c.conv.sizes.size());
  for (auto s : c.conv.sizes) w.u64(s);
  w.u64(c.conv.filters);
  w.f64(c.dropout);
  w.u8(static_cast<std::uint8_t>(c.optimizer));
  w.f64(c.lr);
  w.f64(c.beta1);
  w.f64(c.beta2);
  w.f64(c.epsilon);
  w.u32(static_cast<std::uint32_t>(c.epochs));
  w.u64(c.batch);
  w.u64(c.seed);
  w.u64(c.max_len);
  w.u8(c.fine_tune ? 1 : 0);

  w.u64(labels_.size());
  for (const auto& l : labels_) w.str(l);
  w.u64(embedding_fingerprint_);
  w.str(embedding_path_);

  const auto tensors = params_.tensors();
  w.u64(tensors.size());
  for (const auto* t : tensors) {
    w.u32(static_cast<std::uint32_t>(t->shape.size()));
    for (auto e : t->shape) w.u64(e);
    w.array(std::span<const double>(t->data));
  }
}

void ClassifierModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  save(out);
  io::Writer(out).finish(path.string());
}

ClassifierModel ClassifierModel::load(std::istream& in, const std::string& source) {
  io::Reader r(in, source);
  r.expect_magic(kMagic);
  if (auto v = r.u32(); v != kVersion) {
    throw FormatError(source + ": unsupported classifier model version " + std::to_string(v));
  }
  ClassifierConfig c;
  auto arch = r.u8();
  auto task = r.u8();
  if (arch > 2 || task > 1) throw FormatError(source + ": bad architecture or task tag");
  c.arch = static_cast<nn::Arch>(arch);
  c.task = static_cast<Task>(task);
  c.k = r.u64();
  c.m = r.u64();
  c.linear_hidden = r.u64();
  c.rnn_hidden = r.u64();
  const auto nsizes = r.u64();
  r.check_count(nsizes, 1024, "window size count");
  c.conv.sizes.clear();
  for (std::uint64_t i = 0; i < nsizes; ++i) c.conv.sizes.push_back(r.u64());
  c.conv.filters = r.u64();
  c.dropout = r.f64();
  auto opt = r.u8();
  if (opt > 1) throw FormatError(source + ": bad optimizer tag");
  c.optimizer = static_cast<Optimizer>(opt);
  c.lr = r.f64();
  c.beta1 = r.f64();
  c.beta2 = r.f64();
  c.epsilon = r.f64();
  c.epochs = static_cast<int>(r.u32());
  c.batch = r.u64();
  c.seed = r.u64();
  c.max_len = r.u64();
  c.fine_tune = r.u8() != 0;
  r.check_count(c.k, 1 << 20, "label count");
  r.check_count(c.m, 1 << 20, "embedding width");
  r.check_count(c.linear_hidden, 1 << 20, "hidden width");
  r.check_count(c.rnn_hidden, 1 << 20, "hidden width");
  r.check_count(c.conv.filters, 1 << 20, "filter count");
  for (auto s : c.conv.sizes) r.check_count(s, 1 << 16, "window size");
  try {
    c.validate();
  } catch (const InvalidInput& e) {
    throw FormatError(source + ": bad configuration (" + e.what() + ")");
  }

  const auto nlabels = r.u64();
  r.check_count(nlabels, 1 << 20, "label count");
  std::vector<std::string> labels;
  for (std::uint64_t i = 0; i < nlabels; ++i) labels.push_back(r.str());
  const auto fp = r.u64();
  std::string embedding_path = r.str();

  auto params = ClassifierParams::allocate(c);
  auto tensors = params.tensors();
  if (r.u64() != tensors.size()) throw FormatError(source + ": wrong number of weight tensors");
  for (auto* t : tensors) {
    const auto ndim = r.u32();
    std::vector<std::size_t> shape;
    for (std::uint32_t d = 0; d < ndim && d < 8; ++d) shape.push_back(r.u64());
    if (shape != t->shape) throw FormatError(source + ": weight tensor has the wrong shape");
    r.array(std::span<double>(t->data));
    if (!t->all_finite()) throw FormatError(source + ": non-finite weight");
  }
  r.expect_eof();
  try {
    ClassifierModel model(c, std::move(params), std::move(labels), fp);
    model.set_embedding_path(std::move(embedding_path));
    return model;
  } catch (const InvalidInput& e) {
    throw FormatError(source + ": " + e.what());
  }
}

ClassifierModel ClassifierModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open classifier model " + path.string());
  return load(in, path.string());
}

namespace {

void check_embedding(const ClassifierModel& model, const EmbeddingModel& embedding) {
  if (embedding.fingerprint() != model.embedding_fingerprint()) {
    throw Error("embedding model does not match the one this classifier was trained with");
  }
}

}  // namespace

Prediction predict(const ClassifierModel& model, const Document& doc,
                   const EmbeddingModel& embedding) {
  check_embedding(model, embedding);
  return decide(model.config().task, model.scores(vectorize(doc, embedding, model.config())));
}

std::vector<Prediction> predict_all(const ClassifierModel& model, const std::vector<Document>& docs,
                                    const EmbeddingModel& embedding) {
  check_embedding(model, embedding);
  std::vector<Prediction> out;
  out.reserve(docs.size());
  for (const auto& d : docs) {
    out.push_back(decide(model.config().task, model.scores(vectorize(d, embedding, model.config()))));
  }
  return out;
}

namespace {

MetricsReport score(Task task, std::size_t k, const std::vector<Document>& docs,
                    const std::vector<Prediction>& preds) {
  if (task == Task::multiclass) {
    std::vector<int> truth, pred;
    for (std::size_t i = 0; i < docs.size(); ++i) {
      truth.push_back(docs[i].labels.at(0));
      pred.push_back(preds[i].labels.at(0));
    }
    return evaluate_multiclass(truth, pred, k);
  }
  std::vector<std::vector<int>> truth, pred;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    truth.push_back(docs[i].labels);
    pred.push_back(preds[i].labels);
  }
  return evaluate_multilabel(truth, pred, k);
}

class VectorCache {
 public:
  VectorCache(const EmbeddingModel& e, const ClassifierConfig& c) : embedding_(e), config_(c) {}

  DocMatrix operator()(const Document& doc) {
    if (doc.tokens.empty()) throw InvalidInput("cannot vectorize an empty document");
    DocMatrix out;
    out.length = std::min(doc.tokens.size(), config_.max_len);
    out.rows = nn::Tensor({std::max(out.length, min_rows(config_)), config_.m});
    for (std::size_t t = 0; t < out.length; ++t) {
      auto it = cache_.find(doc.tokens[t]);
      if (it == cache_.end()) {
        it = cache_.emplace(doc.tokens[t], embedding_.word_vector(doc.tokens[t])).first;
      }
      std::copy(it->second.begin(), it->second.end(), out.rows.row(t).begin());
    }
    return out;
  }

 private:
  const EmbeddingModel& embedding_;
  const ClassifierConfig& config_;
  std::unordered_map<std::string, std::vector<float>> cache_;
};

struct AdamState {
  std::vector<nn::Tensor> m, v;
  std::uint64_t step = 0;
};

void apply_update(const ClassifierConfig& c, ClassifierParams& params, ClassifierParams& grads,
                  AdamState& state) {
  auto ps = params.tensors();
  auto gs = grads.tensors();
  if (c.optimizer == Optimizer::sgd) {
    for (std::size_t i = 0; i < ps.size(); ++i) {
      for (std::size_t j = 0; j < ps[i]->size(); ++j) ps[i]->data[j] -= c.lr * gs[i]->data[j];
    }
    return;
  }
  if (state.m.empty()) {
    for (const auto* p : ps) {
      state.m.push_back(nn::zeros_like(*p));
      state.v.push_back(nn::zeros_like(*p));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(c.beta1, t);
  const double c2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto& m = state.m[i].data;
    auto& v = state.v[i].data;
    for (std::size_t j = 0; j < ps[i]->size(); ++j) {
      const double g = gs[i]->data[j];
      m[j] = c.beta1 * m[j] + (1 - c.beta1) * g;
      v[j] = c.beta2 * v[j] + (1 - c.beta2) * g * g;
      ps[i]->data[j] -= c.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + c.epsilon);
    }
  }
}

// Spreads the gradient of each real row back to the token's input rows.
void update_embedding(EmbeddingModel& embedding, const Document& doc, const DocMatrix& dm,
                      const nn::Tensor& dinput, double lr) {
  auto& input = embedding.mutable_input();
  for (std::size_t t = 0; t < dm.length; ++t) {
    const auto rows = embedding.token_rows(doc.tokens[t]);
    if (rows.empty()) continue;
    const double scale = lr / static_cast<double>(rows.size());
    auto g = dinput.row(t);
    for (auto r : rows) {
      auto row = input.row(r);
      for (std::size_t j = 0; j < row.size(); ++j) row[j] -= static_cast<float>(scale * g[j]);
    }
  }
}

}  // namespace

MetricsReport evaluate(const ClassifierModel& model, const std::vector<Document>& docs,
                       const EmbeddingModel& embedding) {
  return score(model.config().task, model.config().k, docs, predict_all(model, docs, embedding));
}

ClassifierTrainResult train_classifier(const Dataset& train, const std::vector<Document>& valid,
                                       const EmbeddingModel& embedding, ClassifierConfig config,
                                       const std::function<void(const EpochRecord&)>& on_epoch) {
  config.validate();
  if (train.docs.empty()) throw InvalidInput("training set is empty");
  if (train.labels.size() != config.k) {
    throw InvalidInput("label catalog has " + std::to_string(train.labels.size()) +
                       " labels but k=" + std::to_string(config.k));
  }
  if (embedding.dim() != config.m) {
    throw InvalidInput("embedding width " + std::to_string(embedding.dim()) +
                       " does not match classifier width " + std::to_string(config.m));
  }
  auto check_labels = [&](const std::vector<Document>& docs, const char* which) {
    for (std::size_t i = 0; i < docs.size(); ++i) {
      const auto& d = docs[i];
      if (d.labels.empty()) {
        throw InvalidInput(std::string(which) + " document " + std::to_string(i) + " has no label");
      }
      for (int l : d.labels) {
        if (l < 0 || static_cast<std::size_t>(l) >= config.k) {
          throw InvalidInput(std::string(which) + " document " + std::to_string(i) +
                             " has label id " + std::to_string(l) + " >= k=" +
                             std::to_string(config.k));
        }
      }
      if (config.task == Task::multiclass && d.labels.size() != 1) {
        throw InvalidInput(std::string(which) + " document " + std::to_string(i) +
                           " has several labels in multiclass mode");
      }
    }
  };
  check_labels(train.docs, "training");
  check_labels(valid, "validation");

  Rng init_rng(mix_seed(config.seed, 20));
  ClassifierParams params = ClassifierParams::initialize(config, init_rng);

  std::optional<EmbeddingModel> tuned;
  if (config.fine_tune) tuned.emplace(embedding);
  const EmbeddingModel& active = tuned ? *tuned : embedding;

  ClassifierTrainResult result;
  auto finish = [&](ClassifierParams best) {
    result.model = ClassifierModel(config, std::move(best), train.labels.names(), active.fingerprint());
    if (tuned) result.tuned_embedding = std::move(tuned);
    return std::move(result);
  };
  if (config.epochs == 0) return finish(std::move(params));

  std::vector<DocMatrix> train_mats, valid_mats;
  if (!config.fine_tune) {
    VectorCache vc(embedding, config);
    for (const auto& d : train.docs) train_mats.push_back(vc(d));
    for (const auto& d : valid) valid_mats.push_back(vc(d));
  }

  Rng rng(mix_seed(config.seed, 21));
  ClassifierParams grads = ClassifierParams::allocate(config);
  AdamState adam;
  std::vector<std::size_t> order(train.docs.size());
  std::iota(order.begin(), order.end(), 0);

  ClassifierParams best = params;
  std::optional<EmbeddingModel> best_embedding;
  double best_f1 = -1;
  ForwardCache cache;
  nn::Tensor dinput;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle(order, rng);
    double loss_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t end = std::min(order.size(), start + config.batch);
      grads.zero();
      std::vector<std::pair<std::size_t, nn::Tensor>> doc_grads;
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t idx = order[b];
        const Document& doc = train.docs[idx];
        DocMatrix fresh;
        if (config.fine_tune) fresh = vectorize(doc, active, config);
        const DocMatrix& dm = config.fine_tune ? fresh : train_mats[idx];

        auto logits = forward(config, params, dm, true, &rng, &cache);
        auto lg = document_loss(config, logits, doc.labels);
        if (!std::isfinite(lg.loss)) {
          throw Error("non-finite training loss at epoch " + std::to_string(epoch) +
                      ", document " + std::to_string(idx));
        }
        loss_sum += lg.loss;
        const double inv_batch = 1.0 / static_cast<double>(end - start);
        for (double& g : lg.grad) g *= inv_batch;
        if (config.fine_tune) {
          dinput = nn::zeros_like(dm.rows);
          backward(config, params, dm, cache, lg.grad, grads, &dinput);
          doc_grads.emplace_back(idx, std::move(dinput));
        } else {
          backward(config, params, dm, cache, lg.grad, grads, nullptr);
        }
      }
      apply_update(config, params, grads, adam);
      if (config.fine_tune) {
        for (auto& [idx, g] : doc_grads) {
          DocMatrix dm;
          dm.length = std::min(train.docs[idx].tokens.size(), config.max_len);
          update_embedding(*tuned, train.docs[idx], dm, g, config.lr);
        }
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    if (!valid.empty()) {
      std::vector<Prediction> preds;
      for (std::size_t i = 0; i < valid.size(); ++i) {
        DocMatrix fresh;
        if (config.fine_tune) fresh = vectorize(valid[i], active, config);
        const DocMatrix& dm = config.fine_tune ? fresh : valid_mats[i];
        preds.push_back(decide(config.task, forward(config, params, dm)));
      }
      auto rep = score(config.task, config.k, valid, preds);
      rec.has_validation = true;
      rec.valid_macro_f1 = rep.macro.f1;
      rec.valid_micro_f1 = rep.micro.f1;
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (!rec.has_validation || rec.valid_macro_f1 > best_f1) {
      best_f1 = rec.valid_macro_f1;
      best = params;
      result.best_epoch = epoch;
      if (tuned) best_embedding = *tuned;
    }
  }
  if (best_embedding) tuned = std::move(best_embedding);
  return finish(std::move(best));
}

}  // namespace khtext
