#include "khtext/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "binary_io.hpp"
#include "khtext/error.hpp"
#include "khtext/rng.hpp"

namespace khtext {

namespace {
constexpr char kMagic[5] = "KTXB";
constexpr std::uint32_t kVersion = 1;
}  // namespace

double SparseVector::dot(std::span<const double> dense) const {
  double s = 0;
  for (std::size_t i = 0; i < index.size(); ++i) s += value[i] * dense[index[i]];
  return s;
}

double SparseVector::norm() const {
  double s = 0;
  for (double v : value) s += v * v;
  return std::sqrt(s);
}

// ---------------------------------------------------------------------------

TfidfVectorizer TfidfVectorizer::fit(const std::vector<std::vector<std::string>>& docs) {
  if (docs.empty()) throw InvalidInput("TF-IDF needs at least one document");
  TfidfVectorizer v;
  v.documents_ = docs.size();
  std::vector<std::uint64_t> df;
  std::vector<std::size_t> last_seen;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    for (const auto& tok : docs[d]) {
      auto [it, inserted] = v.index_.try_emplace(tok, static_cast<std::uint32_t>(v.tokens_.size()));
      if (inserted) {
        v.tokens_.push_back(tok);
        df.push_back(0);
        last_seen.push_back(SIZE_MAX);
      }
      if (last_seen[it->second] != d) {
        last_seen[it->second] = d;
        ++df[it->second];
      }
    }
  }
  const double n = static_cast<double>(docs.size());
  v.idf_.resize(df.size());
  for (std::size_t c = 0; c < df.size(); ++c) {
    v.idf_[c] = std::log((1.0 + n) / (1.0 + static_cast<double>(df[c]))) + 1.0;
  }
  return v;
}

TfidfVectorizer TfidfVectorizer::fit(const std::vector<Document>& docs) {
  std::vector<std::vector<std::string>> tokens;
  tokens.reserve(docs.size());
  for (const auto& d : docs) tokens.push_back(d.tokens);
  return fit(tokens);
}

SparseVector TfidfVectorizer::transform(const std::vector<std::string>& tokens) const {
  std::map<std::uint32_t, double> counts;
  for (const auto& t : tokens) {
    if (auto it = index_.find(t); it != index_.end()) counts[it->second] += 1.0;
  }
  SparseVector out;
  double norm = 0;
  for (const auto& [col, tf] : counts) {
    const double w = tf * idf_[col];
    out.index.push_back(col);
    out.value.push_back(w);
    norm += w * w;
  }
  if (norm > 0) {
    norm = std::sqrt(norm);
    for (double& w : out.value) w /= norm;
  }
  return out;
}

std::int64_t TfidfVectorizer::column(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? std::int64_t{-1} : static_cast<std::int64_t>(it->second);
}

void TfidfVectorizer::reindex() {
  index_.clear();
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<std::uint32_t>(i)).second) {
      throw InvalidInput("duplicate TF-IDF column \"" + tokens_[i] + "\"");
    }
  }
}

void TfidfVectorizer::save(std::ostream& out) const {
  io::Writer w(out);
  w.u64(documents_);
  w.u64(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    w.str(tokens_[i]);
    w.f64(idf_[i]);
  }
}

TfidfVectorizer TfidfVectorizer::load(std::istream& in, const std::string& source) {
  io::Reader r(in, source);
  TfidfVectorizer v;
  v.documents_ = r.u64();
  const auto n = r.u64();
  r.check_count(n, std::uint64_t{1} << 32, "TF-IDF vocabulary size");
  for (std::uint64_t i = 0; i < n; ++i) {
    v.tokens_.push_back(r.str());
    v.idf_.push_back(r.f64());
  }
  try {
    v.reindex();
  } catch (const InvalidInput& e) {
    throw FormatError(source + ": " + e.what());
  }
  return v;
}

// ---------------------------------------------------------------------------

std::vector<double> SvmModel::scores(const SparseVector& x) const {
  std::vector<double> s(weights.size());
  for (std::size_t c = 0; c < weights.size(); ++c) s[c] = x.dot(weights[c]) + bias[c];
  return s;
}

std::vector<int> SvmModel::predict(const SparseVector& x) const {
  const auto s = scores(x);
  const auto best = static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin());
  if (task == Task::multiclass) return {best};
  std::vector<int> out;
  for (std::size_t c = 0; c < s.size(); ++c) {
    if (s[c] > 0) out.push_back(static_cast<int>(c));
  }
  if (out.empty()) out.push_back(best);
  return out;
}

void pegasos_step(std::vector<double>& w, double& b, const SparseVector& x, double y,
                  double lambda, std::uint64_t t) {
  const double eta = 1.0 / (lambda * static_cast<double>(t));
  const double margin = y * (x.dot(w) + b);
  const double shrink = 1.0 - eta * lambda;
  for (double& v : w) v *= shrink;
  b *= shrink;
  if (margin < 1.0) {
    for (std::size_t i = 0; i < x.index.size(); ++i) w[x.index[i]] += eta * y * x.value[i];
    b += eta * y;
  }
  double norm2 = b * b;
  for (double v : w) norm2 += v * v;
  const double radius = 1.0 / std::sqrt(lambda);
  if (norm2 > radius * radius) {
    const double s = radius / std::sqrt(norm2);
    for (double& v : w) v *= s;
    b *= s;
  }
}

double svm_objective(const std::vector<double>& w, double b, const std::vector<SparseVector>& xs,
                     const std::vector<double>& ys, double lambda) {
  double norm2 = b * b;
  for (double v : w) norm2 += v * v;
  double hinge = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    hinge += std::max(0.0, 1.0 - ys[i] * (xs[i].dot(w) + b));
  }
  return 0.5 * lambda * norm2 + (xs.empty() ? 0.0 : hinge / static_cast<double>(xs.size()));
}

SvmModel train_svm(const std::vector<SparseVector>& xs, const std::vector<std::vector<int>>& labels,
                   std::size_t k, std::size_t dim, const SvmConfig& config, SvmTrainStats* stats) {
  if (xs.size() != labels.size()) throw InvalidInput("feature and label counts differ");
  if (xs.empty()) throw InvalidInput("SVM training set is empty");
  if (!(config.lambda > 0)) throw InvalidInput("lambda must be > 0");
  if (config.epochs < 1) throw InvalidInput("SVM epochs must be >= 1");
  if (config.task == Task::multiclass && k < 2) throw InvalidInput("multiclass SVM needs k >= 2");
  if (k < 1) throw InvalidInput("SVM needs k >= 1");
  for (const auto& x : xs) {
    if (!x.index.empty() && x.index.back() >= dim) throw InvalidInput("feature index out of range");
  }
  std::vector<char> present(k, 0);
  for (const auto& ls : labels) {
    if (ls.empty()) throw InvalidInput("training example without a label");
    for (int l : ls) {
      if (l < 0 || static_cast<std::size_t>(l) >= k) throw InvalidInput("label id out of range");
      present[static_cast<std::size_t>(l)] = 1;
    }
  }
  if (config.task == Task::multiclass &&
      std::count(present.begin(), present.end(), 1) < 2) {
    throw InvalidInput("multiclass SVM training data contains a single class");
  }

  SvmModel model;
  model.task = config.task;
  model.lambda = config.lambda;
  model.epochs = config.epochs;
  model.weights.assign(k, std::vector<double>(dim, 0.0));
  model.bias.assign(k, 0.0);
  if (stats) stats->objective.assign(static_cast<std::size_t>(config.epochs), 0.0);

  const std::size_t n = xs.size();
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<double> ys(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& ls = labels[i];
      ys[i] = std::find(ls.begin(), ls.end(), static_cast<int>(c)) != ls.end() ? 1.0 : -1.0;
    }
    Rng rng(mix_seed(config.seed, 30 + c));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> w(dim, 0.0), sum_w(dim, 0.0), avg_w(dim);
    double b = 0, sum_b = 0, avg_b = 0;
    std::uint64_t t = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
      shuffle(order, rng);
      for (std::size_t i : order) {
        pegasos_step(w, b, xs[i], ys[i], config.lambda, ++t);
        for (std::size_t j = 0; j < dim; ++j) sum_w[j] += w[j];
        sum_b += b;
      }
      // running average over every iterate so far
      for (std::size_t j = 0; j < dim; ++j) avg_w[j] = sum_w[j] / static_cast<double>(t);
      avg_b = sum_b / static_cast<double>(t);
      if (stats) {
        stats->objective[static_cast<std::size_t>(epoch)] +=
            svm_objective(avg_w, avg_b, xs, ys, config.lambda);
      }
    }
    model.weights[c] = avg_w;
    model.bias[c] = avg_b;
  }
  return model;
}

// ---------------------------------------------------------------------------

std::vector<int> BaselineModel::predict(const Document& doc) const {
  return svm.predict(vectorizer.transform(doc.tokens));
}

MetricsReport BaselineModel::evaluate(const std::vector<Document>& docs) const {
  if (svm.task == Task::multiclass) {
    std::vector<int> truth, pred;
    for (const auto& d : docs) {
      truth.push_back(d.labels.at(0));
      pred.push_back(predict(d).at(0));
    }
    return evaluate_multiclass(truth, pred, svm.classes());
  }
  std::vector<std::vector<int>> truth, pred;
  for (const auto& d : docs) {
    truth.push_back(d.labels);
    pred.push_back(predict(d));
  }
  return evaluate_multilabel(truth, pred, svm.classes());
}

BaselineModel train_baseline(const Dataset& train, const SvmConfig& config, SvmTrainStats* stats) {
  BaselineModel model;
  model.vectorizer = TfidfVectorizer::fit(train.docs);
  std::vector<SparseVector> xs;
  std::vector<std::vector<int>> ys;
  for (const auto& d : train.docs) {
    xs.push_back(model.vectorizer.transform(d.tokens));
    ys.push_back(d.labels);
  }
  model.svm = train_svm(xs, ys, train.labels.size(), model.vectorizer.dim(), config, stats);
  model.labels = train.labels.names();
  return model;
}

void BaselineModel::save(std::ostream& out) const {
  io::Writer w(out);
  w.magic(kMagic);
  w.u32(kVersion);
  vectorizer.save(out);
  w.u8(static_cast<std::uint8_t>(svm.task));
  w.f64(svm.lambda);
  w.u32(static_cast<std::uint32_t>(svm.epochs));
  w.u64(labels.size());
  for (const auto& l : labels) w.str(l);
  for (std::size_t c = 0; c < svm.classes(); ++c) {
    w.f64(svm.bias[c]);
    w.array(std::span<const double>(svm.weights[c]));
  }
}

BaselineModel BaselineModel::load(std::istream& in, const std::string& source) {
  io::Reader r(in, source);
  r.expect_magic(kMagic);
  if (auto v = r.u32(); v != kVersion) {
    throw FormatError(source + ": unsupported baseline model version " + std::to_string(v));
  }
  BaselineModel m;
  m.vectorizer = TfidfVectorizer::load(in, source);
  auto task = r.u8();
  if (task > 1) throw FormatError(source + ": bad task tag");
  m.svm.task = static_cast<Task>(task);
  m.svm.lambda = r.f64();
  m.svm.epochs = static_cast<int>(r.u32());
  const auto k = r.u64();
  r.check_count(k, 1 << 20, "label count");
  for (std::uint64_t i = 0; i < k; ++i) m.labels.push_back(r.str());
  const std::size_t dim = m.vectorizer.dim();
  for (std::uint64_t c = 0; c < k; ++c) {
    m.svm.bias.push_back(r.f64());
    std::vector<double> w(dim);
    r.array(std::span<double>(w));
    m.svm.weights.push_back(std::move(w));
  }
  r.expect_eof();
  return m;
}

void BaselineModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  save(out);
  io::Writer(out).finish(path.string());
}

BaselineModel BaselineModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open baseline model " + path.string());
  return load(in, path.string());
}

}  // namespace khtext
