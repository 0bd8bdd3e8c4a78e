#include "khtext/embedding.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <thread>

#include "binary_io.hpp"
#include "khtext/error.hpp"

namespace khtext {

namespace {
constexpr char kMagic[5] = "KTXE";
constexpr std::uint32_t kVersion = 1;
constexpr int kNegativeRedraws = 8;
}  // namespace

const char* to_string(EmbedMode mode) { return mode == EmbedMode::cbow ? "cbow" : "skipgram"; }

EmbedMode parse_embed_mode(std::string_view name) {
  if (name == "cbow") return EmbedMode::cbow;
  if (name == "skipgram") return EmbedMode::skipgram;
  throw InvalidInput("unknown embedding mode \"" + std::string(name) + "\"");
}

void EmbeddingHyper::validate() const {
  if (dim < 1) throw InvalidInput("embedding dimension must be >= 1");
  if (window < 1) throw InvalidInput("window must be >= 1");
  if (negatives < 1) throw InvalidInput("negatives must be >= 1");
  if (epochs < 0) throw InvalidInput("epochs must be >= 0");
  if (!(lr0 > 0) || !std::isfinite(lr0)) throw InvalidInput("learning rate must be > 0");
  if (threads < 1) throw InvalidInput("threads must be >= 1");
  if (subsample && !(sample_threshold > 0)) throw InvalidInput("sample threshold must be > 0");
  subword.validate();
}

// ---------------------------------------------------------------------------
// NoiseTable

NoiseTable::NoiseTable(const Vocabulary& vocab) {
  if (vocab.empty()) throw InvalidInput("noise table needs a non-empty vocabulary");
  cumulative_.resize(vocab.size());
  double acc = 0;
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    acc += std::pow(static_cast<double>(vocab[i].count), 0.75);
    cumulative_[i] = acc;
  }
  for (double& c : cumulative_) c /= acc;
  cumulative_.back() = 1.0;
}

double NoiseTable::probability(std::size_t id) const {
  return id == 0 ? cumulative_[0] : cumulative_[id] - cumulative_[id - 1];
}

std::int32_t NoiseTable::sample(Rng& rng) const {
  const double u = rng.uniform();
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  if (it == cumulative_.end()) --it;
  return static_cast<std::int32_t>(it - cumulative_.begin());
}

// ---------------------------------------------------------------------------
// EmbeddingModel

EmbeddingModel::EmbeddingModel(Vocabulary vocab, EmbeddingHyper hyper, Matrix32 input,
                               Matrix32 output)
    : vocab_(std::move(vocab)),
      hyper_(std::move(hyper)),
      input_(std::move(input)),
      output_(std::move(output)) {
  const std::size_t m = dim();
  if (input_.rows() != vocab_.size() + hyper_.subword.buckets || input_.cols() != m) {
    throw InvalidInput("input matrix must be (vocab + buckets) x dim");
  }
  if (output_.rows() != vocab_.size() || output_.cols() != m) {
    throw InvalidInput("output matrix must be vocab x dim");
  }
  if (input_.rows() > std::numeric_limits<std::uint32_t>::max()) {
    throw InvalidInput("input matrix has too many rows");
  }
  index_subwords();
}

EmbeddingModel::EmbeddingModel(const EmbeddingModel& other)
    : vocab_(other.vocab_),
      hyper_(other.hyper_),
      input_(other.input_),
      output_(other.output_),
      subword_rows_(other.subword_rows_),
      subword_offsets_(other.subword_offsets_),
      fingerprint_(other.fingerprint_.load()) {}

EmbeddingModel& EmbeddingModel::operator=(const EmbeddingModel& other) {
  if (this != &other) {
    vocab_ = other.vocab_;
    hyper_ = other.hyper_;
    input_ = other.input_;
    output_ = other.output_;
    subword_rows_ = other.subword_rows_;
    subword_offsets_ = other.subword_offsets_;
    fingerprint_.store(other.fingerprint_.load());
  }
  return *this;
}

EmbeddingModel::EmbeddingModel(EmbeddingModel&& other) noexcept
    : vocab_(std::move(other.vocab_)),
      hyper_(std::move(other.hyper_)),
      input_(std::move(other.input_)),
      output_(std::move(other.output_)),
      subword_rows_(std::move(other.subword_rows_)),
      subword_offsets_(std::move(other.subword_offsets_)),
      fingerprint_(other.fingerprint_.load()) {}

EmbeddingModel& EmbeddingModel::operator=(EmbeddingModel&& other) noexcept {
  vocab_ = std::move(other.vocab_);
  hyper_ = std::move(other.hyper_);
  input_ = std::move(other.input_);
  output_ = std::move(other.output_);
  subword_rows_ = std::move(other.subword_rows_);
  subword_offsets_ = std::move(other.subword_offsets_);
  fingerprint_.store(other.fingerprint_.load());
  return *this;
}

EmbeddingModel EmbeddingModel::initialize(Vocabulary vocab, const EmbeddingHyper& hyper) {
  hyper.validate();
  const auto m = static_cast<std::size_t>(hyper.dim);
  Matrix32 input(vocab.size() + hyper.subword.buckets, m);
  Matrix32 output(vocab.size(), m);
  Rng rng(mix_seed(hyper.seed, 0));
  const double bound = 1.0 / static_cast<double>(m);
  for (float& v : input.data()) v = static_cast<float>(rng.uniform(-bound, bound));
  return EmbeddingModel(std::move(vocab), hyper, std::move(input), std::move(output));
}

void EmbeddingModel::index_subwords() {
  subword_rows_.clear();
  subword_offsets_.assign(1, 0);
  const auto offset = vocab_.bucket_offset();
  for (std::size_t id = 0; id < vocab_.size(); ++id) {
    subword_rows_.push_back(static_cast<std::uint32_t>(id));
    for (const auto& g : extract_ngrams(vocab_[id].token, hyper_.subword)) {
      subword_rows_.push_back(
          static_cast<std::uint32_t>(offset + hash_ngram(g, hyper_.subword.buckets)));
    }
    subword_offsets_.push_back(subword_rows_.size());
  }
}

std::span<const std::uint32_t> EmbeddingModel::word_rows(std::size_t word_id) const {
  return {subword_rows_.data() + subword_offsets_[word_id],
          subword_offsets_[word_id + 1] - subword_offsets_[word_id]};
}

std::vector<std::uint32_t> EmbeddingModel::token_rows(std::string_view token) const {
  if (token.empty()) throw InvalidInput("empty token");
  if (auto id = vocab_.id(token); id >= 0) {
    auto rows = word_rows(static_cast<std::size_t>(id));
    return {rows.begin(), rows.end()};
  }
  std::vector<std::uint32_t> rows;
  const auto offset = vocab_.bucket_offset();
  for (const auto& g : extract_ngrams(token, hyper_.subword)) {
    rows.push_back(static_cast<std::uint32_t>(offset + hash_ngram(g, hyper_.subword.buckets)));
  }
  return rows;
}

std::vector<float> EmbeddingModel::word_vector(std::string_view token, bool* no_subwords) const {
  const auto rows = token_rows(token);
  const std::size_t m = dim();
  if (no_subwords) *no_subwords = rows.empty();
  std::vector<float> out(m, 0.0f);
  if (rows.empty()) return out;
  std::vector<double> acc(m, 0.0);
  for (auto r : rows) {
    auto row = input_.row(r);
    for (std::size_t j = 0; j < m; ++j) acc[j] += row[j];
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (std::size_t j = 0; j < m; ++j) out[j] = static_cast<float>(acc[j] * inv);
  return out;
}

std::uint64_t EmbeddingModel::fingerprint() const {
  if (auto fp = fingerprint_.load(std::memory_order_relaxed); fp != 0) return fp;
  std::uint64_t h = 14695981039346656037ULL;
  auto fold = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  auto fold64 = [&](std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    fold(b, 8);
  };
  fold64(static_cast<std::uint64_t>(hyper_.dim));
  fold64(static_cast<std::uint64_t>(hyper_.subword.unit));
  fold64(static_cast<std::uint64_t>(hyper_.subword.minn));
  fold64(static_cast<std::uint64_t>(hyper_.subword.maxn));
  fold64(hyper_.subword.buckets);
  for (const auto& w : vocab_.words()) {
    fold64(w.token.size());
    fold(w.token.data(), w.token.size());
  }
  for (float v : input_.data()) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    fold64(bits);
  }
  if (h == 0) h = 1;
  fingerprint_.store(h, std::memory_order_relaxed);
  return h;
}

// ---------------------------------------------------------------------------
// Persistence

void EmbeddingModel::save(std::ostream& out) const {
  io::Writer w(out);
  w.magic(kMagic);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(hyper_.dim));
  w.u32(static_cast<std::uint32_t>(hyper_.window));
  w.u32(static_cast<std::uint32_t>(hyper_.negatives));
  w.u32(static_cast<std::uint32_t>(hyper_.epochs));
  w.f64(hyper_.lr0);
  w.u8(static_cast<std::uint8_t>(hyper_.mode));
  w.u32(static_cast<std::uint32_t>(hyper_.subword.minn));
  w.u32(static_cast<std::uint32_t>(hyper_.subword.maxn));
  w.u64(hyper_.subword.buckets);
  w.u8(static_cast<std::uint8_t>(hyper_.subword.unit));
  w.u64(hyper_.min_count);
  w.u64(hyper_.seed);
  w.u32(static_cast<std::uint32_t>(hyper_.threads));
  w.u8(hyper_.subsample ? 1 : 0);
  w.f64(hyper_.sample_threshold);

  w.u64(vocab_.size());
  for (const auto& e : vocab_.words()) {
    w.str(e.token);
    w.u64(e.count);
  }
  for (const Matrix32* m : {&input_, &output_}) {
    w.u64(m->rows());
    w.u64(m->cols());
    w.array(std::span<const float>(m->data()));
  }
}

void EmbeddingModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  save(out);
  io::Writer(out).finish(path.string());
}

EmbeddingModel EmbeddingModel::load(std::istream& in, const std::string& source) {
  io::Reader r(in, source);
  r.expect_magic(kMagic);
  if (auto v = r.u32(); v != kVersion) {
    throw FormatError(source + ": unsupported embedding model version " + std::to_string(v));
  }
  EmbeddingHyper h;
  h.dim = static_cast<int>(r.u32());
  h.window = static_cast<int>(r.u32());
  h.negatives = static_cast<int>(r.u32());
  h.epochs = static_cast<int>(r.u32());
  h.lr0 = r.f64();
  auto mode = r.u8();
  if (mode > 1) throw FormatError(source + ": bad embedding mode tag");
  h.mode = static_cast<EmbedMode>(mode);
  h.subword.minn = static_cast<int>(r.u32());
  h.subword.maxn = static_cast<int>(r.u32());
  h.subword.buckets = r.u64();
  auto unit = r.u8();
  if (unit > 1) throw FormatError(source + ": bad subword unit tag");
  h.subword.unit = static_cast<SubwordUnit>(unit);
  h.min_count = r.u64();
  h.seed = r.u64();
  h.threads = static_cast<int>(r.u32());
  h.subsample = r.u8() != 0;
  h.sample_threshold = r.f64();
  try {
    h.validate();
  } catch (const InvalidInput& e) {
    throw FormatError(source + ": bad hyperparameters (" + e.what() + ")");
  }

  const auto n = r.u64();
  r.check_count(n, std::uint64_t{1} << 32, "vocabulary size");
  std::vector<Vocabulary::Entry> words;
  words.reserve(static_cast<std::size_t>(n));
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string tok = r.str();
    std::uint64_t count = r.u64();
    words.push_back({std::move(tok), count});
  }

  auto read_matrix = [&](std::uint64_t rows_expected, const char* name) {
    const auto rows = r.u64();
    const auto cols = r.u64();
    if (rows != rows_expected || cols != static_cast<std::uint64_t>(h.dim)) {
      throw FormatError(source + ": " + name + " matrix has wrong shape");
    }
    r.check_count(rows * cols, std::uint64_t{1} << 36, "matrix size");
    Matrix32 m(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols));
    r.array(std::span<float>(m.data()));
    for (float v : m.data()) {
      if (!std::isfinite(v)) throw FormatError(source + ": non-finite entry in " + name);
    }
    return m;
  };
  Matrix32 input = read_matrix(n + h.subword.buckets, "input");
  Matrix32 output = read_matrix(n, "output");
  r.expect_eof();
  try {
    return EmbeddingModel(Vocabulary(std::move(words), h.min_count), h, std::move(input),
                          std::move(output));
  } catch (const InvalidInput& e) {
    throw FormatError(source + ": " + e.what());
  }
}

EmbeddingModel EmbeddingModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open embedding model " + path.string());
  return load(in, path.string());
}

void EmbeddingModel::write_text_vectors(std::ostream& out) const {
  out << vocab_.size() << ' ' << dim() << '\n';
  char buf[32];
  for (std::size_t id = 0; id < vocab_.size(); ++id) {
    out << vocab_[id].token;
    for (float v : word_vector(vocab_[id].token)) {
      auto res = std::to_chars(buf, buf + sizeof buf, v);
      out << ' ' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Training

double sgd_step(EmbeddingModel& model, std::span<const std::span<const std::uint32_t>> sources,
                std::int32_t target, std::span<const std::int32_t> negatives, float lr,
                SgdScratch& scratch) {
  const std::size_t m = model.dim();
  auto& hidden = scratch.hidden;
  auto& grad = scratch.grad;
  hidden.assign(m, 0.0f);
  grad.assign(m, 0.0f);

  const float inv_sources = 1.0f / static_cast<float>(sources.size());
  for (auto rows : sources) {
    const float w = inv_sources / static_cast<float>(rows.size());
    for (auto r : rows) {
      auto row = model.input_.row(r);
      for (std::size_t j = 0; j < m; ++j) hidden[j] += w * row[j];
    }
  }

  double loss = 0;
  auto update = [&](std::int32_t id, float label) {
    auto u = model.output_.row(static_cast<std::size_t>(id));
    float score = 0;
    for (std::size_t j = 0; j < m; ++j) score += u[j] * hidden[j];
    const double x = label > 0 ? score : -score;
    loss += x > 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
    const float sig = 1.0f / (1.0f + std::exp(-score));
    const float g = lr * (label - sig);
    for (std::size_t j = 0; j < m; ++j) {
      grad[j] += g * u[j];
      u[j] += g * hidden[j];
    }
  };
  update(target, 1.0f);
  for (auto n : negatives) update(n, 0.0f);

  // Every contributing row takes the full hidden step, so h itself moves by
  // -lr dL/dh. The exact per-row gradient would shrink that by the row count
  // and leave n-gram rows nearly untrained at the usual learning rates.
  for (auto rows : sources) {
    for (auto r : rows) {
      auto row = model.input_.row(r);
      for (std::size_t j = 0; j < m; ++j) row[j] += grad[j];
    }
  }
  return loss;
}

namespace {

struct WorkerTally {
  double loss = 0;
  std::uint64_t predictions = 0;
};

class Trainer {
 public:
  Trainer(EmbeddingModel& model, const std::vector<std::vector<std::int32_t>>& sentences)
      : model_(model),
        hyper_(model.hyper()),
        sentences_(sentences),
        noise_(model.vocab()),
        total_visits_(static_cast<std::uint64_t>(hyper_.epochs) * model.vocab().total_tokens()) {
    if (hyper_.subsample) {
      const auto& vocab = model.vocab();
      const double total = static_cast<double>(vocab.total_tokens());
      keep_prob_.resize(vocab.size());
      for (std::size_t i = 0; i < vocab.size(); ++i) {
        const double f = static_cast<double>(vocab[i].count) / total;
        const double ratio = hyper_.sample_threshold / f;
        keep_prob_[i] = std::min(1.0, std::sqrt(ratio) + ratio);
      }
    }
  }

  WorkerTally run_slice(int epoch, int worker, std::size_t begin, std::size_t end) {
    Rng rng(mix_seed(hyper_.seed, 1 + static_cast<std::uint64_t>(epoch) * 4096 +
                                      static_cast<std::uint64_t>(worker)));
    SgdScratch scratch;
    WorkerTally tally;
    std::vector<std::int32_t> kept;
    std::vector<std::int32_t> negatives;
    std::vector<std::span<const std::uint32_t>> sources;

    for (std::size_t s = begin; s < end; ++s) {
      const auto& sentence = sentences_[s];
      kept.clear();
      for (auto id : sentence) {
        if (keep_prob_.empty() || rng.bernoulli(keep_prob_[static_cast<std::size_t>(id)])) {
          kept.push_back(id);
        }
      }
      const std::uint64_t done =
          visits_.fetch_add(sentence.size(), std::memory_order_relaxed);
      const double progress =
          static_cast<double>(done) / static_cast<double>(std::max<std::uint64_t>(total_visits_, 1));
      const auto lr = static_cast<float>(hyper_.lr0 * std::max(0.0, 1.0 - progress));

      const auto n = static_cast<std::ptrdiff_t>(kept.size());
      for (std::ptrdiff_t t = 0; t < n; ++t) {
        const auto radius = static_cast<std::ptrdiff_t>(
            1 + rng.below(static_cast<std::uint64_t>(hyper_.window)));
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, t - radius);
        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n - 1, t + radius);
        if (hyper_.mode == EmbedMode::cbow) {
          sources.clear();
          for (std::ptrdiff_t c = lo; c <= hi; ++c) {
            if (c != t) sources.push_back(model_.word_rows(static_cast<std::size_t>(kept[c])));
          }
          if (sources.empty()) continue;
          draw_negatives(kept[t], rng, negatives);
          tally.loss += sgd_step(model_, sources, kept[t], negatives, lr, scratch);
          ++tally.predictions;
        } else {
          const auto center = model_.word_rows(static_cast<std::size_t>(kept[t]));
          for (std::ptrdiff_t c = lo; c <= hi; ++c) {
            if (c == t) continue;
            std::span<const std::uint32_t> src[1] = {center};
            draw_negatives(kept[c], rng, negatives);
            tally.loss += sgd_step(model_, src, kept[c], negatives, lr, scratch);
            ++tally.predictions;
          }
        }
      }
    }
    return tally;
  }

 private:
  void draw_negatives(std::int32_t target, Rng& rng, std::vector<std::int32_t>& out) const {
    out.clear();
    for (int i = 0; i < hyper_.negatives; ++i) {
      for (int attempt = 0; attempt < kNegativeRedraws; ++attempt) {
        auto n = noise_.sample(rng);
        if (n != target) {
          out.push_back(n);
          break;
        }
      }
    }
  }

  EmbeddingModel& model_;
  const EmbeddingHyper& hyper_;
  const std::vector<std::vector<std::int32_t>>& sentences_;
  NoiseTable noise_;
  std::vector<double> keep_prob_;
  std::uint64_t total_visits_;
  std::atomic<std::uint64_t> visits_{0};
};

}  // namespace

EmbeddingModel train_embeddings(const Corpus& corpus, const EmbeddingHyper& hyper,
                                EmbeddingTrainStats* stats) {
  hyper.validate();
  Vocabulary vocab = build_vocab(corpus, hyper.min_count);
  if (vocab.empty()) {
    throw InvalidInput("no token occurs at least min_count=" + std::to_string(hyper.min_count) +
                       " times");
  }

  std::vector<std::vector<std::int32_t>> sentences;
  for (const auto& line : corpus) {
    std::vector<std::int32_t> ids;
    for (const auto& tok : line) {
      if (auto id = vocab.id(tok); id >= 0) ids.push_back(static_cast<std::int32_t>(id));
    }
    if (!ids.empty()) sentences.push_back(std::move(ids));
  }

  EmbeddingModel model = EmbeddingModel::initialize(std::move(vocab), hyper);
  if (stats) *stats = {};
  if (hyper.epochs == 0) return model;

  Trainer trainer(model, sentences);
  const auto workers = static_cast<std::size_t>(hyper.threads);
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::vector<WorkerTally> tallies(workers);
    if (workers == 1) {
      tallies[0] = trainer.run_slice(epoch, 0, 0, sentences.size());
    } else {
      std::vector<std::thread> pool;
      for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = sentences.size() * w / workers;
        const std::size_t end = sentences.size() * (w + 1) / workers;
        pool.emplace_back([&, w, begin, end] {
          tallies[w] = trainer.run_slice(epoch, static_cast<int>(w), begin, end);
        });
      }
      for (auto& t : pool) t.join();
    }
    WorkerTally sum;
    for (const auto& t : tallies) {
      sum.loss += t.loss;
      sum.predictions += t.predictions;
    }
    if (stats) {
      stats->epoch_loss.push_back(sum.predictions ? sum.loss / static_cast<double>(sum.predictions)
                                                  : 0.0);
      stats->predictions += sum.predictions;
    }
  }
  model.mutable_input();  // drop any cached fingerprint
  return model;
}

// ---------------------------------------------------------------------------
// Queries

std::vector<Neighbor> nearest_neighbors(const EmbeddingModel& model, std::string_view token,
                                        std::size_t topk) {
  if (topk < 1) throw InvalidInput("topk must be >= 1");
  const auto query = model.word_vector(token);
  double qnorm = 0;
  for (float v : query) qnorm += static_cast<double>(v) * v;
  qnorm = std::sqrt(qnorm);
  if (qnorm == 0) {
    throw InvalidInput("query \"" + std::string(token) + "\" has a zero vector");
  }

  const auto& vocab = model.vocab();
  const auto self = vocab.id(token);
  struct Scored {
    std::size_t id;
    double cosine;
  };
  std::vector<Scored> scored;
  scored.reserve(vocab.size());
  for (std::size_t id = 0; id < vocab.size(); ++id) {
    if (static_cast<std::int64_t>(id) == self) continue;
    const auto v = model.word_vector(vocab[id].token);
    double dot = 0, norm = 0;
    for (std::size_t j = 0; j < v.size(); ++j) {
      dot += static_cast<double>(v[j]) * query[j];
      norm += static_cast<double>(v[j]) * v[j];
    }
    const double cos = norm > 0 ? dot / (qnorm * std::sqrt(norm)) : 0.0;
    scored.push_back({id, cos});
  }
  const std::size_t keep = std::min(topk, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep),
                    scored.end(), [](const Scored& a, const Scored& b) {
                      return a.cosine != b.cosine ? a.cosine > b.cosine : a.id < b.id;
                    });
  std::vector<Neighbor> out;
  for (std::size_t i = 0; i < keep; ++i) out.push_back({vocab[scored[i].id].token, scored[i].cosine});
  return out;
}

void symmetric_eigen(std::vector<double> a, std::size_t n, std::vector<double>& values,
                     std::vector<double>& vectors) {
  if (a.size() != n * n) throw InvalidInput("symmetric_eigen: matrix is not n x n");
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  auto at = [&](std::size_t r, std::size_t c) -> double& { return a[r * n + c]; };

  double scale = 0;
  for (double x : a) scale += x * x;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += at(p, q) * at(p, q);
    if (off <= 1e-30 * scale || off == 0) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = at(p, q);
        if (apq == 0) continue;
        const double theta = (at(q, q) - at(p, p)) / (2 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1 / std::sqrt(t * t + 1);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = at(k, p), akq = at(k, q);
          at(k, p) = c * akp - s * akq;
          at(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = at(p, k), aqk = at(q, k);
          at(p, k) = c * apk - s * aqk;
          at(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k * n + p], vkq = v[k * n + q];
          v[k * n + p] = c * vkp - s * vkq;
          v[k * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return at(i, i) > at(j, j); });
  values.resize(n);
  vectors.assign(n * n, 0.0);
  for (std::size_t c = 0; c < n; ++c) {
    values[c] = at(order[c], order[c]);
    for (std::size_t r = 0; r < n; ++r) vectors[r * n + c] = v[r * n + order[c]];
  }
}

Pca2d pca_2d(const std::vector<std::vector<double>>& rows) {
  if (rows.size() < 3) throw InvalidInput("PCA needs at least 3 points");
  const std::size_t n = rows.size();
  const std::size_t d = rows[0].size();
  if (d < 2) throw InvalidInput("PCA needs at least 2 dimensions");
  for (const auto& r : rows) {
    if (r.size() != d) throw InvalidInput("PCA rows differ in length");
  }

  std::vector<double> mean(d, 0.0);
  for (const auto& r : rows)
    for (std::size_t j = 0; j < d; ++j) mean[j] += r[j];
  for (double& x : mean) x /= static_cast<double>(n);
  std::vector<std::vector<double>> centered(rows);
  for (auto& r : centered)
    for (std::size_t j = 0; j < d; ++j) r[j] -= mean[j];

  std::vector<double> cov(d * d, 0.0);
  for (const auto& r : centered)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i; j < d; ++j) cov[i * d + j] += r[i] * r[j];
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      cov[i * d + j] /= static_cast<double>(n - 1);
      cov[j * d + i] = cov[i * d + j];
    }
  }

  std::vector<double> values, vectors;
  symmetric_eigen(std::move(cov), d, values, vectors);

  Pca2d out;
  for (std::size_t c = 0; c < 2; ++c) {
    auto& comp = out.components[c];
    comp.resize(d);
    std::size_t arg = 0;
    for (std::size_t r = 0; r < d; ++r) {
      comp[r] = vectors[r * d + c];
      if (std::abs(comp[r]) > std::abs(comp[arg])) arg = r;
    }
    if (comp[arg] < 0) {
      for (double& x : comp) x = -x;
    }
    out.variances[c] = values[c];
  }
  for (const auto& r : centered) {
    std::array<double, 2> p{0, 0};
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t j = 0; j < d; ++j) p[c] += r[j] * out.components[c][j];
    out.coords.push_back(p);
  }
  return out;
}

std::vector<PcaPoint> pca_project(const EmbeddingModel& model,
                                  const std::vector<std::string>& tokens) {
  if (tokens.size() < 3) throw InvalidInput("PCA projection needs at least 3 tokens");
  std::vector<std::vector<double>> rows;
  for (const auto& t : tokens) {
    auto v = model.word_vector(t);
    rows.emplace_back(v.begin(), v.end());
  }
  auto pca = pca_2d(rows);
  std::vector<PcaPoint> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    out.push_back({tokens[i], pca.coords[i][0], pca.coords[i][1]});
  }
  return out;
}

}  // namespace khtext
