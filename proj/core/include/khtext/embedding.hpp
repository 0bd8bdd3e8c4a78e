#pragma once

// Subword embeddings trained with CBOW or skipgram and negative sampling.

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "khtext/rng.hpp"
#include "khtext/textproc.hpp"

namespace khtext {

enum class EmbedMode : std::uint8_t { cbow = 0, skipgram = 1 };

const char* to_string(EmbedMode mode);
EmbedMode parse_embed_mode(std::string_view name);

struct EmbeddingHyper {
  int dim = 100;
  int window = 5;
  int negatives = 5;
  int epochs = 5;
  double lr0 = 0.05;
  EmbedMode mode = EmbedMode::cbow;
  SubwordConfig subword = SubwordConfig::defaults(SubwordUnit::kcc);
  std::uint64_t min_count = 5;
  std::uint64_t seed = 1;
  int threads = 1;
  // Frequent-word subsampling; off unless asked for.
  bool subsample = false;
  double sample_threshold = 1e-4;

  void validate() const;
};

/// Dense row-major float matrix.
class Matrix32 {
 public:
  Matrix32() = default;
  Matrix32(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::span<float> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const float> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::vector<float>& data() { return data_; }
  const std::vector<float>& data() const { return data_; }

  friend bool operator==(const Matrix32&, const Matrix32&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

/// Noise distribution for negative sampling, proportional to count^0.75.
class NoiseTable {
 public:
  explicit NoiseTable(const Vocabulary& vocab);

  std::size_t size() const { return cumulative_.size(); }
  double probability(std::size_t id) const;
  std::int32_t sample(Rng& rng) const;

 private:
  std::vector<double> cumulative_;
};

struct SgdScratch;

class EmbeddingModel {
 public:
  EmbeddingModel() = default;
  EmbeddingModel(Vocabulary vocab, EmbeddingHyper hyper, Matrix32 input, Matrix32 output);

  EmbeddingModel(const EmbeddingModel& other);
  EmbeddingModel& operator=(const EmbeddingModel& other);
  EmbeddingModel(EmbeddingModel&& other) noexcept;
  EmbeddingModel& operator=(EmbeddingModel&& other) noexcept;

  /// Freshly initialized model: input uniform in [-1/m, 1/m], output zero.
  static EmbeddingModel initialize(Vocabulary vocab, const EmbeddingHyper& hyper);

  const Vocabulary& vocab() const { return vocab_; }
  const EmbeddingHyper& hyper() const { return hyper_; }
  std::size_t dim() const { return static_cast<std::size_t>(hyper_.dim); }

  const Matrix32& input() const { return input_; }
  const Matrix32& output() const { return output_; }
  // Mutable access drops the cached fingerprint.
  Matrix32& mutable_input() {
    fingerprint_.store(0);
    return input_;
  }
  Matrix32& mutable_output() { return output_; }

  /// Input rows representing an in-vocabulary word: its own row followed by
  /// one row per n-gram occurrence.
  std::span<const std::uint32_t> word_rows(std::size_t word_id) const;

  /// Input rows for any token; OOV tokens get only their n-gram rows.
  std::vector<std::uint32_t> token_rows(std::string_view token) const;

  /// Mean of the token's input rows. An OOV token without n-grams yields the
  /// zero vector and sets *no_subwords.
  std::vector<float> word_vector(std::string_view token, bool* no_subwords = nullptr) const;

  /// FNV-1a 64 over everything word_vector depends on; identifies the model
  /// for downstream classifiers.
  std::uint64_t fingerprint() const;

  void save(const std::filesystem::path& path) const;
  void save(std::ostream& out) const;
  static EmbeddingModel load(const std::filesystem::path& path);
  static EmbeddingModel load(std::istream& in, const std::string& source = "<stream>");

  /// "<vocab_size> <m>" header, then one line per token with m reals.
  void write_text_vectors(std::ostream& out) const;

 private:
  void index_subwords();

  friend double sgd_step(EmbeddingModel&, std::span<const std::span<const std::uint32_t>>,
                         std::int32_t, std::span<const std::int32_t>, float, SgdScratch&);

  Vocabulary vocab_;
  EmbeddingHyper hyper_;
  Matrix32 input_;
  Matrix32 output_;
  std::vector<std::uint32_t> subword_rows_;
  std::vector<std::size_t> subword_offsets_;
  mutable std::atomic<std::uint64_t> fingerprint_{0};
};

struct EmbeddingTrainStats {
  /// Mean negative-sampling loss per prediction, one entry per epoch.
  std::vector<double> epoch_loss;
  std::uint64_t predictions = 0;
};

/// Trains on pre-segmented sentences. Throws if nothing survives min_count.
EmbeddingModel train_embeddings(const Corpus& corpus, const EmbeddingHyper& hyper,
                                EmbeddingTrainStats* stats = nullptr);

/// Reusable buffers for sgd_step.
struct SgdScratch {
  std::vector<float> hidden;
  std::vector<float> grad;
};

/// One SGD update of the negative-sampling loss
///   -log s(u_target . h) - sum_i log s(-u_neg_i . h)
/// where h is the mean over `sources` of each source's mean input row.
/// Output rows are updated in place (each with the pre-update hidden vector
/// and its own pre-update value); then every contributing input row is moved
/// by the full hidden step -lr dL/dh, as the reference fastText trainer does.
/// Returns the loss before the update.
double sgd_step(EmbeddingModel& model, std::span<const std::span<const std::uint32_t>> sources,
                std::int32_t target, std::span<const std::int32_t> negatives, float lr,
                SgdScratch& scratch);

/// Negative-sampling loss for one target at arbitrary precision, with
/// analytic gradients. outputs[0] is the target's output vector, the rest
/// are negatives. Gradients are written when the pointers are non-null.
template <typename T>
T negative_sampling_loss(std::span<const T> hidden, const std::vector<std::vector<T>>& outputs,
                         std::vector<T>* grad_hidden = nullptr,
                         std::vector<std::vector<T>>* grad_outputs = nullptr) {
  const std::size_t m = hidden.size();
  if (grad_hidden) grad_hidden->assign(m, T(0));
  if (grad_outputs) grad_outputs->assign(outputs.size(), std::vector<T>(m, T(0)));
  T loss = 0;
  for (std::size_t k = 0; k < outputs.size(); ++k) {
    const T label = k == 0 ? T(1) : T(0);
    T score = 0;
    for (std::size_t j = 0; j < m; ++j) score += outputs[k][j] * hidden[j];
    // -log s(x) = log(1 + e^-x), evaluated without overflow
    const T x = k == 0 ? score : -score;
    loss += x > 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
    const T sig = T(1) / (T(1) + std::exp(-score));
    const T coeff = sig - label;  // d loss / d score
    for (std::size_t j = 0; j < m; ++j) {
      if (grad_hidden) (*grad_hidden)[j] += coeff * outputs[k][j];
      if (grad_outputs) (*grad_outputs)[k][j] += coeff * hidden[j];
    }
  }
  return loss;
}

struct Neighbor {
  std::string token;
  double cosine = 0;
};

/// In-vocabulary words ranked by cosine similarity to word_vector(token),
/// excluding the query itself; ties go to the lower word id.
std::vector<Neighbor> nearest_neighbors(const EmbeddingModel& model, std::string_view token,
                                        std::size_t topk);

struct PcaPoint {
  std::string token;
  double x = 0;
  double y = 0;
};

struct Pca2d {
  /// n x 2 projected coordinates.
  std::vector<std::array<double, 2>> coords;
  /// Top two unit eigenvectors of the sample covariance.
  std::array<std::vector<double>, 2> components;
  std::array<double, 2> variances{};
};

/// Projects rows onto the top-2 principal axes. Each axis is signed so that
/// its largest-magnitude loading is positive. Needs >= 3 rows.
Pca2d pca_2d(const std::vector<std::vector<double>>& rows);

/// Symmetric eigendecomposition (cyclic Jacobi). Eigenvalues descending,
/// eigenvectors as the columns of `vectors` (row-major n x n).
void symmetric_eigen(std::vector<double> matrix, std::size_t n, std::vector<double>& values,
                     std::vector<double>& vectors);

std::vector<PcaPoint> pca_project(const EmbeddingModel& model,
                                  const std::vector<std::string>& tokens);

}  // namespace khtext
