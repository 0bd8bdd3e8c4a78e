#pragma once

// Document classifiers over frozen word vectors: mean-pooled linear model,
// bidirectional LSTM, and convolution with max-pool over time.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "khtext/embedding.hpp"
#include "khtext/evalkit.hpp"
#include "khtext/nn.hpp"
#include "khtext/textproc.hpp"

namespace khtext {

enum class Optimizer : std::uint8_t { adam = 0, sgd = 1 };

const char* to_string(Optimizer opt);
Optimizer parse_optimizer(std::string_view name);

struct ClassifierConfig {
  nn::Arch arch = nn::Arch::linear;
  Task task = Task::multiclass;
  std::size_t k = 2;
  std::size_t m = 100;
  std::size_t linear_hidden = 200;
  std::size_t rnn_hidden = 100;
  nn::ConvSpec conv;
  double dropout = 0.5;

  Optimizer optimizer = Optimizer::adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  int epochs = 10;
  std::size_t batch = 32;
  std::uint64_t seed = 1;
  std::size_t max_len = 256;
  /// Also update the embedding input rows during training. Off by default;
  /// parameter counts never include the embedding table.
  bool fine_tune = false;

  nn::ArchConfig arch_config() const;
  void validate() const;
};

/// A document as a matrix of word vectors. `rows` may carry zero padding
/// beyond `length`, the number of real (possibly truncated) tokens.
struct DocMatrix {
  nn::Tensor rows;
  std::size_t length = 0;
};

/// Rows are word vectors of the first max_len tokens, zero-padded up to the
/// largest convolution window for cnn (and to at least one row otherwise).
DocMatrix vectorize(const Document& doc, const EmbeddingModel& embedding,
                    const ClassifierConfig& config);

/// Appends zero rows; used for batch alignment and padding-invariance checks.
DocMatrix pad_rows(const DocMatrix& doc, std::size_t rows);

/// All trainable tensors of one architecture. Unused members stay empty.
struct ClassifierParams {
  nn::Tensor hidden_w, hidden_b;  // linear
  nn::LstmParams lstm;            // birnn
  nn::ConvParams conv;            // cnn
  nn::Tensor out_w, out_b;

  /// Zero tensors shaped for `config`.
  static ClassifierParams allocate(const ClassifierConfig& config);
  /// Random initialization: uniform Glorot for affine and conv weights,
  /// +-1/sqrt(h) for LSTM weights, zero biases except forget-gate bias 1.
  static ClassifierParams initialize(const ClassifierConfig& config, Rng& rng);

  std::vector<nn::Tensor*> tensors();
  std::vector<const nn::Tensor*> tensors() const;
  /// Runtime enumeration of allocated trainable entries.
  std::size_t count() const;
  void zero();

  friend bool operator==(const ClassifierParams& a, const ClassifierParams& b);
};

struct ForwardCache {
  nn::Vec features;      // pooled mean, LSTM encoding or conv features
  nn::Vec hidden_pre;    // linear only
  nn::Vec hidden_act;    // linear only
  nn::Vec dropout_mask;  // over the layer feeding the output affine
  nn::Vec dropped;
  nn::BiLstmCache lstm;
  nn::ConvCache conv;
};

/// Raw scores (logits). Dropout is applied only when `training` (and then
/// needs `rng`).
nn::Vec forward(const ClassifierConfig& config, const ClassifierParams& params,
                const DocMatrix& doc, bool training = false, Rng* rng = nullptr,
                ForwardCache* cache = nullptr);

/// Backpropagates dlogits; accumulates into `grads` and, when given, into
/// the first doc.length rows of *dinput.
void backward(const ClassifierConfig& config, const ClassifierParams& params,
              const DocMatrix& doc, const ForwardCache& cache, std::span<const double> dlogits,
              ClassifierParams& grads, nn::Tensor* dinput = nullptr);

/// Loss for one document: cross-entropy on its single label or binary
/// cross-entropy on the k-hot label vector.
nn::LossGrad document_loss(const ClassifierConfig& config, std::span<const double> logits,
                           const std::vector<int>& labels);

struct Prediction {
  std::vector<int> labels;          // ascending
  std::vector<double> probabilities;  // softmax or per-label sigmoid
};

/// Multiclass: argmax (lowest id on ties). Multilabel: every label with
/// sigmoid >= 0.5, or the single best label when none qualifies.
Prediction decide(Task task, std::span<const double> scores);

class ClassifierModel {
 public:
  ClassifierModel() = default;
  ClassifierModel(ClassifierConfig config, ClassifierParams params, std::vector<std::string> labels,
                  std::uint64_t embedding_fingerprint);

  const ClassifierConfig& config() const { return config_; }
  const ClassifierParams& params() const { return params_; }
  ClassifierParams& mutable_params() { return params_; }
  const std::vector<std::string>& labels() const { return labels_; }
  std::uint64_t embedding_fingerprint() const { return embedding_fingerprint_; }

  /// Where the embedding lived at training time; a hint for the CLI.
  const std::string& embedding_path() const { return embedding_path_; }
  void set_embedding_path(std::string path) { embedding_path_ = std::move(path); }

  nn::Vec scores(const DocMatrix& doc) const { return forward(config_, params_, doc); }

  void save(const std::filesystem::path& path) const;
  void save(std::ostream& out) const;
  static ClassifierModel load(const std::filesystem::path& path);
  static ClassifierModel load(std::istream& in, const std::string& source = "<stream>");

 private:
  ClassifierConfig config_;
  ClassifierParams params_;
  std::vector<std::string> labels_;
  std::uint64_t embedding_fingerprint_ = 0;
  std::string embedding_path_;
};

/// Throws when the embedding is not the one the model was trained against.
Prediction predict(const ClassifierModel& model, const Document& doc,
                   const EmbeddingModel& embedding);

std::vector<Prediction> predict_all(const ClassifierModel& model, const std::vector<Document>& docs,
                                    const EmbeddingModel& embedding);

/// Scores predictions against the documents' labels.
MetricsReport evaluate(const ClassifierModel& model, const std::vector<Document>& docs,
                       const EmbeddingModel& embedding);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  double valid_macro_f1 = 0;
  double valid_micro_f1 = 0;
  bool has_validation = false;
};

struct ClassifierTrainResult {
  ClassifierModel model;
  std::vector<EpochRecord> history;
  int best_epoch = 0;  // 0 when no epoch ran
  /// Set only with fine_tune: the embedding the model must be used with.
  std::optional<EmbeddingModel> tuned_embedding;
};

/// Mini-batch training. With a validation set the epoch with the best
/// validation macro-F1 is kept, otherwise the last one.
ClassifierTrainResult train_classifier(const Dataset& train, const std::vector<Document>& valid,
                                       const EmbeddingModel& embedding, ClassifierConfig config,
                                       const std::function<void(const EpochRecord&)>& on_epoch = {});

}  // namespace khtext
