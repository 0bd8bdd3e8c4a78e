#pragma once

// Bag-of-words reference pipeline: TF-IDF features and one-vs-rest linear SVMs.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "khtext/evalkit.hpp"
#include "khtext/textproc.hpp"

namespace khtext {

/// Sorted column indices with their values.
struct SparseVector {
  std::vector<std::uint32_t> index;
  std::vector<double> value;

  double dot(std::span<const double> dense) const;
  double norm() const;
};

class TfidfVectorizer {
 public:
  TfidfVectorizer() = default;

  /// Columns in first-appearance order; idf(t) = ln((1+N)/(1+df(t))) + 1.
  static TfidfVectorizer fit(const std::vector<std::vector<std::string>>& docs);
  static TfidfVectorizer fit(const std::vector<Document>& docs);

  /// Raw counts times idf, L2-normalized. Unseen tokens are ignored, so a
  /// document of only unseen tokens maps to the zero vector.
  SparseVector transform(const std::vector<std::string>& tokens) const;

  std::size_t dim() const { return tokens_.size(); }
  std::size_t documents() const { return documents_; }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::vector<double>& idf() const { return idf_; }
  /// -1 when absent.
  std::int64_t column(std::string_view token) const;

  void save(std::ostream& out) const;
  static TfidfVectorizer load(std::istream& in, const std::string& source);

 private:
  void reindex();

  std::vector<std::string> tokens_;
  std::vector<double> idf_;
  std::unordered_map<std::string, std::uint32_t> index_;
  std::size_t documents_ = 0;
};

struct SvmConfig {
  double lambda = 1e-4;
  int epochs = 20;
  Task task = Task::multiclass;
  std::uint64_t seed = 1;
};

struct SvmModel {
  Task task = Task::multiclass;
  double lambda = 0;
  int epochs = 0;
  std::vector<std::vector<double>> weights;  // one per class
  std::vector<double> bias;

  std::size_t classes() const { return weights.size(); }
  std::vector<double> scores(const SparseVector& x) const;
  /// Multiclass: argmax (lowest id on ties). Multilabel: positive scores,
  /// else the single best class.
  std::vector<int> predict(const SparseVector& x) const;
};

struct SvmTrainStats {
  /// Sum over classes of the primal objective at each epoch's averaged iterate.
  std::vector<double> objective;
};

/// One Pegasos update on example (x, y) at step t >= 1 with step 1/(lambda t).
/// The bias is treated as the weight of a constant feature, so it is shrunk
/// and projected together with w onto the ball of radius 1/sqrt(lambda).
void pegasos_step(std::vector<double>& w, double& b, const SparseVector& x, double y,
                  double lambda, std::uint64_t t);

/// lambda/2 (|w|^2 + b^2) + mean_i max(0, 1 - y_i (w.x_i + b)).
double svm_objective(const std::vector<double>& w, double b, const std::vector<SparseVector>& xs,
                     const std::vector<double>& ys, double lambda);

/// One-vs-rest training. Each class model is the average of its iterates
/// over the final epoch.
SvmModel train_svm(const std::vector<SparseVector>& xs, const std::vector<std::vector<int>>& labels,
                   std::size_t k, std::size_t dim, const SvmConfig& config,
                   SvmTrainStats* stats = nullptr);

/// Vectorizer, SVM and label catalog persisted together (magic "KTXB").
struct BaselineModel {
  TfidfVectorizer vectorizer;
  SvmModel svm;
  std::vector<std::string> labels;

  std::vector<int> predict(const Document& doc) const;
  MetricsReport evaluate(const std::vector<Document>& docs) const;

  void save(const std::filesystem::path& path) const;
  static BaselineModel load(const std::filesystem::path& path);
  void save(std::ostream& out) const;
  static BaselineModel load(std::istream& in, const std::string& source = "<stream>");
};

BaselineModel train_baseline(const Dataset& train, const SvmConfig& config,
                             SvmTrainStats* stats = nullptr);

}  // namespace khtext
