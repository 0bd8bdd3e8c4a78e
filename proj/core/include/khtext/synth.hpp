#pragma once

// Seeded synthetic labelled corpora with a known decision rule.

#include <cstdint>
#include <string>
#include <vector>

#include "khtext/textproc.hpp"

namespace khtext {

struct SynthConfig {
  std::size_t k = 7;
  std::size_t docs_per_class = 200;
  std::size_t vocab_per_class = 50;
  std::size_t shared_vocab = 50;
  /// Probability that a token is drawn from the shared vocabulary.
  double overlap = 0.3;
  Task task = Task::multiclass;
  std::uint64_t seed = 1;
  std::size_t min_tokens = 15;
  std::size_t max_tokens = 40;
  /// Multilabel documents carry 1..max_labels labels.
  std::size_t max_labels = 3;

  void validate() const;
};

/// Every class owns a keyword vocabulary of Khmer-script words. A document
/// for labels L draws each token from the shared vocabulary with probability
/// `overlap`, otherwise from the vocabulary of a uniformly chosen label in L.
/// Documents are shuffled; labels are named "label_<i>".
Dataset synth_dataset(const SynthConfig& config);

/// Documents as JSON Lines records {"labels": [...], "text": "..."}.
std::string to_jsonl(const std::vector<Document>& docs, const LabelCatalog& labels);

/// The same dataset as JSON Lines, byte-identical for equal configs.
std::string synth_jsonl(const SynthConfig& config);

/// Splits off the first `valid` and next `test` documents.
struct Split {
  Dataset train;
  std::vector<Document> valid;
  std::vector<Document> test;
};
Split split_dataset(const Dataset& all, std::size_t valid, std::size_t test);

}  // namespace khtext
