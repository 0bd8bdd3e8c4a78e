#include "khtext/synth.hpp"

#include <algorithm>
#include <set>

#include <json.hpp>

#include "khtext/error.hpp"
#include "khtext/rng.hpp"

namespace khtext {

namespace {

// Consonants U+1780..U+17A2, dependent vowels U+17B6..U+17C5.
std::string random_cluster(Rng& rng) {
  std::string out;
  append_utf8(out, 0x1780 + static_cast<char32_t>(rng.below(0x23)));
  if (rng.bernoulli(0.25)) {
    append_utf8(out, 0x17D2);
    append_utf8(out, 0x1780 + static_cast<char32_t>(rng.below(0x23)));
  }
  if (rng.bernoulli(0.6)) append_utf8(out, 0x17B6 + static_cast<char32_t>(rng.below(0x10)));
  return out;
}

std::vector<std::string> make_vocab(std::size_t n, Rng& rng, std::set<std::string>& used) {
  std::vector<std::string> words;
  while (words.size() < n) {
    const std::size_t clusters = 2 + static_cast<std::size_t>(rng.below(3));
    std::string w;
    for (std::size_t i = 0; i < clusters; ++i) w += random_cluster(rng);
    if (used.insert(w).second) words.push_back(std::move(w));
  }
  return words;
}

}  // namespace

void SynthConfig::validate() const {
  if (k < 2) throw InvalidInput("synthetic data needs k >= 2");
  if (!(overlap >= 0 && overlap < 1)) throw InvalidInput("overlap ratio must lie in [0, 1)");
  if (docs_per_class < 1) throw InvalidInput("docs per class must be >= 1");
  if (vocab_per_class < 1) throw InvalidInput("vocabulary per class must be >= 1");
  if (overlap > 0 && shared_vocab < 1) throw InvalidInput("shared vocabulary must be >= 1");
  if (min_tokens < 1 || max_tokens < min_tokens) {
    throw InvalidInput("document length range must satisfy 1 <= min <= max");
  }
  if (task == Task::multilabel && (max_labels < 1 || max_labels > k)) {
    throw InvalidInput("max labels must lie in [1, k]");
  }
}

Dataset synth_dataset(const SynthConfig& c) {
  c.validate();
  Rng rng(mix_seed(c.seed, 40));
  std::set<std::string> used;
  std::vector<std::vector<std::string>> class_vocab;
  for (std::size_t i = 0; i < c.k; ++i) class_vocab.push_back(make_vocab(c.vocab_per_class, rng, used));
  const auto shared = make_vocab(c.overlap > 0 ? c.shared_vocab : 0, rng, used);

  Dataset ds;
  for (std::size_t i = 0; i < c.k; ++i) ds.labels.intern("label_" + std::to_string(i));

  for (std::size_t cls = 0; cls < c.k; ++cls) {
    for (std::size_t n = 0; n < c.docs_per_class; ++n) {
      Document doc;
      doc.labels.push_back(static_cast<int>(cls));
      if (c.task == Task::multilabel) {
        const std::size_t extra = static_cast<std::size_t>(rng.below(c.max_labels));
        while (doc.labels.size() < extra + 1) {
          const int l = static_cast<int>(rng.below(c.k));
          if (std::find(doc.labels.begin(), doc.labels.end(), l) == doc.labels.end()) {
            doc.labels.push_back(l);
          }
        }
      }
      const std::size_t len =
          c.min_tokens + static_cast<std::size_t>(rng.below(c.max_tokens - c.min_tokens + 1));
      for (std::size_t t = 0; t < len; ++t) {
        if (c.overlap > 0 && rng.bernoulli(c.overlap)) {
          doc.tokens.push_back(shared[rng.below(shared.size())]);
        } else {
          const auto l = static_cast<std::size_t>(doc.labels[rng.below(doc.labels.size())]);
          doc.tokens.push_back(class_vocab[l][rng.below(class_vocab[l].size())]);
        }
      }
      ds.docs.push_back(std::move(doc));
    }
  }
  shuffle(ds.docs, rng);
  return ds;
}

std::string to_jsonl(const std::vector<Document>& docs, const LabelCatalog& labels) {
  std::string out;
  for (const auto& d : docs) {
    nlohmann::ordered_json rec;
    auto names = nlohmann::ordered_json::array();
    for (int l : d.labels) names.push_back(labels.name(l));
    rec["labels"] = names;
    std::string text;
    for (const auto& t : d.tokens) {
      if (!text.empty()) text += ' ';
      text += t;
    }
    rec["text"] = text;
    out += rec.dump();
    out += '\n';
  }
  return out;
}

std::string synth_jsonl(const SynthConfig& config) {
  const Dataset ds = synth_dataset(config);
  return to_jsonl(ds.docs, ds.labels);
}

Split split_dataset(const Dataset& all, std::size_t valid, std::size_t test) {
  if (valid + test >= all.docs.size()) throw InvalidInput("split leaves no training documents");
  Split s;
  s.valid.assign(all.docs.begin(), all.docs.begin() + static_cast<std::ptrdiff_t>(valid));
  s.test.assign(all.docs.begin() + static_cast<std::ptrdiff_t>(valid),
                all.docs.begin() + static_cast<std::ptrdiff_t>(valid + test));
  s.train.docs.assign(all.docs.begin() + static_cast<std::ptrdiff_t>(valid + test), all.docs.end());
  s.train.labels = all.labels;
  return s;
}

}  // namespace khtext
