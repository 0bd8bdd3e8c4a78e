#pragma once

// Text processing: Khmer character clusters, subword n-grams, vocabulary
// construction and dataset ingestion.

#include <cstdint>
#include <filesystem>
#include <istream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace khtext {

// ---------------------------------------------------------------------------
// UTF-8 and Khmer character classes

/// Decodes UTF-8 into code points. Throws InvalidInput on malformed input
/// (overlong forms, surrogates, truncated sequences).
std::vector<char32_t> decode_utf8(std::string_view text);

/// Returns the byte length of each code point of a valid UTF-8 string.
std::vector<std::size_t> utf8_lengths(std::string_view text);

void append_utf8(std::string& out, char32_t cp);

namespace khmer {
constexpr char32_t kCoeng = 0x17D2;

/// Letters that may open a cluster or follow COENG: consonants and independent vowels.
constexpr bool is_base(char32_t c) { return c >= 0x1780 && c <= 0x17B3; }

/// Dependent vowels and diacritic signs that attach to a preceding base.
constexpr bool is_mark(char32_t c) {
  return (c >= 0x17B6 && c <= 0x17D1) || c == 0x17D3 || c == 0x17DD;
}
}  // namespace khmer

/// Splits text into orthographic clusters. A cluster is either
///   base (COENG base)* mark*
/// or a single code point that cannot open such a cluster (Latin, digits,
/// punctuation, orphan Khmer signs). Concatenating the result reproduces the
/// input byte-for-byte.
std::vector<std::string> kcc_split(std::string_view text);

// ---------------------------------------------------------------------------
// Subwords

enum class SubwordUnit : std::uint8_t { codepoint = 0, kcc = 1 };

struct SubwordConfig {
  int minn = 1;
  int maxn = 4;
  std::uint64_t buckets = 2'000'000;
  SubwordUnit unit = SubwordUnit::kcc;

  /// minn=3..6 for code points, 1..4 for clusters.
  static SubwordConfig defaults(SubwordUnit unit);

  /// Throws InvalidInput unless 1 <= minn <= maxn and buckets >= 1.
  void validate() const;
};

inline constexpr char kBeginMarker = '<';
inline constexpr char kEndMarker = '>';

/// Splits a token into units (code points or clusters) without markers.
std::vector<std::string> split_units(std::string_view token, SubwordUnit unit);

/// All contiguous unit runs of the marker-wrapped token with length in
/// [minn, maxn], ordered by length then position. The run spanning the whole
/// wrapped token is omitted.
std::vector<std::string> extract_ngrams(std::string_view token, const SubwordConfig& cfg);

/// FNV-1a (32-bit) over the UTF-8 bytes.
constexpr std::uint32_t fnv1a32(std::string_view bytes) {
  std::uint32_t h = 2166136261u;
  for (char c : bytes) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 16777619u;
  }
  return h;
}

/// Bucket id of an n-gram: fnv1a32(ngram) mod buckets. Throws if buckets == 0.
std::uint64_t hash_ngram(std::string_view ngram, std::uint64_t buckets);

// ---------------------------------------------------------------------------
// Vocabulary

/// Throws InvalidInput if the token is empty or contains a reserved
/// boundary marker.
void check_token(std::string_view token);

/// Splits on ASCII whitespace.
std::vector<std::string> split_whitespace(std::string_view line);

using Corpus = std::vector<std::vector<std::string>>;

/// Reads one sentence per line, whitespace-separated tokens. Blank lines are skipped.
Corpus read_corpus(std::istream& in);
Corpus read_corpus(const std::filesystem::path& path);

class Vocabulary {
 public:
  struct Entry {
    std::string token;
    std::uint64_t count = 0;
  };

  Vocabulary() = default;
  Vocabulary(std::vector<Entry> words, std::uint64_t min_count);

  std::size_t size() const { return words_.size(); }
  bool empty() const { return words_.empty(); }
  const std::vector<Entry>& words() const { return words_; }
  const Entry& operator[](std::size_t id) const { return words_[id]; }

  /// -1 when absent.
  std::int64_t id(std::string_view token) const;
  bool contains(std::string_view token) const { return id(token) >= 0; }

  std::uint64_t min_count() const { return min_count_; }
  std::uint64_t total_tokens() const { return total_tokens_; }

  /// Input-matrix row at which hashed subword buckets begin.
  std::size_t bucket_offset() const { return words_.size(); }

 private:
  struct Hash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
  };
  std::vector<Entry> words_;
  std::unordered_map<std::string, std::int64_t, Hash, std::equal_to<>> index_;
  std::uint64_t min_count_ = 1;
  std::uint64_t total_tokens_ = 0;
};

/// Counts tokens, drops those below min_count and orders the rest by
/// (count desc, first appearance asc). Throws on a corpus with no tokens.
Vocabulary build_vocab(const Corpus& corpus, std::uint64_t min_count);

// ---------------------------------------------------------------------------
// Labelled documents

enum class Task : std::uint8_t { multiclass = 0, multilabel = 1 };

const char* to_string(Task task);
Task parse_task(std::string_view name);

struct Document {
  std::vector<std::string> tokens;
  std::vector<int> labels;  // distinct label ids, in record order
};

/// Label names in id order; ids are assigned densely on first sight.
class LabelCatalog {
 public:
  int intern(const std::string& name);
  /// -1 when absent.
  int find(std::string_view name) const;
  const std::string& name(int id) const { return names_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> index_;
};

struct Dataset {
  std::vector<Document> docs;
  LabelCatalog labels;
};

/// Parses JSON Lines records {"labels": [...], "text": "..."}.
/// Multiclass records must carry exactly one label. Unknown labels are
/// appended to `labels`, so several files can share one catalog.
std::vector<Document> parse_dataset(std::istream& in, Task task, LabelCatalog& labels,
                                    const std::string& source = "<stream>");

Dataset load_dataset(const std::filesystem::path& path, Task task);
std::vector<Document> load_dataset(const std::filesystem::path& path, Task task,
                                   LabelCatalog& labels);

}  // namespace khtext
