#include "khtext/textproc.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "khtext/error.hpp"

namespace khtext {

namespace {

[[noreturn]] void bad_utf8(std::size_t offset) {
  throw InvalidInput("invalid UTF-8 at byte " + std::to_string(offset));
}

// Decodes one code point starting at `pos`; returns its byte length.
std::size_t decode_one(std::string_view s, std::size_t pos, char32_t& cp) {
  auto byte = [&](std::size_t i) { return static_cast<std::uint8_t>(s[i]); };
  std::uint8_t b0 = byte(pos);
  std::size_t len;
  char32_t min;
  if (b0 < 0x80) {
    cp = b0;
    return 1;
  } else if ((b0 & 0xE0) == 0xC0) {
    len = 2, cp = b0 & 0x1F, min = 0x80;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3, cp = b0 & 0x0F, min = 0x800;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4, cp = b0 & 0x07, min = 0x10000;
  } else {
    bad_utf8(pos);
  }
  if (pos + len > s.size()) bad_utf8(pos);
  for (std::size_t i = 1; i < len; ++i) {
    std::uint8_t b = byte(pos + i);
    if ((b & 0xC0) != 0x80) bad_utf8(pos);
    cp = (cp << 6) | (b & 0x3F);
  }
  if (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) bad_utf8(pos);
  return len;
}

}  // namespace

std::vector<char32_t> decode_utf8(std::string_view text) {
  std::vector<char32_t> out;
  out.reserve(text.size());
  for (std::size_t pos = 0; pos < text.size();) {
    char32_t cp;
    pos += decode_one(text, pos, cp);
    out.push_back(cp);
  }
  return out;
}

std::vector<std::size_t> utf8_lengths(std::string_view text) {
  std::vector<std::size_t> out;
  for (std::size_t pos = 0; pos < text.size();) {
    char32_t cp;
    std::size_t len = decode_one(text, pos, cp);
    out.push_back(len);
    pos += len;
  }
  return out;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

std::vector<std::string> kcc_split(std::string_view text) {
  std::vector<char32_t> cps;
  std::vector<std::size_t> offsets;
  for (std::size_t pos = 0; pos < text.size();) {
    char32_t cp;
    std::size_t len = decode_one(text, pos, cp);
    cps.push_back(cp);
    offsets.push_back(pos);
    pos += len;
  }
  offsets.push_back(text.size());

  std::vector<std::string> clusters;
  const std::size_t n = cps.size();
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    if (khmer::is_base(cps[i])) {
      while (j + 1 < n && cps[j] == khmer::kCoeng && khmer::is_base(cps[j + 1])) j += 2;
      while (j < n && khmer::is_mark(cps[j])) ++j;
    }
    clusters.emplace_back(text.substr(offsets[i], offsets[j] - offsets[i]));
    i = j;
  }
  return clusters;
}

SubwordConfig SubwordConfig::defaults(SubwordUnit unit) {
  SubwordConfig cfg;
  cfg.unit = unit;
  if (unit == SubwordUnit::codepoint) {
    cfg.minn = 3;
    cfg.maxn = 6;
  } else {
    cfg.minn = 1;
    cfg.maxn = 4;
  }
  return cfg;
}

void SubwordConfig::validate() const {
  if (minn < 1 || maxn < minn) {
    throw InvalidInput("subword n-gram range must satisfy 1 <= minn <= maxn (got " +
                       std::to_string(minn) + ".." + std::to_string(maxn) + ")");
  }
  if (buckets < 1) throw InvalidInput("subword bucket count must be >= 1");
}

std::vector<std::string> split_units(std::string_view token, SubwordUnit unit) {
  if (unit == SubwordUnit::kcc) return kcc_split(token);
  std::vector<std::string> units;
  std::size_t pos = 0;
  for (std::size_t len : utf8_lengths(token)) {
    units.emplace_back(token.substr(pos, len));
    pos += len;
  }
  return units;
}

std::vector<std::string> extract_ngrams(std::string_view token, const SubwordConfig& cfg) {
  if (token.empty()) throw InvalidInput("cannot extract n-grams from an empty token");
  cfg.validate();
  std::vector<std::string> units;
  units.emplace_back(1, kBeginMarker);
  for (auto& u : split_units(token, cfg.unit)) units.push_back(std::move(u));
  units.emplace_back(1, kEndMarker);

  const std::size_t wrapped = units.size();
  std::vector<std::string> grams;
  for (int n = cfg.minn; n <= cfg.maxn; ++n) {
    const auto len = static_cast<std::size_t>(n);
    if (len >= wrapped) break;  // the whole wrapped token is the word itself
    for (std::size_t start = 0; start + len <= wrapped; ++start) {
      std::string g;
      for (std::size_t k = start; k < start + len; ++k) g += units[k];
      grams.push_back(std::move(g));
    }
  }
  return grams;
}

std::uint64_t hash_ngram(std::string_view ngram, std::uint64_t buckets) {
  if (buckets == 0) throw InvalidInput("bucket count must be >= 1");
  return static_cast<std::uint64_t>(fnv1a32(ngram)) % buckets;
}

void check_token(std::string_view token) {
  if (token.empty()) throw InvalidInput("empty token");
  if (token.find(kBeginMarker) != std::string_view::npos ||
      token.find(kEndMarker) != std::string_view::npos) {
    throw InvalidInput("token \"" + std::string(token) +
                       "\" contains a reserved boundary marker '<' or '>'");
  }
}

std::vector<std::string> split_whitespace(std::string_view line) {
  std::vector<std::string> out;
  auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
  };
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && is_space(line[i])) ++i;
    std::size_t j = i;
    while (j < line.size() && !is_space(line[j])) ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

Corpus read_corpus(std::istream& in) {
  Corpus corpus;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto tokens = split_whitespace(line);
    if (tokens.empty()) continue;
    try {
      decode_utf8(line);
      for (const auto& t : tokens) check_token(t);
    } catch (const InvalidInput& e) {
      throw InvalidInput("corpus line " + std::to_string(lineno) + ": " + e.what());
    }
    corpus.push_back(std::move(tokens));
  }
  return corpus;
}

Corpus read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus " + path.string());
  return read_corpus(in);
}

Vocabulary::Vocabulary(std::vector<Entry> words, std::uint64_t min_count)
    : words_(std::move(words)), min_count_(min_count) {
  for (std::size_t i = 0; i < words_.size(); ++i) {
    auto [it, inserted] = index_.emplace(words_[i].token, static_cast<std::int64_t>(i));
    if (!inserted) throw InvalidInput("duplicate vocabulary token \"" + words_[i].token + "\"");
    total_tokens_ += words_[i].count;
  }
}

std::int64_t Vocabulary::id(std::string_view token) const {
  auto it = index_.find(token);
  return it == index_.end() ? -1 : it->second;
}

Vocabulary build_vocab(const Corpus& corpus, std::uint64_t min_count) {
  struct Count {
    std::uint64_t count = 0;
    std::size_t first = 0;
  };
  std::unordered_map<std::string, Count> counts;
  std::vector<std::string> order;
  for (const auto& line : corpus) {
    for (const auto& tok : line) {
      auto [it, inserted] = counts.try_emplace(tok);
      if (inserted) {
        it->second.first = order.size();
        order.push_back(tok);
      }
      ++it->second.count;
    }
  }
  if (order.empty()) throw InvalidInput("corpus contains no tokens");

  std::vector<Vocabulary::Entry> kept;
  for (const auto& tok : order) {
    auto c = counts[tok].count;
    if (c >= min_count) kept.push_back({tok, c});
  }
  // `order` is first-appearance order, so a stable sort on count keeps ties in that order.
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.count > b.count; });
  return Vocabulary(std::move(kept), min_count);
}

const char* to_string(Task task) {
  return task == Task::multiclass ? "multiclass" : "multilabel";
}

Task parse_task(std::string_view name) {
  if (name == "multiclass") return Task::multiclass;
  if (name == "multilabel") return Task::multilabel;
  throw InvalidInput("unknown task \"" + std::string(name) + "\"");
}

int LabelCatalog::intern(const std::string& name) {
  auto [it, inserted] = index_.try_emplace(name, static_cast<int>(names_.size()));
  if (inserted) names_.push_back(name);
  return it->second;
}

int LabelCatalog::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? -1 : it->second;
}

std::vector<Document> parse_dataset(std::istream& in, Task task, LabelCatalog& labels,
                                    const std::string& source) {
  std::vector<Document> docs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (split_whitespace(line).empty()) continue;
    auto fail = [&](const std::string& why) -> InvalidInput {
      return InvalidInput(source + ":" + std::to_string(lineno) + ": " + why);
    };
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw fail(std::string("malformed JSON (") + e.what() + ")");
    }
    if (!rec.is_object()) throw fail("record is not a JSON object");
    if (!rec.contains("labels") || !rec["labels"].is_array()) {
      throw fail("missing \"labels\" array");
    }
    if (!rec.contains("text") || !rec["text"].is_string()) throw fail("missing \"text\" string");
    const auto& jl = rec["labels"];
    if (jl.empty()) throw fail("empty \"labels\" array");

    Document doc;
    for (const auto& l : jl) {
      if (!l.is_string()) throw fail("label is not a string");
      int id = labels.intern(l.get<std::string>());
      if (std::find(doc.labels.begin(), doc.labels.end(), id) == doc.labels.end()) {
        doc.labels.push_back(id);
      }
    }
    if (task == Task::multiclass && doc.labels.size() != 1) {
      throw fail("multiclass record must carry exactly one label");
    }
    const auto text = rec["text"].get<std::string>();
    try {
      decode_utf8(text);
      doc.tokens = split_whitespace(text);
      for (const auto& t : doc.tokens) check_token(t);
    } catch (const InvalidInput& e) {
      throw fail(e.what());
    }
    if (doc.tokens.empty()) throw fail("\"text\" has no tokens");
    docs.push_back(std::move(doc));
  }
  return docs;
}

Dataset load_dataset(const std::filesystem::path& path, Task task) {
  Dataset ds;
  ds.docs = load_dataset(path, task, ds.labels);
  return ds;
}

std::vector<Document> load_dataset(const std::filesystem::path& path, Task task,
                                   LabelCatalog& labels) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset " + path.string());
  return parse_dataset(in, task, labels, path.string());
}

}  // namespace khtext
