// khtext: command-line entry point for the text-classification toolkit.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "khtext/baseline.hpp"
#include "khtext/classifiers.hpp"
#include "khtext/embedding.hpp"
#include "khtext/error.hpp"
#include "khtext/evalkit.hpp"
#include "khtext/synth.hpp"
#include "khtext/textproc.hpp"

namespace fs = std::filesystem;
using namespace khtext;

namespace {

// Writes through a sibling temporary file so a failed run never leaves a
// partial output behind.
void write_file(const fs::path& path, const std::function<void(std::ostream&)>& fill) {
  fs::path tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    fill(out);
    out.flush();
    if (!out) {
      out.close();
      fs::remove(tmp);
      throw Error("failed writing " + path.string());
    }
  }
  fs::rename(tmp, path);
}

// "-" or empty means stdout.
void emit(const std::string& path, const std::function<void(std::ostream&)>& fill) {
  if (path.empty() || path == "-") {
    fill(std::cout);
    std::cout.flush();
    if (!std::cout) throw Error("failed writing to standard output");
  } else {
    write_file(path, fill);
  }
}

std::string format_report(const MetricsReport& rep, const std::vector<std::string>& names,
                          const std::string& format) {
  return format == "json" ? rep.to_json(names) + "\n" : rep.to_table(names);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const std::map<std::string, SubwordUnit> kUnits{{"codepoint", SubwordUnit::codepoint},
                                                 {"kcc", SubwordUnit::kcc}};
const std::map<std::string, EmbedMode> kModes{{"cbow", EmbedMode::cbow},
                                               {"skipgram", EmbedMode::skipgram}};
const std::map<std::string, Task> kTasks{{"multiclass", Task::multiclass},
                                          {"multilabel", Task::multilabel}};
const std::map<std::string, nn::Arch> kArchs{
    {"linear", nn::Arch::linear}, {"birnn", nn::Arch::birnn}, {"cnn", nn::Arch::cnn}};
const std::map<std::string, Optimizer> kOptimizers{{"adam", Optimizer::adam},
                                                    {"sgd", Optimizer::sgd}};

// Enum option parsed by name. CLI11 would print uint8_t enum values as raw
// bytes in help and error text, so only the names are shown.
template <class E>
CLI::Option* add_choice(CLI::App* cmd, const std::string& name, E& target,
                        const std::map<std::string, E>& choices, const std::string& description) {
  std::vector<std::string> names;
  for (const auto& entry : choices) names.push_back(entry.first);
  return cmd
      ->add_option_function<std::string>(
          name, [&target, &choices](const std::string& v) { target = choices.at(v); }, description)
      ->check(CLI::IsMember(names))
      ->type_name("NAME");
}

// ---------------------------------------------------------------------------

void setup_kcc(CLI::App& app) {
  auto* cmd = app.add_subcommand("kcc", "Split text into Khmer character clusters");
  auto file = std::make_shared<std::string>();
  cmd->add_option("file", *file, "UTF-8 text file ('-' for stdin)")->required();
  cmd->callback([file] {
    std::ifstream fin;
    std::istream* in = &std::cin;
    if (*file != "-") {
      fin.open(*file, std::ios::binary);
      if (!fin) throw Error("cannot open " + *file);
      in = &fin;
    }
    std::string line;
    std::size_t lineno = 0;
    std::ostringstream out;
    while (std::getline(*in, line)) {
      ++lineno;
      std::vector<std::string> clusters;
      try {
        clusters = kcc_split(line);
      } catch (const InvalidInput& e) {
        throw InvalidInput("line " + std::to_string(lineno) + ": " + e.what());
      }
      for (std::size_t i = 0; i < clusters.size(); ++i) out << (i ? "\t" : "") << clusters[i];
      out << '\n';
    }
    emit("-", [&](std::ostream& o) { o << out.str(); });
  });
}

void setup_embed(CLI::App& app) {
  auto* embed = app.add_subcommand("embed", "Train and query subword embeddings");
  embed->require_subcommand(1);

  {
    auto* cmd = embed->add_subcommand("train", "Train an embedding model on a segmented corpus");
    struct Opts {
      std::string input, output;
      EmbeddingHyper hyper;
      SubwordUnit unit = SubwordUnit::kcc;
      int minn = 0, maxn = 0;
      std::uint64_t buckets = 2'000'000;
      bool lr_set = false;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--input,-i", o->input, "Corpus: one sentence per line")->required();
    cmd->add_option("--output,-o", o->output, "Model file to write")->required();
    add_choice(cmd, "--mode", o->hyper.mode, kModes, "Training objective");
    cmd->add_option("--dim", o->hyper.dim, "Embedding dimension")->capture_default_str();
    cmd->add_option("--window", o->hyper.window, "Max context radius")->capture_default_str();
    cmd->add_option("--neg", o->hyper.negatives, "Negatives per target")->capture_default_str();
    cmd->add_option("--epochs", o->hyper.epochs)->capture_default_str();
    auto* lr = cmd->add_option("--lr", o->hyper.lr0, "Initial learning rate (0.05 cbow, 0.025 skipgram)");
    cmd->add_option("--min-count", o->hyper.min_count)->capture_default_str();
    add_choice(cmd, "--unit", o->unit, kUnits, "N-gram unit");
    cmd->add_option("--minn", o->minn, "Min n-gram length (default per unit)");
    cmd->add_option("--maxn", o->maxn, "Max n-gram length (default per unit)");
    cmd->add_option("--buckets", o->buckets, "Hash buckets")->capture_default_str();
    cmd->add_option("--threads", o->hyper.threads, "Worker threads")
        ->envname("KHTEXT_THREADS")
        ->capture_default_str();
    cmd->add_option("--seed", o->hyper.seed)->capture_default_str();
    cmd->add_flag("--subsample", o->hyper.subsample, "Enable frequent-word subsampling");
    cmd->add_option("--sample-threshold", o->hyper.sample_threshold)->capture_default_str();
    cmd->callback([o, lr] {
      auto h = o->hyper;
      if (lr->count() == 0) h.lr0 = h.mode == EmbedMode::cbow ? 0.05 : 0.025;
      h.subword = SubwordConfig::defaults(o->unit);
      if (o->minn > 0) h.subword.minn = o->minn;
      if (o->maxn > 0) h.subword.maxn = o->maxn;
      h.subword.buckets = o->buckets;
      const Corpus corpus = read_corpus(fs::path(o->input));
      EmbeddingTrainStats stats;
      const auto model = train_embeddings(corpus, h, &stats);
      write_file(o->output, [&](std::ostream& out) { model.save(out); });
      std::cerr << "vocabulary " << model.vocab().size() << ", tokens "
                << model.vocab().total_tokens() << '\n';
      for (std::size_t e = 0; e < stats.epoch_loss.size(); ++e) {
        std::cerr << "epoch " << e + 1 << " loss " << stats.epoch_loss[e] << '\n';
      }
    });
  }

  {
    auto* cmd = embed->add_subcommand("nn", "Nearest neighbours of a token");
    struct Opts {
      std::string model, token;
      std::size_t k = 10;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("token", o->token)->required();
    cmd->add_option("--model,-m", o->model)->required();
    cmd->add_option("-k", o->k, "Neighbours to list")->capture_default_str();
    cmd->callback([o] {
      const auto model = EmbeddingModel::load(fs::path(o->model));
      const auto hits = nearest_neighbors(model, o->token, o->k);
      emit("-", [&](std::ostream& out) {
        for (const auto& h : hits) out << h.token << '\t' << h.cosine << '\n';
      });
    });
  }

  {
    auto* cmd = embed->add_subcommand("pca", "2-D PCA projection of selected tokens (TSV)");
    struct Opts {
      std::string model, tokens, output;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--model,-m", o->model)->required();
    cmd->add_option("--tokens-file", o->tokens, "Tokens, whitespace separated")->required();
    cmd->add_option("--output,-o", o->output, "TSV file (default stdout)");
    cmd->callback([o] {
      const auto model = EmbeddingModel::load(fs::path(o->model));
      const auto tokens = split_whitespace(read_text(o->tokens));
      const auto points = pca_project(model, tokens);
      emit(o->output, [&](std::ostream& out) {
        out << "token\tx\ty\n";
        for (const auto& p : points) out << p.token << '\t' << p.x << '\t' << p.y << '\n';
      });
    });
  }

  {
    auto* cmd = embed->add_subcommand("export", "Write word vectors as text");
    struct Opts {
      std::string model, output;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--model,-m", o->model)->required();
    cmd->add_option("--output,-o", o->output, "Vector file (default stdout)");
    cmd->callback([o] {
      const auto model = EmbeddingModel::load(fs::path(o->model));
      emit(o->output, [&](std::ostream& out) { model.write_text_vectors(out); });
    });
  }
}

EmbeddingModel load_embedding_for(const ClassifierModel& model, const std::string& override_path) {
  const std::string path = override_path.empty() ? model.embedding_path() : override_path;
  if (path.empty()) throw InvalidInput("no embedding model given (use --embeddings)");
  return EmbeddingModel::load(fs::path(path));
}

void setup_classify(CLI::App& app) {
  auto* classify = app.add_subcommand("classify", "Neural document classifiers");
  classify->require_subcommand(1);

  {
    auto* cmd = classify->add_subcommand("train", "Train a classifier on frozen embeddings");
    struct Opts {
      std::string embeddings, train, valid, output, tuned_output, history;
      ClassifierConfig config;
      std::vector<std::size_t> windows{2, 3, 4};
    };
    auto o = std::make_shared<Opts>();
    auto& c = o->config;
    add_choice(cmd, "--arch", c.arch, kArchs, "Architecture")
        ->required();
    add_choice(cmd, "--task", c.task, kTasks, "Label structure")
        ->required();
    cmd->add_option("--embeddings", o->embeddings, "Embedding model file")->required();
    cmd->add_option("--train", o->train, "Training JSONL")->required();
    cmd->add_option("--valid", o->valid, "Validation JSONL (model selection on macro-F1)");
    cmd->add_option("--output,-o", o->output, "Classifier model file")->required();
    cmd->add_option("--epochs", c.epochs)->capture_default_str();
    cmd->add_option("--batch", c.batch)->capture_default_str();
    cmd->add_option("--seed", c.seed)->capture_default_str();
    cmd->add_option("--dropout", c.dropout)->capture_default_str();
    cmd->add_option("--lr", c.lr)->capture_default_str();
    add_choice(cmd, "--optimizer", c.optimizer, kOptimizers, "Update rule");
    cmd->add_option("--max-len", c.max_len, "Max tokens per document")->capture_default_str();
    cmd->add_option("--hidden", c.rnn_hidden, "LSTM width per direction")->capture_default_str();
    cmd->add_option("--linear-hidden", c.linear_hidden)->capture_default_str();
    cmd->add_option("--filters", c.conv.filters, "Filters per window size")->capture_default_str();
    cmd->add_option("--windows", o->windows, "Convolution window sizes")->delimiter(',');
    cmd->add_flag("--fine-tune", c.fine_tune, "Update embedding rows as well");
    cmd->add_option("--tuned-embeddings", o->tuned_output,
                    "Where to write the fine-tuned embedding (with --fine-tune)");
    cmd->add_option("--history", o->history, "Write per-epoch JSON Lines here");
    cmd->callback([o] {
      auto config = o->config;
      config.conv.sizes = o->windows;
      if (config.fine_tune && o->tuned_output.empty()) {
        throw InvalidInput("--fine-tune needs --tuned-embeddings");
      }
      const auto embedding = EmbeddingModel::load(fs::path(o->embeddings));
      Dataset train;
      train.docs = load_dataset(o->train, config.task, train.labels);
      std::vector<Document> valid;
      if (!o->valid.empty()) valid = load_dataset(o->valid, config.task, train.labels);
      config.k = train.labels.size();
      config.m = embedding.dim();

      std::vector<EpochRecord> history;
      auto result = train_classifier(train, valid, embedding, config, [&](const EpochRecord& r) {
        std::cerr << "epoch " << r.epoch << " loss " << r.train_loss;
        if (r.has_validation) {
          std::cerr << " valid macro-F1 " << r.valid_macro_f1 << " micro-F1 " << r.valid_micro_f1;
        }
        std::cerr << '\n';
      });
      std::string embedding_ref = fs::absolute(o->embeddings).string();
      if (result.tuned_embedding) {
        write_file(o->tuned_output, [&](std::ostream& out) { result.tuned_embedding->save(out); });
        embedding_ref = fs::absolute(o->tuned_output).string();
      }
      result.model.set_embedding_path(embedding_ref);
      write_file(o->output, [&](std::ostream& out) { result.model.save(out); });
      if (!o->history.empty()) {
        write_file(o->history, [&](std::ostream& out) {
          for (const auto& r : result.history) {
            nlohmann::ordered_json j{{"epoch", r.epoch}, {"train_loss", r.train_loss}};
            if (r.has_validation) {
              j["valid_macro_f1"] = r.valid_macro_f1;
              j["valid_micro_f1"] = r.valid_micro_f1;
            }
            out << j.dump() << '\n';
          }
        });
      }
      std::cerr << "kept epoch " << result.best_epoch << ", "
                << result.model.params().count() << " trainable parameters\n";
    });
  }

  {
    auto* cmd = classify->add_subcommand("eval", "Score a classifier on labelled JSONL");
    struct Opts {
      std::string model, embeddings, test, format = "table", output;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--model,-m", o->model)->required();
    cmd->add_option("--embeddings", o->embeddings, "Override the stored embedding path");
    cmd->add_option("--test", o->test, "Labelled JSONL")->required();
    cmd->add_option("--format", o->format)->check(CLI::IsMember({"table", "json"}));
    cmd->add_option("--output,-o", o->output, "Report file (default stdout)");
    cmd->callback([o] {
      const auto model = ClassifierModel::load(fs::path(o->model));
      const auto embedding = load_embedding_for(model, o->embeddings);
      LabelCatalog labels;
      for (const auto& n : model.labels()) labels.intern(n);
      const auto docs = load_dataset(o->test, model.config().task, labels);
      if (labels.size() != model.labels().size()) {
        throw InvalidInput("test set contains labels the model was not trained on");
      }
      const auto rep = evaluate(model, docs, embedding);
      emit(o->output, [&](std::ostream& out) { out << format_report(rep, model.labels(), o->format); });
    });
  }

  {
    auto* cmd = classify->add_subcommand("predict", "Label documents (JSONL in, JSONL out)");
    struct Opts {
      std::string model, embeddings, input, output;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--model,-m", o->model)->required();
    cmd->add_option("--embeddings", o->embeddings, "Override the stored embedding path");
    cmd->add_option("--input,-i", o->input, "JSONL with a \"text\" field per line")->required();
    cmd->add_option("--output,-o", o->output, "Predictions (default stdout)");
    cmd->callback([o] {
      const auto model = ClassifierModel::load(fs::path(o->model));
      const auto embedding = load_embedding_for(model, o->embeddings);
      std::ifstream in(o->input);
      if (!in) throw Error("cannot open " + o->input);
      std::ostringstream out;
      std::string line;
      std::size_t lineno = 0;
      while (std::getline(in, line)) {
        ++lineno;
        if (split_whitespace(line).empty()) continue;
        auto fail = [&](const std::string& why) {
          return InvalidInput(o->input + ":" + std::to_string(lineno) + ": " + why);
        };
        nlohmann::json rec;
        try {
          rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error&) {
          throw fail("malformed JSON");
        }
        if (!rec.is_object() || !rec.contains("text") || !rec["text"].is_string()) {
          throw fail("missing \"text\" string");
        }
        Document doc;
        doc.tokens = split_whitespace(rec["text"].get<std::string>());
        if (doc.tokens.empty()) throw fail("\"text\" has no tokens");
        const auto pred = predict(model, doc, embedding);
        nlohmann::ordered_json j;
        auto names = nlohmann::ordered_json::array();
        for (int l : pred.labels) names.push_back(model.labels()[static_cast<std::size_t>(l)]);
        j["labels"] = names;
        nlohmann::ordered_json probs;
        for (std::size_t i = 0; i < pred.probabilities.size(); ++i) {
          probs[model.labels()[i]] = pred.probabilities[i];
        }
        j["probabilities"] = probs;
        out << j.dump() << '\n';
      }
      emit(o->output, [&](std::ostream& s) { s << out.str(); });
    });
  }
}

void setup_baseline(CLI::App& app) {
  auto* baseline = app.add_subcommand("baseline", "TF-IDF + linear SVM reference classifier");
  baseline->require_subcommand(1);

  {
    auto* cmd = baseline->add_subcommand("train", "Fit TF-IDF and one-vs-rest SVMs");
    struct Opts {
      std::string train, output;
      SvmConfig config;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--train", o->train, "Training JSONL")->required();
    add_choice(cmd, "--task", o->config.task, kTasks, "Label structure")
        ->required();
    cmd->add_option("--lambda", o->config.lambda)->capture_default_str();
    cmd->add_option("--epochs", o->config.epochs)->capture_default_str();
    cmd->add_option("--seed", o->config.seed)->capture_default_str();
    cmd->add_option("--output,-o", o->output, "Baseline model file")->required();
    cmd->callback([o] {
      const auto train = load_dataset(fs::path(o->train), o->config.task);
      const auto model = train_baseline(train, o->config);
      write_file(o->output, [&](std::ostream& out) { model.save(out); });
    });
  }

  {
    auto* cmd = baseline->add_subcommand("eval", "Score a baseline model");
    struct Opts {
      std::string model, test, format = "table", output;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--model,-m", o->model)->required();
    cmd->add_option("--test", o->test, "Labelled JSONL")->required();
    cmd->add_option("--format", o->format)->check(CLI::IsMember({"table", "json"}));
    cmd->add_option("--output,-o", o->output, "Report file (default stdout)");
    cmd->callback([o] {
      const auto model = BaselineModel::load(fs::path(o->model));
      LabelCatalog labels;
      for (const auto& n : model.labels) labels.intern(n);
      const auto docs = load_dataset(o->test, model.svm.task, labels);
      if (labels.size() != model.labels.size()) {
        throw InvalidInput("test set contains labels the model was not trained on");
      }
      const auto rep = model.evaluate(docs);
      emit(o->output, [&](std::ostream& out) { out << format_report(rep, model.labels, o->format); });
    });
  }
}

struct SplitOptions {
  std::size_t valid = 0;
  std::size_t test = 0;
  std::string valid_output;
  std::string test_output;
};

void setup_synth(CLI::App& app) {
  auto* cmd = app.add_subcommand("synth", "Generate a seeded synthetic labelled dataset");
  auto c = std::make_shared<SynthConfig>();
  auto output = std::make_shared<std::string>();
  cmd->add_option("--k", c->k, "Number of classes")->capture_default_str();
  cmd->add_option("--docs-per-class", c->docs_per_class)->capture_default_str();
  cmd->add_option("--vocab-per-class", c->vocab_per_class)->capture_default_str();
  cmd->add_option("--shared-vocab", c->shared_vocab)->capture_default_str();
  cmd->add_option("--overlap", c->overlap, "Share of tokens from the shared vocabulary")
      ->capture_default_str();
  add_choice(cmd, "--task", c->task, kTasks, "Label structure");
  cmd->add_option("--seed", c->seed)->capture_default_str();
  cmd->add_option("--min-tokens", c->min_tokens)->capture_default_str();
  cmd->add_option("--max-tokens", c->max_tokens)->capture_default_str();
  cmd->add_option("--max-labels", c->max_labels)->capture_default_str();
  cmd->add_option("--output,-o", *output, "JSONL file (default stdout)");
  auto split = std::make_shared<SplitOptions>();
  cmd->add_option("--valid", split->valid, "Documents held out for validation")->capture_default_str();
  cmd->add_option("--valid-output", split->valid_output, "JSONL file for the validation split");
  cmd->add_option("--test", split->test, "Documents held out for testing")->capture_default_str();
  cmd->add_option("--test-output", split->test_output, "JSONL file for the test split");
  cmd->callback([c, output, split] {
    if ((split->valid > 0) != !split->valid_output.empty() ||
        (split->test > 0) != !split->test_output.empty()) {
      throw InvalidInput("--valid/--test need a matching --valid-output/--test-output");
    }
    if (split->valid == 0 && split->test == 0) {
      const auto text = synth_jsonl(*c);
      emit(*output, [&](std::ostream& out) { out << text; });
      return;
    }
    const auto all = synth_dataset(*c);
    const auto parts = split_dataset(all, split->valid, split->test);
    if (split->valid > 0) {
      write_file(split->valid_output, [&](std::ostream& out) { out << to_jsonl(parts.valid, all.labels); });
    }
    if (split->test > 0) {
      write_file(split->test_output, [&](std::ostream& out) { out << to_jsonl(parts.test, all.labels); });
    }
    emit(*output, [&](std::ostream& out) { out << to_jsonl(parts.train.docs, all.labels); });
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Khmer text classification toolkit"};
  app.set_config("--config", "", "TOML/INI file with option defaults");
  app.require_subcommand(1);
  setup_kcc(app);
  setup_embed(app);
  setup_classify(app);
  setup_baseline(app);
  setup_synth(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "khtext: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
