#include "khtext/evalkit.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "khtext/error.hpp"

namespace khtext {

namespace {

double ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double harmonic(double p, double r) { return p + r == 0 ? 0.0 : 2 * p * r / (p + r); }

void finish(MetricsReport& rep) {
  std::uint64_t tp = 0, fp = 0, fn = 0;
  std::size_t active = 0;
  for (auto& c : rep.per_class) {
    c.precision = ratio(c.tp, c.tp + c.fp);
    c.recall = ratio(c.tp, c.tp + c.fn);
    c.f1 = harmonic(c.precision, c.recall);
    tp += c.tp;
    fp += c.fp;
    fn += c.fn;
    if (c.support == 0 && c.tp + c.fp == 0) continue;
    ++active;
    rep.macro.precision += c.precision;
    rep.macro.recall += c.recall;
    rep.macro.f1 += c.f1;
  }
  if (active > 0) {
    rep.macro.precision /= static_cast<double>(active);
    rep.macro.recall /= static_cast<double>(active);
    rep.macro.f1 /= static_cast<double>(active);
  }
  rep.micro.precision = ratio(tp, tp + fp);
  rep.micro.recall = ratio(tp, tp + fn);
  rep.micro.f1 = harmonic(rep.micro.precision, rep.micro.recall);
}

void check_id(int id, std::size_t k) {
  if (id < 0 || static_cast<std::size_t>(id) >= k) {
    throw InvalidInput("label id " + std::to_string(id) + " out of range for k=" +
                       std::to_string(k));
  }
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

}  // namespace

MetricsReport evaluate_multiclass(std::span<const int> truth, std::span<const int> pred,
                                  std::size_t k) {
  if (truth.size() != pred.size()) {
    throw InvalidInput("truth and prediction lengths differ (" + std::to_string(truth.size()) +
                       " vs " + std::to_string(pred.size()) + ")");
  }
  MetricsReport rep;
  rep.task = Task::multiclass;
  rep.k = k;
  rep.samples = truth.size();
  rep.per_class.resize(k);
  rep.confusion.assign(k, std::vector<std::uint64_t>(k, 0));
  std::uint64_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    check_id(truth[i], k);
    check_id(pred[i], k);
    const auto t = static_cast<std::size_t>(truth[i]), p = static_cast<std::size_t>(pred[i]);
    ++rep.confusion[t][p];
    ++rep.per_class[t].support;
    if (t == p) {
      ++rep.per_class[t].tp;
      ++correct;
    } else {
      ++rep.per_class[t].fn;
      ++rep.per_class[p].fp;
    }
  }
  rep.accuracy = ratio(correct, truth.size());
  finish(rep);
  return rep;
}

MetricsReport evaluate_multilabel(const std::vector<std::vector<int>>& truth,
                                  const std::vector<std::vector<int>>& pred, std::size_t k) {
  if (truth.size() != pred.size()) {
    throw InvalidInput("truth and prediction lengths differ (" + std::to_string(truth.size()) +
                       " vs " + std::to_string(pred.size()) + ")");
  }
  MetricsReport rep;
  rep.task = Task::multilabel;
  rep.k = k;
  rep.samples = truth.size();
  rep.per_class.resize(k);
  std::uint64_t exact = 0;
  std::vector<char> in_truth(k), in_pred(k);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    std::fill(in_truth.begin(), in_truth.end(), 0);
    std::fill(in_pred.begin(), in_pred.end(), 0);
    for (int id : truth[i]) {
      check_id(id, k);
      in_truth[static_cast<std::size_t>(id)] = 1;
    }
    for (int id : pred[i]) {
      check_id(id, k);
      in_pred[static_cast<std::size_t>(id)] = 1;
    }
    bool same = true;
    for (std::size_t c = 0; c < k; ++c) {
      auto& m = rep.per_class[c];
      if (in_truth[c]) ++m.support;
      if (in_truth[c] && in_pred[c]) ++m.tp;
      if (!in_truth[c] && in_pred[c]) ++m.fp;
      if (in_truth[c] && !in_pred[c]) ++m.fn;
      same = same && in_truth[c] == in_pred[c];
    }
    exact += same ? 1 : 0;
  }
  rep.accuracy = ratio(exact, truth.size());
  finish(rep);
  return rep;
}

std::string MetricsReport::to_table(const std::vector<std::string>& names) const {
  auto label = [&](std::size_t c) {
    return c < names.size() ? names[c] : "class " + std::to_string(c);
  };
  std::size_t width = 12;
  for (std::size_t c = 0; c < k; ++c) width = std::max(width, label(c).size() + 2);

  std::ostringstream out;
  out << pad("Label", width) << pad("Precision", 11) << pad("Recall", 11) << pad("F1 Score", 11)
      << "Support\n";
  for (std::size_t c = 0; c < k; ++c) {
    const auto& m = per_class[c];
    out << pad(label(c), width) << pad(fmt(m.precision), 11) << pad(fmt(m.recall), 11)
        << pad(fmt(m.f1), 11) << m.support << '\n';
  }
  out << pad("macro avg", width) << pad(fmt(macro.precision), 11) << pad(fmt(macro.recall), 11)
      << pad(fmt(macro.f1), 11) << samples << '\n';
  out << pad("micro avg", width) << pad(fmt(micro.precision), 11) << pad(fmt(micro.recall), 11)
      << pad(fmt(micro.f1), 11) << samples << '\n';
  out << pad(task == Task::multiclass ? "accuracy" : "exact match", width) << fmt(accuracy)
      << '\n';
  return out.str();
}

std::string MetricsReport::to_json(const std::vector<std::string>& names) const {
  nlohmann::ordered_json j;
  j["task"] = to_string(task);
  j["samples"] = samples;
  j["accuracy"] = accuracy;
  auto avg = [](const AveragedMetrics& a) {
    return nlohmann::ordered_json{{"precision", a.precision}, {"recall", a.recall}, {"f1", a.f1}};
  };
  j["macro"] = avg(macro);
  j["micro"] = avg(micro);
  auto classes = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < k; ++c) {
    const auto& m = per_class[c];
    classes.push_back({{"label", c < names.size() ? names[c] : std::to_string(c)},
                       {"precision", m.precision},
                       {"recall", m.recall},
                       {"f1", m.f1},
                       {"support", m.support}});
  }
  j["per_class"] = classes;
  if (!confusion.empty()) j["confusion"] = confusion;
  return j.dump(2);
}

std::string comparison_table(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::size_t width = 8;
  for (const auto& [name, _] : rows) width = std::max(width, name.size() + 2);
  std::ostringstream out;
  out << pad("Models", width) << pad("Precision", 11) << pad("Recall", 11) << "F1 Score\n";
  for (const auto& [name, rep] : rows) {
    out << pad(name, width) << pad(fmt(rep.macro.precision), 11) << pad(fmt(rep.macro.recall), 11)
        << fmt(rep.macro.f1) << '\n';
  }
  return out.str();
}

}  // namespace khtext
