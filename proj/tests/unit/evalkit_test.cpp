#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "khtext/error.hpp"
#include "khtext/evalkit.hpp"
#include "test_support.hpp"

namespace khtext {
namespace {

TEST(Multiclass, PerfectPredictions) {
  const std::vector<int> y{0, 1, 2, 1};
  const auto rep = evaluate_multiclass(y, y, 3);
  EXPECT_EQ(rep.macro.f1, 1.0);
  EXPECT_EQ(rep.micro.f1, 1.0);
  EXPECT_EQ(rep.accuracy, 1.0);
  for (const auto& c : rep.per_class) EXPECT_EQ(c.f1, 1.0);
}

TEST(Multiclass, HandConfusion) {
  const auto rep = evaluate_multiclass(std::vector<int>{0, 0, 1, 1}, std::vector<int>{0, 1, 1, 1}, 2);
  EXPECT_DOUBLE_EQ(rep.per_class[0].precision, 1.0);
  EXPECT_DOUBLE_EQ(rep.per_class[0].recall, 0.5);
  EXPECT_DOUBLE_EQ(rep.per_class[0].f1, 2.0 / 3);
  EXPECT_DOUBLE_EQ(rep.per_class[1].precision, 2.0 / 3);
  EXPECT_DOUBLE_EQ(rep.per_class[1].recall, 1.0);
  EXPECT_DOUBLE_EQ(rep.per_class[1].f1, 0.8);
  EXPECT_NEAR(rep.macro.f1, (2.0 / 3 + 0.8) / 2, 1e-15);
  EXPECT_EQ(rep.confusion, (std::vector<std::vector<std::uint64_t>>{{1, 1}, {0, 2}}));
}

TEST(Multiclass, AllOneClass) {
  const auto rep = evaluate_multiclass(std::vector<int>{0, 0, 1, 1}, std::vector<int>{0, 0, 0, 0}, 2);
  EXPECT_DOUBLE_EQ(rep.macro.f1, 1.0 / 3);
  EXPECT_EQ(rep.per_class[1].precision, 0.0);
}

TEST(Multiclass, Errors) {
  EXPECT_THROW(evaluate_multiclass(std::vector<int>{0, 1}, std::vector<int>{0}, 2), InvalidInput);
  EXPECT_THROW(evaluate_multiclass(std::vector<int>{0, 2}, std::vector<int>{0, 1}, 2), InvalidInput);
}

struct Counts {
  std::uint64_t tp = 0, fp = 0, fn = 0, support = 0;
};

// Brute force: compare every (truth, pred) pair against every class.
std::vector<Counts> brute_force(const std::vector<int>& truth, const std::vector<int>& pred, int k) {
  std::vector<Counts> out(static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) {
    auto& o = out[static_cast<std::size_t>(c)];
    for (std::size_t i = 0; i < truth.size(); ++i) {
      o.tp += truth[i] == c && pred[i] == c;
      o.fp += truth[i] != c && pred[i] == c;
      o.fn += truth[i] == c && pred[i] != c;
      o.support += truth[i] == c;
    }
  }
  return out;
}

TEST(Multiclass, MatchesBruteForceAndProperties) {
  Rng rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    const int k = 1 + static_cast<int>(rng.below(5));
    const std::size_t n = 1 + rng.below(50);
    std::vector<int> truth(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
      pred[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
    }
    const auto rep = evaluate_multiclass(truth, pred, static_cast<std::size_t>(k));
    const auto bf = brute_force(truth, pred, k);
    std::uint64_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) correct += truth[i] == pred[i];
    for (int c = 0; c < k; ++c) {
      const auto& got = rep.per_class[static_cast<std::size_t>(c)];
      const auto& want = bf[static_cast<std::size_t>(c)];
      ASSERT_EQ(got.tp, want.tp);
      ASSERT_EQ(got.fp, want.fp);
      ASSERT_EQ(got.fn, want.fn);
      ASSERT_EQ(got.support, want.support);
      std::uint64_t row = 0;
      for (auto v : rep.confusion[static_cast<std::size_t>(c)]) row += v;
      ASSERT_EQ(row, want.support);
      for (double v : {got.precision, got.recall, got.f1}) ASSERT_TRUE(v >= 0 && v <= 1);
    }
    const double acc = static_cast<double>(correct) / static_cast<double>(n);
    ASSERT_DOUBLE_EQ(rep.accuracy, acc);
    ASSERT_DOUBLE_EQ(rep.micro.precision, acc);
    ASSERT_DOUBLE_EQ(rep.micro.recall, acc);
    ASSERT_DOUBLE_EQ(rep.micro.f1, acc);

    // Joint permutation leaves every metric unchanged.
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    shuffle(order, rng);
    std::vector<int> pt(n), pp(n);
    for (std::size_t i = 0; i < n; ++i) pt[i] = truth[order[i]], pp[i] = pred[order[i]];
    const auto perm = evaluate_multiclass(pt, pp, static_cast<std::size_t>(k));
    ASSERT_EQ(perm.to_json(), rep.to_json());
  }
}

TEST(Multilabel, Examples) {
  const std::vector<std::vector<int>> truth{{0}, {0, 1}};
  auto rep = evaluate_multilabel(truth, truth, 2);
  EXPECT_EQ(rep.macro.f1, 1.0);
  EXPECT_EQ(rep.micro.f1, 1.0);

  rep = evaluate_multilabel(truth, {{0, 1}, {1}}, 2);
  EXPECT_DOUBLE_EQ(rep.per_class[0].precision, 1.0);
  EXPECT_DOUBLE_EQ(rep.per_class[0].recall, 0.5);
  EXPECT_DOUBLE_EQ(rep.per_class[1].precision, 0.5);
  EXPECT_DOUBLE_EQ(rep.per_class[1].recall, 1.0);
  EXPECT_DOUBLE_EQ(rep.micro.precision, 2.0 / 3);
  EXPECT_DOUBLE_EQ(rep.micro.recall, 2.0 / 3);
  EXPECT_THROW(evaluate_multilabel(truth, {{0}}, 2), InvalidInput);
  EXPECT_THROW(evaluate_multilabel(truth, {{0}, {3}}, 2), InvalidInput);
}

TEST(Multilabel, ColumnwiseOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 1 + rng.below(5), n = 1 + rng.below(30);
    std::vector<std::vector<int>> truth(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < k; ++c) {
        if (rng.below(2)) truth[i].push_back(static_cast<int>(c));
        if (rng.below(2)) pred[i].push_back(static_cast<int>(c));
      }
    }
    const auto rep = evaluate_multilabel(truth, pred, k);
    for (std::size_t c = 0; c < k; ++c) {
      std::uint64_t tp = 0, fp = 0, fn = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const bool t = std::count(truth[i].begin(), truth[i].end(), static_cast<int>(c)) > 0;
        const bool p = std::count(pred[i].begin(), pred[i].end(), static_cast<int>(c)) > 0;
        tp += t && p;
        fp += !t && p;
        fn += t && !p;
      }
      ASSERT_EQ(rep.per_class[c].tp, tp);
      ASSERT_EQ(rep.per_class[c].fp, fp);
      ASSERT_EQ(rep.per_class[c].fn, fn);
    }
  }
}

TEST(Report, TableAndJson) {
  const auto rep = evaluate_multiclass(std::vector<int>{0, 0, 1, 1}, std::vector<int>{0, 1, 1, 1}, 2);
  const auto table = rep.to_table({"sport", "politics"});
  EXPECT_NE(table.find("sport"), std::string::npos);
  EXPECT_NE(table.find("0.6667"), std::string::npos);
  EXPECT_NE(table.find("macro"), std::string::npos);
  const auto json = rep.to_json({"sport", "politics"});
  EXPECT_NE(json.find("\"politics\""), std::string::npos);
  EXPECT_NE(json.find("\"confusion\""), std::string::npos);

  const auto cmp = comparison_table({{"SVM", rep}, {"CNN", rep}});
  EXPECT_NE(cmp.find("F1 Score"), std::string::npos);
  EXPECT_NE(cmp.find("CNN"), std::string::npos);
}

}  // namespace
}  // namespace khtext
