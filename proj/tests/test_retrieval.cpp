#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "tcl/error.hpp"
#include "tcl/retrieval.hpp"
#include "metric_oracles.hpp"

using namespace tcl;
namespace rel = tcl::relevance;
using namespace oracle;

namespace {

EmbeddingSet make_set(const std::vector<std::vector<double>>& rows, const std::vector<int>& classes) {
  EmbeddingSet s;
  s.features = Matrix::from_rows(rows);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    s.ids.push_back("o" + std::to_string(i));
    s.classes.push_back(classes[i]);
    s.subcats.push_back(0);
    s.domains.push_back(0);
  }
  return s;
}

}  // namespace

TEST(Metrics, AveragePrecisionHandValues) {
  const std::vector<int> r{1, 0, 1};
  EXPECT_DOUBLE_EQ(rel::average_precision(r), 5.0 / 6.0);
  EXPECT_DOUBLE_EQ(rel::average_precision(std::vector<int>{1, 1, 0, 0}), 1.0);
  // Relevant items missing from a truncated list still count in R.
  EXPECT_DOUBLE_EQ(rel::average_precision(std::vector<int>{1, 0}, 2), 0.5);
}

TEST(Metrics, PrAucHandValues) {
  EXPECT_NEAR(rel::pr_auc(std::vector<int>{1, 0, 1}), 0.5 * 1.0 + 0.5 * (1.0 + 2.0 / 3.0) / 2.0,
              1e-15);
  EXPECT_NEAR(rel::pr_auc(std::vector<int>{1, 0, 1}), 0.91667, 5e-6);
  EXPECT_DOUBLE_EQ(rel::pr_auc(std::vector<int>{1, 1, 1, 0}), 1.0);
}

TEST(Metrics, ShrecSuiteHandValues) {
  const auto s = rel::shrec_suite(std::vector<int>{1, 1, 0, 0});
  EXPECT_EQ(s.nn, 1.0);
  EXPECT_EQ(s.ft, 1.0);
  EXPECT_EQ(s.st, 1.0);
  EXPECT_DOUBLE_EQ(s.e, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(s.dcg, 1.0);

  const auto d = rel::shrec_suite(std::vector<int>{1, 0, 1});
  EXPECT_NEAR(d.dcg, (1.0 + 1.0 / std::log2(3.0)) / 2.0, 1e-15);
  EXPECT_NEAR(d.dcg, 0.8155, 5e-5);

  const auto z = rel::shrec_suite(std::vector<int>{0, 0, 0, 0, 1, 1});
  EXPECT_EQ(z.nn, 0.0);
  EXPECT_EQ(z.ft, 0.0);
  EXPECT_EQ(z.st, 0.0);
}

TEST(Metrics, NdcgHandValues) {
  const std::vector<int> g{1, 2};
  const double expected = (1.0 + 2.0 / std::log2(3.0)) / (2.0 + 1.0 / std::log2(3.0));
  EXPECT_NEAR(rel::ndcg(g, 2), expected, 1e-15);
  EXPECT_NEAR(rel::ndcg(g, 2), 0.85972, 5e-6);
  EXPECT_EQ(rel::ndcg(std::vector<int>{2, 1, 0}), 1.0);
  EXPECT_EQ(rel::ndcg(std::vector<int>{2}), 1.0);
  EXPECT_THROW(rel::ndcg(std::vector<int>{0, 0}), ContractError);
}

TEST(Metrics, FMeasureHandValues) {
  EXPECT_DOUBLE_EQ(rel::f_measure(std::vector<int>{1, 0}, 2, 2), 0.5);
  EXPECT_EQ(rel::f_measure(std::vector<int>{1, 1, 0}), 1.0);
  EXPECT_EQ(rel::f_measure(std::vector<int>{0, 0, 1}, 1, 2), 0.0);
}

TEST(Metrics, NoRelevantItemIsAContractError) {
  EXPECT_THROW(rel::average_precision(std::vector<int>{0, 0}), ContractError);
  EXPECT_THROW(rel::pr_auc(std::vector<int>{0}), ContractError);
}

TEST(Metrics, MatchBruteForceOracles) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> len(1, 30);
  std::bernoulli_distribution coin(0.35);
  std::uniform_int_distribution<int> grade(0, 2);
  int checked = 0;
  while (checked < 1000) {
    std::vector<int> r(len(rng));
    for (int& v : r) v = coin(rng) ? 1 : 0;
    const std::size_t in_list = rel::count_relevant(r);
    if (in_list == 0) continue;
    const std::size_t total = in_list + (coin(rng) ? std::uniform_int_distribution<std::size_t>(0, 5)(rng) : 0);
    EXPECT_NEAR(rel::average_precision(r, total), bf_ap(r, total), 1e-12);
    EXPECT_NEAR(rel::pr_auc(r, total), bf_auc(r, total), 1e-12);
    EXPECT_NEAR(rel::shrec_suite(r, total).dcg, bf_dcg(r, total), 1e-12);

    std::vector<int> g(r.size());
    for (int& v : g) v = grade(rng);
    g[0] = std::max(g[0], 1);
    EXPECT_NEAR(rel::ndcg(g), bf_ndcg(g), 1e-12);
    ++checked;
  }
}

TEST(Metrics, ValuesStayInUnitInterval) {
  for (std::size_t n = 1; n <= 6; ++n) {
    for (const auto& r : all_binary(n)) {
      if (rel::count_relevant(r) == 0) continue;
      const auto s = rel::shrec_suite(r);
      for (double v : {s.nn, s.ft, s.st, s.e, s.dcg, rel::average_precision(r), rel::pr_auc(r),
                       rel::f_measure(r)}) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0 + 1e-15);
      }
    }
  }
}

TEST(Metrics, DemotingARelevantItemNeverHelps) {
  for (std::size_t n = 1; n <= 6; ++n) {
    for (const auto& r : all_binary(n)) {
      if (rel::count_relevant(r) == 0) continue;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        if (!(r[i] == 1 && r[i + 1] == 0)) continue;
        auto s = r;
        std::swap(s[i], s[i + 1]);
        EXPECT_LE(rel::average_precision(s), rel::average_precision(r) + 1e-15);
        EXPECT_LE(rel::shrec_suite(s).dcg, rel::shrec_suite(r).dcg + 1e-15);
        EXPECT_LE(rel::ndcg(s), rel::ndcg(r) + 1e-15);
        EXPECT_LE(rel::pr_auc(s), rel::pr_auc(r) + 1e-15);
      }
    }
  }
}

TEST(Metrics, GradedNdcgDemotionNeverHelps) {
  for (std::size_t n = 1; n <= 6; ++n) {
    std::size_t combos = 1;
    for (std::size_t i = 0; i < n; ++i) combos *= 3;
    for (std::size_t code = 0; code < combos; ++code) {
      std::vector<int> g(n);
      std::size_t c = code;
      for (auto& v : g) {
        v = static_cast<int>(c % 3);
        c /= 3;
      }
      if (*std::max_element(g.begin(), g.end()) == 0) continue;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        if (g[i] <= g[i + 1]) continue;
        auto s = g;
        std::swap(s[i], s[i + 1]);
        EXPECT_LE(rel::ndcg(s), rel::ndcg(g) + 1e-15);
      }
    }
  }
}

TEST(Metrics, PerfectRankingMaximisesAuc) {
  for (std::size_t n = 1; n <= 6; ++n) {
    for (const auto& r : all_binary(n)) {
      const std::size_t k = rel::count_relevant(r);
      if (k == 0) continue;
      std::vector<int> perfect(n, 0);
      std::fill(perfect.begin(), perfect.begin() + static_cast<long>(k), 1);
      EXPECT_EQ(rel::pr_auc(perfect), 1.0);
      EXPECT_GE(rel::pr_auc(perfect), rel::pr_auc(r));
    }
  }
}

TEST(Aggregate, MicroVersusMacro) {
  std::vector<double> vals(10, 0.2);
  std::vector<int> classes(10, 0);
  vals.push_back(1.0);
  classes.push_back(1);
  const auto a = aggregate(vals, classes);
  EXPECT_NEAR(a.micro, 3.0 / 11.0, 1e-15);
  EXPECT_NEAR(a.micro, 0.2727, 5e-5);
  EXPECT_NEAR(a.macro, 0.6, 1e-15);
  EXPECT_NEAR(a.per_class.at(0), 0.2, 1e-15);

  const std::vector<double> one{0.3, 0.9};
  const std::vector<int> same{4, 4};
  const auto b = aggregate(one, same);
  EXPECT_EQ(b.micro, b.macro);
}

TEST(Aggregate, QueryOrderDoesNotMatter) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> vals(200);
  std::vector<int> classes(200);
  for (std::size_t i = 0; i < vals.size(); ++i) {
    vals[i] = u(rng);
    classes[i] = static_cast<int>(i % 7);
  }
  const auto a = aggregate(vals, classes);
  std::vector<std::size_t> perm(vals.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<double> pv;
  std::vector<int> pc;
  for (auto i : perm) {
    pv.push_back(vals[i]);
    pc.push_back(classes[i]);
  }
  const auto b = aggregate(pv, pc);
  EXPECT_EQ(a.micro, b.micro);
  EXPECT_EQ(a.macro, b.macro);
}

TEST(RankAll, DistancesTiesAndSelfExclusion) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> rows(12, std::vector<double>(4));
  for (auto& r : rows) {
    for (double& v : r) v = normal(rng);
  }
  rows[5] = rows[2];  // exact tie for every query
  const auto db = make_set(rows, std::vector<int>(12, 0));
  const auto rankings = rank_all(db, db);
  for (std::size_t q = 0; q < rankings.size(); ++q) {
    const auto& r = rankings[q];
    EXPECT_EQ(r.candidates.size(), 11u);
    for (std::size_t i = 0; i < r.candidates.size(); ++i) {
      EXPECT_NE(r.candidate_ids[i], r.query_id);
      double s = 0.0;
      for (std::size_t k = 0; k < 4; ++k) {
        const double d = rows[q][k] - rows[r.candidates[i]][k];
        s += d * d;
      }
      EXPECT_NEAR(r.distances[i], std::sqrt(s), 1e-12);
      if (i > 0) {
        EXPECT_LE(r.distances[i - 1], r.distances[i]);
        if (r.distances[i - 1] == r.distances[i]) EXPECT_LT(r.candidate_ids[i - 1], r.candidate_ids[i]);
      }
    }
  }
  // Query 5 coincides with item 2, so item 2 ranks first.
  EXPECT_EQ(rankings[5].candidate_ids[0], "o2");
}

TEST(RankAll, SingleElementDatabases) {
  const auto one = make_set({{1.0, 2.0}}, {0});
  EXPECT_TRUE(rank_all(one, one)[0].candidates.empty());
  const auto other = make_set({{0.0, 0.0}}, {0});
  auto renamed = other;
  renamed.ids[0] = "x";
  EXPECT_EQ(rank_all(one, renamed)[0].candidates.size(), 1u);
  EXPECT_THROW(rank_all(one, make_set({{1.0}}, {0})), ContractError);
}

TEST(Evaluate, SeparatedClustersArePerfect) {
  std::vector<std::vector<double>> rows;
  std::vector<int> classes;
  for (int k = 0; k < 3; ++k) {
    for (int i = 0; i < 4; ++i) {
      rows.push_back({10.0 * k + 0.01 * i, -5.0 * k});
      classes.push_back(k);
    }
  }
  const auto set = make_set(rows, classes);
  const auto report = evaluate(set, set);
  for (const char* name : kMetricNames) {
    EXPECT_DOUBLE_EQ(report.micro(name), name == std::string("E") ? 3.0 / 7.0 : 1.0) << name;
  }
  EXPECT_EQ(report.excluded_no_relevant, 0u);
}

TEST(Evaluate, QueriesWithoutRelevantItemsAreExcluded) {
  const auto set = make_set({{0.0}, {0.1}, {5.0}}, {0, 0, 1});
  const auto report = evaluate(set, set);
  EXPECT_EQ(report.excluded_no_relevant, 1u);
  EXPECT_EQ(report.per_query.size(), 2u);
}

TEST(Evaluate, GradedNdcgRewardsSubcategoryOrder) {
  auto set = make_set({{0.0}, {1.0}, {2.0}, {50.0}}, {0, 0, 0, 1});
  set.subcats = {0, 1, 0, 0};
  EvalOptions graded;
  graded.graded = true;
  const auto r = evaluate(set, set, graded);
  // Query o0 sees grades (1, 2, 0): o1 is another subcategory, o2 the same one.
  EXPECT_NEAR(r.per_query[0].values[8], rel::ndcg(std::vector<int>{1, 2, 0}), 1e-15);
  EXPECT_LT(r.per_query[0].values[8], 1.0);
  EXPECT_EQ(evaluate(set, set).per_query[0].values[8], 1.0);
}
