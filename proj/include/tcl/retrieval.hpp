#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "tcl/matrix.hpp"

namespace tcl {

struct EmbeddingSet {
  std::vector<std::string> ids;
  std::vector<int> classes;
  std::vector<int> subcats;
  std::vector<int> domains;
  Matrix features;  // n x d

  std::size_t size() const { return ids.size(); }
  void validate() const;
  EmbeddingSet subset_domain(int domain) const;
};

enum class DistanceKind { kEuclidean, kCosine };

struct Ranking {
  std::string query_id;
  std::vector<std::size_t> candidates;  // indices into the database, best first
  std::vector<std::string> candidate_ids;
  std::vector<double> distances;        // non-decreasing
};

/// Ranks the whole database for every query. Ties are broken by ascending
/// candidate id; a database entry with the query's id is dropped.
std::vector<Ranking> rank_all(const EmbeddingSet& queries, const EmbeddingSet& database,
                              DistanceKind distance = DistanceKind::kEuclidean);

using IdSet = std::set<std::string>;

// Ranking-level metrics. R = |relevant|, not counting the query itself;
// each throws ContractError when R = 0.
double average_precision(const Ranking& ranking, const IdSet& relevant);
double pr_auc(const Ranking& ranking, const IdSet& relevant);
double f_measure(const Ranking& ranking, const IdSet& relevant, std::size_t cutoff = 0);
double ndcg_graded(const Ranking& ranking, const std::unordered_map<std::string, int>& grades,
                   std::size_t cutoff = 0);

struct ShrecScores {
  double nn = 0.0;
  double ft = 0.0;
  double st = 0.0;
  double e = 0.0;
  double dcg = 0.0;
};
ShrecScores shrec_suite(const Ranking& ranking, const IdSet& relevant);

// Same metrics over a binary relevance vector in rank order (1 = relevant).
// `total_relevant` is R, which may exceed the relevant count inside `rel`
// when the list is truncated; 0 means "count them in `rel`".
namespace relevance {
std::size_t count_relevant(std::span<const int> rel);
double average_precision(std::span<const int> rel, std::size_t total_relevant = 0);
double pr_auc(std::span<const int> rel, std::size_t total_relevant = 0);
double f_measure(std::span<const int> rel, std::size_t total_relevant = 0,
                 std::size_t cutoff = 0);  // cutoff 0 = R
ShrecScores shrec_suite(std::span<const int> rel, std::size_t total_relevant = 0,
                        std::size_t e_cutoff = 32);
double ndcg(std::span<const int> grades, std::size_t cutoff = 0);  // cutoff 0 = full list
}  // namespace relevance

inline constexpr const char* kMetricNames[] = {"NN", "FT", "ST", "E", "DCG", "mAP", "AUC", "F1", "NDCG"};
inline constexpr std::size_t kNumMetrics = 9;

struct QueryScores {
  std::string query_id;
  int query_class = 0;
  double values[kNumMetrics] = {};
};

struct MetricAggregate {
  double micro = 0.0;
  double macro = 0.0;
  std::map<int, double> per_class;
};

struct MetricReport {
  std::vector<QueryScores> per_query;
  std::map<std::string, MetricAggregate> metrics;
  std::size_t excluded_no_relevant = 0;

  double micro(const std::string& name) const { return metrics.at(name).micro; }
  double macro(const std::string& name) const { return metrics.at(name).macro; }
};

/// micro = mean over queries; macro = mean over classes of per-class means.
/// Sums run in a canonical order, so permuting the queries changes nothing.
MetricAggregate aggregate(std::span<const double> values, std::span<const int> classes);

struct EvalOptions {
  DistanceKind distance = DistanceKind::kEuclidean;
  bool graded = false;  // NDCG grades: 2 same subcategory, 1 same class, 0 otherwise
};

MetricReport evaluate(const EmbeddingSet& queries, const EmbeddingSet& database,
                      const EvalOptions& options = {});

}  // namespace tcl
