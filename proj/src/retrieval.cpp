#include "tcl/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tcl/error.hpp"

namespace tcl {

void EmbeddingSet::validate() const {
  const std::size_t n = ids.size();
  require(classes.size() == n && subcats.size() == n && domains.size() == n &&
              features.rows() == n,
          "embedding set: parallel lists differ in length");
  require(features.all_finite(), "embedding set: non-finite features");
}

EmbeddingSet EmbeddingSet::subset_domain(int domain) const {
  EmbeddingSet out;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < size(); ++i) {
    if (domains[i] == domain) keep.push_back(i);
  }
  out.features = Matrix(keep.size(), features.cols());
  for (std::size_t r = 0; r < keep.size(); ++r) {
    const std::size_t i = keep[r];
    out.ids.push_back(ids[i]);
    out.classes.push_back(classes[i]);
    out.subcats.push_back(subcats[i]);
    out.domains.push_back(domains[i]);
    std::copy(features.row(i).begin(), features.row(i).end(), out.features.row(r).begin());
  }
  return out;
}

namespace {

double euclidean(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double diff = a[k] - b[k];
    s += diff * diff;
  }
  return std::sqrt(s);
}

double cosine_distance(std::span<const double> a, std::span<const double> b) {
  const double na = std::sqrt(dot(a, a));
  const double nb = std::sqrt(dot(b, b));
  if (na == 0.0 || nb == 0.0) return 1.0;
  return 1.0 - dot(a, b) / (na * nb);
}

}  // namespace

std::vector<Ranking> rank_all(const EmbeddingSet& queries, const EmbeddingSet& database,
                              DistanceKind distance) {
  queries.validate();
  database.validate();
  require(queries.features.cols() == database.features.cols(),
          "rank_all: query and database dimensions differ");

  std::vector<Ranking> out;
  out.reserve(queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    Ranking r;
    r.query_id = queries.ids[q];
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t j = 0; j < database.size(); ++j) {
      if (database.ids[j] == r.query_id) continue;
      const auto a = queries.features.row(q);
      const auto b = database.features.row(j);
      scored.emplace_back(distance == DistanceKind::kEuclidean ? euclidean(a, b)
                                                               : cosine_distance(a, b),
                          j);
    }
    std::sort(scored.begin(), scored.end(), [&](const auto& x, const auto& y) {
      if (x.first != y.first) return x.first < y.first;
      return database.ids[x.second] < database.ids[y.second];
    });
    for (const auto& [d, j] : scored) {
      r.candidates.push_back(j);
      r.candidate_ids.push_back(database.ids[j]);
      r.distances.push_back(d);
    }
    out.push_back(std::move(r));
  }
  return out;
}

namespace relevance {

std::size_t count_relevant(std::span<const int> rel) {
  return static_cast<std::size_t>(std::count_if(rel.begin(), rel.end(), [](int v) { return v > 0; }));
}

namespace {

std::size_t resolve_r(std::span<const int> rel, std::size_t total_relevant) {
  const std::size_t in_list = count_relevant(rel);
  const std::size_t r = total_relevant == 0 ? in_list : total_relevant;
  require(r > 0, "query has no relevant item");
  require(r >= in_list, "total_relevant below the relevant count in the list");
  return r;
}

std::size_t hits_at(std::span<const int> rel, std::size_t cutoff) {
  return count_relevant(rel.first(std::min(cutoff, rel.size())));
}

double harmonic(double p, double r) { return p > 0.0 && r > 0.0 ? 2.0 / (1.0 / p + 1.0 / r) : 0.0; }

}  // namespace

double average_precision(std::span<const int> rel, std::size_t total_relevant) {
  const std::size_t r = resolve_r(rel, total_relevant);
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < rel.size(); ++k) {
    if (rel[k] > 0) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
  }
  return sum / static_cast<double>(r);
}

double pr_auc(std::span<const int> rel, std::size_t total_relevant) {
  const double r = static_cast<double>(resolve_r(rel, total_relevant));
  if (rel.empty()) return 0.0;
  double prev_recall = 0.0;
  double prev_precision = rel[0] > 0 ? 1.0 : 0.0;
  double area = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < rel.size(); ++k) {
    if (rel[k] <= 0) continue;
    ++hits;
    const double recall = static_cast<double>(hits) / r;
    const double precision = static_cast<double>(hits) / static_cast<double>(k + 1);
    area += (recall - prev_recall) * 0.5 * (precision + prev_precision);
    prev_recall = recall;
    prev_precision = precision;
  }
  return area;
}

double f_measure(std::span<const int> rel, std::size_t total_relevant, std::size_t cutoff) {
  const std::size_t r = resolve_r(rel, total_relevant);
  const std::size_t c = cutoff == 0 ? r : cutoff;
  const double hits = static_cast<double>(hits_at(rel, c));
  return harmonic(hits / static_cast<double>(c), hits / static_cast<double>(r));
}

ShrecScores shrec_suite(std::span<const int> rel, std::size_t total_relevant,
                        std::size_t e_cutoff) {
  const std::size_t r = resolve_r(rel, total_relevant);
  const double rd = static_cast<double>(r);
  ShrecScores s;
  s.nn = !rel.empty() && rel[0] > 0 ? 1.0 : 0.0;
  s.ft = static_cast<double>(hits_at(rel, r)) / rd;
  s.st = std::min(1.0, static_cast<double>(hits_at(rel, 2 * r)) / rd);

  const std::size_t c = std::min(e_cutoff, rel.size());
  if (c > 0) {
    const double hits = static_cast<double>(hits_at(rel, c));
    s.e = harmonic(hits / static_cast<double>(c), hits / rd);
  }

  double dcg = 0.0;
  for (std::size_t i = 0; i < rel.size(); ++i) {
    if (rel[i] <= 0) continue;
    dcg += i == 0 ? 1.0 : 1.0 / std::log2(static_cast<double>(i + 1));
  }
  double ideal = 1.0;
  for (std::size_t i = 2; i <= r; ++i) ideal += 1.0 / std::log2(static_cast<double>(i));
  s.dcg = dcg / ideal;
  return s;
}

double ndcg(std::span<const int> grades, std::size_t cutoff) {
  const std::size_t c = cutoff == 0 ? grades.size() : std::min(cutoff, grades.size());
  std::vector<int> ideal(grades.begin(), grades.end());
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  require(!ideal.empty() && ideal.front() > 0, "query has no graded item");
  double dcg = 0.0, best = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    const double discount = 1.0 / std::log2(static_cast<double>(i + 2));
    dcg += grades[i] * discount;
    best += ideal[i] * discount;
  }
  return dcg / best;
}

}  // namespace relevance

namespace {

std::vector<int> relevance_of(const Ranking& ranking, const IdSet& relevant) {
  std::vector<int> rel(ranking.candidate_ids.size());
  for (std::size_t i = 0; i < rel.size(); ++i) rel[i] = relevant.count(ranking.candidate_ids[i]) ? 1 : 0;
  return rel;
}

std::size_t relevant_count(const Ranking& ranking, const IdSet& relevant) {
  return relevant.size() - relevant.count(ranking.query_id);
}

}  // namespace

double average_precision(const Ranking& ranking, const IdSet& relevant) {
  return relevance::average_precision(relevance_of(ranking, relevant),
                                      relevant_count(ranking, relevant));
}

double pr_auc(const Ranking& ranking, const IdSet& relevant) {
  return relevance::pr_auc(relevance_of(ranking, relevant), relevant_count(ranking, relevant));
}

double f_measure(const Ranking& ranking, const IdSet& relevant, std::size_t cutoff) {
  return relevance::f_measure(relevance_of(ranking, relevant), relevant_count(ranking, relevant),
                              cutoff);
}

ShrecScores shrec_suite(const Ranking& ranking, const IdSet& relevant) {
  return relevance::shrec_suite(relevance_of(ranking, relevant), relevant_count(ranking, relevant));
}

double ndcg_graded(const Ranking& ranking, const std::unordered_map<std::string, int>& grades,
                   std::size_t cutoff) {
  std::vector<int> g(ranking.candidate_ids.size(), 0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto it = grades.find(ranking.candidate_ids[i]);
    if (it != grades.end()) g[i] = it->second;
  }
  return relevance::ndcg(g, cutoff);
}

MetricAggregate aggregate(std::span<const double> values, std::span<const int> classes) {
  require(!values.empty() && values.size() == classes.size(), "aggregate: bad input");
  std::map<int, std::vector<double>> by_class;
  for (std::size_t i = 0; i < values.size(); ++i) by_class[classes[i]].push_back(values[i]);

  MetricAggregate out;
  double total = 0.0, class_mean_sum = 0.0;
  for (auto& [cls, vals] : by_class) {
    std::sort(vals.begin(), vals.end());
    const double sum = std::accumulate(vals.begin(), vals.end(), 0.0);
    total += sum;
    const double mean = sum / static_cast<double>(vals.size());
    out.per_class[cls] = mean;
    class_mean_sum += mean;
  }
  out.micro = total / static_cast<double>(values.size());
  out.macro = class_mean_sum / static_cast<double>(by_class.size());
  return out;
}

MetricReport evaluate(const EmbeddingSet& queries, const EmbeddingSet& database,
                      const EvalOptions& options) {
  const auto rankings = rank_all(queries, database, options.distance);
  MetricReport report;
  for (std::size_t q = 0; q < rankings.size(); ++q) {
    const auto& ranking = rankings[q];
    const int cls = queries.classes[q];
    const int sub = queries.subcats[q];
    std::vector<int> rel(ranking.candidates.size()), grades(ranking.candidates.size());
    for (std::size_t i = 0; i < rel.size(); ++i) {
      const std::size_t j = ranking.candidates[i];
      const bool same_class = database.classes[j] == cls;
      rel[i] = same_class ? 1 : 0;
      grades[i] = !same_class ? 0 : (options.graded && database.subcats[j] == sub ? 2 : 1);
    }
    if (relevance::count_relevant(rel) == 0) {
      ++report.excluded_no_relevant;
      continue;
    }
    QueryScores qs;
    qs.query_id = ranking.query_id;
    qs.query_class = cls;
    const auto shrec = relevance::shrec_suite(rel);
    qs.values[0] = shrec.nn;
    qs.values[1] = shrec.ft;
    qs.values[2] = shrec.st;
    qs.values[3] = shrec.e;
    qs.values[4] = shrec.dcg;
    qs.values[5] = relevance::average_precision(rel);
    qs.values[6] = relevance::pr_auc(rel);
    qs.values[7] = relevance::f_measure(rel);
    qs.values[8] = relevance::ndcg(grades);
    report.per_query.push_back(std::move(qs));
  }
  require(!report.per_query.empty(), "evaluate: no query has a relevant item");

  std::vector<int> classes;
  for (const auto& qs : report.per_query) classes.push_back(qs.query_class);
  for (std::size_t m = 0; m < kNumMetrics; ++m) {
    std::vector<double> vals;
    for (const auto& qs : report.per_query) vals.push_back(qs.values[m]);
    report.metrics[kMetricNames[m]] = aggregate(vals, classes);
  }
  return report;
}

}  // namespace tcl
