#include "tcl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tcl/error.hpp"

namespace tcl {

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kSoftmax: return "softmax";
    case LossKind::kTriplet: return "triplet";
    case LossKind::kCenter: return "center";
    case LossKind::kTcl: return "tcl";
    case LossKind::kTclSoftmax: return "tcl+softmax";
    case LossKind::kCenterSoftmax: return "center+softmax";
  }
  return "?";
}

std::string_view to_string(Reduction reduction) {
  return reduction == Reduction::kSum ? "sum" : "mean";
}

std::string_view to_string(TripletStrategy strategy) {
  return strategy == TripletStrategy::kBatchAll ? "batch-all" : "batch-hard";
}

LossKind parse_loss_kind(std::string_view text) {
  for (auto kind : {LossKind::kSoftmax, LossKind::kTriplet, LossKind::kCenter, LossKind::kTcl,
                    LossKind::kTclSoftmax, LossKind::kCenterSoftmax}) {
    if (to_string(kind) == text) return kind;
  }
  // Table-style alias.
  if (text == "softmax+center") return LossKind::kCenterSoftmax;
  if (text == "softmax+tcl") return LossKind::kTclSoftmax;
  throw ConfigError("unknown loss kind '" + std::string(text) + "'");
}

Reduction parse_reduction(std::string_view text) {
  if (text == "sum") return Reduction::kSum;
  if (text == "mean") return Reduction::kMean;
  throw ConfigError("unknown reduction '" + std::string(text) + "'");
}

TripletStrategy parse_triplet_strategy(std::string_view text) {
  if (text == "batch-all") return TripletStrategy::kBatchAll;
  if (text == "batch-hard") return TripletStrategy::kBatchHard;
  throw ConfigError("unknown triplet strategy '" + std::string(text) + "'");
}

bool uses_softmax(LossKind kind) {
  return kind == LossKind::kSoftmax || kind == LossKind::kTclSoftmax ||
         kind == LossKind::kCenterSoftmax;
}

bool uses_centers(LossKind kind) {
  return kind == LossKind::kCenter || kind == LossKind::kTcl || kind == LossKind::kTclSoftmax ||
         kind == LossKind::kCenterSoftmax;
}

void LossConfig::validate() const {
  if (!(margin >= 0.0) || !std::isfinite(margin)) throw ConfigError("margin must be >= 0");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be >= 0");
}

double half_sq_dist(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "half_sq_dist: dimension mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double diff = a[k] - b[k];
    s += diff * diff;
  }
  return 0.5 * s;
}

namespace {

void check_batch(const EmbeddingBatch& batch) {
  require(batch.size() >= 1, "empty batch");
  require(batch.labels.size() == batch.size(), "labels length does not match batch size");
  require(batch.sample_ids.empty() || batch.sample_ids.size() == batch.size(),
          "sample_ids length does not match batch size");
  require(batch.features.all_finite(), "non-finite embedding");
}

void check_against_centers(const EmbeddingBatch& batch, const CenterBank& centers) {
  check_batch(batch);
  require(centers.dim() == batch.features.cols(), "embedding and center dimensions differ");
  require(centers.centers.all_finite(), "non-finite center");
  const int k = static_cast<int>(centers.num_classes());
  for (int y : batch.labels) require(y >= 0 && y < k, "label outside [0, K)");
}

double reduction_scale(Reduction reduction, std::size_t m) {
  return reduction == Reduction::kMean ? 1.0 / static_cast<double>(m) : 1.0;
}

}  // namespace

TclForwardResult tcl_forward(const EmbeddingBatch& batch, const CenterBank& centers,
                             double margin, Reduction reduction, OpCounts* counts) {
  if (centers.num_classes() < 2) throw ContractError("TCL undefined without a negative center");
  require(margin >= 0.0, "margin must be non-negative");
  check_against_centers(batch, centers);

  const std::size_t m = batch.size();
  const int k = static_cast<int>(centers.num_classes());
  TclForwardResult out;
  out.reduction = reduction;
  out.per_sample_loss.resize(m);
  out.nearest_negative.resize(m);
  out.active.resize(m);

  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const auto f = batch.features.row(i);
    const int y = batch.labels[i];
    const double d_pos = half_sq_dist(f, centers.centers.row(y));
    if (counts) ++counts->positive_distances;

    double d_neg = std::numeric_limits<double>::infinity();
    int q = -1;
    for (int j = 0; j < k; ++j) {
      if (j == y) continue;
      const double d = half_sq_dist(f, centers.centers.row(j));
      if (counts) ++counts->negative_distances;
      if (d < d_neg) {  // strict: ties keep the lowest index
        d_neg = d;
        q = j;
      }
    }
    const double hinge = std::max(d_pos + margin - d_neg, 0.0);
    out.per_sample_loss[i] = hinge;
    out.nearest_negative[i] = q;
    out.active[i] = hinge > 0.0;
    total += hinge;
  }
  out.loss = total * reduction_scale(reduction, m);
  return out;
}

Matrix tcl_backward(const TclForwardResult& result, const EmbeddingBatch& batch,
                    const CenterBank& centers) {
  const std::size_t m = batch.size();
  require(result.active.size() == m, "forward result does not match batch");
  const double scale = reduction_scale(result.reduction, m);
  Matrix grad(m, centers.dim());
  for (std::size_t i = 0; i < m; ++i) {
    if (!result.active[i]) continue;
    const auto c_neg = centers.centers.row(result.nearest_negative[i]);
    const auto c_pos = centers.centers.row(batch.labels[i]);
    auto g = grad.row(i);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] = (c_neg[k] - c_pos[k]) * scale;
  }
  return grad;
}

Matrix tcl_center_update(const TclForwardResult& result, const EmbeddingBatch& batch,
                         const CenterBank& centers) {
  const std::size_t m = batch.size();
  const std::size_t k = centers.num_classes();
  const std::size_t d = centers.dim();
  require(result.active.size() == m, "forward result does not match batch");

  Matrix pull(k, d), push(k, d);
  std::vector<double> pull_count(k, 0.0), push_count(k, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    if (!result.active[i]) continue;
    const auto f = batch.features.row(i);
    const auto y = static_cast<std::size_t>(batch.labels[i]);
    const auto q = static_cast<std::size_t>(result.nearest_negative[i]);
    for (std::size_t c = 0; c < d; ++c) {
      pull(y, c) += f[c] - centers.centers(y, c);
      push(q, c) += f[c] - centers.centers(q, c);
    }
    pull_count[y] += 1.0;
    push_count[q] += 1.0;
  }

  Matrix delta(k, d);
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t c = 0; c < d; ++c) {
      delta(j, c) = pull(j, c) / (1.0 + pull_count[j]) - push(j, c) / (1.0 + push_count[j]);
    }
  }
  return delta;
}

LossResult center_loss(const EmbeddingBatch& batch, const CenterBank& centers,
                       Reduction reduction) {
  check_against_centers(batch, centers);
  const std::size_t m = batch.size();
  const std::size_t k = centers.num_classes();
  const std::size_t d = centers.dim();
  const double scale = reduction_scale(reduction, m);

  LossResult out;
  Matrix grad(m, d);
  Matrix pull(k, d);
  std::vector<double> count(k, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const auto f = batch.features.row(i);
    const auto y = static_cast<std::size_t>(batch.labels[i]);
    const auto c = centers.centers.row(y);
    total += half_sq_dist(f, c);
    auto g = grad.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      g[j] = (f[j] - c[j]) * scale;
      pull(y, j) += f[j] - c[j];
    }
    count[y] += 1.0;
  }
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t c = 0; c < d; ++c) pull(j, c) /= 1.0 + count[j];
  }
  out.loss = total * scale;
  out.metric_component = out.loss;
  out.grad_features = std::move(grad);
  out.center_update = std::move(pull);
  return out;
}

LossResult triplet_loss(const EmbeddingBatch& batch, double margin, TripletStrategy strategy,
                        OpCounts* counts) {
  check_batch(batch);
  require(margin >= 0.0, "margin must be non-negative");
  const std::size_t m = batch.size();
  const std::size_t d = batch.features.cols();
  const auto& f = batch.features;
  const auto& y = batch.labels;

  Matrix dist(m, m);
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = a + 1; b < m; ++b) {
      dist(a, b) = dist(b, a) = half_sq_dist(f.row(a), f.row(b));
      if (counts) ++counts->pair_distances;
    }
  }

  // Hinge terms that contribute gradient, recorded as (a, p, n).
  struct Term {
    std::size_t a, p, n;
  };
  std::vector<Term> active;
  double total = 0.0;
  std::size_t num_terms = 0;

  if (strategy == TripletStrategy::kBatchAll) {
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t p = 0; p < m; ++p) {
        if (p == a) continue;
        for (std::size_t n = 0; n < m; ++n) {
          if (counts) ++counts->triples_enumerated;
          if (y[p] != y[a] || y[n] == y[a]) continue;
          ++num_terms;
          const double h = margin + dist(a, p) - dist(a, n);
          if (h > 0.0) {
            total += h;
            active.push_back({a, p, n});
          }
        }
      }
    }
  } else {
    for (std::size_t a = 0; a < m; ++a) {
      std::size_t hard_p = m, hard_n = m;
      for (std::size_t j = 0; j < m; ++j) {
        if (j == a) continue;
        if (y[j] == y[a]) {
          if (hard_p == m || dist(a, j) > dist(a, hard_p)) hard_p = j;
        } else if (hard_n == m || dist(a, j) < dist(a, hard_n)) {
          hard_n = j;
        }
      }
      if (counts) counts->triples_enumerated += m - 1;
      if (hard_p == m || hard_n == m) continue;
      ++num_terms;
      const double h = margin + dist(a, hard_p) - dist(a, hard_n);
      if (h > 0.0) {
        total += h;
        active.push_back({a, hard_p, hard_n});
      }
    }
  }
  if (counts) counts->valid_triples += num_terms;
  if (num_terms == 0) throw DegenerateBatch("degenerate batch: no valid triplet");

  const double scale = 1.0 / static_cast<double>(num_terms);
  Matrix grad(m, d);
  for (const auto& t : active) {
    const auto fa = f.row(t.a), fp = f.row(t.p), fn = f.row(t.n);
    auto ga = grad.row(t.a), gp = grad.row(t.p), gn = grad.row(t.n);
    for (std::size_t c = 0; c < d; ++c) {
      ga[c] += scale * (fn[c] - fp[c]);
      gp[c] += scale * (fp[c] - fa[c]);
      gn[c] += scale * (fa[c] - fn[c]);
    }
  }

  LossResult out;
  out.loss = total * scale;
  out.metric_component = out.loss;
  out.grad_features = std::move(grad);
  return out;
}

LossResult softmax_ce(const Matrix& logits, std::span<const int> labels) {
  const std::size_t m = logits.rows();
  const std::size_t k = logits.cols();
  require(m >= 1 && labels.size() == m, "softmax: labels length does not match logits");
  require(logits.all_finite(), "softmax: non-finite logits");

  Matrix grad(m, k);
  double total = 0.0;
  const double scale = 1.0 / static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i) {
    const int y = labels[i];
    require(y >= 0 && static_cast<std::size_t>(y) < k, "label outside [0, K)");
    const auto z = logits.row(i);
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - zmax);
    const double log_norm = zmax + std::log(sum);
    total += log_norm - z[y];
    auto g = grad.row(i);
    for (std::size_t j = 0; j < k; ++j) g[j] = std::exp(z[j] - log_norm) * scale;
    g[y] -= scale;
  }

  LossResult out;
  out.loss = total * scale;
  out.softmax_component = out.loss;
  out.grad_logits = std::move(grad);
  return out;
}

LossResult combined_loss(const EmbeddingBatch& batch, const Matrix& logits,
                         const CenterBank& centers, const LossConfig& cfg) {
  cfg.validate();
  LossResult out;

  if (uses_softmax(cfg.kind)) {
    auto soft = softmax_ce(logits, batch.labels);
    out.softmax_component = soft.loss;
    out.loss = soft.loss;
    out.grad_logits = std::move(soft.grad_logits);
  }
  if (cfg.kind == LossKind::kSoftmax) return out;

  const bool joint = uses_softmax(cfg.kind);
  const double weight = joint ? cfg.lambda : 1.0;
  Matrix grad_features;

  switch (cfg.kind) {
    case LossKind::kTcl:
    case LossKind::kTclSoftmax: {
      const auto fwd = tcl_forward(batch, centers, cfg.margin, cfg.reduction);
      out.metric_component = fwd.loss;
      grad_features = tcl_backward(fwd, batch, centers);
      out.center_update = tcl_center_update(fwd, batch, centers);
      break;
    }
    case LossKind::kCenter:
    case LossKind::kCenterSoftmax: {
      auto res = center_loss(batch, centers, cfg.reduction);
      out.metric_component = res.loss;
      grad_features = std::move(*res.grad_features);
      out.center_update = std::move(res.center_update);
      break;
    }
    case LossKind::kTriplet: {
      auto res = triplet_loss(batch, cfg.margin, cfg.triplet_strategy);
      out.metric_component = res.loss;
      grad_features = std::move(*res.grad_features);
      break;
    }
    case LossKind::kSoftmax:
      break;
  }

  out.loss += weight * out.metric_component;
  if (weight == 0.0) {
    grad_features.fill(0.0);
  } else if (weight != 1.0) {
    for (double& g : grad_features.flat()) g *= weight;
  }
  out.grad_features = std::move(grad_features);
  return out;
}

std::vector<double> numeric_gradient(const ScalarFunction& fn, std::span<const double> point,
                                     double h) {
  require(h > 0.0, "finite difference step must be positive");
  std::vector<double> x(point.begin(), point.end());
  std::vector<double> grad(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double saved = x[k];
    x[k] = saved + h;
    const double up = fn(x);
    x[k] = saved - h;
    const double down = fn(x);
    x[k] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite difference: non-finite function value");
    }
    grad[k] = (up - down) / (2.0 * h);
  }
  return grad;
}

double finite_diff_check(const ScalarFunction& fn, std::span<const double> point,
                         std::span<const double> analytic, double h) {
  require(analytic.size() == point.size(), "finite difference: gradient size mismatch");
  const auto numeric = numeric_gradient(fn, point, h);
  double worst = 0.0;
  for (std::size_t k = 0; k < numeric.size(); ++k) {
    if (!std::isfinite(analytic[k])) throw NumericError("finite difference: non-finite gradient");
    const double err = std::abs(analytic[k] - numeric[k]) / std::max(1.0, std::abs(numeric[k]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace tcl
