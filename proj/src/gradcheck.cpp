#include "tcl/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tcl/error.hpp"

namespace tcl {

namespace {

std::size_t uniform_int(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Matrix gaussian_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double stddev) {
  std::normal_distribution<double> normal(0.0, stddev);
  Matrix m(rows, cols);
  for (double& v : m.flat()) v = normal(rng);
  return m;
}

// Smallest two values of a list; the second is +inf when absent.
std::pair<double, double> two_smallest(const std::vector<double>& v) {
  double a = std::numeric_limits<double>::infinity(), b = a;
  for (double x : v) {
    if (x < a) {
      b = a;
      a = x;
    } else if (x < b) {
      b = x;
    }
  }
  return {a, b};
}

}  // namespace

bool tcl_is_smooth(const EmbeddingBatch& batch, const CenterBank& centers, double margin,
                   double gap) {
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto f = batch.features.row(i);
    const int y = batch.labels[i];
    std::vector<double> negatives;
    for (std::size_t j = 0; j < centers.num_classes(); ++j) {
      if (static_cast<int>(j) != y) negatives.push_back(half_sq_dist(f, centers.centers.row(j)));
    }
    const auto [best, second] = two_smallest(negatives);
    if (second - best <= gap) return false;
    const double arg = half_sq_dist(f, centers.centers.row(y)) + margin - best;
    if (std::abs(arg) <= gap) return false;
  }
  return true;
}

TclSample sample_tcl(std::mt19937_64& rng, double gap, bool all_active) {
  for (;;) {
    const std::size_t k = uniform_int(rng, 2, 5);
    const std::size_t d = uniform_int(rng, 1, 6);
    const std::size_t m = uniform_int(rng, 1, 8);
    TclSample s;
    s.centers.centers = gaussian_matrix(rng, k, d, 1.5);
    s.batch.features = gaussian_matrix(rng, m, d, 1.5);
    s.batch.labels.resize(m);
    for (auto& y : s.batch.labels) y = static_cast<int>(uniform_int(rng, 0, k - 1));
    s.margin = all_active ? 5.0 + 5.0 * std::uniform_real_distribution<double>()(rng)
                          : 0.5 + 2.5 * std::uniform_real_distribution<double>()(rng);
    if (!tcl_is_smooth(s.batch, s.centers, s.margin, gap)) continue;
    const auto fwd = tcl_forward(s.batch, s.centers, s.margin);
    const auto n_active = std::count(fwd.active.begin(), fwd.active.end(), true);
    if (n_active == 0) continue;
    if (all_active && n_active != static_cast<long>(m)) continue;
    return s;
  }
}

bool triplet_is_smooth(const EmbeddingBatch& batch, double margin, TripletStrategy strategy,
                       double gap) {
  const std::size_t m = batch.size();
  const auto& y = batch.labels;
  auto dist = [&](std::size_t a, std::size_t b) {
    return half_sq_dist(batch.features.row(a), batch.features.row(b));
  };
  for (std::size_t a = 0; a < m; ++a) {
    std::vector<double> pos, neg;
    for (std::size_t j = 0; j < m; ++j) {
      if (j == a) continue;
      (y[j] == y[a] ? pos : neg).push_back(dist(a, j));
    }
    if (pos.empty() || neg.empty()) continue;
    if (strategy == TripletStrategy::kBatchAll) {
      for (double dp : pos) {
        for (double dn : neg) {
          if (std::abs(margin + dp - dn) <= gap) return false;
        }
      }
    } else {
      std::vector<double> neg_pos(pos.size());
      std::transform(pos.begin(), pos.end(), neg_pos.begin(), [](double v) { return -v; });
      const auto [p1, p2] = two_smallest(neg_pos);
      const auto [n1, n2] = two_smallest(neg);
      if (p2 - p1 <= gap || n2 - n1 <= gap) return false;
      if (std::abs(margin - p1 - n1) <= gap) return false;
    }
  }
  return true;
}

EmbeddingBatch sample_triplet_batch(std::mt19937_64& rng, double margin,
                                    TripletStrategy strategy, double gap) {
  for (;;) {
    const std::size_t m = uniform_int(rng, 3, 8);
    const std::size_t d = uniform_int(rng, 1, 5);
    const std::size_t classes = uniform_int(rng, 2, 3);
    EmbeddingBatch batch;
    batch.features = gaussian_matrix(rng, m, d, 1.5);
    batch.labels.resize(m);
    for (auto& y : batch.labels) y = static_cast<int>(uniform_int(rng, 0, classes - 1));
    if (!triplet_is_smooth(batch, margin, strategy, gap)) continue;
    try {
      const auto res = triplet_loss(batch, margin, strategy);
      if (res.loss <= 0.0) continue;
    } catch (const DegenerateBatch&) {
      continue;
    }
    return batch;
  }
}

double tcl_feature_error(const TclSample& s, Reduction reduction, double h) {
  const auto fwd = tcl_forward(s.batch, s.centers, s.margin, reduction);
  const auto grad = tcl_backward(fwd, s.batch, s.centers);
  EmbeddingBatch probe = s.batch;
  auto fn = [&](std::span<const double> x) {
    std::copy(x.begin(), x.end(), probe.features.flat().begin());
    return tcl_forward(probe, s.centers, s.margin, reduction).loss;
  };
  return finite_diff_check(fn, s.batch.features.flat(), grad.flat(), h);
}

double triplet_feature_error(const EmbeddingBatch& batch, double margin,
                             TripletStrategy strategy, double h) {
  const auto res = triplet_loss(batch, margin, strategy);
  EmbeddingBatch probe = batch;
  auto fn = [&](std::span<const double> x) {
    std::copy(x.begin(), x.end(), probe.features.flat().begin());
    return triplet_loss(probe, margin, strategy).loss;
  };
  return finite_diff_check(fn, batch.features.flat(), res.grad_features->flat(), h);
}

double center_feature_error(const EmbeddingBatch& batch, const CenterBank& centers, double h) {
  const auto res = center_loss(batch, centers);
  EmbeddingBatch probe = batch;
  auto fn = [&](std::span<const double> x) {
    std::copy(x.begin(), x.end(), probe.features.flat().begin());
    return center_loss(probe, centers).loss;
  };
  return finite_diff_check(fn, batch.features.flat(), res.grad_features->flat(), h);
}

double softmax_logit_error(const Matrix& logits, const std::vector<int>& labels, double h) {
  const auto res = softmax_ce(logits, labels);
  Matrix probe = logits;
  auto fn = [&](std::span<const double> x) {
    std::copy(x.begin(), x.end(), probe.flat().begin());
    return softmax_ce(probe, labels).loss;
  };
  return finite_diff_check(fn, logits.flat(), res.grad_logits->flat(), h);
}

namespace {

struct ToyProblem {
  NetworkParams params;
  CenterBank centers;
  std::vector<Matrix> views;
  std::vector<std::size_t> domains;
  std::vector<int> labels;
  LossConfig loss;
};

ToyProblem make_toy(std::uint64_t seed) {
  NetworkDims dims;
  dims.input_dim = 4;
  dims.encoder_widths = {6, 5};
  dims.head_widths = {5, 3};
  dims.num_classes = 3;
  dims.num_domains = 2;
  dims.init_std = 0.5;

  ToyProblem toy;
  toy.params = init_params(seed, dims);
  std::mt19937_64 rng(seed ^ 0xabcdefULL);
  toy.centers.centers = gaussian_matrix(rng, 3, 3, 1.0);
  for (std::size_t i = 0; i < 6; ++i) {
    const std::size_t domain = i == 5 ? 1 : 0;
    toy.views.push_back(gaussian_matrix(rng, domain == 0 ? 3 : 1, 4, 1.0));
    toy.domains.push_back(domain);
    toy.labels.push_back(static_cast<int>(i % 3));
  }
  toy.loss.kind = LossKind::kTclSoftmax;
  toy.loss.margin = 1.0;
  toy.loss.lambda = 0.5;
  return toy;
}

struct ToyForward {
  std::vector<ForwardTrace> traces;
  EmbeddingBatch batch;
  Matrix logits;
};

ToyForward toy_forward(const ToyProblem& toy, const NetworkParams& params,
                       const std::vector<Matrix>& views) {
  ToyForward out;
  const std::size_t m = views.size();
  out.batch.features = Matrix(m, params.embedding_dim());
  out.batch.labels = toy.labels;
  out.logits = Matrix(m, params.num_classes());
  for (std::size_t i = 0; i < m; ++i) {
    out.traces.push_back(forward_object(views[i], params, toy.domains[i]));
    std::copy(out.traces[i].embedding.begin(), out.traces[i].embedding.end(),
              out.batch.features.row(i).begin());
    std::copy(out.traces[i].logits.begin(), out.traces[i].logits.end(), out.logits.row(i).begin());
  }
  return out;
}

bool mlp_is_smooth(const MlpTrace& trace, double gap) {
  for (std::size_t l = 0; l + 1 < trace.pre.size(); ++l) {
    for (double z : trace.pre[l]) {
      if (std::abs(z) <= gap) return false;
    }
  }
  return true;
}

bool toy_is_smooth(const ToyProblem& toy, const ToyForward& fwd, double gap) {
  for (const auto& trace : fwd.traces) {
    for (const auto& v : trace.views) {
      if (!mlp_is_smooth(v, gap)) return false;
    }
    if (!mlp_is_smooth(trace.head, gap)) return false;
    for (std::size_t k = 0; k < trace.pool.pooled.size(); ++k) {
      for (std::size_t v = 0; v < trace.views.size(); ++v) {
        if (v == trace.pool.argmax[k]) continue;
        if (trace.pool.pooled[k] - trace.views[v].activations.back()[k] <= gap) return false;
      }
    }
  }
  return tcl_is_smooth(fwd.batch, toy.centers, toy.loss.margin, gap);
}

double toy_loss(const ToyProblem& toy, const NetworkParams& params,
                const std::vector<Matrix>& views) {
  const auto fwd = toy_forward(toy, params, views);
  return combined_loss(fwd.batch, fwd.logits, toy.centers, toy.loss).loss;
}

}  // namespace

NetworkCheck network_gradient_check(std::uint64_t seed, double h) {
  ToyProblem toy;
  ToyForward fwd;
  for (std::uint64_t s = seed;; ++s) {
    toy = make_toy(s);
    fwd = toy_forward(toy, toy.params, toy.views);
    if (toy_is_smooth(toy, fwd, 1e-3)) break;
  }

  const auto res = combined_loss(fwd.batch, fwd.logits, toy.centers, toy.loss);
  NetworkParams grads = zeros_like(toy.params);
  std::vector<double> input_grad;
  for (std::size_t i = 0; i < fwd.traces.size(); ++i) {
    Matrix gv;
    backward_object(fwd.traces[i], res.grad_features->row(i), res.grad_logits->row(i), toy.params,
                    grads, &gv);
    input_grad.insert(input_grad.end(), gv.flat().begin(), gv.flat().end());
  }

  NetworkCheck out;
  out.num_params = param_count(toy.params);
  NetworkParams probe = toy.params;
  auto param_fn = [&](std::span<const double> x) {
    unflatten(x, probe);
    return toy_loss(toy, probe, toy.views);
  };
  out.param_error = finite_diff_check(param_fn, flatten(toy.params), flatten(grads), h);

  std::vector<double> flat_views;
  for (const auto& v : toy.views) flat_views.insert(flat_views.end(), v.flat().begin(), v.flat().end());
  std::vector<Matrix> probe_views = toy.views;
  auto input_fn = [&](std::span<const double> x) {
    std::size_t offset = 0;
    for (auto& v : probe_views) {
      std::copy_n(x.begin() + offset, v.size(), v.flat().begin());
      offset += v.size();
    }
    return toy_loss(toy, toy.params, probe_views);
  };
  out.input_error = finite_diff_check(input_fn, flat_views, input_grad, h);
  return out;
}

std::vector<GradCheckEntry> run_gradcheck(const GradCheckOptions& options) {
  std::mt19937_64 rng(options.seed);
  const double h = options.h;
  const std::size_t n = options.configs;

  GradCheckEntry tcl_sum{"tcl/sum", 0.0, 1e-5, n};
  GradCheckEntry tcl_mean{"tcl/mean", 0.0, 1e-5, n};
  GradCheckEntry trip_all{"triplet/batch-all", 0.0, 1e-5, n};
  GradCheckEntry trip_hard{"triplet/batch-hard", 0.0, 1e-5, n};
  GradCheckEntry center{"center", 0.0, 1e-5, n};
  GradCheckEntry softmax{"softmax", 0.0, 1e-6, n};
  for (std::size_t c = 0; c < n; ++c) {
    const auto s = sample_tcl(rng);
    tcl_sum.max_rel_error = std::max(tcl_sum.max_rel_error, tcl_feature_error(s, Reduction::kSum, h));
    tcl_mean.max_rel_error =
        std::max(tcl_mean.max_rel_error, tcl_feature_error(s, Reduction::kMean, h));
    center.max_rel_error =
        std::max(center.max_rel_error, center_feature_error(s.batch, s.centers, h));

    const auto ba = sample_triplet_batch(rng, 1.0, TripletStrategy::kBatchAll);
    trip_all.max_rel_error = std::max(
        trip_all.max_rel_error, triplet_feature_error(ba, 1.0, TripletStrategy::kBatchAll, h));
    const auto bh = sample_triplet_batch(rng, 1.0, TripletStrategy::kBatchHard);
    trip_hard.max_rel_error = std::max(
        trip_hard.max_rel_error, triplet_feature_error(bh, 1.0, TripletStrategy::kBatchHard, h));

    const std::size_t m = uniform_int(rng, 1, 6), k = uniform_int(rng, 2, 6);
    const Matrix logits = gaussian_matrix(rng, m, k, 3.0);
    std::vector<int> labels(m);
    for (auto& y : labels) y = static_cast<int>(uniform_int(rng, 0, k - 1));
    softmax.max_rel_error = std::max(softmax.max_rel_error, softmax_logit_error(logits, labels, h));
  }

  const auto net = network_gradient_check(options.seed, h);
  GradCheckEntry net_params{"network/params", net.param_error, 1e-4, 1};
  GradCheckEntry net_inputs{"network/inputs", net.input_error, 1e-4, 1};
  return {tcl_sum, tcl_mean, trip_all, trip_hard, center, softmax, net_params, net_inputs};
}

}  // namespace tcl
