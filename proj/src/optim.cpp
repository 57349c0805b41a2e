#include "tcl/optim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <string>

#include "tcl/error.hpp"

namespace tcl {

void SgdConfig::validate() const {
  for (double v : {lr_pre_pool, lr_post_pool, momentum, weight_decay}) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ConfigError("optimizer: rates, momentum and weight decay must be non-negative");
    }
  }
}

void CenterUpdateConfig::validate() const {
  if (!(lr_centers >= 0.0) || !std::isfinite(lr_centers)) {
    throw ConfigError("optimizer: lr_centers must be non-negative");
  }
  if (!(clip > 0.0)) throw ConfigError("optimizer: center clip must be positive");
}

void sgd_step(NetworkParams& params, const NetworkParams& grads, OptimizerState& state,
              const SgdConfig& cfg) {
  auto theta = param_arrays(params);
  const auto g = param_arrays(grads);
  auto v = param_arrays(state.velocity);
  const auto groups = param_groups(params);
  require(g.size() == theta.size() && v.size() == theta.size(), "sgd: parameter layout mismatch");

  for (std::size_t a = 0; a < theta.size(); ++a) {
    require(g[a].size() == theta[a].size() && v[a].size() == theta[a].size(),
            "sgd: array shape mismatch");
    const double lr = groups[a] == ParamGroup::kPrePool ? cfg.lr_pre_pool : cfg.lr_post_pool;
    for (std::size_t k = 0; k < theta[a].size(); ++k) {
      const double grad = g[a][k] + cfg.weight_decay * theta[a][k];
      v[a][k] = cfg.momentum * v[a][k] + grad;
      theta[a][k] -= lr * v[a][k];
    }
  }
}

void apply_center_update(CenterBank& centers, const Matrix& delta, const CenterUpdateConfig& cfg) {
  require(delta.same_shape(centers.centers), "center update shape mismatch");
  auto c = centers.centers.flat();
  const auto d = delta.flat();
  for (std::size_t k = 0; k < c.size(); ++k) {
    c[k] += cfg.lr_centers * std::clamp(d[k], -cfg.clip, cfg.clip);
  }
}

CenterBank init_centers(std::uint64_t seed, std::size_t num_classes, std::size_t dim,
                        double stddev) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, stddev);
  CenterBank bank{Matrix(num_classes, dim)};
  for (double& v : bank.centers.flat()) v = normal(rng);
  return bank;
}

namespace {

bool all_finite(const NetworkParams& params) {
  for (auto span : param_arrays(params)) {
    for (double v : span) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

TrainResult train(NetworkParams params, CenterBank centers,
                  const std::vector<MultiViewObject>& objects, const TrainOptions& options,
                  const EpochObserver& observer) {
  const auto start = std::chrono::steady_clock::now();
  options.loss.validate();
  options.sgd.validate();
  options.centers.validate();
  params.validate();
  require(!objects.empty(), "train: empty dataset");
  require(options.batch_size >= 1, "train: batch_size must be >= 1");
  const LossKind kind = options.loss.kind;
  if (kind != LossKind::kSoftmax) {
    require(options.batch_size >= 2, "train: metric losses need batch_size >= 2");
  }
  if (uses_centers(kind)) {
    require(centers.num_classes() == params.num_classes() &&
                centers.dim() == params.embedding_dim(),
            "train: center bank does not match the network");
  }

  OptimizerState state = OptimizerState::zeros_for(params);
  TrainRunStats stats;

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    EpochStats es;
    std::size_t correct = 0, seen = 0, used_batches = 0;
    for (const auto& batch_idx : batches(objects.size(), options.batch_size, options.seed, epoch)) {
      const std::size_t m = batch_idx.size();
      std::vector<ForwardTrace> traces;
      traces.reserve(m);
      EmbeddingBatch batch{Matrix(m, params.embedding_dim()), std::vector<int>(m), {}};
      Matrix logits(m, params.num_classes());
      for (std::size_t i = 0; i < m; ++i) {
        const auto& obj = objects[batch_idx[i]];
        traces.push_back(forward_object(obj.views, params, static_cast<std::size_t>(obj.domain)));
        std::copy(traces.back().embedding.begin(), traces.back().embedding.end(),
                  batch.features.row(i).begin());
        std::copy(traces.back().logits.begin(), traces.back().logits.end(),
                  logits.row(i).begin());
        batch.labels[i] = obj.label;
        if (argmax(logits.row(i)) == static_cast<std::size_t>(obj.label)) ++correct;
        ++seen;
      }

      if (!batch.features.all_finite() || !logits.all_finite()) {
        throw NumericError("non-finite network output at epoch " + std::to_string(epoch));
      }
      LossResult res;
      try {
        res = combined_loss(batch, logits, centers, options.loss);
      } catch (const DegenerateBatch&) {
        ++es.skipped_batches;
        continue;
      }
      if (!std::isfinite(res.loss)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch));
      }

      const auto grads = backward_batch(traces, res.grad_features.value_or(Matrix()),
                                        res.grad_logits.value_or(Matrix()), params);
      sgd_step(params, grads, state, options.sgd);
      if (res.center_update) apply_center_update(centers, *res.center_update, options.centers);
      if (!all_finite(params) || !centers.centers.all_finite()) {
        throw NumericError("non-finite parameters at epoch " + std::to_string(epoch));
      }

      es.total += res.loss;
      es.softmax += res.softmax_component;
      es.metric += res.metric_component;
      ++used_batches;
    }
    if (used_batches > 0) {
      es.total /= static_cast<double>(used_batches);
      es.softmax /= static_cast<double>(used_batches);
      es.metric /= static_cast<double>(used_batches);
    }
    es.accuracy = seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
    stats.epochs.push_back(es);
    if (observer) observer(epoch, es);
  }

  stats.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(params), std::move(centers), std::move(stats)};
}

Matrix embed_objects(const NetworkParams& params, const std::vector<MultiViewObject>& objects) {
  Matrix out(objects.size(), params.embedding_dim());
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const auto trace =
        forward_object(objects[i].views, params, static_cast<std::size_t>(objects[i].domain));
    std::copy(trace.embedding.begin(), trace.embedding.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace tcl
