#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "tcl/data.hpp"
#include "tcl/losses.hpp"
#include "tcl/model.hpp"

namespace tcl {

struct SgdConfig {
  double lr_pre_pool = 1e-4;
  double lr_post_pool = 1e-3;  // post-pool layers and classifier
  double momentum = 0.9;
  double weight_decay = 1e-4;

  void validate() const;
};

struct CenterUpdateConfig {
  double lr_centers = 0.1;
  double clip = 0.01;  // element-wise clamp on the update direction

  void validate() const;
};

struct OptimizerState {
  NetworkParams velocity;

  static OptimizerState zeros_for(const NetworkParams& params) { return {zeros_like(params)}; }
};

struct EpochStats {
  double total = 0.0;      // mean over batches
  double softmax = 0.0;
  double metric = 0.0;     // unweighted tcl/center/triplet component
  double accuracy = 0.0;   // fraction of training objects classified correctly
  std::size_t skipped_batches = 0;
};

struct TrainRunStats {
  std::vector<EpochStats> epochs;
  double wall_seconds = 0.0;
};

/// v <- momentum v + (g + wd theta); theta <- theta - lr v, with the learning
/// rate chosen by each array's group.
void sgd_step(NetworkParams& params, const NetworkParams& grads, OptimizerState& state,
              const SgdConfig& cfg);

/// c <- c + lr * clamp(delta, -clip, clip). No momentum, no weight decay.
void apply_center_update(CenterBank& centers, const Matrix& delta, const CenterUpdateConfig& cfg);

/// Random N(0, std^2) centers.
CenterBank init_centers(std::uint64_t seed, std::size_t num_classes, std::size_t dim,
                        double stddev = 0.01);

struct TrainOptions {
  LossConfig loss;
  SgdConfig sgd;
  CenterUpdateConfig centers;
  std::size_t epochs = 50;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
};

struct TrainResult {
  NetworkParams params;
  CenterBank centers;
  TrainRunStats stats;
};

using EpochObserver = std::function<void(std::size_t epoch, const EpochStats&)>;

TrainResult train(NetworkParams params, CenterBank centers,
                  const std::vector<MultiViewObject>& objects, const TrainOptions& options,
                  const EpochObserver& observer = {});

/// Embeddings of every object (rows in input order).
Matrix embed_objects(const NetworkParams& params, const std::vector<MultiViewObject>& objects);

}  // namespace tcl
