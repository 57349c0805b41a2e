#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tcl/losses.hpp"
#include "tcl/model.hpp"

namespace tcl {

// Random configurations kept at least `gap` away from every hinge kink and
// every argmin/argmax tie, so central differences see a smooth function.
struct TclSample {
  EmbeddingBatch batch;
  CenterBank centers;
  double margin = 5.0;
};

bool tcl_is_smooth(const EmbeddingBatch& batch, const CenterBank& centers, double margin,
                   double gap);
TclSample sample_tcl(std::mt19937_64& rng, double gap = 1e-3, bool all_active = false);

bool triplet_is_smooth(const EmbeddingBatch& batch, double margin, TripletStrategy strategy,
                       double gap);
EmbeddingBatch sample_triplet_batch(std::mt19937_64& rng, double margin,
                                    TripletStrategy strategy, double gap = 1e-3);

// Max relative error of one analytic gradient against central differences.
double tcl_feature_error(const TclSample& s, Reduction reduction, double h);
double triplet_feature_error(const EmbeddingBatch& batch, double margin,
                             TripletStrategy strategy, double h);
double center_feature_error(const EmbeddingBatch& batch, const CenterBank& centers, double h);
double softmax_logit_error(const Matrix& logits, const std::vector<int>& labels, double h);

struct NetworkCheck {
  double param_error = 0.0;
  double input_error = 0.0;
  std::size_t num_params = 0;
};

/// Full-network check of lambda * TCL + softmax on a small two-domain net.
NetworkCheck network_gradient_check(std::uint64_t seed, double h = 1e-5);

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  double threshold = 0.0;
  std::size_t configs = 0;

  bool pass() const { return max_rel_error < threshold; }
};

struct GradCheckOptions {
  std::uint64_t seed = 0;
  std::size_t configs = 100;
  double h = 1e-5;
};

std::vector<GradCheckEntry> run_gradcheck(const GradCheckOptions& options);

}  // namespace tcl
