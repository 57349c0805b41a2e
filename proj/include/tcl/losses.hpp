#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tcl/matrix.hpp"

namespace tcl {

/// Embeddings of one mini-batch with their class labels.
struct EmbeddingBatch {
  Matrix features;                       // M x d
  std::vector<int> labels;               // M entries in [0, K)
  std::vector<std::string> sample_ids;   // optional, M entries when present

  std::size_t size() const { return features.rows(); }
};

/// Learnable class centers, one row per class.
struct CenterBank {
  Matrix centers;  // K x d

  std::size_t num_classes() const { return centers.rows(); }
  std::size_t dim() const { return centers.cols(); }
};

enum class Reduction { kSum, kMean };
enum class TripletStrategy { kBatchAll, kBatchHard };
enum class LossKind { kSoftmax, kTriplet, kCenter, kTcl, kTclSoftmax, kCenterSoftmax };

std::string_view to_string(LossKind kind);
std::string_view to_string(Reduction reduction);
std::string_view to_string(TripletStrategy strategy);
LossKind parse_loss_kind(std::string_view text);
Reduction parse_reduction(std::string_view text);
TripletStrategy parse_triplet_strategy(std::string_view text);

bool uses_softmax(LossKind kind);
bool uses_centers(LossKind kind);

struct LossConfig {
  LossKind kind = LossKind::kTclSoftmax;
  double margin = 5.0;
  double lambda = 0.01;
  Reduction reduction = Reduction::kSum;
  TripletStrategy triplet_strategy = TripletStrategy::kBatchAll;

  void validate() const;
};

struct TclForwardResult {
  double loss = 0.0;
  std::vector<double> per_sample_loss;
  std::vector<int> nearest_negative;
  std::vector<bool> active;
  Reduction reduction = Reduction::kSum;
};

struct LossResult {
  double loss = 0.0;
  // Unweighted component values, reported in training curves.
  double softmax_component = 0.0;
  double metric_component = 0.0;
  std::optional<Matrix> grad_features;
  std::optional<Matrix> grad_logits;
  std::optional<Matrix> center_update;
};

// Distance-evaluation counters used to check the O(M K) vs O(M^3) claim.
struct OpCounts {
  std::size_t positive_distances = 0;
  std::size_t negative_distances = 0;
  std::size_t pair_distances = 0;
  std::size_t triples_enumerated = 0;
  std::size_t valid_triples = 0;
};

/// D(a, b) = 0.5 * ||a - b||^2
double half_sq_dist(std::span<const double> a, std::span<const double> b);

/// Triplet-center loss forward pass. Nearest-negative ties resolve to the lowest class index.
TclForwardResult tcl_forward(const EmbeddingBatch& batch, const CenterBank& centers,
                             double margin, Reduction reduction = Reduction::kSum,
                             OpCounts* counts = nullptr);

/// d L_tc / d f_i = (c_q - c_y) for active samples, zero otherwise.
Matrix tcl_backward(const TclForwardResult& result, const EmbeddingBatch& batch,
                    const CenterBank& centers);

/// Averaged center update direction; adding it to the centers lowers the loss.
Matrix tcl_center_update(const TclForwardResult& result, const EmbeddingBatch& batch,
                         const CenterBank& centers);

LossResult center_loss(const EmbeddingBatch& batch, const CenterBank& centers,
                       Reduction reduction = Reduction::kSum);

LossResult triplet_loss(const EmbeddingBatch& batch, double margin,
                        TripletStrategy strategy, OpCounts* counts = nullptr);

LossResult softmax_ce(const Matrix& logits, std::span<const int> labels);

/// Weighted sum lambda * L_metric + L_softmax for the joint kinds; the
/// standalone kinds (triplet, center, tcl) are returned with unit weight.
LossResult combined_loss(const EmbeddingBatch& batch, const Matrix& logits,
                         const CenterBank& centers, const LossConfig& cfg);

using ScalarFunction = std::function<double(std::span<const double>)>;

std::vector<double> numeric_gradient(const ScalarFunction& fn, std::span<const double> point,
                                     double h);

/// Max over coordinates of |analytic - numeric| / max(1, |numeric|), using
/// central differences of step h.
double finite_diff_check(const ScalarFunction& fn, std::span<const double> point,
                         std::span<const double> analytic, double h);

}  // namespace tcl
