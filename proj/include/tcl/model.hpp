#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tcl/matrix.hpp"

namespace tcl {

struct DenseLayer {
  Matrix weight;              // out x in
  std::vector<double> bias;   // out

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// Rectified-linear between layers, identity after the last one.
struct MlpParams {
  std::vector<DenseLayer> layers;

  std::size_t in_dim() const { return layers.front().weight.cols(); }
  std::size_t out_dim() const { return layers.back().weight.rows(); }
  void validate() const;

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

/// Per-view encoder(s) -> max view pooling -> embedding head, plus a linear
/// classifier on the embedding. One encoder per input domain; the head and
/// classifier are shared.
struct NetworkParams {
  std::vector<MlpParams> view_encoders;
  MlpParams embed_head;
  DenseLayer classifier;

  std::size_t input_dim() const { return view_encoders.front().in_dim(); }
  std::size_t embedding_dim() const { return embed_head.out_dim(); }
  std::size_t num_classes() const { return classifier.weight.rows(); }
  std::size_t num_domains() const { return view_encoders.size(); }
  void validate() const;

  friend bool operator==(const NetworkParams&, const NetworkParams&) = default;
};

struct NetworkDims {
  std::size_t input_dim = 32;
  std::vector<std::size_t> encoder_widths{64};
  std::vector<std::size_t> head_widths{64};  // last entry is the embedding dimension d
  std::size_t num_classes = 20;
  std::size_t num_domains = 1;
  double init_std = 0.01;
};

// Parameters before the pooling layer learn at their own rate.
enum class ParamGroup { kPrePool, kPostPool };

NetworkParams init_params(std::uint64_t seed, const NetworkDims& dims);
NetworkParams zeros_like(const NetworkParams& params);

/// Every parameter array in a fixed order, with its group.
std::vector<std::span<double>> param_arrays(NetworkParams& params);
std::vector<std::span<const double>> param_arrays(const NetworkParams& params);
std::vector<ParamGroup> param_groups(const NetworkParams& params);
std::size_t param_count(const NetworkParams& params);
std::vector<double> flatten(const NetworkParams& params);
void unflatten(std::span<const double> flat, NetworkParams& params);

struct MlpTrace {
  std::vector<std::vector<double>> pre;          // per layer, before activation
  std::vector<std::vector<double>> activations;  // [0] = input, [l + 1] = output of layer l
};

struct PoolResult {
  std::vector<double> pooled;
  std::vector<std::size_t> argmax;  // winning view per dimension
};

struct ForwardTrace {
  std::size_t domain = 0;
  std::vector<MlpTrace> views;
  PoolResult pool;
  MlpTrace head;
  std::vector<double> embedding;
  std::vector<double> logits;
};

MlpTrace mlp_forward(const MlpParams& mlp, std::span<const double> input);

/// Element-wise max over rows; ties go to the lowest view index.
PoolResult view_pool(const Matrix& view_features);

ForwardTrace forward_object(const Matrix& views, const NetworkParams& params,
                            std::size_t domain = 0);

/// Accumulates parameter gradients of one object into `grads`. When
/// `grad_views` is given it receives the gradient w.r.t. the input views.
void backward_object(const ForwardTrace& trace, std::span<const double> grad_embedding,
                     std::span<const double> grad_logits, const NetworkParams& params,
                     NetworkParams& grads, Matrix* grad_views = nullptr);

/// Sum of per-object gradients, accumulated in trace order.
NetworkParams backward_batch(std::span<const ForwardTrace> traces, const Matrix& grad_embeddings,
                             const Matrix& grad_logits, const NetworkParams& params);

}  // namespace tcl
