#include "tcl/model.hpp"

#include <algorithm>
#include <random>

#include "tcl/error.hpp"

namespace tcl {

void MlpParams::validate() const {
  require(!layers.empty(), "mlp has no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    require(layer.weight.rows() > 0 && layer.weight.cols() > 0, "empty layer");
    require(layer.bias.size() == layer.weight.rows(), "bias length does not match layer width");
    if (l > 0) {
      require(layer.weight.cols() == layers[l - 1].weight.rows(), "layer dimensions do not chain");
    }
  }
}

void NetworkParams::validate() const {
  require(!view_encoders.empty(), "network has no view encoder");
  for (const auto& enc : view_encoders) {
    enc.validate();
    require(enc.in_dim() == view_encoders.front().in_dim() &&
                enc.out_dim() == view_encoders.front().out_dim(),
            "view encoders disagree on shape");
  }
  embed_head.validate();
  require(embed_head.in_dim() == view_encoders.front().out_dim(),
          "embedding head does not chain with the view encoder");
  require(classifier.weight.cols() == embed_head.out_dim(),
          "classifier does not chain with the embedding head");
  require(classifier.bias.size() == classifier.weight.rows(), "classifier bias length");
  require(classifier.weight.rows() >= 1, "classifier has no classes");
}

namespace {

MlpParams make_mlp(std::size_t in, const std::vector<std::size_t>& widths,
                   std::normal_distribution<double>& normal, std::mt19937_64& rng) {
  MlpParams mlp;
  for (std::size_t out : widths) {
    require(in > 0 && out > 0, "layer widths must be positive");
    DenseLayer layer{Matrix(out, in), std::vector<double>(out, 0.0)};
    for (double& w : layer.weight.flat()) w = normal(rng);
    mlp.layers.push_back(std::move(layer));
    in = out;
  }
  return mlp;
}

}  // namespace

NetworkParams init_params(std::uint64_t seed, const NetworkDims& dims) {
  require(!dims.encoder_widths.empty() && !dims.head_widths.empty(),
          "encoder and head need at least one layer each");
  require(dims.num_classes >= 1, "need at least one class");
  require(dims.num_domains >= 1, "need at least one domain");
  require(dims.init_std >= 0.0, "init_std must be non-negative");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, dims.init_std);
  NetworkParams params;
  for (std::size_t d = 0; d < dims.num_domains; ++d) {
    params.view_encoders.push_back(make_mlp(dims.input_dim, dims.encoder_widths, normal, rng));
  }
  params.embed_head = make_mlp(dims.encoder_widths.back(), dims.head_widths, normal, rng);
  params.classifier = make_mlp(dims.head_widths.back(), {dims.num_classes}, normal, rng).layers[0];
  params.validate();
  return params;
}

NetworkParams zeros_like(const NetworkParams& params) {
  NetworkParams z = params;
  for (auto span : param_arrays(z)) std::fill(span.begin(), span.end(), 0.0);
  return z;
}

namespace {

template <typename Params, typename Span>
std::vector<Span> collect(Params& params) {
  std::vector<Span> out;
  auto add_mlp = [&](auto& mlp) {
    for (auto& layer : mlp.layers) {
      out.push_back(Span(layer.weight.flat()));
      out.push_back(Span(layer.bias));
    }
  };
  for (auto& enc : params.view_encoders) add_mlp(enc);
  add_mlp(params.embed_head);
  out.push_back(Span(params.classifier.weight.flat()));
  out.push_back(Span(params.classifier.bias));
  return out;
}

}  // namespace

std::vector<std::span<double>> param_arrays(NetworkParams& params) {
  return collect<NetworkParams, std::span<double>>(params);
}

std::vector<std::span<const double>> param_arrays(const NetworkParams& params) {
  return collect<const NetworkParams, std::span<const double>>(params);
}

std::vector<ParamGroup> param_groups(const NetworkParams& params) {
  std::vector<ParamGroup> groups;
  for (const auto& enc : params.view_encoders) {
    groups.insert(groups.end(), 2 * enc.layers.size(), ParamGroup::kPrePool);
  }
  groups.insert(groups.end(), 2 * params.embed_head.layers.size() + 2, ParamGroup::kPostPool);
  return groups;
}

std::size_t param_count(const NetworkParams& params) {
  std::size_t n = 0;
  for (auto span : param_arrays(params)) n += span.size();
  return n;
}

std::vector<double> flatten(const NetworkParams& params) {
  std::vector<double> flat;
  flat.reserve(param_count(params));
  for (auto span : param_arrays(params)) flat.insert(flat.end(), span.begin(), span.end());
  return flat;
}

void unflatten(std::span<const double> flat, NetworkParams& params) {
  require(flat.size() == param_count(params), "flat parameter vector has the wrong length");
  std::size_t offset = 0;
  for (auto span : param_arrays(params)) {
    std::copy_n(flat.begin() + offset, span.size(), span.begin());
    offset += span.size();
  }
}

MlpTrace mlp_forward(const MlpParams& mlp, std::span<const double> input) {
  require(input.size() == mlp.in_dim(), "mlp input dimension mismatch");
  MlpTrace trace;
  trace.activations.emplace_back(input.begin(), input.end());
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    const auto& layer = mlp.layers[l];
    std::vector<double> z(layer.weight.rows());
    affine(layer.weight, layer.bias, trace.activations.back(), z);
    std::vector<double> a = z;
    if (l + 1 < mlp.layers.size()) {
      for (double& v : a) v = v > 0.0 ? v : 0.0;
    }
    trace.pre.push_back(std::move(z));
    trace.activations.push_back(std::move(a));
  }
  return trace;
}

namespace {

// Returns the gradient w.r.t. the mlp input.
std::vector<double> mlp_backward(const MlpParams& mlp, const MlpTrace& trace,
                                 std::span<const double> grad_out, MlpParams& grads) {
  std::vector<double> g(grad_out.begin(), grad_out.end());
  for (std::size_t l = mlp.layers.size(); l-- > 0;) {
    if (l + 1 < mlp.layers.size()) {
      const auto& z = trace.pre[l];
      for (std::size_t k = 0; k < g.size(); ++k) {
        if (!(z[k] > 0.0)) g[k] = 0.0;
      }
    }
    auto& gl = grads.layers[l];
    add_outer(g, trace.activations[l], gl.weight);
    axpy(1.0, g, gl.bias);
    std::vector<double> g_in(mlp.layers[l].weight.cols(), 0.0);
    add_transposed_product(mlp.layers[l].weight, g, g_in);
    g = std::move(g_in);
  }
  return g;
}

}  // namespace

PoolResult view_pool(const Matrix& view_features) {
  require(view_features.rows() >= 1, "view pooling needs at least one view");
  PoolResult out;
  out.pooled.assign(view_features.row(0).begin(), view_features.row(0).end());
  out.argmax.assign(view_features.cols(), 0);
  for (std::size_t v = 1; v < view_features.rows(); ++v) {
    const auto row = view_features.row(v);
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (row[k] > out.pooled[k]) {
        out.pooled[k] = row[k];
        out.argmax[k] = v;
      }
    }
  }
  return out;
}

ForwardTrace forward_object(const Matrix& views, const NetworkParams& params,
                            std::size_t domain) {
  require(views.rows() >= 1, "object has no views");
  require(domain < params.view_encoders.size(), "no view encoder for this domain");
  const auto& encoder = params.view_encoders[domain];
  require(views.cols() == encoder.in_dim(), "view dimension does not match the encoder");

  ForwardTrace trace;
  trace.domain = domain;
  Matrix feats(views.rows(), encoder.out_dim());
  for (std::size_t v = 0; v < views.rows(); ++v) {
    trace.views.push_back(mlp_forward(encoder, views.row(v)));
    const auto& out = trace.views.back().activations.back();
    std::copy(out.begin(), out.end(), feats.row(v).begin());
  }
  trace.pool = view_pool(feats);
  trace.head = mlp_forward(params.embed_head, trace.pool.pooled);
  trace.embedding = trace.head.activations.back();
  trace.logits.resize(params.num_classes());
  affine(params.classifier.weight, params.classifier.bias, trace.embedding, trace.logits);
  return trace;
}

void backward_object(const ForwardTrace& trace, std::span<const double> grad_embedding,
                     std::span<const double> grad_logits, const NetworkParams& params,
                     NetworkParams& grads, Matrix* grad_views) {
  const std::size_t d = params.embedding_dim();
  require(trace.embedding.size() == d && trace.logits.size() == params.num_classes(),
          "trace does not match parameters");
  require(trace.domain < params.view_encoders.size(), "trace domain has no encoder");
  require(grad_embedding.empty() || grad_embedding.size() == d, "embedding gradient length");
  require(grad_logits.empty() || grad_logits.size() == params.num_classes(),
          "logit gradient length");

  std::vector<double> g_embed(d, 0.0);
  if (!grad_embedding.empty()) std::copy(grad_embedding.begin(), grad_embedding.end(), g_embed.begin());
  if (!grad_logits.empty()) {
    add_outer(grad_logits, trace.embedding, grads.classifier.weight);
    axpy(1.0, grad_logits, grads.classifier.bias);
    add_transposed_product(params.classifier.weight, grad_logits, g_embed);
  }

  const auto g_pooled = mlp_backward(params.embed_head, trace.head, g_embed, grads.embed_head);

  const auto& encoder = params.view_encoders[trace.domain];
  auto& enc_grads = grads.view_encoders[trace.domain];
  const std::size_t num_views = trace.views.size();
  if (grad_views) *grad_views = Matrix(num_views, encoder.in_dim());
  for (std::size_t v = 0; v < num_views; ++v) {
    std::vector<double> routed(g_pooled.size(), 0.0);
    bool any = false;
    for (std::size_t k = 0; k < g_pooled.size(); ++k) {
      if (trace.pool.argmax[k] == v) {
        routed[k] = g_pooled[k];
        any = any || routed[k] != 0.0;
      }
    }
    if (!any && !grad_views) continue;
    const auto g_in = mlp_backward(encoder, trace.views[v], routed, enc_grads);
    if (grad_views) std::copy(g_in.begin(), g_in.end(), grad_views->row(v).begin());
  }
}

NetworkParams backward_batch(std::span<const ForwardTrace> traces, const Matrix& grad_embeddings,
                             const Matrix& grad_logits, const NetworkParams& params) {
  const std::size_t m = traces.size();
  require(grad_embeddings.empty() || grad_embeddings.rows() == m,
          "embedding gradient rows do not match traces");
  require(grad_logits.empty() || grad_logits.rows() == m,
          "logit gradient rows do not match traces");
  NetworkParams grads = zeros_like(params);
  for (std::size_t i = 0; i < m; ++i) {
    backward_object(traces[i],
                    grad_embeddings.empty() ? std::span<const double>{} : grad_embeddings.row(i),
                    grad_logits.empty() ? std::span<const double>{} : grad_logits.row(i), params,
                    grads);
  }
  return grads;
}

}  // namespace tcl
