#include "tcl/config.hpp"

#include "tcl/error.hpp"

namespace tcl {

std::string_view to_string(DistanceKind kind) {
  return kind == DistanceKind::kEuclidean ? "euclidean" : "cosine";
}

DistanceKind parse_distance(std::string_view text) {
  if (text == "euclidean") return DistanceKind::kEuclidean;
  if (text == "cosine") return DistanceKind::kCosine;
  throw ConfigError("unknown distance '" + std::string(text) + "'");
}

void ExperimentConfig::validate() const {
  if (dataset_path.empty()) dataset.validate();
  if (encoder_widths.empty() || head_widths.empty()) {
    throw ConfigError("model: encoder_widths and head_widths need at least one entry");
  }
  for (auto w : encoder_widths) {
    if (w == 0) throw ConfigError("model: zero layer width");
  }
  for (auto w : head_widths) {
    if (w == 0) throw ConfigError("model: zero layer width");
  }
  if (!(init_std >= 0.0) || !(center_init_std >= 0.0)) {
    throw ConfigError("model: init spreads must be non-negative");
  }
  loss.validate();
  sgd.validate();
  centers.validate();
  if (batch_size < 1) throw ConfigError("training: batch_size must be >= 1");
  if (loss.kind != LossKind::kSoftmax && batch_size < 2) {
    throw ConfigError("training: metric losses need batch_size >= 2");
  }
  if (study.seeds.empty()) throw ConfigError("study: seeds must not be empty");
  if (study.sweep_parameter != "lambda" && study.sweep_parameter != "m") {
    throw ConfigError("study: sweep_parameter must be 'lambda' or 'm'");
  }
}

NetworkDims ExperimentConfig::network_dims(const DatasetSpec& data) const {
  NetworkDims dims;
  dims.input_dim = data.view_dim;
  dims.encoder_widths = encoder_widths;
  dims.head_widths = head_widths;
  dims.num_classes = data.num_classes;
  dims.num_domains = data.domains;
  dims.init_std = init_std;
  return dims;
}

TrainOptions ExperimentConfig::train_options() const {
  TrainOptions o;
  o.loss = loss;
  o.sgd = sgd;
  o.centers = centers;
  o.epochs = epochs;
  o.batch_size = batch_size;
  o.seed = seed;
  return o;
}

namespace {

template <typename T>
void get(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  reject_unknown_keys(j,
                      {"dataset", "dataset_path", "model", "loss", "optimizer", "training",
                       "seed", "output_dir", "eval", "study"},
                      "config");
  ExperimentConfig cfg;
  if (j.contains("dataset")) cfg.dataset = dataset_spec_from_json(j.at("dataset"));
  get(j, "dataset_path", cfg.dataset_path, "config");
  get(j, "seed", cfg.seed, "config");
  get(j, "output_dir", cfg.output_dir, "config");

  if (j.contains("model")) {
    const auto& m = j.at("model");
    reject_unknown_keys(m, {"encoder_widths", "head_widths", "init_std", "center_init_std"},
                        "model");
    get(m, "encoder_widths", cfg.encoder_widths, "model");
    get(m, "head_widths", cfg.head_widths, "model");
    get(m, "init_std", cfg.init_std, "model");
    get(m, "center_init_std", cfg.center_init_std, "model");
  }
  if (j.contains("loss")) {
    const auto& l = j.at("loss");
    reject_unknown_keys(l, {"kind", "margin", "lambda", "reduction", "triplet_strategy"}, "loss");
    std::string text;
    if (l.contains("kind")) {
      get(l, "kind", text, "loss");
      cfg.loss.kind = parse_loss_kind(text);
    }
    get(l, "margin", cfg.loss.margin, "loss");
    get(l, "lambda", cfg.loss.lambda, "loss");
    if (l.contains("reduction")) {
      get(l, "reduction", text, "loss");
      cfg.loss.reduction = parse_reduction(text);
    }
    if (l.contains("triplet_strategy")) {
      get(l, "triplet_strategy", text, "loss");
      cfg.loss.triplet_strategy = parse_triplet_strategy(text);
    }
  }
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    reject_unknown_keys(o,
                        {"lr_pre_pool", "lr_post_pool", "momentum", "weight_decay", "lr_centers",
                         "center_clip"},
                        "optimizer");
    get(o, "lr_pre_pool", cfg.sgd.lr_pre_pool, "optimizer");
    get(o, "lr_post_pool", cfg.sgd.lr_post_pool, "optimizer");
    get(o, "momentum", cfg.sgd.momentum, "optimizer");
    get(o, "weight_decay", cfg.sgd.weight_decay, "optimizer");
    get(o, "lr_centers", cfg.centers.lr_centers, "optimizer");
    get(o, "center_clip", cfg.centers.clip, "optimizer");
  }
  if (j.contains("training")) {
    const auto& t = j.at("training");
    reject_unknown_keys(t, {"epochs", "batch_size"}, "training");
    get(t, "epochs", cfg.epochs, "training");
    get(t, "batch_size", cfg.batch_size, "training");
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    reject_unknown_keys(e, {"distance", "graded", "cross_domain"}, "eval");
    if (e.contains("distance")) {
      std::string text;
      get(e, "distance", text, "eval");
      cfg.eval.distance = parse_distance(text);
    }
    get(e, "graded", cfg.eval.graded, "eval");
    get(e, "cross_domain", cfg.eval.cross_domain, "eval");
  }
  if (j.contains("study")) {
    const auto& s = j.at("study");
    reject_unknown_keys(s, {"seeds", "kinds", "sweep_parameter", "sweep_values"}, "study");
    get(s, "seeds", cfg.study.seeds, "study");
    if (s.contains("kinds")) {
      std::vector<std::string> names;
      get(s, "kinds", names, "study");
      cfg.study.kinds.clear();
      for (const auto& n : names) cfg.study.kinds.push_back(parse_loss_kind(n));
    }
    get(s, "sweep_parameter", cfg.study.sweep_parameter, "study");
    get(s, "sweep_values", cfg.study.sweep_values, "study");
  }
  cfg.validate();
  return cfg;
}

json to_json(const ExperimentConfig& cfg) {
  json kinds = json::array();
  for (auto k : cfg.study.kinds) kinds.push_back(std::string(to_string(k)));
  json j{{"dataset", to_json(cfg.dataset)},
         {"model",
          {{"encoder_widths", cfg.encoder_widths},
           {"head_widths", cfg.head_widths},
           {"init_std", cfg.init_std},
           {"center_init_std", cfg.center_init_std}}},
         {"loss",
          {{"kind", std::string(to_string(cfg.loss.kind))},
           {"margin", cfg.loss.margin},
           {"lambda", cfg.loss.lambda},
           {"reduction", std::string(to_string(cfg.loss.reduction))},
           {"triplet_strategy", std::string(to_string(cfg.loss.triplet_strategy))}}},
         {"optimizer",
          {{"lr_pre_pool", cfg.sgd.lr_pre_pool},
           {"lr_post_pool", cfg.sgd.lr_post_pool},
           {"momentum", cfg.sgd.momentum},
           {"weight_decay", cfg.sgd.weight_decay},
           {"lr_centers", cfg.centers.lr_centers},
           {"center_clip", cfg.centers.clip}}},
         {"training", {{"epochs", cfg.epochs}, {"batch_size", cfg.batch_size}}},
         {"seed", cfg.seed},
         {"output_dir", cfg.output_dir},
         {"eval",
          {{"distance", std::string(to_string(cfg.eval.distance))},
           {"graded", cfg.eval.graded},
           {"cross_domain", cfg.eval.cross_domain}}},
         {"study",
          {{"seeds", cfg.study.seeds},
           {"kinds", kinds},
           {"sweep_parameter", cfg.study.sweep_parameter},
           {"sweep_values", cfg.study.sweep_values}}}};
  if (!cfg.dataset_path.empty()) j["dataset_path"] = cfg.dataset_path;
  return j;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return config_from_json(read_json_file(path));
}

}  // namespace tcl
