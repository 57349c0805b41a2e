#include "tcl/serialize.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "tcl/error.hpp"

namespace tcl {

void reject_unknown_keys(const json& object, std::initializer_list<const char*> allowed,
                         const std::string& where) {
  if (!object.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& item : object.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&](const char* key) { return item.key() == key; });
    if (!known) throw ConfigError(where + ": unknown key '" + item.key() + "'");
  }
}

namespace {

template <typename T>
void read_field(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

}  // namespace

json to_json(const DatasetSpec& spec) {
  return json{{"num_classes", spec.num_classes},
              {"subcats_per_class", spec.subcats_per_class},
              {"views_per_object", spec.views_per_object},
              {"view_dim", spec.view_dim},
              {"train_per_class", spec.train_per_class},
              {"test_per_class", spec.test_per_class},
              {"sigma_proto", spec.sigma_proto},
              {"sigma_subcat", spec.sigma_subcat},
              {"sigma_object", spec.sigma_object},
              {"sigma_view", spec.sigma_view},
              {"domains", spec.domains},
              {"sigma_domain2", spec.sigma_domain2},
              {"view_maps", spec.view_maps == ViewMaps::kIdentity ? "identity" : "random"},
              {"seed", spec.seed}};
}

DatasetSpec dataset_spec_from_json(const json& j) {
  const std::string where = "dataset";
  reject_unknown_keys(j,
                      {"num_classes", "subcats_per_class", "views_per_object", "view_dim",
                       "train_per_class", "test_per_class", "sigma_proto", "sigma_subcat",
                       "sigma_object", "sigma_view", "domains", "sigma_domain2", "view_maps",
                       "seed"},
                      where);
  DatasetSpec spec;
  read_field(j, "num_classes", spec.num_classes, where);
  read_field(j, "subcats_per_class", spec.subcats_per_class, where);
  read_field(j, "views_per_object", spec.views_per_object, where);
  read_field(j, "view_dim", spec.view_dim, where);
  read_field(j, "train_per_class", spec.train_per_class, where);
  read_field(j, "test_per_class", spec.test_per_class, where);
  read_field(j, "sigma_proto", spec.sigma_proto, where);
  read_field(j, "sigma_subcat", spec.sigma_subcat, where);
  read_field(j, "sigma_object", spec.sigma_object, where);
  read_field(j, "sigma_view", spec.sigma_view, where);
  read_field(j, "domains", spec.domains, where);
  read_field(j, "seed", spec.seed, where);
  // The second-domain spread follows sigma_view unless given explicitly.
  spec.sigma_domain2 = 2.0 * spec.sigma_view;
  read_field(j, "sigma_domain2", spec.sigma_domain2, where);
  std::string maps = "random";
  read_field(j, "view_maps", maps, where);
  if (maps == "random") {
    spec.view_maps = ViewMaps::kRandom;
  } else if (maps == "identity") {
    spec.view_maps = ViewMaps::kIdentity;
  } else {
    throw ConfigError(where + ".view_maps: expected 'random' or 'identity'");
  }
  return spec;
}

json to_json(const Matrix& m) {
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.values()}};
}

Matrix matrix_from_json(const json& j) {
  try {
    return Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                  j.at("data").get<std::vector<double>>());
  } catch (const json::exception& e) {
    throw ContractError(std::string("malformed matrix: ") + e.what());
  }
}

namespace {

json mlp_to_json(const MlpParams& mlp) {
  json layers = json::array();
  for (const auto& layer : mlp.layers) {
    layers.push_back({{"weight", to_json(layer.weight)}, {"bias", layer.bias}});
  }
  return layers;
}

DenseLayer layer_from_json(const json& j) {
  return DenseLayer{matrix_from_json(j.at("weight")), j.at("bias").get<std::vector<double>>()};
}

MlpParams mlp_from_json(const json& j) {
  MlpParams mlp;
  for (const auto& layer : j) mlp.layers.push_back(layer_from_json(layer));
  return mlp;
}

}  // namespace

json to_json(const NetworkParams& params) {
  json encoders = json::array();
  for (const auto& enc : params.view_encoders) encoders.push_back(mlp_to_json(enc));
  return json{{"view_encoders", encoders},
              {"embed_head", mlp_to_json(params.embed_head)},
              {"classifier",
               {{"weight", to_json(params.classifier.weight)}, {"bias", params.classifier.bias}}}};
}

NetworkParams network_params_from_json(const json& j) {
  NetworkParams params;
  try {
    for (const auto& enc : j.at("view_encoders")) params.view_encoders.push_back(mlp_from_json(enc));
    params.embed_head = mlp_from_json(j.at("embed_head"));
    params.classifier = layer_from_json(j.at("classifier"));
  } catch (const json::exception& e) {
    throw ContractError(std::string("malformed network parameters: ") + e.what());
  }
  params.validate();
  return params;
}

json to_json(const CenterBank& centers) { return json{{"centers", to_json(centers.centers)}}; }

CenterBank center_bank_from_json(const json& j) {
  try {
    return CenterBank{matrix_from_json(j.at("centers"))};
  } catch (const json::exception& e) {
    throw ContractError(std::string("malformed centers: ") + e.what());
  }
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ContractError("cannot write " + path.string());
  out << text;
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace tcl
