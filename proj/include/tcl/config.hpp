#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tcl/data.hpp"
#include "tcl/losses.hpp"
#include "tcl/model.hpp"
#include "tcl/optim.hpp"
#include "tcl/retrieval.hpp"
#include "tcl/serialize.hpp"

namespace tcl {

struct EvalConfig {
  DistanceKind distance = DistanceKind::kEuclidean;
  bool graded = false;
  bool cross_domain = false;
};

// Settings shared by the compare and sweep studies.
struct StudyConfig {
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<LossKind> kinds{LossKind::kSoftmax, LossKind::kCenterSoftmax, LossKind::kTriplet,
                              LossKind::kTcl, LossKind::kTclSoftmax};
  std::string sweep_parameter = "lambda";
  std::vector<double> sweep_values{0.0, 0.01, 0.1, 1.0, 10.0};
};

/// Everything a run needs. Defaults follow the reference training recipe
/// (m = 5, lambda = 0.01, batch 16, momentum 0.9, weight decay 1e-4,
/// center lr 0.1, center clip 0.01).
struct ExperimentConfig {
  DatasetSpec dataset;
  std::string dataset_path;  // when set, load instead of generating
  std::vector<std::size_t> encoder_widths{64};
  std::vector<std::size_t> head_widths{64};
  double init_std = 0.01;
  double center_init_std = 0.01;
  LossConfig loss;
  SgdConfig sgd;
  CenterUpdateConfig centers;
  std::size_t epochs = 50;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  std::string output_dir = "runs/default";
  EvalConfig eval;
  StudyConfig study;

  void validate() const;
  NetworkDims network_dims(const DatasetSpec& data) const;
  TrainOptions train_options() const;
};

/// Parses a config document; unknown keys anywhere are rejected with ConfigError.
ExperimentConfig config_from_json(const json& j);
json to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

std::string_view to_string(DistanceKind kind);
DistanceKind parse_distance(std::string_view text);

}  // namespace tcl
