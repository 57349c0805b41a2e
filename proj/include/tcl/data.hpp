#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tcl/matrix.hpp"

namespace tcl {

enum class ViewMaps { kRandom, kIdentity };

/// Synthetic multi-view dataset description. Defaults are the shipped
/// desk-scale configuration.
struct DatasetSpec {
  std::size_t num_classes = 20;
  std::size_t subcats_per_class = 2;
  std::size_t views_per_object = 4;
  std::size_t view_dim = 32;
  std::size_t train_per_class = 25;
  std::size_t test_per_class = 10;
  double sigma_proto = 1.0;
  double sigma_subcat = 0.3;
  double sigma_object = 0.1;
  double sigma_view = 0.05;
  std::size_t domains = 1;
  double sigma_domain2 = 0.1;
  ViewMaps view_maps = ViewMaps::kRandom;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t total_objects() const {
    return num_classes * (train_per_class + test_per_class) * domains;
  }
};

struct MultiViewObject {
  std::string id;
  int label = 0;
  int subcat = 0;
  int domain = 0;  // 0 = multi-view shapes, 1 = single-view sketch-like
  Matrix views;    // V x D (1 x D for domain 1)

  friend bool operator==(const MultiViewObject&, const MultiViewObject&) = default;
};

struct Split {
  DatasetSpec spec;
  std::vector<MultiViewObject> train;
  std::vector<MultiViewObject> test;

  void validate() const;
};

Split generate(const DatasetSpec& spec);

/// Line-delimited JSON: a manifest line, then one object per line.
void save(const Split& split, const std::filesystem::path& path);
Split load(const std::filesystem::path& path);

/// Seeded shuffle keyed by (seed, epoch), then contiguous chunks of indices.
std::vector<std::vector<std::size_t>> batches(std::size_t num_objects, std::size_t batch_size,
                                              std::uint64_t seed, std::uint64_t epoch);

std::vector<MultiViewObject> select_domain(const std::vector<MultiViewObject>& objects, int domain);

}  // namespace tcl
