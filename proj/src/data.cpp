#include "tcl/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "tcl/error.hpp"
#include "tcl/serialize.hpp"

namespace tcl {

void DatasetSpec::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("dataset: " + msg); };
  if (num_classes < 2) fail("num_classes must be >= 2");
  if (subcats_per_class < 1) fail("subcats_per_class must be >= 1");
  if (views_per_object < 1) fail("views_per_object must be >= 1");
  if (view_dim < 1) fail("view_dim must be >= 1");
  if (train_per_class < 1 || test_per_class < 1) fail("every class needs train and test objects");
  if (domains < 1 || domains > 2) fail("domains must be 1 or 2");
  for (double s : {sigma_proto, sigma_subcat, sigma_object, sigma_view, sigma_domain2}) {
    if (!(s >= 0.0) || !std::isfinite(s)) fail("spreads must be finite and non-negative");
  }
}

void Split::validate() const {
  spec.validate();
  if (train.empty() || test.empty()) throw ContractError("split has an empty side");
  std::set<std::string> ids;
  std::vector<int> seen_train(spec.num_classes, 0), seen_test(spec.num_classes, 0);
  auto check = [&](const MultiViewObject& o, std::vector<int>& seen) {
    require(ids.insert(o.id).second, "duplicate object id '" + o.id + "'");
    require(o.label >= 0 && static_cast<std::size_t>(o.label) < spec.num_classes,
            "class out of range for '" + o.id + "'");
    require(o.subcat >= 0 && static_cast<std::size_t>(o.subcat) < spec.subcats_per_class,
            "subcat out of range for '" + o.id + "'");
    require(o.domain >= 0 && static_cast<std::size_t>(o.domain) < spec.domains,
            "domain out of range for '" + o.id + "'");
    const std::size_t expected_views = o.domain == 0 ? spec.views_per_object : 1;
    require(o.views.rows() == expected_views && o.views.cols() == spec.view_dim,
            "view shape mismatch for '" + o.id + "'");
    require(o.views.all_finite(), "non-finite view values for '" + o.id + "'");
    seen[o.label] = 1;
  };
  for (const auto& o : train) check(o, seen_train);
  for (const auto& o : test) check(o, seen_test);
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    require(seen_train[k] && seen_test[k], "class missing from one side of the split");
  }
}

namespace {

Matrix random_map(std::size_t dim, ViewMaps kind, std::mt19937_64& rng) {
  Matrix a(dim, dim);
  if (kind == ViewMaps::kIdentity) {
    for (std::size_t i = 0; i < dim; ++i) a(i, i) = 1.0;
    return a;
  }
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
  for (double& v : a.flat()) v = normal(rng);
  return a;
}

std::vector<double> noisy(std::span<const double> mean, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> out(mean.begin(), mean.end());
  for (double& v : out) v += sigma * normal(rng);
  return out;
}

std::string object_id(int domain, int label, bool train, std::size_t index) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "d%d-c%03d-%s-%04zu", domain, label, train ? "train" : "test",
                index);
  return buf;
}

}  // namespace

Split generate(const DatasetSpec& spec) {
  spec.validate();
  const std::size_t dim = spec.view_dim;
  std::mt19937_64 rng(spec.seed);

  std::vector<Matrix> view_maps;
  for (std::size_t v = 0; v < spec.views_per_object; ++v) {
    view_maps.push_back(random_map(dim, spec.view_maps, rng));
  }
  const Matrix sketch_map =
      spec.domains > 1 ? random_map(dim, spec.view_maps, rng) : Matrix();

  const std::vector<double> origin(dim, 0.0);
  std::vector<std::vector<double>> protos;
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    protos.push_back(noisy(origin, spec.sigma_proto, rng));
  }
  std::vector<std::vector<std::vector<double>>> subprotos(spec.num_classes);
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    for (std::size_t s = 0; s < spec.subcats_per_class; ++s) {
      subprotos[k].push_back(noisy(protos[k], spec.sigma_subcat, rng));
    }
  }

  const std::vector<double> zero_bias(dim, 0.0);
  Split split;
  split.spec = spec;
  for (std::size_t domain = 0; domain < spec.domains; ++domain) {
    for (std::size_t k = 0; k < spec.num_classes; ++k) {
      for (bool is_train : {true, false}) {
        const std::size_t count = is_train ? spec.train_per_class : spec.test_per_class;
        for (std::size_t idx = 0; idx < count; ++idx) {
          MultiViewObject obj;
          obj.id = object_id(static_cast<int>(domain), static_cast<int>(k), is_train, idx);
          obj.label = static_cast<int>(k);
          obj.subcat = static_cast<int>(idx % spec.subcats_per_class);
          obj.domain = static_cast<int>(domain);
          const auto z = noisy(subprotos[k][obj.subcat], spec.sigma_object, rng);
          std::vector<double> projected(dim);
          if (domain == 0) {
            obj.views = Matrix(spec.views_per_object, dim);
            for (std::size_t v = 0; v < spec.views_per_object; ++v) {
              affine(view_maps[v], zero_bias, z, projected);
              const auto view = noisy(projected, spec.sigma_view, rng);
              std::copy(view.begin(), view.end(), obj.views.row(v).begin());
            }
          } else {
            obj.views = Matrix(1, dim);
            affine(sketch_map, zero_bias, z, projected);
            const auto view = noisy(projected, spec.sigma_domain2, rng);
            std::copy(view.begin(), view.end(), obj.views.row(0).begin());
          }
          (is_train ? split.train : split.test).push_back(std::move(obj));
        }
      }
    }
  }
  return split;
}

namespace {

json object_to_json(const MultiViewObject& o, const char* side) {
  json views = json::array();
  for (std::size_t v = 0; v < o.views.rows(); ++v) {
    views.push_back(std::vector<double>(o.views.row(v).begin(), o.views.row(v).end()));
  }
  return json{{"id", o.id},         {"class", o.label}, {"subcat", o.subcat},
              {"domain", o.domain}, {"split", side},    {"views", views}};
}

}  // namespace

void save(const Split& split, const std::filesystem::path& path) {
  split.validate();
  std::string text = json{{"manifest", to_json(split.spec)}}.dump() + "\n";
  for (const auto& o : split.train) text += object_to_json(o, "train").dump() + "\n";
  for (const auto& o : split.test) text += object_to_json(o, "test").dump() + "\n";
  write_text_file(path, text);
}

Split load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset " + path.string());

  Split split;
  std::string line;
  std::size_t line_no = 0;
  bool have_manifest = false;
  auto fail = [&](const std::string& msg) {
    throw ContractError(path.string() + ":" + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json rec = json::parse(line);
      if (!have_manifest) {
        if (!rec.contains("manifest")) fail("first record must be the manifest");
        split.spec = dataset_spec_from_json(rec.at("manifest"));
        split.spec.validate();
        have_manifest = true;
        continue;
      }
      reject_unknown_keys(rec, {"id", "class", "subcat", "domain", "split", "views"}, "record");
      MultiViewObject o;
      o.id = rec.at("id").get<std::string>();
      o.label = rec.at("class").get<int>();
      o.subcat = rec.at("subcat").get<int>();
      o.domain = rec.at("domain").get<int>();
      o.views = Matrix::from_rows(rec.at("views").get<std::vector<std::vector<double>>>());
      if (o.label < 0 || static_cast<std::size_t>(o.label) >= split.spec.num_classes) {
        fail("class " + std::to_string(o.label) + " outside [0, K)");
      }
      if (o.subcat < 0 || static_cast<std::size_t>(o.subcat) >= split.spec.subcats_per_class) {
        fail("subcat outside [0, S)");
      }
      if (o.domain < 0 || static_cast<std::size_t>(o.domain) >= split.spec.domains) {
        fail("domain outside the manifest's domain count");
      }
      const auto side = rec.at("split").get<std::string>();
      if (side == "train") {
        split.train.push_back(std::move(o));
      } else if (side == "test") {
        split.test.push_back(std::move(o));
      } else {
        fail("split must be 'train' or 'test'");
      }
    } catch (const json::exception& e) {
      fail(std::string("malformed record: ") + e.what());
    } catch (const ConfigError& e) {
      fail(e.what());
    } catch (const ContractError& e) {
      if (std::string(e.what()).rfind(path.string(), 0) == 0) throw;
      fail(e.what());
    }
  }
  if (!have_manifest) throw ContractError(path.string() + ": empty dataset file");
  split.validate();
  return split;
}

std::vector<std::vector<std::size_t>> batches(std::size_t num_objects, std::size_t batch_size,
                                              std::uint64_t seed, std::uint64_t epoch) {
  require(batch_size >= 1, "batch_size must be >= 1");
  std::vector<std::size_t> order(num_objects);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32),
                    0x5eedu};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < num_objects; start += batch_size) {
    const std::size_t end = std::min(num_objects, start + batch_size);
    out.emplace_back(order.begin() + start, order.begin() + end);
  }
  return out;
}

std::vector<MultiViewObject> select_domain(const std::vector<MultiViewObject>& objects,
                                           int domain) {
  std::vector<MultiViewObject> out;
  std::copy_if(objects.begin(), objects.end(), std::back_inserter(out),
               [&](const MultiViewObject& o) { return o.domain == domain; });
  return out;
}

}  // namespace tcl
