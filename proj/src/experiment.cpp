#include "tcl/experiment.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include <Eigen/Dense>

#include "tcl/error.hpp"

namespace tcl {

namespace {

constexpr std::uint64_t kCenterSeedSalt = 0x5bd1e9955bd1e995ULL;
constexpr const char* kCheckpointFormat = "tcl-checkpoint/1";

template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

Split load_or_generate(const ExperimentConfig& cfg) {
  if (!cfg.dataset_path.empty()) {
    if (!fs::exists(cfg.dataset_path)) throw ConfigError("dataset file not found: " + cfg.dataset_path);
    return load(cfg.dataset_path);
  }
  return generate(cfg.dataset);
}

EmbeddingSet make_embedding_set(const NetworkParams& params,
                                const std::vector<MultiViewObject>& objects) {
  EmbeddingSet set;
  for (const auto& o : objects) {
    set.ids.push_back(o.id);
    set.classes.push_back(o.label);
    set.subcats.push_back(o.subcat);
    set.domains.push_back(o.domain);
  }
  set.features = embed_objects(params, objects);
  return set;
}

MetricReport evaluate_embeddings(const EmbeddingSet& set, const EvalConfig& eval) {
  const EvalOptions options{eval.distance, eval.graded};
  const auto shapes = set.subset_domain(0);
  if (eval.cross_domain) {
    const auto sketches = set.subset_domain(1);
    if (sketches.size() == 0) throw ContractError("cross-domain evaluation needs domain-1 items");
    return evaluate(sketches, shapes, options);
  }
  return evaluate(shapes, shapes, options);
}

double compactness_ratio(const EmbeddingSet& set, const CenterBank& centers) {
  require(set.size() > 0, "compactness: empty set");
  require(centers.num_classes() >= 2 && centers.dim() == set.features.cols(),
          "compactness: center bank does not match embeddings");
  double own = 0.0, other = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto f = set.features.row(i);
    double nearest = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < centers.num_classes(); ++j) {
      const double dist = std::sqrt(2.0 * half_sq_dist(f, centers.centers.row(j)));
      if (static_cast<int>(j) == set.classes[i]) {
        own += dist;
      } else {
        nearest = std::min(nearest, dist);
      }
    }
    other += nearest;
  }
  return own / other;
}

RunOutcome run_experiment(const ExperimentConfig& cfg, const Split& split) {
  cfg.validate();
  split.validate();
  RunOutcome out;
  out.initial_params = init_params(cfg.seed, cfg.network_dims(split.spec));
  out.initial_centers = init_centers(cfg.seed ^ kCenterSeedSalt, split.spec.num_classes,
                                     out.initial_params.embedding_dim(), cfg.center_init_std);

  const auto test_shapes = select_domain(split.test, 0);
  out.compactness_initial =
      compactness_ratio(make_embedding_set(out.initial_params, test_shapes), out.initial_centers);

  out.trained = train(out.initial_params, out.initial_centers, split.train, cfg.train_options());

  const auto test_set = make_embedding_set(out.trained.params, split.test);
  out.report = evaluate_embeddings(test_set, cfg.eval);
  out.compactness_final = compactness_ratio(test_set.subset_domain(0), out.trained.centers);
  return out;
}

json report_to_json(const MetricReport& report) {
  json metrics = json::object();
  for (const auto& [name, agg] : report.metrics) {
    json per_class = json::object();
    for (const auto& [cls, v] : agg.per_class) per_class[std::to_string(cls)] = v;
    metrics[name] = {{"micro", agg.micro}, {"macro", agg.macro}, {"per_class", per_class}};
  }
  return json{{"metrics", metrics},
              {"queries", report.per_query.size()},
              {"excluded_no_relevant", report.excluded_no_relevant}};
}

std::string loss_curve_csv(const TrainRunStats& stats) {
  std::string out = "epoch,total,softmax,metric_component,accuracy\n";
  for (std::size_t e = 0; e < stats.epochs.size(); ++e) {
    const auto& s = stats.epochs[e];
    out += std::to_string(e) + "," + format_double(s.total) + "," + format_double(s.softmax) + "," +
           format_double(s.metric) + "," + format_double(s.accuracy) + "\n";
  }
  return out;
}

namespace {

// Projection onto the top two principal components, signs fixed so the
// largest-magnitude loading of each component is positive.
Matrix pca2(const Matrix& features) {
  const auto n = static_cast<Eigen::Index>(features.rows());
  const auto d = static_cast<Eigen::Index>(features.cols());
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = features(i, j);
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  const Eigen::MatrixXd cov = (x.transpose() * x) / std::max<double>(1.0, static_cast<double>(n - 1));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  Matrix out(features.rows(), 2);
  for (int c = 0; c < 2 && c < d; ++c) {
    Eigen::VectorXd axis = solver.eigenvectors().col(d - 1 - c);
    Eigen::Index arg;
    axis.cwiseAbs().maxCoeff(&arg);
    if (axis(arg) < 0) axis = -axis;
    const Eigen::VectorXd proj = x * axis;
    for (Eigen::Index i = 0; i < n; ++i) out(i, c) = proj(i);
  }
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  return cells;
}

template <typename T>
T parse_number(const std::string& text, const std::string& where) {
  T value{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ContractError(where + ": cannot parse '" + text + "'");
  }
  return value;
}

}  // namespace

std::string embeddings_csv(const EmbeddingSet& set, bool with_pca) {
  set.validate();
  const std::size_t d = set.features.cols();
  std::string out = "id,class,subcat,domain";
  for (std::size_t k = 0; k < d; ++k) out += ",f_" + std::to_string(k);
  Matrix proj;
  if (with_pca) {
    out += ",pca_0,pca_1";
    proj = pca2(set.features);
  }
  out += "\n";
  for (std::size_t i = 0; i < set.size(); ++i) {
    out += set.ids[i] + "," + std::to_string(set.classes[i]) + "," + std::to_string(set.subcats[i]) +
           "," + std::to_string(set.domains[i]);
    for (double v : set.features.row(i)) out += "," + format_double(v);
    if (with_pca) out += "," + format_double(proj(i, 0)) + "," + format_double(proj(i, 1));
    out += "\n";
  }
  return out;
}

EmbeddingSet read_embeddings_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open embeddings " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ContractError(path.string() + ": empty embeddings file");
  const auto header = split_csv_line(line);
  if (header.size() < 5 || header[0] != "id" || header[1] != "class" || header[2] != "subcat" ||
      header[3] != "domain") {
    throw ContractError(path.string() + ": unexpected header");
  }
  std::size_t d = 0;
  while (4 + d < header.size() && header[4 + d] == "f_" + std::to_string(d)) ++d;
  if (d == 0) throw ContractError(path.string() + ": no feature columns");

  EmbeddingSet set;
  std::vector<double> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (cells.size() != header.size()) throw ContractError(where + ": wrong column count");
    set.ids.push_back(cells[0]);
    set.classes.push_back(parse_number<int>(cells[1], where));
    set.subcats.push_back(parse_number<int>(cells[2], where));
    set.domains.push_back(parse_number<int>(cells[3], where));
    for (std::size_t k = 0; k < d; ++k) values.push_back(parse_number<double>(cells[4 + k], where));
  }
  set.features = Matrix(set.ids.size(), d, std::move(values));
  set.validate();
  return set;
}

json checkpoint_json(const ExperimentConfig& cfg, const NetworkParams& params) {
  return json{{"format", kCheckpointFormat},
              {"seed", cfg.seed},
              {"dims",
               {{"input_dim", params.input_dim()},
                {"embedding_dim", params.embedding_dim()},
                {"num_classes", params.num_classes()},
                {"num_domains", params.num_domains()}}},
              {"config", to_json(cfg)},
              {"params", to_json(params)}};
}

NetworkParams load_checkpoint(const fs::path& path) {
  const auto j = read_json_file(path);
  if (!j.contains("format") || j.at("format") != kCheckpointFormat) {
    throw ContractError(path.string() + ": not a checkpoint");
  }
  return network_params_from_json(j.at("params"));
}

void cmd_gen_data(const ExperimentConfig& cfg, const fs::path& out) {
  save(generate(cfg.dataset), out);
}

RunOutcome cmd_train(const ExperimentConfig& cfg, const fs::path& out_dir) {
  const Split split = load_or_generate(cfg);
  auto outcome = run_experiment(cfg, split);
  fs::create_directories(out_dir);

  json resolved = to_json(cfg);
  resolved["output_dir"] = out_dir.string();
  write_json_file(out_dir / "config.resolved.json", resolved);
  write_json_file(out_dir / "checkpoint.json", checkpoint_json(cfg, outcome.trained.params));
  write_json_file(out_dir / "centers.json", to_json(outcome.trained.centers));
  write_text_file(out_dir / "loss_curve.csv", loss_curve_csv(outcome.trained.stats));
  write_text_file(out_dir / "embeddings.csv",
                  embeddings_csv(make_embedding_set(outcome.trained.params, split.test), false));
  json metrics = report_to_json(outcome.report);
  metrics["config"] = resolved;
  write_json_file(out_dir / "metrics.json", metrics);

  const auto& epochs = outcome.trained.stats.epochs;
  json summary{{"compactness_initial", outcome.compactness_initial},
               {"compactness_final", outcome.compactness_final},
               {"test_map", outcome.report.micro("mAP")},
               {"test_auc", outcome.report.micro("AUC")}};
  if (!epochs.empty()) {
    summary["final_accuracy"] = epochs.back().accuracy;
    summary["skipped_batches"] = epochs.back().skipped_batches;
  }
  write_json_file(out_dir / "summary.json", summary);
  return outcome;
}

void cmd_embed(const fs::path& checkpoint, const fs::path& dataset, const fs::path& out,
               bool pca2) {
  const auto params = load_checkpoint(checkpoint);
  const auto split = load(dataset);
  require(params.input_dim() == split.spec.view_dim &&
              params.num_domains() >= split.spec.domains,
          "checkpoint does not fit the dataset");
  write_text_file(out, embeddings_csv(make_embedding_set(params, split.test), pca2));
}

namespace {

MetricReport write_report(const MetricReport& report, const EvalConfig& eval,
                          const json& source, const fs::path& out) {
  json j = report_to_json(report);
  j["eval"] = {{"distance", std::string(to_string(eval.distance))},
               {"graded", eval.graded},
               {"cross_domain", eval.cross_domain}};
  j["source"] = source;
  if (!out.empty()) write_json_file(out, j);
  return report;
}

}  // namespace

MetricReport cmd_eval_embeddings(const fs::path& embeddings, const EvalConfig& eval,
                                 const fs::path& out) {
  const auto set = read_embeddings_csv(embeddings);
  return write_report(evaluate_embeddings(set, eval), eval, json::object(), out);
}

MetricReport cmd_eval_checkpoint(const fs::path& checkpoint, const fs::path& dataset,
                                 const EvalConfig& eval, const fs::path& out) {
  const auto params = load_checkpoint(checkpoint);
  const auto split = load(dataset);
  const auto set = make_embedding_set(params, split.test);
  return write_report(evaluate_embeddings(set, eval), eval, json::object(), out);
}

std::vector<GradCheckEntry> cmd_gradcheck(const GradCheckOptions& options, const fs::path& out) {
  const auto entries = run_gradcheck(options);
  if (!out.empty()) {
    std::string csv = "check,max_rel_error,threshold,configs,pass\n";
    for (const auto& e : entries) {
      csv += e.name + "," + format_double(e.max_rel_error) + "," + format_double(e.threshold) + "," +
             std::to_string(e.configs) + "," + (e.pass() ? "1" : "0") + "\n";
    }
    write_text_file(out, csv);
  }
  return entries;
}

std::string table_label(LossKind kind) {
  switch (kind) {
    case LossKind::kCenterSoftmax: return "softmax+center";
    default: return std::string(to_string(kind));
  }
}

namespace {

struct StudyJob {
  std::string label;
  double value = 0.0;
  ExperimentConfig cfg;
};

std::vector<StudyRow> run_study(const std::vector<StudyJob>& jobs, std::size_t per_row,
                                const Split& split, std::size_t parallel) {
  std::vector<StudyRun> runs(jobs.size());
  parallel_for(jobs.size(), parallel, [&](std::size_t i) {
    const auto outcome = run_experiment(jobs[i].cfg, split);
    auto& r = runs[i];
    r.label = jobs[i].label;
    r.value = jobs[i].value;
    r.seed = jobs[i].cfg.seed;
    r.map = outcome.report.micro("mAP");
    r.auc = outcome.report.micro("AUC");
    r.compactness_initial = outcome.compactness_initial;
    r.compactness_final = outcome.compactness_final;
    const auto& epochs = outcome.trained.stats.epochs;
    r.final_accuracy = epochs.empty() ? 0.0 : epochs.back().accuracy;
  });

  std::vector<StudyRow> rows;
  for (std::size_t start = 0; start < runs.size(); start += per_row) {
    StudyRow row;
    row.label = runs[start].label;
    row.value = runs[start].value;
    for (std::size_t i = start; i < start + per_row; ++i) {
      row.map += runs[i].map;
      row.auc += runs[i].auc;
      row.runs.push_back(runs[i]);
    }
    row.map /= static_cast<double>(per_row);
    row.auc /= static_cast<double>(per_row);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string runs_csv(const std::vector<StudyRow>& rows) {
  std::string out = "label,value,seed,auc,map,compactness_initial,compactness_final,final_accuracy\n";
  for (const auto& row : rows) {
    for (const auto& r : row.runs) {
      out += r.label + "," + format_double(r.value) + "," + std::to_string(r.seed) + "," +
             format_double(r.auc) + "," + format_double(r.map) + "," +
             format_double(r.compactness_initial) + "," + format_double(r.compactness_final) + "," +
             format_double(r.final_accuracy) + "\n";
    }
  }
  return out;
}

}  // namespace

std::vector<StudyRow> cmd_compare(const ExperimentConfig& cfg, const fs::path& out_dir,
                                  std::size_t parallel) {
  cfg.validate();
  const Split split = load_or_generate(cfg);
  std::vector<StudyJob> jobs;
  for (auto kind : cfg.study.kinds) {
    for (auto seed : cfg.study.seeds) {
      StudyJob job{table_label(kind), 0.0, cfg};
      job.cfg.loss.kind = kind;
      job.cfg.seed = seed;
      jobs.push_back(std::move(job));
    }
  }
  const auto rows = run_study(jobs, cfg.study.seeds.size(), split, parallel);

  if (!out_dir.empty()) {
    std::string csv = "loss,auc,map\n";
    for (const auto& row : rows) {
      csv += row.label + "," + format_double(row.auc) + "," + format_double(row.map) + "\n";
    }
    write_text_file(out_dir / "compare.csv", csv);
    write_text_file(out_dir / "runs.csv", runs_csv(rows));
    json resolved = to_json(cfg);
    resolved["output_dir"] = out_dir.string();
    write_json_file(out_dir / "config.resolved.json", resolved);
  }
  return rows;
}

std::vector<StudyRow> cmd_sweep(const ExperimentConfig& cfg, const fs::path& out_dir,
                                std::size_t parallel) {
  cfg.validate();
  if (cfg.study.sweep_values.empty()) throw ConfigError("study: sweep_values must not be empty");
  const Split split = load_or_generate(cfg);
  const bool is_lambda = cfg.study.sweep_parameter == "lambda";
  std::vector<StudyJob> jobs;
  for (double value : cfg.study.sweep_values) {
    for (auto seed : cfg.study.seeds) {
      StudyJob job{cfg.study.sweep_parameter + "=" + format_double(value), value, cfg};
      (is_lambda ? job.cfg.loss.lambda : job.cfg.loss.margin) = value;
      job.cfg.seed = seed;
      job.cfg.validate();
      jobs.push_back(std::move(job));
    }
  }
  const auto rows = run_study(jobs, cfg.study.seeds.size(), split, parallel);

  if (!out_dir.empty()) {
    std::string csv = cfg.study.sweep_parameter + ",auc,map\n";
    for (const auto& row : rows) {
      csv += format_double(row.value) + "," + format_double(row.auc) + "," +
             format_double(row.map) + "\n";
    }
    write_text_file(out_dir / "sweep.csv", csv);
    write_text_file(out_dir / "runs.csv", runs_csv(rows));
    json resolved = to_json(cfg);
    resolved["output_dir"] = out_dir.string();
    write_json_file(out_dir / "config.resolved.json", resolved);
  }
  return rows;
}

}  // namespace tcl
