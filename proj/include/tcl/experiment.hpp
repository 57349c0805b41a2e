#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tcl/config.hpp"
#include "tcl/gradcheck.hpp"

namespace tcl {

namespace fs = std::filesystem;

Split load_or_generate(const ExperimentConfig& cfg);

EmbeddingSet make_embedding_set(const NetworkParams& params,
                                const std::vector<MultiViewObject>& objects);

/// Within-domain: domain-0 test objects against each other.
/// Cross-domain: domain-1 queries against the domain-0 database.
MetricReport evaluate_embeddings(const EmbeddingSet& set, const EvalConfig& eval);

/// mean ||f - c_own|| / mean min_{j != own} ||f - c_j|| over the set.
double compactness_ratio(const EmbeddingSet& set, const CenterBank& centers);

struct RunOutcome {
  NetworkParams initial_params;
  CenterBank initial_centers;
  TrainResult trained;
  MetricReport report;
  double compactness_initial = 0.0;
  double compactness_final = 0.0;
};

/// Initialise from cfg.seed, train on split.train, evaluate on split.test.
RunOutcome run_experiment(const ExperimentConfig& cfg, const Split& split);

json report_to_json(const MetricReport& report);
std::string loss_curve_csv(const TrainRunStats& stats);
std::string embeddings_csv(const EmbeddingSet& set, bool pca2);
EmbeddingSet read_embeddings_csv(const fs::path& path);

json checkpoint_json(const ExperimentConfig& cfg, const NetworkParams& params);
NetworkParams load_checkpoint(const fs::path& path);

// Commands. Each writes its artifacts and throws ConfigError / NumericError /
// ContractError on failure.
void cmd_gen_data(const ExperimentConfig& cfg, const fs::path& out);
RunOutcome cmd_train(const ExperimentConfig& cfg, const fs::path& out_dir);
void cmd_embed(const fs::path& checkpoint, const fs::path& dataset, const fs::path& out,
               bool pca2);
MetricReport cmd_eval_embeddings(const fs::path& embeddings, const EvalConfig& eval,
                                 const fs::path& out);
MetricReport cmd_eval_checkpoint(const fs::path& checkpoint, const fs::path& dataset,
                                 const EvalConfig& eval, const fs::path& out);
std::vector<GradCheckEntry> cmd_gradcheck(const GradCheckOptions& options, const fs::path& out);

struct StudyRun {
  std::string label;
  double value = 0.0;  // sweep value; unused by compare
  std::uint64_t seed = 0;
  double map = 0.0;
  double auc = 0.0;
  double compactness_initial = 0.0;
  double compactness_final = 0.0;
  double final_accuracy = 0.0;
};

struct StudyRow {
  std::string label;
  double value = 0.0;
  double map = 0.0;  // mean over seeds
  double auc = 0.0;
  std::vector<StudyRun> runs;
};

/// One row per loss kind, averaged over cfg.study.seeds.
std::vector<StudyRow> cmd_compare(const ExperimentConfig& cfg, const fs::path& out_dir,
                                  std::size_t parallel = 1);

/// One row per value of cfg.study.sweep_parameter ("lambda" or "m").
std::vector<StudyRow> cmd_sweep(const ExperimentConfig& cfg, const fs::path& out_dir,
                                std::size_t parallel = 1);

std::string table_label(LossKind kind);

}  // namespace tcl
