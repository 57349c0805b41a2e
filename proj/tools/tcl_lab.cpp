// Command-line harness: dataset generation, training, embedding export,
// evaluation, gradient checking and the loss-comparison / sweep studies.

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "tcl/error.hpp"
#include "tcl/experiment.hpp"

namespace {

enum ExitCode { kOk = 0, kConfigError = 2, kNumericError = 3, kContractError = 4 };

int fail(const char* code, int exit_code, const std::string& message) {
  std::string flat = message;
  for (char& c : flat) {
    if (c == '\n') c = ' ';
  }
  std::cerr << "error code=" << code << " exit=" << exit_code << " message=\"" << flat << "\"\n";
  return exit_code;
}

tcl::ExperimentConfig resolve_config(const std::string& path, const std::string& out,
                                     const CLI::Option* seed_opt, std::uint64_t seed) {
  tcl::ExperimentConfig cfg = path.empty() ? tcl::ExperimentConfig{} : tcl::load_config(path);
  if (!out.empty()) cfg.output_dir = out;
  if (seed_opt && seed_opt->count() > 0) cfg.seed = seed;
  cfg.validate();
  return cfg;
}

void print_rows(const std::vector<tcl::StudyRow>& rows, const std::string& first_column) {
  std::printf("%-18s %8s %8s\n", first_column.c_str(), "AUC", "mAP");
  for (const auto& r : rows) {
    std::printf("%-18s %8.4f %8.4f\n", r.label.c_str(), r.auc, r.map);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Triplet-center loss laboratory"};
  app.require_subcommand(1);

  std::string config_path, out, checkpoint, dataset, embeddings, param, values;
  std::uint64_t seed = 0;
  std::size_t parallel = 1, configs = 100;
  bool pca2 = false, cross_domain = false, graded = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Experiment config (JSON)");
    cmd->add_option("--out", out, "Output file or directory");
    return cmd->add_option("--seed", seed, "Override the run seed");
  };

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset file");
  add_common(gen);

  auto* train = app.add_subcommand("train", "Train a model and write run artifacts");
  auto* train_seed = add_common(train);

  auto* embed = app.add_subcommand("embed", "Export test-set embeddings as CSV");
  embed->add_option("--checkpoint", checkpoint)->required();
  embed->add_option("--dataset", dataset)->required();
  embed->add_option("--out", out)->required();
  embed->add_flag("--pca2", pca2, "Append a 2-d principal-component projection");

  auto* eval = app.add_subcommand("eval", "Evaluate retrieval metrics");
  eval->add_option("--embeddings", embeddings);
  eval->add_option("--checkpoint", checkpoint);
  eval->add_option("--dataset", dataset);
  eval->add_option("--out", out);
  eval->add_flag("--cross-domain", cross_domain, "Domain-1 queries against the domain-0 database");
  eval->add_flag("--graded", graded, "Subcategory-graded NDCG");

  auto* gradcheck = app.add_subcommand("gradcheck", "Check analytic gradients numerically");
  gradcheck->add_option("--seed", seed);
  gradcheck->add_option("--configs", configs, "Random configurations per loss");
  gradcheck->add_option("--out", out);

  auto* compare = app.add_subcommand("compare", "Loss comparison study");
  auto* compare_seed = add_common(compare);
  compare->add_option("--parallel", parallel);

  auto* sweep = app.add_subcommand("sweep", "Hyper-parameter sweep (lambda or m)");
  auto* sweep_seed = add_common(sweep);
  sweep->add_option("--param", param, "lambda or m");
  sweep->add_option("--values", values, "Comma-separated values");
  sweep->add_option("--parallel", parallel);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return fail("CONFIG", kConfigError, e.what());
  }

  try {
    if (gen->parsed()) {
      const auto cfg = resolve_config(config_path, "", nullptr, 0);
      if (out.empty()) throw tcl::ConfigError("gen-data needs --out FILE");
      tcl::cmd_gen_data(cfg, out);
      std::cout << "wrote " << out << "\n";
    } else if (train->parsed()) {
      const auto cfg = resolve_config(config_path, out, train_seed, seed);
      const auto outcome = tcl::cmd_train(cfg, cfg.output_dir);
      std::printf("mAP %.4f  AUC %.4f  compactness %.4f -> %.4f  (%.1fs)\n",
                  outcome.report.micro("mAP"), outcome.report.micro("AUC"),
                  outcome.compactness_initial, outcome.compactness_final,
                  outcome.trained.stats.wall_seconds);
    } else if (embed->parsed()) {
      tcl::cmd_embed(checkpoint, dataset, out, pca2);
      std::cout << "wrote " << out << "\n";
    } else if (eval->parsed()) {
      tcl::EvalConfig ec;
      ec.cross_domain = cross_domain;
      ec.graded = graded;
      tcl::MetricReport report;
      if (!embeddings.empty()) {
        report = tcl::cmd_eval_embeddings(embeddings, ec, out);
      } else if (!checkpoint.empty() && !dataset.empty()) {
        report = tcl::cmd_eval_checkpoint(checkpoint, dataset, ec, out);
      } else {
        throw tcl::ConfigError("eval needs --embeddings or --checkpoint with --dataset");
      }
      for (const char* name : tcl::kMetricNames) {
        std::printf("%-5s micro %.4f  macro %.4f\n", name, report.micro(name), report.macro(name));
      }
    } else if (gradcheck->parsed()) {
      tcl::GradCheckOptions opts;
      opts.seed = seed;
      opts.configs = configs;
      const auto entries = tcl::cmd_gradcheck(opts, out);
      bool ok = true;
      for (const auto& e : entries) {
        std::printf("%-20s max_rel_err %.3e  threshold %.0e  %s\n", e.name.c_str(),
                    e.max_rel_error, e.threshold, e.pass() ? "PASS" : "FAIL");
        ok = ok && e.pass();
      }
      if (!ok) return fail("NUMERIC", kNumericError, "gradient check failed");
    } else if (compare->parsed()) {
      const auto cfg = resolve_config(config_path, out, compare_seed, seed);
      print_rows(tcl::cmd_compare(cfg, cfg.output_dir, parallel), "loss");
    } else if (sweep->parsed()) {
      auto cfg = resolve_config(config_path, out, sweep_seed, seed);
      if (!param.empty()) cfg.study.sweep_parameter = param;
      if (!values.empty()) {
        cfg.study.sweep_values.clear();
        std::stringstream ss(values);
        std::string item;
        while (std::getline(ss, item, ',')) {
          try {
            cfg.study.sweep_values.push_back(std::stod(item));
          } catch (const std::exception&) {
            throw tcl::ConfigError("--values: cannot parse '" + item + "'");
          }
        }
      }
      cfg.validate();
      print_rows(tcl::cmd_sweep(cfg, cfg.output_dir, parallel), cfg.study.sweep_parameter);
    }
  } catch (const tcl::ConfigError& e) {
    return fail("CONFIG", kConfigError, e.what());
  } catch (const tcl::NumericError& e) {
    return fail("NUMERIC", kNumericError, e.what());
  } catch (const tcl::ContractError& e) {
    return fail("CONTRACT", kContractError, e.what());
  } catch (const std::exception& e) {
    return fail("CONTRACT", kContractError, e.what());
  }
  return kOk;
}
