// Command-line driver: `run` executes an experiment config, `compare`
// tabulates summaries, `export-embeddings` dumps features of a dataset
// under a checkpointed model.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "cscct/checkpoint.hpp"
#include "cscct/experiment.hpp"
#include "cscct/metrics.hpp"

namespace fs = std::filesystem;
using namespace cscct;

namespace {

int cmd_run(const std::string& config_path, const RunOptions& options) {
  ExperimentConfig config = ExperimentConfig::from_file(config_path);
  const RunSummary summary = run_experiment(config, options);

  std::printf("preset %s  config %s  tasks %d  wall %.1fs\n", summary.preset.c_str(),
              summary.config_hash.c_str(), summary.num_tasks, summary.wall_clock_seconds);
  for (const auto& r : summary.results) {
    if (r.failed) {
      std::printf("  seed %llu: FAILED: %s\n", static_cast<unsigned long long>(r.seed),
                  r.error.c_str());
    } else {
      std::printf("  seed %llu: avg_inc_acc %.4f  apt %.4f  act %.4f\n",
                  static_cast<unsigned long long>(r.seed), r.avg_incremental_accuracy,
                  r.apt_value, r.act_value);
    }
  }
  std::printf("aggregate: avg_inc_acc %.4f ± %.4f  apt %.4f ± %.4f  act %.4f ± %.4f\n",
              summary.avg_incremental_accuracy.mean, summary.avg_incremental_accuracy.stddev,
              summary.apt_value.mean, summary.apt_value.stddev, summary.act_value.mean,
              summary.act_value.stddev);
  std::printf("summary: %s\n", summary.summary_path.c_str());
  return summary.any_failed() ? 1 : 0;
}

int cmd_compare(const std::vector<std::string>& paths, const std::string& csv_out) {
  std::vector<RunSummary> summaries;
  summaries.reserve(paths.size());
  for (const auto& p : paths) summaries.push_back(read_summary(p));
  const ComparisonTable table = compare_runs(summaries);
  std::fputs(comparison_text(table).c_str(), stdout);
  if (!csv_out.empty()) {
    std::ofstream out(csv_out, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + csv_out + "'");
    out << comparison_csv(table);
    std::printf("csv: %s\n", csv_out.c_str());
  }
  return 0;
}

int cmd_export_embeddings(const std::string& checkpoint_path, const std::string& dataset_path,
                          const std::string& label_column, const std::string& out_path) {
  const Checkpoint ckpt = read_checkpoint(checkpoint_path);
  const CsvLoadResult loaded = load_csv_dataset(dataset_path, {label_column});

  std::vector<LabeledExample> standardized = loaded.dataset.train;
  for (auto& ex : standardized) ex.features = ckpt.standardizer.apply(ex.features);

  export_embeddings(ckpt.model, standardized, ckpt.phase, out_path);
  std::printf("wrote %zu embeddings (phase %d) to %s\n", standardized.size(), ckpt.phase,
              out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cross-space clustering / controlled transfer incremental-learning lab"};
  app.require_subcommand(1);

  // run
  std::string config_path;
  RunOptions options;
  std::string seed_list;
  std::string out_dir;
  auto* run = app.add_subcommand("run", "run an experiment from a config file");
  run->add_option("config", config_path, "experiment config (ini)")->required();
  run->add_option("--out", out_dir, "output directory override");
  run->add_flag("--force", options.force, "overwrite a non-empty output directory");
  run->add_option("--seed-override", seed_list, "comma-separated seeds replacing the config");
  run->add_option("--parallel", options.parallel, "worker threads across seeds")
      ->check(CLI::PositiveNumber);
  run->add_flag("--emit-embeddings", options.emit_embeddings,
                "write per-phase embedding dumps");

  // compare
  std::vector<std::string> summary_paths;
  std::string csv_out;
  auto* compare = app.add_subcommand("compare", "tabulate two or more run summaries");
  compare->add_option("summaries", summary_paths, "summary.txt paths")
      ->required()
      ->expected(-2);
  compare->add_option("--out", csv_out, "also write the table as csv");

  // export-embeddings
  std::string ckpt_path, dataset_path, label_column = "label", emb_out = "embeddings.csv";
  auto* exp = app.add_subcommand("export-embeddings",
                                 "dump feature-space embeddings of a csv dataset");
  exp->add_option("checkpoint", ckpt_path, "phase checkpoint")->required();
  exp->add_option("dataset", dataset_path, "csv dataset")->required();
  exp->add_option("--label-column", label_column, "label column name");
  exp->add_option("--out", emb_out, "output csv path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      if (!seed_list.empty()) {
        std::vector<std::uint64_t> seeds;
        std::string cur;
        for (char c : seed_list + ",") {
          if (c == ',') {
            if (!cur.empty()) seeds.push_back(std::stoull(cur));
            cur.clear();
          } else {
            cur.push_back(c);
          }
        }
        options.seed_override = seeds;
      }
      if (!out_dir.empty()) options.output_override = out_dir;
      return cmd_run(config_path, options);
    }
    if (compare->parsed()) return cmd_compare(summary_paths, csv_out);
    if (exp->parsed()) {
      return cmd_export_embeddings(ckpt_path, dataset_path, label_column, emb_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
