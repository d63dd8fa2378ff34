#include "cscct/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "cscct/checkpoint.hpp"
#include "cscct/exemplar_memory.hpp"

namespace fs = std::filesystem;

namespace cscct {

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

Aggregate aggregate_of(const std::vector<double>& values) {
  Aggregate a;
  if (values.empty()) return a;
  for (double v : values) a.mean += v;
  a.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return a;
}

void write_train_log(const std::string& path,
                     const std::vector<std::pair<int, LossBreakdown>>& steps) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "task,step,total,cross_entropy,logit_distillation,cross_cluster,transfer\n";
  int step_no = 0;
  int last_task = -1;
  for (const auto& [task, parts] : steps) {
    if (task != last_task) {
      step_no = 0;
      last_task = task;
    }
    ++step_no;
    out << task << "," << step_no << "," << format_double(parts.total) << ","
        << format_double(parts.cross_entropy) << "," << format_double(parts.distillation)
        << "," << format_double(parts.cross_cluster) << "," << format_double(parts.transfer)
        << "\n";
  }
}

SeedResult run_one_seed(const ExperimentConfig& config, std::uint64_t seed,
                        const fs::path& out_dir, const Dataset* csv_dataset,
                        bool emit_embeddings) {
  SeedResult result;
  result.seed = seed;

  const RngSplitter splitter(seed);

  Dataset dataset;
  if (config.dataset.kind == DatasetSource::Kind::kSynthetic) {
    SyntheticSpec spec = config.dataset.synthetic;
    spec.seed = splitter.derive("data");
    dataset = generate_synthetic(spec);
  } else {
    dataset = *csv_dataset;
  }

  TaskStream stream = build_stream(dataset, config.protocol, splitter.derive("class_order"));
  const Standardizer standardizer = standardize_stream(stream);
  const int num_tasks = static_cast<int>(stream.tasks.size());

  TrainConfig train = config.train;
  train.seed = seed;

  auto init_rng = splitter.stream("init");
  ModelPair pair;
  pair.current = Model::init(stream.feature_dim, config.hidden, config.feature_dim, init_rng);

  LabelRemap remap;
  ExemplarMemory memory;
  memory.per_class_budget = config.exemplars_per_class;
  AccuracyMatrix matrix;
  std::vector<std::pair<int, LossBreakdown>> step_log;

  const std::string seed_dir = "seed_" + std::to_string(seed);
  fs::create_directories(out_dir / seed_dir);

  const FeatureFn current_features = [&pair](const LabeledExample& ex) {
    return pair.current.features_of(ex.features);
  };

  for (const Task& task : stream.tasks) {
    if (task.index >= 2) pair.previous = snapshot(pair.current);
    remap.append_classes(task.class_set);
    auto expand_rng = splitter.stream("expand/" + std::to_string(task.index));
    pair.current.expand_classifier(static_cast<int>(task.class_set.size()), expand_rng);

    const PhaseResult phase = train_phase(pair, task, memory, remap, train);
    for (const auto& parts : phase.step_losses) step_log.emplace_back(task.index, parts);

    update_after_task(memory, task, current_features);

    std::vector<double> row;
    for (int k = 1; k <= task.index; ++k) {
      row.push_back(eval_accuracy(pair.current, memory, remap,
                                  stream.tasks[static_cast<std::size_t>(k - 1)].test,
                                  train.classifier));
    }
    matrix.add_phase(row, task.test.size());

    Checkpoint ckpt;
    ckpt.config_hash = std::stoull(config.config_hash(), nullptr, 16);
    ckpt.master_seed = seed;
    ckpt.phase = task.index;
    ckpt.standardizer = standardizer;
    ckpt.remap = remap;
    ckpt.model = pair.current;
    ckpt.exemplar_budget = memory.per_class_budget;
    ckpt.exemplar_ids = memory.ids();
    const std::string ckpt_rel = seed_dir + "/phase_" + std::to_string(task.index) + ".ckpt";
    write_checkpoint((out_dir / ckpt_rel).string(), ckpt);
    result.checkpoints.push_back(ckpt_rel);

    if (emit_embeddings) {
      std::vector<LabeledExample> seen_tests;
      for (int k = 1; k <= task.index; ++k) {
        const auto& t = stream.tasks[static_cast<std::size_t>(k - 1)].test;
        seen_tests.insert(seen_tests.end(), t.begin(), t.end());
      }
      const std::string emb_rel =
          seed_dir + "/embeddings_phase_" + std::to_string(task.index) + ".csv";
      export_embeddings(pair.current, seen_tests, task.index, (out_dir / emb_rel).string());
      result.embeddings.push_back(emb_rel);
    }
  }

  result.matrix_csv = seed_dir + "/matrix.csv";
  write_matrix_csv((out_dir / result.matrix_csv).string(), matrix);
  result.train_log = seed_dir + "/train_log.csv";
  write_train_log((out_dir / result.train_log).string(), step_log);

  result.avg_incremental_accuracy = average_incremental_accuracy(matrix);
  result.apt_value = num_tasks >= 2 ? apt(matrix) : std::nan("");
  result.act_value = act(matrix);
  return result;
}

}  // namespace

bool RunSummary::any_failed() const {
  for (const auto& r : results) {
    if (r.failed) return true;
  }
  return false;
}

std::string resolve_output_dir(const ExperimentConfig& config, const RunOptions& options) {
  std::string dir = options.output_override.value_or(config.output_dir);
  if (!dir.empty() && dir.front() != '/') {
    if (const char* root = std::getenv("CSCCT_OUTPUT_ROOT"); root && *root) {
      dir = (fs::path(root) / dir).string();
    }
  }
  return dir;
}

RunSummary run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();

  const fs::path out_dir = resolve_output_dir(config, options);
  if (fs::exists(out_dir) && !fs::is_empty(out_dir) && !options.force) {
    throw std::runtime_error("output directory '" + out_dir.string() +
                             "' is not empty; pass force to overwrite");
  }
  fs::create_directories(out_dir);

  const std::vector<std::uint64_t> seeds = options.seed_override.value_or(config.seeds);
  if (seeds.empty()) throw std::invalid_argument("run_experiment: no seeds");
  const bool emit = config.emit_embeddings || options.emit_embeddings;

  Dataset csv_dataset;
  if (config.dataset.kind == DatasetSource::Kind::kCsv) {
    // CSV has no train/test split of its own: split per class, last
    // quarter of each class's rows held out for test.
    CsvLoadResult loaded = load_csv_dataset(config.dataset.csv_path, config.dataset.csv_schema);
    csv_dataset.num_classes = loaded.dataset.num_classes;
    csv_dataset.feature_dim = loaded.dataset.feature_dim;
    std::map<int, std::vector<LabeledExample>> by_class;
    for (auto& ex : loaded.dataset.train) by_class[ex.label].push_back(std::move(ex));
    for (auto& [cls, rows] : by_class) {
      const std::size_t holdout = std::max<std::size_t>(1, rows.size() / 4);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        (i + holdout < rows.size() ? csv_dataset.train : csv_dataset.test)
            .push_back(std::move(rows[i]));
      }
    }
  }

  RunSummary summary;
  summary.preset = preset_name(config.preset);
  summary.config_hash = config.config_hash();
  summary.dataset_desc = config.dataset.describe();
  summary.classifier = config.train.classifier == ClassifierMode::kNme ? "nme" : "linear";
  summary.protocol = config.protocol;
  summary.seeds = seeds;
  summary.results.resize(seeds.size());

  const int workers = std::max(1, std::min<int>(options.parallel,
                                                static_cast<int>(seeds.size())));
  auto work = [&](std::size_t index) {
    SeedResult& slot = summary.results[index];
    try {
      slot = run_one_seed(config, seeds[index], out_dir,
                          config.dataset.kind == DatasetSource::Kind::kCsv ? &csv_dataset
                                                                           : nullptr,
                          emit);
    } catch (const std::exception& e) {
      slot.seed = seeds[index];
      slot.failed = true;
      slot.error = e.what();
    }
  };

  if (workers == 1) {
    for (std::size_t i = 0; i < seeds.size(); ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&]() {
        for (std::size_t i = next.fetch_add(1); i < seeds.size(); i = next.fetch_add(1)) {
          work(i);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  std::vector<double> avgs, apts, acts;
  for (const auto& r : summary.results) {
    if (r.failed) continue;
    avgs.push_back(r.avg_incremental_accuracy);
    if (!std::isnan(r.apt_value)) apts.push_back(r.apt_value);
    acts.push_back(r.act_value);
  }
  summary.avg_incremental_accuracy = aggregate_of(avgs);
  summary.apt_value = aggregate_of(apts);
  summary.act_value = aggregate_of(acts);

  // num_tasks from the protocol and dataset class count
  int total_classes = config.dataset.synthetic.num_classes;
  if (config.dataset.kind == DatasetSource::Kind::kCsv) {
    total_classes = csv_dataset.num_classes;
  }
  summary.num_tasks =
      1 + (total_classes - config.protocol.first_task_classes) / config.protocol.per_task_classes;

  summary.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  summary.summary_path = (out_dir / "summary.txt").string();
  write_summary(summary.summary_path, summary);
  return summary;
}

void write_summary(const std::string& path, const RunSummary& summary) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");

  out << "[run]\n";
  out << "preset = " << summary.preset << "\n";
  out << "config_hash = " << summary.config_hash << "\n";
  out << "dataset = " << summary.dataset_desc << "\n";
  out << "classifier = " << summary.classifier << "\n";
  out << "num_tasks = " << summary.num_tasks << "\n";
  {
    std::string s;
    for (std::uint64_t v : summary.seeds) s += (s.empty() ? "" : ",") + std::to_string(v);
    out << "seeds = " << s << "\n";
  }
  out << "wall_clock_seconds = " << format_double(summary.wall_clock_seconds) << "\n\n";

  out << "[protocol]\n";
  out << "variant = "
      << (summary.protocol.variant == StreamVariant::kHalfFirst ? "half_first" : "equal")
      << "\n";
  out << "first_task_classes = " << summary.protocol.first_task_classes << "\n";
  out << "per_task_classes = " << summary.protocol.per_task_classes << "\n\n";

  out << "[aggregate]\n";
  out << "avg_incremental_accuracy_mean = " << format_double(summary.avg_incremental_accuracy.mean)
      << "\n";
  out << "avg_incremental_accuracy_std = "
      << format_double(summary.avg_incremental_accuracy.stddev) << "\n";
  out << "apt_mean = " << format_double(summary.apt_value.mean) << "\n";
  out << "apt_std = " << format_double(summary.apt_value.stddev) << "\n";
  out << "act_mean = " << format_double(summary.act_value.mean) << "\n";
  out << "act_std = " << format_double(summary.act_value.stddev) << "\n";

  for (const auto& r : summary.results) {
    out << "\n[seed." << r.seed << "]\n";
    out << "seed = " << r.seed << "\n";
    out << "status = " << (r.failed ? "failed" : "ok") << "\n";
    if (r.failed) {
      out << "error = " << r.error << "\n";
      continue;
    }
    out << "avg_incremental_accuracy = " << format_double(r.avg_incremental_accuracy) << "\n";
    out << "apt = " << format_double(r.apt_value) << "\n";
    out << "act = " << format_double(r.act_value) << "\n";
    out << "matrix_csv = " << r.matrix_csv << "\n";
    out << "train_log = " << r.train_log << "\n";
    {
      std::string s;
      for (const auto& c : r.checkpoints) s += (s.empty() ? "" : ",") + c;
      out << "checkpoints = " << s << "\n";
    }
    {
      std::string s;
      for (const auto& c : r.embeddings) s += (s.empty() ? "" : ",") + c;
      out << "embeddings = " << s << "\n";
    }
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

namespace {

std::vector<std::string> split_list_str(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

const std::string& require_key(const IniData& data, const std::string& section,
                               const std::string& key, const std::string& path) {
  auto s = data.find(section);
  if (s == data.end()) {
    throw std::runtime_error("summary '" + path + "': missing section [" + section + "]");
  }
  auto k = s->second.find(key);
  if (k == s->second.end()) {
    throw std::runtime_error("summary '" + path + "': missing [" + section + "] " + key);
  }
  return k->second;
}

}  // namespace

RunSummary read_summary(const std::string& path) {
  const IniData data = parse_ini(path);
  RunSummary summary;
  summary.summary_path = path;
  summary.preset = require_key(data, "run", "preset", path);
  summary.config_hash = require_key(data, "run", "config_hash", path);
  summary.dataset_desc = require_key(data, "run", "dataset", path);
  summary.classifier = require_key(data, "run", "classifier", path);
  summary.num_tasks = std::stoi(require_key(data, "run", "num_tasks", path));
  for (const auto& s : split_list_str(require_key(data, "run", "seeds", path))) {
    summary.seeds.push_back(std::stoull(s));
  }
  summary.wall_clock_seconds = std::stod(require_key(data, "run", "wall_clock_seconds", path));

  const std::string variant = require_key(data, "protocol", "variant", path);
  summary.protocol.variant =
      variant == "half_first" ? StreamVariant::kHalfFirst : StreamVariant::kEqual;
  summary.protocol.first_task_classes =
      std::stoi(require_key(data, "protocol", "first_task_classes", path));
  summary.protocol.per_task_classes =
      std::stoi(require_key(data, "protocol", "per_task_classes", path));

  summary.avg_incremental_accuracy.mean =
      std::stod(require_key(data, "aggregate", "avg_incremental_accuracy_mean", path));
  summary.avg_incremental_accuracy.stddev =
      std::stod(require_key(data, "aggregate", "avg_incremental_accuracy_std", path));
  summary.apt_value.mean = std::stod(require_key(data, "aggregate", "apt_mean", path));
  summary.apt_value.stddev = std::stod(require_key(data, "aggregate", "apt_std", path));
  summary.act_value.mean = std::stod(require_key(data, "aggregate", "act_mean", path));
  summary.act_value.stddev = std::stod(require_key(data, "aggregate", "act_std", path));

  for (std::uint64_t seed : summary.seeds) {
    const std::string section = "seed." + std::to_string(seed);
    SeedResult r;
    r.seed = seed;
    r.failed = require_key(data, section, "status", path) == "failed";
    if (!r.failed) {
      r.avg_incremental_accuracy =
          std::stod(require_key(data, section, "avg_incremental_accuracy", path));
      r.apt_value = std::stod(require_key(data, section, "apt", path));
      r.act_value = std::stod(require_key(data, section, "act", path));
      r.matrix_csv = require_key(data, section, "matrix_csv", path);
      r.train_log = require_key(data, section, "train_log", path);
      r.checkpoints = split_list_str(require_key(data, section, "checkpoints", path));
      r.embeddings = split_list_str(require_key(data, section, "embeddings", path));
    }
    summary.results.push_back(std::move(r));
  }
  return summary;
}

ComparisonTable compare_runs(const std::vector<RunSummary>& summaries) {
  if (summaries.size() < 2) {
    throw std::invalid_argument("compare: needs at least two summaries");
  }
  const RunSummary& first = summaries.front();
  for (const auto& s : summaries) {
    const bool compatible = s.protocol.variant == first.protocol.variant &&
                            s.protocol.first_task_classes == first.protocol.first_task_classes &&
                            s.protocol.per_task_classes == first.protocol.per_task_classes &&
                            s.num_tasks == first.num_tasks &&
                            s.dataset_desc == first.dataset_desc;
    if (!compatible) {
      throw std::invalid_argument("compare: '" + s.summary_path +
                                  "' was produced under an incompatible protocol or dataset");
    }
  }

  ComparisonTable table;
  for (const auto& s : summaries) {
    ComparisonRow row;
    row.preset = s.preset;
    row.source = s.summary_path;
    row.avg = s.avg_incremental_accuracy;
    row.apt = s.apt_value;
    row.act = s.act_value;
    table.rows.push_back(std::move(row));
  }
  {
    std::size_t best = 0;
    for (std::size_t i = 1; i < table.rows.size(); ++i) {
      if (table.rows[i].avg.mean > table.rows[best].avg.mean) best = i;
    }
    table.rows[best].best_avg = true;
  }
  {
    std::size_t best = 0;
    for (std::size_t i = 1; i < table.rows.size(); ++i) {
      if (table.rows[i].apt.mean > table.rows[best].apt.mean) best = i;
    }
    table.rows[best].best_apt = true;
  }
  {
    std::size_t best = 0;
    for (std::size_t i = 1; i < table.rows.size(); ++i) {
      if (table.rows[i].act.mean > table.rows[best].act.mean) best = i;
    }
    table.rows[best].best_act = true;
  }
  return table;
}

std::string comparison_text(const ComparisonTable& table) {
  std::ostringstream os;
  auto cell = [](const Aggregate& a, bool best) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s%.4f ± %.4f", best ? "*" : " ", a.mean, a.stddev);
    return std::string(buf);
  };
  os << std::left;
  char header[128];
  std::snprintf(header, sizeof(header), "%-18s %-20s %-20s %-20s\n", "preset",
                "avg_inc_acc", "apt", "act");
  os << header;
  for (const auto& row : table.rows) {
    char line[192];
    std::snprintf(line, sizeof(line), "%-18s %-20s %-20s %-20s\n", row.preset.c_str(),
                  cell(row.avg, row.best_avg).c_str(), cell(row.apt, row.best_apt).c_str(),
                  cell(row.act, row.best_act).c_str());
    os << line;
  }
  return os.str();
}

std::string comparison_csv(const ComparisonTable& table) {
  std::ostringstream os;
  os << "preset,avg_inc_acc_mean,avg_inc_acc_std,avg_best,apt_mean,apt_std,apt_best,"
        "act_mean,act_std,act_best\n";
  for (const auto& row : table.rows) {
    os << row.preset << "," << format_double(row.avg.mean) << ","
       << format_double(row.avg.stddev) << "," << (row.best_avg ? 1 : 0) << ","
       << format_double(row.apt.mean) << "," << format_double(row.apt.stddev) << ","
       << (row.best_apt ? 1 : 0) << "," << format_double(row.act.mean) << ","
       << format_double(row.act.stddev) << "," << (row.best_act ? 1 : 0) << "\n";
  }
  return os.str();
}

}  // namespace cscct
