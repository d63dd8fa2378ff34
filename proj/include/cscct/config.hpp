#pragma once

// Experiment configuration: one INI-style text file with nested sections
// drives the dataset, protocol, model, training, loss weights, and run
// layout. The config hash covers every semantically meaningful field so
// runs can be tied back to exact settings.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cscct/dataset.hpp"
#include "cscct/learner.hpp"

namespace cscct {

enum class MethodPreset {
  kFinetuneReplay,  // alpha = beta = base_kd = 0
  kBaseKd,          // alpha = beta = 0
  kBaseKdCsc,       // beta = 0
  kBaseKdCt,        // alpha = 0
  kBaseKdCscct,     // all terms active
};

std::string preset_name(MethodPreset preset);
MethodPreset parse_preset(const std::string& name);

struct DatasetSource {
  enum class Kind { kSynthetic, kCsv };
  Kind kind = Kind::kSynthetic;
  SyntheticSpec synthetic;  // per-run seed is derived from the run seed
  std::string csv_path;
  CsvSchema csv_schema;

  std::string describe() const;
};

struct ExperimentConfig {
  DatasetSource dataset;
  StreamProtocol protocol{2, 2, StreamVariant::kEqual};
  std::vector<std::size_t> hidden = {64};
  std::size_t feature_dim = 32;
  TrainConfig train;
  int exemplars_per_class = 20;
  MethodPreset preset = MethodPreset::kBaseKdCscct;
  std::string output_dir = "out/run";
  std::vector<std::uint64_t> seeds = {1};
  bool emit_embeddings = false;

  /// Zeroes the loss weights the preset excludes.
  void apply_preset();
  void validate() const;

  /// Canonical dump of semantic fields (sorted key=value lines); the
  /// output directory is excluded since it does not affect results.
  std::string canonical_string() const;
  std::string config_hash() const;  // fnv1a-64 over the canonical string, hex

  static ExperimentConfig from_file(const std::string& path);
};

using IniData = std::map<std::string, std::map<std::string, std::string>>;

/// `[section]` headers, `key = value` lines, `#`/`;` comments, blank
/// lines ignored. Errors carry line numbers.
IniData parse_ini(const std::string& path);
IniData parse_ini_text(const std::string& text, const std::string& origin);

}  // namespace cscct
