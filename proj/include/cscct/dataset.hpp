#pragma once

// Task streams: datasets split into ordered disjoint-class tasks under the
// two stream protocols (half-first and equal splits), plus a synthetic
// Gaussian-blob generator and a CSV loader for desk-scale experiments.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace cscct {

struct LabeledExample {
  std::int64_t id = 0;
  std::vector<double> features;
  int label = 0;
};

struct Dataset {
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> test;
  int num_classes = 0;
  std::size_t feature_dim = 0;
};

struct Task {
  int index = 0;  // 1-based position in the stream
  std::vector<int> class_set;
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> test;
};

enum class StreamVariant { kHalfFirst, kEqual };

struct StreamProtocol {
  int first_task_classes = 0;  // B
  int per_task_classes = 0;    // C
  StreamVariant variant = StreamVariant::kEqual;
};

struct TaskStream {
  std::vector<Task> tasks;
  int num_classes = 0;
  std::size_t feature_dim = 0;
  std::vector<int> class_order;  // seeded permutation the stream was built from
};

struct SyntheticSpec {
  int num_classes = 2;
  int dim = 2;
  int per_class_train = 100;
  int per_class_test = 50;
  double class_mean_scale = 3.0;  // radius of the ball class means are drawn in
  double within_class_std = 1.0;
  std::uint64_t seed = 0;
};

/// Gaussian blobs around per-class means drawn uniformly in a ball.
/// Deterministic per seed; train/test ids are disjoint.
Dataset generate_synthetic(const SyntheticSpec& spec);

struct CsvSchema {
  std::string label_column;
};

struct CsvLoadResult {
  Dataset dataset;
  std::map<long long, int> label_remap;  // original label -> contiguous index
};

/// Header row, one label column named in the schema, remaining columns are
/// numeric features. LF or CRLF. Labels are remapped to a contiguous
/// 0-based range; the remap is returned. Parse failures name row and column.
CsvLoadResult load_csv_dataset(const std::string& path, const CsvSchema& schema);

/// Splits the dataset's classes into tasks: task 1 gets B classes, every
/// later task gets C, following a seeded uniform class permutation.
TaskStream build_stream(const Dataset& dataset, const StreamProtocol& protocol,
                        std::uint64_t class_order_seed);

struct Standardizer {
  std::vector<double> mean;
  std::vector<double> std_dev;  // zero-variance dimensions are kept at 1
  std::vector<double> apply(const std::vector<double>& features) const;
};

/// Per-dimension zero-mean/unit-variance using task-1 train statistics
/// only; the transform is applied to every example in the stream.
Standardizer standardize_stream(TaskStream& stream);

}  // namespace cscct
