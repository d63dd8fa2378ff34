#pragma once

// Evaluation metrics over the lower-triangular accuracy matrix
// acc[t][k] = accuracy of the phase-t model on task k's test set:
// average incremental accuracy, plus the stability proxy (average
// accuracy on previous tasks) and plasticity proxy (average accuracy on
// the current task).

#include <string>
#include <vector>

#include "cscct/dataset.hpp"
#include "cscct/model.hpp"

namespace cscct {

class AccuracyMatrix {
 public:
  /// Appends the row for phase t: accuracies on tasks 1..t plus the test
  /// count of the newly introduced task.
  void add_phase(const std::vector<double>& accuracies, std::size_t new_task_test_count);

  int num_phases() const { return static_cast<int>(rows_.size()); }
  /// acc(t, k), both 1-based, k ≤ t.
  double at(int t, int k) const;
  std::size_t test_count(int k) const;

  const std::vector<std::vector<double>>& rows() const { return rows_; }

 private:
  std::vector<std::vector<double>> rows_;
  std::vector<std::size_t> test_counts_;
};

/// Mean over phases of the test-size-weighted accuracy on all tasks seen
/// by that phase; phases weigh equally.
double average_incremental_accuracy(const AccuracyMatrix& matrix);

/// (1/(T-1)) * sum_{t=2..T} mean_{k<t} acc(t, k). Needs T ≥ 2.
double apt(const AccuracyMatrix& matrix);

/// (1/T) * sum_t acc(t, t).
double act(const AccuracyMatrix& matrix);

/// CSV rows `t,k,accuracy,test_count` with a header.
void write_matrix_csv(const std::string& path, const AccuracyMatrix& matrix);
AccuracyMatrix read_matrix_csv(const std::string& path);

/// One CSV row per example: id, label, phase, then the feature vector
/// under the given model. Rows ordered by id.
void export_embeddings(const Model& model, const std::vector<LabeledExample>& examples,
                       int phase, const std::string& path);

}  // namespace cscct
