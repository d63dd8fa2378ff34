#include "cscct/metrics.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cscct {

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void AccuracyMatrix::add_phase(const std::vector<double>& accuracies,
                               std::size_t new_task_test_count) {
  if (accuracies.size() != rows_.size() + 1) {
    throw std::invalid_argument("accuracy matrix: phase " + std::to_string(rows_.size() + 1) +
                                " expects " + std::to_string(rows_.size() + 1) + " entries");
  }
  for (double a : accuracies) {
    if (a < 0.0 || a > 1.0) {
      throw std::invalid_argument("accuracy matrix: accuracy outside [0,1]");
    }
  }
  if (new_task_test_count == 0) {
    throw std::invalid_argument("accuracy matrix: empty test set for new task");
  }
  rows_.push_back(accuracies);
  test_counts_.push_back(new_task_test_count);
}

double AccuracyMatrix::at(int t, int k) const {
  if (t < 1 || t > num_phases() || k < 1 || k > t) {
    throw std::invalid_argument("accuracy matrix: index (" + std::to_string(t) + "," +
                                std::to_string(k) + ") outside the lower triangle");
  }
  return rows_[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(k - 1)];
}

std::size_t AccuracyMatrix::test_count(int k) const {
  if (k < 1 || k > num_phases()) {
    throw std::invalid_argument("accuracy matrix: test_count index out of range");
  }
  return test_counts_[static_cast<std::size_t>(k - 1)];
}

double average_incremental_accuracy(const AccuracyMatrix& matrix) {
  const int phases = matrix.num_phases();
  if (phases == 0) throw std::invalid_argument("average_incremental_accuracy: empty matrix");
  double acc = 0.0;
  for (int t = 1; t <= phases; ++t) {
    double weighted = 0.0;
    double total = 0.0;
    for (int k = 1; k <= t; ++k) {
      const double w = static_cast<double>(matrix.test_count(k));
      weighted += matrix.at(t, k) * w;
      total += w;
    }
    acc += weighted / total;
  }
  return acc / static_cast<double>(phases);
}

double apt(const AccuracyMatrix& matrix) {
  const int phases = matrix.num_phases();
  if (phases < 2) throw std::invalid_argument("apt: needs at least 2 phases");
  double acc = 0.0;
  for (int t = 2; t <= phases; ++t) {
    double inner = 0.0;
    for (int k = 1; k <= t - 1; ++k) inner += matrix.at(t, k);
    acc += inner / static_cast<double>(t - 1);
  }
  return acc / static_cast<double>(phases - 1);
}

double act(const AccuracyMatrix& matrix) {
  const int phases = matrix.num_phases();
  if (phases < 1) throw std::invalid_argument("act: empty matrix");
  double acc = 0.0;
  for (int t = 1; t <= phases; ++t) acc += matrix.at(t, t);
  return acc / static_cast<double>(phases);
}

void write_matrix_csv(const std::string& path, const AccuracyMatrix& matrix) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "t,k,accuracy,test_count\n";
  for (int t = 1; t <= matrix.num_phases(); ++t) {
    for (int k = 1; k <= t; ++k) {
      out << t << "," << k << "," << format_double(matrix.at(t, k)) << ","
          << matrix.test_count(k) << "\n";
    }
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

AccuracyMatrix read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("'" + path + "' is empty");

  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> counts;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string cell;
    int t, k;
    double a;
    std::size_t n;
    std::getline(ss, cell, ',');
    t = std::stoi(cell);
    std::getline(ss, cell, ',');
    k = std::stoi(cell);
    std::getline(ss, cell, ',');
    a = std::stod(cell);
    std::getline(ss, cell, ',');
    n = static_cast<std::size_t>(std::stoull(cell));
    if (t < 1 || k < 1 || k > t) throw std::runtime_error("'" + path + "': bad matrix index");
    if (static_cast<std::size_t>(t) > rows.size()) {
      rows.resize(static_cast<std::size_t>(t));
      counts.resize(static_cast<std::size_t>(t), 0);
    }
    auto& row = rows[static_cast<std::size_t>(t - 1)];
    if (row.size() != static_cast<std::size_t>(k - 1)) {
      throw std::runtime_error("'" + path + "': matrix rows out of order");
    }
    row.push_back(a);
    counts[static_cast<std::size_t>(k - 1)] = n;
  }

  AccuracyMatrix matrix;
  for (std::size_t t = 0; t < rows.size(); ++t) {
    matrix.add_phase(rows[t], counts[t]);
  }
  return matrix;
}

void export_embeddings(const Model& model, const std::vector<LabeledExample>& examples,
                       int phase, const std::string& path) {
  if (examples.empty()) throw std::invalid_argument("export_embeddings: no examples");
  std::vector<const LabeledExample*> ordered;
  ordered.reserve(examples.size());
  for (const auto& ex : examples) ordered.push_back(&ex);
  std::sort(ordered.begin(), ordered.end(),
            [](const LabeledExample* a, const LabeledExample* b) { return a->id < b->id; });

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  const std::size_t dim = model.feature_dim;
  out << "id,label,phase";
  for (std::size_t d = 0; d < dim; ++d) out << ",f" << d;
  out << "\n";
  for (const auto* ex : ordered) {
    const auto f = model.features_of(ex->features);
    out << ex->id << "," << ex->label << "," << phase;
    for (double v : f) out << "," << format_double(v);
    out << "\n";
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace cscct
