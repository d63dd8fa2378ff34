#include "cscct/exemplar_memory.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cscct {

namespace {

std::vector<double> l2_normalized(const std::vector<double>& v) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm == 0.0) return v;  // zero vector stays zero
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / norm;
  return out;
}

}  // namespace

std::size_t ExemplarMemory::total_size() const {
  std::size_t n = 0;
  for (const auto& [cls, list] : store) n += list.size();
  return n;
}

std::vector<const LabeledExample*> ExemplarMemory::all_exemplars() const {
  std::vector<const LabeledExample*> out;
  out.reserve(total_size());
  for (const auto& [cls, list] : store) {
    for (const auto& ex : list) out.push_back(&ex);
  }
  return out;
}

std::map<int, std::vector<std::int64_t>> ExemplarMemory::ids() const {
  std::map<int, std::vector<std::int64_t>> out;
  for (const auto& [cls, list] : store) {
    auto& dst = out[cls];
    dst.reserve(list.size());
    for (const auto& ex : list) dst.push_back(ex.id);
  }
  return out;
}

std::vector<std::int64_t> herding_select(
    const std::vector<std::pair<std::int64_t, std::vector<double>>>& class_examples,
    int budget) {
  if (budget < 1) throw std::invalid_argument("herding_select: budget must be ≥ 1");
  if (class_examples.empty()) throw std::invalid_argument("herding_select: no examples");
  const std::size_t n = class_examples.size();
  const std::size_t d = class_examples.front().second.size();

  std::vector<std::vector<double>> feats(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (class_examples[i].second.size() != d) {
      throw std::invalid_argument("herding_select: inconsistent feature lengths");
    }
    feats[i] = l2_normalized(class_examples[i].second);
  }

  std::vector<double> mu(d, 0.0);
  for (const auto& f : feats) {
    for (std::size_t j = 0; j < d; ++j) mu[j] += f[j];
  }
  for (std::size_t j = 0; j < d; ++j) mu[j] /= static_cast<double>(n);

  const std::size_t take = std::min(static_cast<std::size_t>(budget), n);
  std::vector<bool> picked(n, false);
  std::vector<double> running_sum(d, 0.0);
  std::vector<std::int64_t> out;
  out.reserve(take);
  for (std::size_t step = 1; step <= take; ++step) {
    double best_dist = 0.0;
    std::size_t best = n;
    std::int64_t best_id = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (picked[i]) continue;
      double dist = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = mu[j] - (running_sum[j] + feats[i][j]) / static_cast<double>(step);
        dist += diff * diff;
      }
      const std::int64_t id = class_examples[i].first;
      if (best == n || dist < best_dist || (dist == best_dist && id < best_id)) {
        best = i;
        best_dist = dist;
        best_id = id;
      }
    }
    picked[best] = true;
    for (std::size_t j = 0; j < d; ++j) running_sum[j] += feats[best][j];
    out.push_back(class_examples[best].first);
  }
  return out;
}

void update_after_task(ExemplarMemory& memory, const Task& task, const FeatureFn& features) {
  if (memory.per_class_budget < 1) {
    throw std::invalid_argument("update_after_task: per_class_budget must be ≥ 1");
  }
  for (int cls : task.class_set) {
    if (memory.has_class(cls)) {
      throw std::invalid_argument("update_after_task: class " + std::to_string(cls) +
                                  " is already stored");
    }
  }
  for (int cls : task.class_set) {
    std::vector<std::pair<std::int64_t, std::vector<double>>> candidates;
    std::vector<const LabeledExample*> by_id;
    for (const auto& ex : task.train) {
      if (ex.label != cls) continue;
      candidates.emplace_back(ex.id, features(ex));
      by_id.push_back(&ex);
    }
    if (candidates.empty()) {
      throw std::invalid_argument("update_after_task: class " + std::to_string(cls) +
                                  " has no training examples");
    }
    const auto chosen = herding_select(candidates, memory.per_class_budget);
    auto& dst = memory.store[cls];
    for (std::int64_t id : chosen) {
      for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (candidates[i].first == id) {
          dst.push_back(*by_id[i]);
          break;
        }
      }
    }
  }
}

std::map<int, std::vector<double>> class_means(const ExemplarMemory& memory,
                                               const FeatureFn& features) {
  if (memory.store.empty()) throw std::invalid_argument("class_means: memory is empty");
  std::map<int, std::vector<double>> out;
  for (const auto& [cls, list] : memory.store) {
    std::vector<double> mean;
    for (const auto& ex : list) {
      const auto f = l2_normalized(features(ex));
      if (mean.empty()) mean.assign(f.size(), 0.0);
      if (f.size() != mean.size()) {
        throw std::invalid_argument("class_means: inconsistent feature lengths for class " +
                                    std::to_string(cls));
      }
      for (std::size_t j = 0; j < f.size(); ++j) mean[j] += f[j];
    }
    double norm = 0.0;
    for (double& x : mean) {
      x /= static_cast<double>(list.size());
      norm += x * x;
    }
    norm = std::sqrt(norm);
    if (norm < 1e-12) {
      throw std::domain_error("class_means: degenerate zero mean for class " +
                              std::to_string(cls));
    }
    for (double& x : mean) x /= norm;
    out[cls] = std::move(mean);
  }
  return out;
}

}  // namespace cscct
