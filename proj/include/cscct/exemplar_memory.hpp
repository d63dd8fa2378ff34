#pragma once

// Bounded replay buffer with herding selection: each class keeps the
// greedy prefix whose running mean best tracks the class feature mean.

#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "cscct/dataset.hpp"

namespace cscct {

using FeatureFn = std::function<std::vector<double>(const LabeledExample&)>;

struct ExemplarMemory {
  int per_class_budget = 0;
  // class -> stored exemplars in herding order (prefixes are themselves
  // valid herding selections of smaller budgets)
  std::map<int, std::vector<LabeledExample>> store;

  bool has_class(int cls) const { return store.count(cls) != 0; }
  std::size_t total_size() const;
  std::vector<const LabeledExample*> all_exemplars() const;
  std::map<int, std::vector<std::int64_t>> ids() const;
};

/// Greedy herding over L2-normalized features: step j picks the candidate
/// whose inclusion brings the running mean closest to the class mean.
/// Ties break toward the smallest id, so the result does not depend on
/// input order.
std::vector<std::int64_t> herding_select(
    const std::vector<std::pair<std::int64_t, std::vector<double>>>& class_examples,
    int budget);

/// Adds every class of the task to the memory using features from the
/// just-trained model. Existing classes are untouched; re-adding one is
/// an error.
void update_after_task(ExemplarMemory& memory, const Task& task, const FeatureFn& features);

/// Per-class mean of L2-normalized features of the stored exemplars, the
/// mean itself L2-normalized. A vanishing mean (antipodal exemplars) is a
/// degenerate-input error.
std::map<int, std::vector<double>> class_means(const ExemplarMemory& memory,
                                               const FeatureFn& features);

}  // namespace cscct
