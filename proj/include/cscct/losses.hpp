#pragma once

// Training objectives: cross-space clustering (pull every sample of a
// class toward the class's frozen-space region, push it from all other
// classes' regions), controlled transfer (match each new-task sample's
// temperature-scaled similarity distribution over memory samples between
// the current and frozen feature spaces), plus the cross-entropy and
// logit-distillation base terms they attach to.

#include <optional>
#include <vector>

#include "cscct/autodiff.hpp"

namespace cscct {

enum class Origin { kCurrentTask, kMemory };

struct BatchView {
  std::vector<int> labels;           // classifier positions, one per example
  std::vector<Origin> origin;
  ad::Tensor current_features;       // [k×d], gradient-carrying
  ad::Tensor previous_features;      // [k×d], frozen space; undefined at t=1
  std::size_t count() const { return labels.size(); }
};

struct LossWeights {
  double alpha = 0.3;          // cross-space clustering coefficient
  double beta = 0.3;           // controlled transfer coefficient
  double temperature = 2.0;    // similarity-distribution temperature
  double base_kd_weight = 1.0; // logit distillation coefficient
};

/// (1/k^2) * sum_ij (1 - cos(cur_i, prev_j)) * ind(y_i == y_j) with
/// ind in {+1, -1}; the i == j self pairs are included. Gradient flows
/// only through the current features.
ad::Tensor csc_loss(const BatchView& batch);

/// softmax(cos(anchor, ref_j) / T over j). Differentiable through anchor
/// and references when they carry gradients.
ad::Tensor similarity_distribution(const ad::Tensor& anchor,
                                   const std::vector<ad::Tensor>& references,
                                   double temperature);

/// (1/p) * sum over current-task anchors of
/// KL(H_current(anchor over Q) || H_previous(anchor over Q)) where Q is
/// the batch's memory samples. Fewer than 2 memory samples or no anchors
/// contribute 0 (with a warning / log line). detach_q blocks gradient
/// through the memory samples' current features.
ad::Tensor ct_loss(const BatchView& batch, double temperature, bool detach_q = false);

/// Mean negative log softmax-probability of the true class.
ad::Tensor cross_entropy_loss(const ad::Tensor& logits, const std::vector<int>& labels);

/// Mean over the batch of KL(softmax(prev/T) || softmax(cur/T)) * T^2,
/// over the shared old-class columns.
ad::Tensor logit_distillation_loss(const ad::Tensor& current_old_logits,
                                   const ad::Tensor& previous_old_logits,
                                   double temperature);

enum class Phase { kFirstTask, kIncremental };

struct LossBreakdown {
  double total = 0.0;
  double cross_entropy = 0.0;
  double distillation = 0.0;
  double cross_cluster = 0.0;
  double transfer = 0.0;
};

struct CombinedLoss {
  ad::Tensor value;
  LossBreakdown parts;
};

/// cross_entropy + base_kd_weight*logit_distillation + alpha*csc + beta*ct.
/// On the first task only cross-entropy is active; terms with zero weight
/// are skipped and reported as 0.
CombinedLoss combined_loss(const BatchView& batch, const ad::Tensor& logits,
                           const std::optional<ad::Tensor>& previous_old_logits,
                           const LossWeights& weights, Phase phase,
                           bool ct_detach_q = false);

}  // namespace cscct
