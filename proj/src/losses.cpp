#include "cscct/losses.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>
#include <string>

namespace cscct {

namespace {

void require_pair_batch(const BatchView& batch, const char* op) {
  if (batch.labels.empty()) throw std::invalid_argument(std::string(op) + ": empty batch");
  if (!batch.current_features.defined()) {
    throw std::invalid_argument(std::string(op) + ": missing current features");
  }
  if (!batch.previous_features.defined()) {
    throw std::invalid_argument(std::string(op) + ": missing previous-space features");
  }
  const auto& cs = batch.current_features.shape();
  const auto& ps = batch.previous_features.shape();
  if (cs.size() != 2 || ps.size() != 2 || cs[0] != batch.labels.size() || cs != ps) {
    throw std::invalid_argument(std::string(op) + ": feature shapes disagree with batch");
  }
  if (batch.previous_features.requires_grad()) {
    throw std::invalid_argument(std::string(op) +
                                ": previous-space features must not carry gradient");
  }
}

}  // namespace

ad::Tensor csc_loss(const BatchView& batch) {
  require_pair_batch(batch, "csc_loss");
  const std::size_t k = batch.count();

  std::vector<ad::Tensor> cur_rows(k), prev_rows(k);
  for (std::size_t i = 0; i < k; ++i) {
    cur_rows[i] = ad::row(batch.current_features, i);
    prev_rows[i] = ad::row(batch.previous_features, i);
  }

  // sum_ij (1 - c_ij) * ind_ij  ==  sum(ind) - sum_ij ind_ij * c_ij
  std::vector<ad::Tensor> cosines;
  std::vector<double> indicator;
  cosines.reserve(k * k);
  indicator.reserve(k * k);
  double indicator_sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      cosines.push_back(ad::cosine_similarity(cur_rows[i], prev_rows[j]));
      const double ind = batch.labels[i] == batch.labels[j] ? 1.0 : -1.0;
      indicator.push_back(ind);
      indicator_sum += ind;
    }
  }
  ad::Tape* tape = batch.current_features.tape();
  const std::size_t pair_count = indicator.size();
  const ad::Tensor weights = tape->constant({pair_count}, std::move(indicator));
  const double inv_k2 = 1.0 / (static_cast<double>(k) * static_cast<double>(k));
  return ad::add_scalar(ad::scale(ad::sum(ad::mul(ad::stack(cosines), weights)), -inv_k2),
                        indicator_sum * inv_k2);
}

ad::Tensor similarity_distribution(const ad::Tensor& anchor,
                                   const std::vector<ad::Tensor>& references,
                                   double temperature) {
  if (references.empty()) {
    throw std::invalid_argument("similarity_distribution: needs at least one reference");
  }
  std::vector<ad::Tensor> cosines;
  cosines.reserve(references.size());
  for (const auto& ref : references) {
    cosines.push_back(ad::cosine_similarity(anchor, ref));
  }
  return ad::softmax(ad::stack(cosines), temperature);
}

ad::Tensor ct_loss(const BatchView& batch, double temperature, bool detach_q) {
  require_pair_batch(batch, "ct_loss");
  if (batch.origin.size() != batch.labels.size()) {
    throw std::invalid_argument("ct_loss: origin flags disagree with batch size");
  }
  ad::Tape* tape = batch.current_features.tape();

  std::vector<std::size_t> anchors, memory;
  for (std::size_t i = 0; i < batch.count(); ++i) {
    (batch.origin[i] == Origin::kCurrentTask ? anchors : memory).push_back(i);
  }
  if (anchors.empty()) {
    std::cerr << "[warn] ct_loss: batch has no current-task samples, contributing 0\n";
    return tape->scalar_constant(0.0);
  }
  if (memory.size() < 2) {
    std::cerr << "[warn] ct_loss: fewer than 2 memory samples, contributing 0\n";
    return tape->scalar_constant(0.0);
  }

  std::vector<ad::Tensor> q_current, q_previous;
  q_current.reserve(memory.size());
  q_previous.reserve(memory.size());
  for (std::size_t j : memory) {
    ad::Tensor cur = ad::row(batch.current_features, j);
    if (detach_q) cur = tape->constant(cur.shape(), cur.value());
    q_current.push_back(cur);
    q_previous.push_back(ad::row(batch.previous_features, j));
  }

  std::vector<ad::Tensor> terms;
  terms.reserve(anchors.size());
  for (std::size_t i : anchors) {
    const ad::Tensor h_current =
        similarity_distribution(ad::row(batch.current_features, i), q_current, temperature);
    const ad::Tensor h_previous =
        similarity_distribution(ad::row(batch.previous_features, i), q_previous, temperature);
    terms.push_back(ad::kl_divergence(h_current, h_previous));
  }
  return ad::mean(ad::stack(terms));
}

ad::Tensor cross_entropy_loss(const ad::Tensor& logits, const std::vector<int>& labels) {
  if (!logits.defined() || logits.shape().size() != 2) {
    throw std::invalid_argument("cross_entropy_loss: logits must be [k×n]");
  }
  const std::size_t k = logits.shape()[0];
  const std::size_t n = logits.shape()[1];
  if (labels.size() != k || k == 0) {
    throw std::invalid_argument("cross_entropy_loss: label count disagrees with logits");
  }
  std::vector<ad::Tensor> nlls;
  nlls.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= n) {
      throw std::invalid_argument("cross_entropy_loss: label " + std::to_string(labels[i]) +
                                  " out of range for " + std::to_string(n) + " classes");
    }
    const ad::Tensor ls = ad::log_softmax(ad::row(logits, i));
    nlls.push_back(ad::scale(ad::pick(ls, static_cast<std::size_t>(labels[i])), -1.0));
  }
  return ad::mean(ad::stack(nlls));
}

ad::Tensor logit_distillation_loss(const ad::Tensor& current_old_logits,
                                   const ad::Tensor& previous_old_logits,
                                   double temperature) {
  if (!current_old_logits.defined() || !previous_old_logits.defined() ||
      current_old_logits.shape().size() != 2 ||
      current_old_logits.shape() != previous_old_logits.shape()) {
    throw std::invalid_argument(
        "logit_distillation_loss: logit shapes must match over the old classes");
  }
  if (previous_old_logits.requires_grad()) {
    throw std::invalid_argument(
        "logit_distillation_loss: previous logits must not carry gradient");
  }
  const std::size_t k = current_old_logits.shape()[0];
  std::vector<ad::Tensor> terms;
  terms.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const ad::Tensor teacher = ad::softmax(ad::row(previous_old_logits, i), temperature);
    const ad::Tensor student = ad::softmax(ad::row(current_old_logits, i), temperature);
    terms.push_back(ad::kl_divergence(teacher, student));
  }
  return ad::scale(ad::mean(ad::stack(terms)), temperature * temperature);
}

CombinedLoss combined_loss(const BatchView& batch, const ad::Tensor& logits,
                           const std::optional<ad::Tensor>& previous_old_logits,
                           const LossWeights& weights, Phase phase, bool ct_detach_q) {
  if (weights.alpha < 0.0 || weights.beta < 0.0 || weights.base_kd_weight < 0.0) {
    throw std::invalid_argument("combined_loss: loss coefficients must be non-negative");
  }
  if (!(weights.temperature > 0.0)) {
    throw std::invalid_argument("combined_loss: temperature must be positive");
  }

  CombinedLoss out;
  ad::Tensor total = cross_entropy_loss(logits, batch.labels);
  out.parts.cross_entropy = total.scalar();

  if (phase == Phase::kIncremental) {
    if (!batch.previous_features.defined()) {
      throw std::invalid_argument("combined_loss: incremental phase without previous model");
    }
    if (weights.base_kd_weight > 0.0) {
      if (!previous_old_logits.has_value()) {
        throw std::invalid_argument("combined_loss: base_kd_weight > 0 needs previous logits");
      }
      const std::size_t n_old = previous_old_logits->shape()[1];
      const ad::Tensor kd = logit_distillation_loss(
          ad::col_slice(logits, 0, n_old), *previous_old_logits, weights.temperature);
      out.parts.distillation = kd.scalar();
      total = ad::add(total, ad::scale(kd, weights.base_kd_weight));
    }
    if (weights.alpha > 0.0) {
      const ad::Tensor csc = csc_loss(batch);
      out.parts.cross_cluster = csc.scalar();
      total = ad::add(total, ad::scale(csc, weights.alpha));
    }
    if (weights.beta > 0.0) {
      const ad::Tensor ct = ct_loss(batch, weights.temperature, ct_detach_q);
      out.parts.transfer = ct.scalar();
      total = ad::add(total, ad::scale(ct, weights.beta));
    }
  }

  out.value = total;
  out.parts.total = total.scalar();
  return out;
}

}  // namespace cscct
