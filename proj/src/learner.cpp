#include "cscct/learner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace cscct {

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("train config: epochs must be ≥ 1");
  if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be ≥ 1");
  if (!(learning_rate > 0.0)) {
    throw std::invalid_argument("train config: learning_rate must be positive");
  }
  if (!(lr_decay_factor > 0.0)) {
    throw std::invalid_argument("train config: lr_decay_factor must be positive");
  }
  if (weight_decay < 0.0 || momentum < 0.0) {
    throw std::invalid_argument("train config: momentum/weight_decay must be non-negative");
  }
  int prev = 0;
  for (int m : lr_decay_milestones) {
    if (m <= prev || m >= epochs) {
      throw std::invalid_argument(
          "train config: milestones must be strictly increasing and < epochs");
    }
    prev = m;
  }
  if (weights.alpha < 0.0 || weights.beta < 0.0 || weights.base_kd_weight < 0.0) {
    throw std::invalid_argument("train config: loss coefficients must be non-negative");
  }
  if (!(weights.temperature > 0.0)) {
    throw std::invalid_argument("train config: temperature must be positive");
  }
}

void LabelRemap::append_classes(const std::vector<int>& classes) {
  for (int cls : classes) {
    if (to_position.count(cls)) {
      throw std::invalid_argument("label remap: class " + std::to_string(cls) +
                                  " already registered");
    }
    to_position[cls] = static_cast<int>(order.size());
    order.push_back(cls);
  }
}

int LabelRemap::position(int original_class) const {
  auto it = to_position.find(original_class);
  if (it == to_position.end()) {
    throw std::invalid_argument("label remap: unknown class " +
                                std::to_string(original_class));
  }
  return it->second;
}

int LabelRemap::original(int position) const {
  if (position < 0 || position >= size()) {
    throw std::invalid_argument("label remap: position out of range");
  }
  return order[static_cast<std::size_t>(position)];
}

std::vector<const LabeledExample*> build_training_set(const Task& task,
                                                      const ExemplarMemory& memory) {
  std::vector<const LabeledExample*> pool;
  pool.reserve(task.train.size() + memory.total_size());
  for (const auto& ex : task.train) pool.push_back(&ex);
  for (const auto* ex : memory.all_exemplars()) pool.push_back(ex);
  return pool;
}

std::vector<std::size_t> epoch_order(const RngSplitter& rng, int task_index, int epoch,
                                     std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto stream = rng.stream("shuffle/task" + std::to_string(task_index) + "/epoch" +
                           std::to_string(epoch));
  stream.shuffle(order);
  return order;
}

double learning_rate_for_epoch(const TrainConfig& config, int epoch) {
  double lr = config.learning_rate;
  for (int m : config.lr_decay_milestones) {
    if (epoch > m) lr *= config.lr_decay_factor;
  }
  return lr;
}

namespace {

void check_term_finite(double v, const char* term, int task_index, int step) {
  if (!std::isfinite(v)) {
    throw std::runtime_error("train_phase: non-finite " + std::string(term) + " at task " +
                             std::to_string(task_index) + ", step " + std::to_string(step));
  }
}

}  // namespace

PhaseResult train_phase(ModelPair& pair, const Task& task, const ExemplarMemory& memory,
                        const LabelRemap& remap, const TrainConfig& config) {
  config.validate();
  const bool incremental = task.index >= 2;
  if (incremental && !pair.previous.has_value()) {
    throw std::invalid_argument("train_phase: task " + std::to_string(task.index) +
                                " needs a previous model");
  }
  if (!incremental && pair.previous.has_value()) {
    throw std::invalid_argument("train_phase: first task must not have a previous model");
  }
  for (int cls : task.class_set) {
    (void)remap.position(cls);  // throws if the classifier was not expanded
  }

  const std::vector<const LabeledExample*> pool = build_training_set(task, memory);
  if (pool.empty()) throw std::invalid_argument("train_phase: no training data");
  const std::size_t input_dim = pool.front()->features.size();

  const bool use_distill =
      incremental && (config.weights.base_kd_weight > 0.0 || config.weights.alpha > 0.0 ||
                      config.weights.beta > 0.0);
  const int n_old = incremental ? pair.previous->classes_seen() : 0;

  RngSplitter rng(config.seed);
  SgdOptimizer optimizer(config.learning_rate, config.momentum, config.weight_decay);
  PhaseResult result;

  int step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    optimizer.set_learning_rate(learning_rate_for_epoch(config, epoch));
    const auto order = epoch_order(rng, task.index, epoch, pool.size());
    LossBreakdown epoch_sum;
    std::size_t batches = 0;

    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const std::size_t k = end - start;
      ++step;

      std::vector<double> inputs(k * input_dim);
      BatchView batch;
      batch.labels.resize(k);
      batch.origin.resize(k);
      for (std::size_t i = 0; i < k; ++i) {
        const LabeledExample& ex = *pool[order[start + i]];
        std::copy(ex.features.begin(), ex.features.end(), inputs.begin() + i * input_dim);
        batch.labels[i] = remap.position(ex.label);
        batch.origin[i] =
            batch.labels[i] < n_old ? Origin::kMemory : Origin::kCurrentTask;
      }

      ad::Tape tape;
      TapeModel bound(tape, pair.current, /*trainable=*/true);
      const ad::Tensor x = tape.constant({k, input_dim}, inputs);
      batch.current_features = bound.features(x);
      const ad::Tensor logits = bound.logits(batch.current_features);

      std::optional<ad::Tensor> previous_logits;
      if (use_distill) {
        std::vector<double> prev_feats(k * pair.previous->feature_dim);
        std::vector<double> prev_logits(k * static_cast<std::size_t>(n_old));
        for (std::size_t i = 0; i < k; ++i) {
          const LabeledExample& ex = *pool[order[start + i]];
          const auto f = pair.previous->features_of(ex.features);
          std::copy(f.begin(), f.end(), prev_feats.begin() + i * f.size());
          const auto l = pair.previous->logits_from_features(f);
          std::copy(l.begin(), l.end(), prev_logits.begin() + i * l.size());
        }
        batch.previous_features =
            tape.constant({k, pair.previous->feature_dim}, std::move(prev_feats));
        if (config.weights.base_kd_weight > 0.0) {
          previous_logits =
              tape.constant({k, static_cast<std::size_t>(n_old)}, std::move(prev_logits));
        }
      }

      CombinedLoss loss;
      if (incremental && !use_distill) {
        // All distillation weights zero: plain replay fine-tuning, no
        // teacher forward at all.
        loss.value = cross_entropy_loss(logits, batch.labels);
        loss.parts.cross_entropy = loss.value.scalar();
        loss.parts.total = loss.parts.cross_entropy;
      } else {
        loss = combined_loss(batch, logits, previous_logits, config.weights,
                             incremental ? Phase::kIncremental : Phase::kFirstTask,
                             config.ct_detach_q);
      }

      check_term_finite(loss.parts.cross_entropy, "cross_entropy", task.index, step);
      check_term_finite(loss.parts.distillation, "logit_distillation", task.index, step);
      check_term_finite(loss.parts.cross_cluster, "cross_space_clustering", task.index, step);
      check_term_finite(loss.parts.transfer, "controlled_transfer", task.index, step);
      check_term_finite(loss.parts.total, "total", task.index, step);

      tape.backward(loss.value);
      optimizer.step(pair.current, bound);

      result.step_losses.push_back(loss.parts);
      epoch_sum.total += loss.parts.total;
      epoch_sum.cross_entropy += loss.parts.cross_entropy;
      epoch_sum.distillation += loss.parts.distillation;
      epoch_sum.cross_cluster += loss.parts.cross_cluster;
      epoch_sum.transfer += loss.parts.transfer;
      ++batches;
    }

    const double inv = 1.0 / static_cast<double>(batches);
    epoch_sum.total *= inv;
    epoch_sum.cross_entropy *= inv;
    epoch_sum.distillation *= inv;
    epoch_sum.cross_cluster *= inv;
    epoch_sum.transfer *= inv;
    result.epoch_means.push_back(epoch_sum);
  }
  return result;
}

namespace {

std::vector<double> l2_normalized(const std::vector<double>& v) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm == 0.0) return v;
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / norm;
  return out;
}

int nme_classify(const std::map<int, std::vector<double>>& means,
                 const std::vector<double>& feature) {
  const std::vector<double> f = l2_normalized(feature);
  int best_class = -1;
  double best_dist = 0.0;
  for (const auto& [cls, mean] : means) {
    double dist = 0.0;
    for (std::size_t j = 0; j < mean.size(); ++j) {
      const double diff = f[j] - mean[j];
      dist += diff * diff;
    }
    if (best_class < 0 || dist < best_dist) {  // map order: ties keep smaller class
      best_class = cls;
      best_dist = dist;
    }
  }
  return best_class;
}

}  // namespace

int classify(const Model& model, const ExemplarMemory& memory, const LabelRemap& remap,
             const std::vector<double>& input, ClassifierMode mode) {
  if (mode == ClassifierMode::kLinear) {
    const auto logits = model.logits_of(input);
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.size(); ++j) {
      if (logits[j] > logits[best]) best = j;
    }
    return remap.original(static_cast<int>(best));
  }
  for (int cls : remap.order) {
    if (!memory.has_class(cls)) {
      throw std::invalid_argument("classify: nme requires exemplars for class " +
                                  std::to_string(cls));
    }
  }
  const auto means =
      class_means(memory, [&](const LabeledExample& ex) { return model.features_of(ex.features); });
  return nme_classify(means, model.features_of(input));
}

double eval_accuracy(const Model& model, const ExemplarMemory& memory,
                     const LabelRemap& remap, const std::vector<LabeledExample>& test_set,
                     ClassifierMode mode) {
  if (test_set.empty()) throw std::invalid_argument("eval_accuracy: empty test set");

  std::size_t correct = 0;
  if (mode == ClassifierMode::kNme) {
    for (int cls : remap.order) {
      if (!memory.has_class(cls)) {
        throw std::invalid_argument("eval_accuracy: nme requires exemplars for class " +
                                    std::to_string(cls));
      }
    }
    // Class means are recomputed with the current model once per call.
    const auto means = class_means(
        memory, [&](const LabeledExample& ex) { return model.features_of(ex.features); });
    for (const auto& ex : test_set) {
      if (nme_classify(means, model.features_of(ex.features)) == ex.label) ++correct;
    }
  } else {
    for (const auto& ex : test_set) {
      if (classify(model, memory, remap, ex.features, ClassifierMode::kLinear) == ex.label) {
        ++correct;
      }
    }
  }
  return static_cast<double>(correct) / static_cast<double>(test_set.size());
}

}  // namespace cscct
