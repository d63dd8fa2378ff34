#pragma once

// The trainable model: an MLP feature extractor composed with a linear
// classifier whose output width grows as classes arrive.

#include <cstdint>
#include <optional>
#include <vector>

#include "cscct/autodiff.hpp"
#include "cscct/rng.hpp"

namespace cscct {

struct Layer {
  std::size_t in = 0, out = 0;
  std::vector<double> w;  // row-major [in×out]
  std::vector<double> b;  // [out]
};

struct Model {
  std::size_t input_dim = 0;
  std::size_t feature_dim = 0;
  std::vector<Layer> extractor;  // hidden layers (relu) then the feature layer
  Layer classifier;              // feature_dim -> classes seen so far

  int classes_seen() const { return static_cast<int>(classifier.out); }

  /// Hidden layers use relu; the feature layer is linear so features can
  /// take either sign for cosine work.
  static Model init(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                    std::size_t feature_dim, RandomStream& rng);

  /// Appends classifier columns for new classes, seeded small-uniform.
  /// Existing columns are preserved bit-exactly.
  void expand_classifier(int new_classes, RandomStream& rng);

  // Plain (tape-free) forward; arithmetic matches the tape path exactly so
  // the frozen teacher and the student agree bitwise on equal weights.
  std::vector<double> features_of(const std::vector<double>& input) const;
  std::vector<double> logits_of(const std::vector<double>& input) const;
  std::vector<double> logits_from_features(const std::vector<double>& features) const;

  std::vector<double> flat_parameters() const;
};

/// Deep frozen copy; training the original never touches the snapshot.
Model snapshot(const Model& model);

struct ModelPair {
  Model current;
  std::optional<Model> previous;
};

/// Per-tape binding of a model: parameter leaves plus forward graphs.
class TapeModel {
 public:
  TapeModel(ad::Tape& tape, const Model& model, bool trainable);

  ad::Tensor features(const ad::Tensor& inputs) const;              // [k×in] -> [k×feat]
  ad::Tensor logits(const ad::Tensor& features) const;              // [k×feat] -> [k×n]

  /// Parameter leaves in a fixed order: extractor layers (w, b) then
  /// classifier (w, b). Matches SgdOptimizer's expectations.
  const std::vector<ad::Tensor>& parameters() const { return params_; }

 private:
  ad::Tape* tape_;
  const Model* model_;
  std::vector<ad::Tensor> params_;  // 2 per extractor layer + 2 classifier
};

/// SGD with momentum, L2 weight decay, and a milestone learning-rate
/// schedule applied externally via set_learning_rate.
class SgdOptimizer {
 public:
  SgdOptimizer(double learning_rate, double momentum, double weight_decay);

  void set_learning_rate(double lr) { lr_ = lr; }
  double learning_rate() const { return lr_; }

  /// Applies one update from the gradients on the bound parameter leaves.
  void step(Model& model, const TapeModel& bound);

 private:
  double lr_, momentum_, weight_decay_;
  std::vector<std::vector<double>> velocity_;
};

}  // namespace cscct
