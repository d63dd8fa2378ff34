#include "cscct/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace cscct {

namespace {

Layer init_layer(std::size_t in, std::size_t out, RandomStream& rng) {
  Layer layer;
  layer.in = in;
  layer.out = out;
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  layer.w.resize(in * out);
  for (auto& v : layer.w) v = rng.uniform(-bound, bound);
  layer.b.assign(out, 0.0);
  return layer;
}

// Same accumulation order as the tape affine op: start from the bias, add
// products in input order.
void affine_plain(const Layer& layer, const double* x, double* out) {
  for (std::size_t j = 0; j < layer.out; ++j) {
    double acc = layer.b[j];
    for (std::size_t p = 0; p < layer.in; ++p) acc += x[p] * layer.w[p * layer.out + j];
    out[j] = acc;
  }
}

}  // namespace

Model Model::init(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                  std::size_t feature_dim, RandomStream& rng) {
  if (input_dim == 0 || feature_dim == 0) {
    throw std::invalid_argument("Model::init: dimensions must be positive");
  }
  Model m;
  m.input_dim = input_dim;
  m.feature_dim = feature_dim;
  std::size_t prev = input_dim;
  for (std::size_t width : hidden) {
    if (width == 0) throw std::invalid_argument("Model::init: zero hidden width");
    m.extractor.push_back(init_layer(prev, width, rng));
    prev = width;
  }
  m.extractor.push_back(init_layer(prev, feature_dim, rng));
  m.classifier.in = feature_dim;
  m.classifier.out = 0;
  return m;
}

void Model::expand_classifier(int new_classes, RandomStream& rng) {
  if (new_classes < 0) throw std::invalid_argument("expand_classifier: negative count");
  if (new_classes == 0) return;
  const std::size_t old_out = classifier.out;
  const std::size_t new_out = old_out + static_cast<std::size_t>(new_classes);
  const double bound = 1.0 / std::sqrt(static_cast<double>(classifier.in));

  std::vector<double> w(classifier.in * new_out);
  for (std::size_t p = 0; p < classifier.in; ++p) {
    for (std::size_t j = 0; j < old_out; ++j) {
      w[p * new_out + j] = classifier.w[p * old_out + j];
    }
  }
  // New columns drawn column-major so each class gets a contiguous slice
  // of the stream regardless of feature width changes elsewhere.
  for (std::size_t j = old_out; j < new_out; ++j) {
    for (std::size_t p = 0; p < classifier.in; ++p) {
      w[p * new_out + j] = rng.uniform(-bound, bound);
    }
  }
  std::vector<double> b(new_out, 0.0);
  for (std::size_t j = 0; j < old_out; ++j) b[j] = classifier.b[j];

  classifier.w = std::move(w);
  classifier.b = std::move(b);
  classifier.out = new_out;
}

std::vector<double> Model::features_of(const std::vector<double>& input) const {
  if (input.size() != input_dim) {
    throw std::invalid_argument("features_of: input length " + std::to_string(input.size()) +
                                " expected " + std::to_string(input_dim));
  }
  std::vector<double> cur = input;
  for (std::size_t l = 0; l < extractor.size(); ++l) {
    std::vector<double> next(extractor[l].out);
    affine_plain(extractor[l], cur.data(), next.data());
    if (l + 1 < extractor.size()) {
      for (auto& v : next) v = v > 0.0 ? v : 0.0;
    }
    cur = std::move(next);
  }
  return cur;
}

std::vector<double> Model::logits_from_features(const std::vector<double>& features) const {
  if (classifier.out == 0) throw std::logic_error("logits_from_features: empty classifier");
  std::vector<double> out(classifier.out);
  affine_plain(classifier, features.data(), out.data());
  return out;
}

std::vector<double> Model::logits_of(const std::vector<double>& input) const {
  return logits_from_features(features_of(input));
}

std::vector<double> Model::flat_parameters() const {
  std::vector<double> out;
  for (const auto& layer : extractor) {
    out.insert(out.end(), layer.w.begin(), layer.w.end());
    out.insert(out.end(), layer.b.begin(), layer.b.end());
  }
  out.insert(out.end(), classifier.w.begin(), classifier.w.end());
  out.insert(out.end(), classifier.b.begin(), classifier.b.end());
  return out;
}

Model snapshot(const Model& model) { return model; }

TapeModel::TapeModel(ad::Tape& tape, const Model& model, bool trainable)
    : tape_(&tape), model_(&model) {
  auto bind = [&](const Layer& layer) {
    if (trainable) {
      params_.push_back(tape.variable({layer.in, layer.out}, layer.w));
      params_.push_back(tape.variable({layer.out}, layer.b));
    } else {
      params_.push_back(tape.constant({layer.in, layer.out}, layer.w));
      params_.push_back(tape.constant({layer.out}, layer.b));
    }
  };
  for (const auto& layer : model.extractor) bind(layer);
  if (model.classifier.out > 0) bind(model.classifier);
}

ad::Tensor TapeModel::features(const ad::Tensor& inputs) const {
  ad::Tensor cur = inputs;
  const std::size_t layers = model_->extractor.size();
  for (std::size_t l = 0; l < layers; ++l) {
    cur = ad::affine(cur, params_[2 * l], params_[2 * l + 1]);
    if (l + 1 < layers) cur = ad::relu(cur);
  }
  return cur;
}

ad::Tensor TapeModel::logits(const ad::Tensor& features) const {
  if (model_->classifier.out == 0) {
    throw std::logic_error("TapeModel::logits: classifier has no outputs");
  }
  const std::size_t base = 2 * model_->extractor.size();
  return ad::affine(features, params_[base], params_[base + 1]);
}

SgdOptimizer::SgdOptimizer(double learning_rate, double momentum, double weight_decay)
    : lr_(learning_rate), momentum_(momentum), weight_decay_(weight_decay) {
  if (!(learning_rate > 0.0)) {
    throw std::invalid_argument("SgdOptimizer: learning rate must be positive");
  }
  if (momentum < 0.0 || weight_decay < 0.0) {
    throw std::invalid_argument("SgdOptimizer: momentum/weight decay must be non-negative");
  }
}

void SgdOptimizer::step(Model& model, const TapeModel& bound) {
  const auto& params = bound.parameters();
  std::vector<std::vector<double>*> slots;
  for (auto& layer : model.extractor) {
    slots.push_back(&layer.w);
    slots.push_back(&layer.b);
  }
  slots.push_back(&model.classifier.w);
  slots.push_back(&model.classifier.b);
  if (slots.size() != params.size()) {
    throw std::logic_error("SgdOptimizer::step: binding does not match model layout");
  }
  if (velocity_.size() != slots.size()) velocity_.resize(slots.size());

  for (std::size_t i = 0; i < slots.size(); ++i) {
    std::vector<double>& value = *slots[i];
    const std::vector<double>& grad = params[i].grad();
    if (grad.size() != value.size()) {
      throw std::logic_error("SgdOptimizer::step: gradient size mismatch");
    }
    std::vector<double>& vel = velocity_[i];
    if (vel.size() != value.size()) vel.assign(value.size(), 0.0);
    for (std::size_t j = 0; j < value.size(); ++j) {
      const double g = grad[j] + weight_decay_ * value[j];
      vel[j] = momentum_ * vel[j] + g;
      value[j] -= lr_ * vel[j];
    }
  }
}

}  // namespace cscct
