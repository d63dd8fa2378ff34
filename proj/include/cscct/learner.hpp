#pragma once

// Phase loop: train the current model on the task's data plus the replay
// buffer against the combined objective, with the frozen previous model
// as teacher; then the caller snapshots and updates memory.

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "cscct/dataset.hpp"
#include "cscct/exemplar_memory.hpp"
#include "cscct/losses.hpp"
#include "cscct/model.hpp"
#include "cscct/rng.hpp"

namespace cscct {

enum class ClassifierMode { kLinear, kNme };

struct TrainConfig {
  int epochs = 60;
  int batch_size = 32;
  double learning_rate = 0.05;
  std::vector<int> lr_decay_milestones = {30, 45};  // 1-based epoch numbers
  double lr_decay_factor = 0.1;
  double weight_decay = 5e-4;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  ClassifierMode classifier = ClassifierMode::kNme;
  LossWeights weights;
  bool ct_detach_q = false;

  void validate() const;
};

/// Original class id -> classifier column, appended in stream order.
struct LabelRemap {
  std::vector<int> order;  // position -> original class id
  std::map<int, int> to_position;

  void append_classes(const std::vector<int>& classes);
  int position(int original_class) const;
  int original(int position) const;
  int size() const { return static_cast<int>(order.size()); }
};

struct PhaseResult {
  std::vector<LossBreakdown> step_losses;
  std::vector<LossBreakdown> epoch_means;
};

/// Training pool at step t: the task's own data plus every stored
/// exemplar. Old-task raw data never appears (audited by test).
std::vector<const LabeledExample*> build_training_set(const Task& task,
                                                      const ExemplarMemory& memory);

/// Shuffled index order for one epoch, derived only from the seed, the
/// task index, and the epoch, so a run can be replayed exactly.
std::vector<std::size_t> epoch_order(const RngSplitter& rng, int task_index, int epoch,
                                     std::size_t n);

double learning_rate_for_epoch(const TrainConfig& config, int epoch);

/// Runs the SGD phase over shuffled task-plus-memory batches. The
/// classifier must already cover the task's classes; `previous` must be
/// present exactly when task.index ≥ 2. Aborts on a non-finite loss,
/// naming the offending term.
PhaseResult train_phase(ModelPair& pair, const Task& task, const ExemplarMemory& memory,
                        const LabelRemap& remap, const TrainConfig& config);

/// linear: argmax over logits. nme: nearest L2-normalized exemplar class
/// mean; requires memory to cover every seen class. Ties break toward the
/// smallest class index. Returns the original class id.
int classify(const Model& model, const ExemplarMemory& memory, const LabelRemap& remap,
             const std::vector<double>& input, ClassifierMode mode);

/// Fraction of the test set classified correctly.
double eval_accuracy(const Model& model, const ExemplarMemory& memory,
                     const LabelRemap& remap, const std::vector<LabeledExample>& test_set,
                     ClassifierMode mode);

}  // namespace cscct
