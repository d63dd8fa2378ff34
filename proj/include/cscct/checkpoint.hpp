#pragma once

// Per-phase checkpoint: a self-describing little-endian binary container
// holding the trained model, the feature standardizer, the label remap,
// and the exemplar ids. Layout is documented in the README.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cscct/dataset.hpp"
#include "cscct/learner.hpp"
#include "cscct/model.hpp"

namespace cscct {

inline constexpr char kCheckpointMagic[8] = {'C', 'S', 'C', 'C', 'T', 'C', 'K', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint64_t config_hash = 0;
  std::uint64_t master_seed = 0;
  std::int32_t phase = 0;
  Standardizer standardizer;
  LabelRemap remap;
  Model model;
  int exemplar_budget = 0;
  std::map<int, std::vector<std::int64_t>> exemplar_ids;
};

void write_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::string& path);

}  // namespace cscct
