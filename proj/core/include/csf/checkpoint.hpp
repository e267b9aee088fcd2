#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "csf/model.hpp"
#include "csf/optim.hpp"

namespace csf {

// Everything beyond the parameters that a resumed run needs to continue
// bit-for-bit: counters, the best-so-far validation score, and a deep copy
// of the parameters at that best epoch (registry order; empty until a best
// exists).
struct TrainState {
  Index epoch = 0;  // epochs completed
  Index step = 0;   // optimizer steps taken
  double best_val_f1 = -1.0;
  Index best_epoch = -1;
  std::vector<Tensor> best_params;
};

// Single-file binary checkpoint ("CSF1"). Stores the model configuration as
// its canonical text echo, all registry tensors, the optimizer moments, and
// the best-snapshot values. Everything is little-endian with a trailing
// CRC-32 over the payload.
void save_checkpoint(const std::string& path, Model& model, const Adam& optimizer,
                     const TrainState& state);

// Restores parameters, moments, and counters in place. The model must have
// been built with the same configuration, seed, and variant; mismatches
// raise naming the first differing config line.
TrainState load_checkpoint(const std::string& path, Model& model, Adam& optimizer);

// Header fields only — enough to reconstruct a matching Model (via
// parse_model_config on config_text) before calling load_checkpoint.
struct CheckpointInfo {
  AblationVariant variant = AblationVariant::Full;
  std::uint64_t seed = 0;
  Index epoch = 0;
  Index step = 0;
  bool has_best = false;
  Index best_epoch = -1;
  double best_val_f1 = -1.0;
  std::string config_text;
};

CheckpointInfo read_checkpoint_info(const std::string& path);

// Copies snapshot values into the model's registry tensors (same count and
// sizes required) and clears their gradients.
void restore_snapshot(Model& model, const std::vector<Tensor>& snapshot);

}  // namespace csf
