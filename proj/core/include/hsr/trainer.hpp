#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hsr/cube.hpp"
#include "hsr/degradation.hpp"
#include "hsr/network.hpp"

// Patch extraction, deterministic epoch scheduling, Adam, checkpointing.
// The batch for any absolute step is a closed-form function of (seed, step,
// dataset size), so training resumed from a checkpoint replays exactly the
// same sequence as an uninterrupted run.

namespace hsr {

struct TrainConfig {
  int patch_size = 64;
  int patch_stride = 32;
  int scale_factor = 4;
  int batch_size = 32;
  long long iterations = 100000;
  double learning_rate = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double val_fraction = 0.2;
  std::uint64_t seed = 0;
  long long checkpoint_every = 1000;

  void validate() const {
    if (patch_size < 1 || patch_stride < 1 || scale_factor < 1 ||
        batch_size < 1)
      throw ValidationError("TrainConfig: sizes must be positive");
    if (patch_size % scale_factor != 0)
      throw ValidationError(
          "TrainConfig: patch size must be divisible by the scale factor");
    if (iterations < 0)
      throw ValidationError("TrainConfig: iterations must be >= 0");
    if (!(learning_rate > 0.0))
      throw ValidationError("TrainConfig: learning rate must be > 0");
    if (!(val_fraction > 0.0) || !(val_fraction < 1.0))
      throw ValidationError("TrainConfig: val fraction must be in (0,1)");
    if (checkpoint_every < 1)
      throw ValidationError("TrainConfig: checkpoint interval must be >= 1");
  }
};

struct PatchTriple {
  Tensor<float> hr, lr, msi;
  int source_id = 0;
  int row = 0, col = 0;  // top-left corner in the source cube
};

struct PatchDataset {
  std::vector<PatchTriple> items;
  std::vector<double> hsi_wavelengths, msi_wavelengths;
};

// Sliding windows at the configured stride, row-major per cube, each degraded
// into its narrow-band/wide-band pair.
PatchDataset extract_patches(const std::vector<HyperCube>& cubes,
                             const SpectralResponse& response,
                             const DegradationConfig& degrade,
                             const TrainConfig& cfg);

// Deterministic shuffled split; validation takes round(n * val_fraction)
// items clamped to [1, n-1].
std::pair<PatchDataset, PatchDataset> split_dataset(const PatchDataset& data,
                                                    double val_fraction,
                                                    std::uint64_t seed);

// first/second moments aligned with for_each_param order
struct AdamState {
  long long t = 0;
  std::vector<std::string> names;
  std::vector<Tensor<float>> m, v;
};

AdamState make_adam_state(const NetworkParams<float>& params);

// Standard bias-corrected Adam, in place. Throws DivergenceError naming the
// parameter if a gradient is non-finite.
void adam_step(NetworkParams<float>& params, const NetworkParams<float>& grads,
               AdamState& state, const TrainConfig& cfg);

struct LossLogRow {
  long long step = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  bool has_val = false;
};

struct TrainerState {
  NetworkParams<float> params;
  AdamState adam;
  long long step = 0;  // completed optimizer steps
};

TrainerState make_trainer_state(const NetworkConfig& net_cfg,
                                const TrainConfig& cfg);

struct TrainResult {
  std::vector<LossLogRow> log;
  std::string last_checkpoint;  // empty when checkpointing is off
};

// Advances state from state.step to cfg.iterations. Records train loss every
// step; every checkpoint_every steps evaluates the validation split and saves
// a checkpoint under checkpoint_dir (when non-empty). Appends rows to
// loss_log_path when non-empty. On divergence throws DivergenceError after
// leaving the last good checkpoint in place.
TrainResult train(TrainerState& state, const PatchDataset& train_split,
                  const PatchDataset& val_split, const NetworkConfig& net_cfg,
                  const TrainConfig& cfg, const std::string& checkpoint_dir,
                  const std::string& loss_log_path);

// mean loss over a whole split, element-weighted across batches
double evaluate_loss(const NetworkParams<float>& params,
                     const NetworkConfig& net_cfg, const PatchDataset& split,
                     int batch_size);

// "HSCK" envelope: u32 version, u32 step, then length-prefixed
// (name, shape, f32 data) records for parameters and optimizer moments.
void save_checkpoint(const TrainerState& state, const std::string& path);
TrainerState load_checkpoint(const std::string& path,
                             const NetworkConfig& net_cfg);

// deterministic batch schedule, exposed for tests: indices of the batch
// performed at absolute step (0-based)
std::vector<int> batch_indices(std::uint64_t seed, long long step, int n_items,
                               int batch_size);

void write_loss_log(const std::vector<LossLogRow>& rows,
                    const std::string& path);

}  // namespace hsr
