#pragma once

#include <cstdint>
#include <string>

#include "hsr/runconfig.hpp"

// End-to-end command implementations behind the CLI. All throw: invalid
// setup raises ValidationError (exit 1 at the CLI), I/O and divergence raise
// their runtime error types (exit 2). Validation always precedes file writes.

namespace hsr {

// degrades every *.hsc cube under data_dir into <name>.lr.hsc/<name>.msi.hsc
// (plus optional pseudo-color PNG of the source)
void run_simulate(const RunConfig& cfg);

// trains the configured variant; writes checkpoints and loss_log.csv under
// output_dir; resumes from cfg.checkpoint when set
void run_train(const RunConfig& cfg);

// fuses one lr/msi pair with the checkpointed network; writes
// <stem>.fused.hsc under output_dir and prints the output shape
void run_fuse(const RunConfig& cfg, const std::string& lr_path,
              const std::string& msi_path);

// prints one metrics line comparing est to ref
void run_evaluate(const RunConfig& cfg, const std::string& ref_path,
                  const std::string& est_path);

// trains all three variants on identical data/seed and prints one validation
// metrics row each; writes ablate_metrics.csv and a provenance log
void run_ablate(const RunConfig& cfg);

// runs every registered finite-difference case; returns true when all pass
bool run_gradcheck(std::uint64_t seed, bool inject_fault);

}  // namespace hsr
