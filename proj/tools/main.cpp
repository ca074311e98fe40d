// hsrfuse: hyperspectral/multispectral fusion toolkit.
//
// Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure
// (I/O errors, training divergence, failed gradient checks).

#include <cstdint>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "hsr/errors.hpp"
#include "hsr/runconfig.hpp"
#include "hsr/workflows.hpp"

namespace {

struct CommonArgs {
  std::string config;
  std::string seed;
  std::string out;
  std::string checkpoint;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config, "key=value configuration file");
  cmd->add_option("--seed", args.seed, "RNG seed (overrides the config file)");
  cmd->add_option("--out", args.out, "output directory");
}

hsr::RunConfig build_config(const CommonArgs& args) {
  std::vector<std::pair<std::string, std::string>> overrides;
  if (!args.seed.empty()) overrides.emplace_back("seed", args.seed);
  if (!args.out.empty()) overrides.emplace_back("output_dir", args.out);
  if (!args.checkpoint.empty())
    overrides.emplace_back("checkpoint", args.checkpoint);
  return hsr::make_run_config(args.config, overrides);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hyperspectral image fusion toolkit"};
  app.require_subcommand(1);

  CommonArgs sim_args, train_args, fuse_args, eval_args, ablate_args, gc_args;
  std::string fuse_lr, fuse_msi, eval_ref, eval_est;
  bool inject_fault = false;

  CLI::App* sim = app.add_subcommand(
      "simulate", "degrade source cubes into lr/msi training pairs");
  add_common(sim, sim_args);

  CLI::App* train =
      app.add_subcommand("train", "train the fusion network");
  add_common(train, train_args);
  train->add_option("--checkpoint", train_args.checkpoint,
                    "resume training from this checkpoint");

  CLI::App* fuse = app.add_subcommand(
      "fuse", "reconstruct a high-resolution cube from an lr/msi pair");
  add_common(fuse, fuse_args);
  fuse->add_option("--checkpoint", fuse_args.checkpoint,
                   "trained network checkpoint");
  fuse->add_option("lr", fuse_lr, "low-resolution narrow-band cube")
      ->required();
  fuse->add_option("msi", fuse_msi, "high-resolution wide-band cube")
      ->required();

  CLI::App* eval = app.add_subcommand(
      "evaluate", "print quality metrics of an estimate against a reference");
  add_common(eval, eval_args);
  eval->add_option("ref", eval_ref, "reference cube")->required();
  eval->add_option("est", eval_est, "estimated cube")->required();

  CLI::App* ablate = app.add_subcommand(
      "ablate", "train all network variants and print one metrics row each");
  add_common(ablate, ablate_args);

  CLI::App* gradcheck = app.add_subcommand(
      "gradcheck", "finite-difference validation of every operator");
  add_common(gradcheck, gc_args);
  gradcheck->add_flag("--inject-fault", inject_fault,
                      "corrupt one convolution gradient to prove the check "
                      "can fail");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (sim->parsed()) {
      hsr::run_simulate(build_config(sim_args));
    } else if (train->parsed()) {
      hsr::run_train(build_config(train_args));
    } else if (fuse->parsed()) {
      hsr::run_fuse(build_config(fuse_args), fuse_lr, fuse_msi);
    } else if (eval->parsed()) {
      hsr::run_evaluate(build_config(eval_args), eval_ref, eval_est);
    } else if (ablate->parsed()) {
      hsr::run_ablate(build_config(ablate_args));
    } else if (gradcheck->parsed()) {
      const hsr::RunConfig cfg = build_config(gc_args);
      if (!hsr::run_gradcheck(cfg.train.seed, inject_fault)) {
        std::cerr << "gradcheck: at least one operator failed\n";
        return 2;
      }
    }
  } catch (const hsr::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
