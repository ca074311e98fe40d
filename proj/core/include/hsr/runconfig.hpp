#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hsr/degradation.hpp"
#include "hsr/network.hpp"
#include "hsr/trainer.hpp"

// Flat key=value run configuration unioning the module configs plus paths.
// Unknown and duplicate keys are rejected; command-line overrides are applied
// after the file so flags win. scale_factor is one key shared by the
// degradation, network, and trainer configs.

namespace hsr {

struct RunConfig {
  DegradationConfig degradation;
  NetworkConfig network;
  TrainConfig train;
  std::string data_dir, response_file, checkpoint, output_dir = ".";
  int pseudo_r = -1, pseudo_g = -1, pseudo_b = -1;  // -1 = no PNG export
  double peak = 1.0;

  void validate() const {
    degradation.validate();
    network.validate();
    train.validate();
    if (!(peak > 0.0)) throw ValidationError("config: peak must be > 0");
    const bool any = pseudo_r >= 0 || pseudo_g >= 0 || pseudo_b >= 0;
    const bool all = pseudo_r >= 0 && pseudo_g >= 0 && pseudo_b >= 0;
    if (any && !all)
      throw ValidationError(
          "config: pseudo_r/pseudo_g/pseudo_b must be set together");
  }
};

// throws ValidationError on unknown key or unparseable value
void apply_config_key(RunConfig& cfg, const std::string& key,
                      const std::string& value);

// `key = value` lines, '#' comments, blank lines ignored; duplicates rejected
std::vector<std::pair<std::string, std::string>> read_config_file(
    const std::string& path);

// file first (optional), then overrides in order
RunConfig make_run_config(
    const std::string& config_path,
    const std::vector<std::pair<std::string, std::string>>& overrides);

}  // namespace hsr
