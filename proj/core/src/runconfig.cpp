#include "hsr/runconfig.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace hsr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_num(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  std::from_chars_result r;
  if constexpr (std::is_floating_point_v<T>)
    r = std::from_chars(first, last, out);
  else
    r = std::from_chars(first, last, out, 10);
  if (r.ec != std::errc() || r.ptr != last)
    throw ValidationError("config key '" + key + "': cannot parse '" + value +
                          "'");
  return out;
}

std::vector<int> parse_int_list(const std::string& key,
                                const std::string& value) {
  std::vector<int> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_num<int>(key, trim(item)));
  if (out.empty())
    throw ValidationError("config key '" + key + "': empty list");
  return out;
}

}  // namespace

void apply_config_key(RunConfig& cfg, const std::string& key,
                      const std::string& value) {
  // shared by degradation, network, and trainer
  if (key == "scale_factor") {
    const int f = parse_num<int>(key, value);
    cfg.degradation.scale_factor = f;
    cfg.network.scale_factor = f;
    cfg.train.scale_factor = f;
  } else if (key == "blur_kernel_size") {
    cfg.degradation.blur_kernel_size = parse_num<int>(key, value);
  } else if (key == "blur_sigma") {
    cfg.degradation.blur_sigma = parse_num<double>(key, value);
  } else if (key == "hsi_bands") {
    cfg.network.hsi_bands = parse_num<int>(key, value);
  } else if (key == "msi_bands") {
    cfg.network.msi_bands = parse_num<int>(key, value);
  } else if (key == "feature_channels") {
    cfg.network.feature_channels = parse_num<int>(key, value);
  } else if (key == "num_blocks") {
    cfg.network.num_blocks = parse_num<int>(key, value);
  } else if (key == "conv_kernel") {
    cfg.network.conv_kernel = parse_num<int>(key, value);
  } else if (key == "upsample_kernel") {
    cfg.network.upsample_kernel = parse_num<int>(key, value);
  } else if (key == "lowpass_size") {
    cfg.network.lowpass_size = parse_num<int>(key, value);
  } else if (key == "variant") {
    cfg.network.variant = parse_variant(value);
  } else if (key == "interleave_c0") {
    cfg.network.interleave_c0 = parse_int_list(key, value);
  } else if (key == "interleave_c1") {
    cfg.network.interleave_c1 = parse_int_list(key, value);
  } else if (key == "patch_size") {
    cfg.train.patch_size = parse_num<int>(key, value);
  } else if (key == "patch_stride") {
    cfg.train.patch_stride = parse_num<int>(key, value);
  } else if (key == "batch_size") {
    cfg.train.batch_size = parse_num<int>(key, value);
  } else if (key == "iterations") {
    cfg.train.iterations = parse_num<long long>(key, value);
  } else if (key == "learning_rate") {
    cfg.train.learning_rate = parse_num<double>(key, value);
  } else if (key == "adam_beta1") {
    cfg.train.adam_beta1 = parse_num<double>(key, value);
  } else if (key == "adam_beta2") {
    cfg.train.adam_beta2 = parse_num<double>(key, value);
  } else if (key == "adam_eps") {
    cfg.train.adam_eps = parse_num<double>(key, value);
  } else if (key == "val_fraction") {
    cfg.train.val_fraction = parse_num<double>(key, value);
  } else if (key == "seed") {
    cfg.train.seed = parse_num<std::uint64_t>(key, value);
  } else if (key == "checkpoint_every") {
    cfg.train.checkpoint_every = parse_num<long long>(key, value);
  } else if (key == "data_dir") {
    cfg.data_dir = value;
  } else if (key == "response_file") {
    cfg.response_file = value;
  } else if (key == "checkpoint") {
    cfg.checkpoint = value;
  } else if (key == "output_dir") {
    cfg.output_dir = value;
  } else if (key == "pseudo_r") {
    cfg.pseudo_r = parse_num<int>(key, value);
  } else if (key == "pseudo_g") {
    cfg.pseudo_g = parse_num<int>(key, value);
  } else if (key == "pseudo_b") {
    cfg.pseudo_b = parse_num<int>(key, value);
  } else if (key == "peak") {
    cfg.peak = parse_num<double>(key, value);
  } else {
    throw ValidationError("unknown configuration key '" + key + "'");
  }
}

std::vector<std::pair<std::string, std::string>> read_config_file(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::vector<std::pair<std::string, std::string>> entries;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("'" + path + "' line " + std::to_string(lineno) +
                            ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ValidationError("'" + path + "' line " + std::to_string(lineno) +
                            ": empty key");
    if (!seen.insert(key).second)
      throw ValidationError("'" + path + "' line " + std::to_string(lineno) +
                            ": duplicate key '" + key + "'");
    entries.emplace_back(key, value);
  }
  return entries;
}

RunConfig make_run_config(
    const std::string& config_path,
    const std::vector<std::pair<std::string, std::string>>& overrides) {
  RunConfig cfg;
  if (!config_path.empty())
    for (const auto& [key, value] : read_config_file(config_path))
      apply_config_key(cfg, key, value);
  for (const auto& [key, value] : overrides) apply_config_key(cfg, key, value);
  cfg.validate();
  return cfg;
}

}  // namespace hsr
