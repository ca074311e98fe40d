#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "hsr/runconfig.hpp"

namespace fs = std::filesystem;
using namespace hsr;

namespace {

std::string write_cfg(const std::string& body) {
  const std::string path = (fs::temp_directory_path() / "hsr_cfg.txt").string();
  std::ofstream(path) << body;
  return path;
}

}  // namespace

TEST_CASE("defaults survive an empty configuration") {
  const RunConfig cfg = make_run_config("", {});
  CHECK(cfg.network.hsi_bands == 31);
  CHECK(cfg.network.msi_bands == 3);
  CHECK(cfg.network.scale_factor == 4);
  CHECK(cfg.network.feature_channels == 64);
  CHECK(cfg.network.num_blocks == 6);
  CHECK(cfg.degradation.blur_kernel_size == 3);
  CHECK(cfg.degradation.blur_sigma == 0.5);
  CHECK(cfg.train.batch_size == 32);
  CHECK(cfg.train.learning_rate == 1e-4);
  CHECK(cfg.train.val_fraction == 0.2);
  CHECK(cfg.network.variant == Variant::full);
}

TEST_CASE("file keys, comments, and blank lines parse") {
  const std::string path = write_cfg(
      "# training setup\n"
      "\n"
      "hsi_bands = 8   # narrow bands\n"
      "msi_bands=2\n"
      "scale_factor = 2\n"
      "variant = single_scale\n"
      "learning_rate = 5e-4\n"
      "seed = 99\n"
      "data_dir = /data/cubes\n");
  const RunConfig cfg = make_run_config(path, {});
  CHECK(cfg.network.hsi_bands == 8);
  CHECK(cfg.network.msi_bands == 2);
  CHECK(cfg.network.scale_factor == 2);
  CHECK(cfg.degradation.scale_factor == 2);   // shared key fans out
  CHECK(cfg.train.scale_factor == 2);
  CHECK(cfg.network.variant == Variant::single_scale);
  CHECK(cfg.train.learning_rate == 5e-4);
  CHECK(cfg.train.seed == 99);
  CHECK(cfg.data_dir == "/data/cubes");
  fs::remove(path);
}

TEST_CASE("unknown keys are rejected by name") {
  const std::string path = write_cfg("unknown_thing = 3\n");
  bool threw = false;
  try {
    make_run_config(path, {});
  } catch (const ValidationError& e) {
    threw = true;
    CHECK(std::string(e.what()).find("unknown_thing") != std::string::npos);
  }
  CHECK(threw);
  fs::remove(path);
}

TEST_CASE("duplicate keys in one file are rejected") {
  const std::string path = write_cfg("seed = 1\nseed = 2\n");
  CHECK_THROWS_AS(make_run_config(path, {}), ValidationError);
  fs::remove(path);
}

TEST_CASE("command-line overrides win over the file") {
  const std::string path = write_cfg("seed = 1\noutput_dir = /from_file\n");
  const RunConfig cfg =
      make_run_config(path, {{"seed", "7"}, {"output_dir", "/from_flag"}});
  CHECK(cfg.train.seed == 7);
  CHECK(cfg.output_dir == "/from_flag");
  fs::remove(path);
}

TEST_CASE("unparseable values name the key") {
  const std::string path = write_cfg("batch_size = many\n");
  bool threw = false;
  try {
    make_run_config(path, {});
  } catch (const ValidationError& e) {
    threw = true;
    const std::string msg = e.what();
    CHECK(msg.find("batch_size") != std::string::npos);
    CHECK(msg.find("many") != std::string::npos);
  }
  CHECK(threw);
  fs::remove(path);
}

TEST_CASE("bogus variant fails validation") {
  CHECK_THROWS_AS(make_run_config("", {{"variant", "bogus"}}),
                  ValidationError);
}

TEST_CASE("interleave position lists parse as comma-separated integers") {
  const RunConfig cfg = make_run_config(
      "", {{"interleave_c0", "0,17,33"}, {"interleave_c1", "0,33,66"}});
  CHECK(cfg.network.interleave_c0 == std::vector<int>{0, 17, 33});
  CHECK(cfg.network.interleave_c1 == std::vector<int>{0, 33, 66});
  CHECK_THROWS_AS(make_run_config("", {{"interleave_c0", "0,x,3"}}),
                  ValidationError);
}

TEST_CASE("cross-field validation runs after assembly") {
  // kernel/stride pairing that admits no symmetric crop
  CHECK_THROWS_AS(make_run_config("", {{"upsample_kernel", "5"}}),
                  ValidationError);
  CHECK_THROWS_AS(make_run_config("", {{"blur_sigma", "0"}}),
                  ValidationError);
  CHECK_THROWS_AS(make_run_config("", {{"val_fraction", "1.5"}}),
                  ValidationError);
  CHECK_THROWS_AS(make_run_config("", {{"peak", "-1"}}), ValidationError);
  // pseudo bands must be set together
  CHECK_THROWS_AS(make_run_config("", {{"pseudo_r", "0"}}), ValidationError);
  const RunConfig ok = make_run_config(
      "", {{"pseudo_r", "0"}, {"pseudo_g", "1"}, {"pseudo_b", "2"}});
  CHECK(ok.pseudo_b == 2);
}

TEST_CASE("missing config file is an error, empty path means defaults") {
  CHECK_THROWS_AS(make_run_config("/definitely/not/here.cfg", {}), IoError);
  const RunConfig cfg = make_run_config("", {});
  CHECK(cfg.output_dir == ".");
}
