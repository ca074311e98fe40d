// End-to-end tests of the installed command-line surface: exit codes,
// output grammar, and cross-run determinism. Each test drives the real
// binary (path injected by the build) in a scratch directory.
#include <doctest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "hsr/cube_io.hpp"

namespace fs = std::filesystem;
using namespace hsr;

#ifndef HSRFUSE_BIN
#error "HSRFUSE_BIN must point at the hsrfuse binary"
#endif

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out, err;
};

RunResult run(const std::string& args) {
  const std::string out = (fs::temp_directory_path() / "hsr_cli_out").string();
  const std::string err = (fs::temp_directory_path() / "hsr_cli_err").string();
  const std::string cmd =
      std::string(HSRFUSE_BIN) + " " + args + " >" + out + " 2>" + err;
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream fo(out), fe(err);
  r.out.assign(std::istreambuf_iterator<char>(fo), {});
  r.err.assign(std::istreambuf_iterator<char>(fe), {});
  return r;
}

// one 32x32x4 scene plus response table and a matching tiny-network config
struct Workspace {
  std::string root, data, cfg;

  Workspace() {
    root = (fs::temp_directory_path() / "hsr_cli_ws").string();
    fs::remove_all(root);
    data = root + "/data";
    fs::create_directories(data);

    HyperCube cube(32, 32, 4);
    std::mt19937_64 rng(400);
    std::uniform_real_distribution<double> dist(0.05, 1.0);
    for (int b = 0; b < 4; ++b) cube.wavelengths[b] = 420.0 + 60.0 * b;
    for (double& v : cube.data) v = dist(rng);
    write_cube(cube, data + "/scene.hsc");

    std::ofstream(root + "/response.csv")
        << "wavelength,a,b\n420,1,0\n480,1,0.3\n540,0.2,1\n600,0,1\n";

    cfg = root + "/run.cfg";
    std::ofstream(cfg) << "hsi_bands = 4\nmsi_bands = 2\nscale_factor = 2\n"
                       << "feature_channels = 8\nnum_blocks = 1\n"
                       << "patch_size = 16\npatch_stride = 16\n"
                       << "batch_size = 2\niterations = 10\n"
                       << "checkpoint_every = 5\nlearning_rate = 2e-4\n"
                       << "data_dir = " << data << "\n"
                       << "response_file = " << root << "/response.csv\n";
  }
  ~Workspace() { fs::remove_all(root); }
};

}  // namespace

TEST_CASE("usage errors exit 1, help exits 0") {
  CHECK(run("").exit_code == 1);
  CHECK(run("--help").exit_code == 0);
  CHECK(run("fuse").exit_code == 1);               // missing positionals
  CHECK(run("no_such_command").exit_code == 1);
}

TEST_CASE("validation failures exit 1 with a message") {
  Workspace ws;
  const RunResult bogus =
      run("train --config " + ws.cfg + " --out " + ws.root + "/t --seed 1 " +
          "--checkpoint /nope.hsck");
  CHECK(bogus.exit_code == 2);  // unreadable checkpoint is an I/O failure

  std::ofstream(ws.root + "/bad.cfg") << "variant = bogus\n";
  const RunResult bad = run("train --config " + ws.root + "/bad.cfg");
  CHECK(bad.exit_code == 1);
  CHECK(bad.err.find("bogus") != std::string::npos);

  const std::string empty = ws.root + "/empty";
  fs::create_directories(empty);
  std::ofstream cfg2(ws.root + "/empty.cfg");
  cfg2 << "data_dir = " << empty << "\nresponse_file = " << ws.root
       << "/response.csv\n";
  cfg2.close();
  const RunResult none = run("simulate --config " + ws.root + "/empty.cfg" +
                             " --out " + ws.root + "/sim");
  CHECK(none.exit_code == 1);
  CHECK(none.err.find("no cubes found") != std::string::npos);
}

TEST_CASE("simulate, train, fuse, evaluate pipeline") {
  Workspace ws;
  const RunResult sim =
      run("simulate --config " + ws.cfg + " --out " + ws.root + "/sim");
  CHECK(sim.exit_code == 0);
  CHECK(fs::exists(ws.root + "/sim/scene.lr.hsc"));
  CHECK(fs::exists(ws.root + "/sim/scene.msi.hsc"));

  const RunResult train =
      run("train --config " + ws.cfg + " --out " + ws.root + "/run --seed 5");
  REQUIRE(train.exit_code == 0);
  REQUIRE(fs::exists(ws.root + "/run/checkpoint_00000010.hsck"));

  // loss log: header plus one row per iteration
  std::ifstream log(ws.root + "/run/loss_log.csv");
  std::string line;
  int rows = -1;  // header
  while (std::getline(log, line)) ++rows;
  CHECK(rows == 10);

  const std::string fuse_args =
      "fuse --config " + ws.cfg + " --checkpoint " + ws.root +
      "/run/checkpoint_00000010.hsck " + ws.root + "/sim/scene.lr.hsc " +
      ws.root + "/sim/scene.msi.hsc";
  const RunResult f1 = run(fuse_args + " --out " + ws.root + "/f1");
  REQUIRE(f1.exit_code == 0);
  const RunResult f2 = run(fuse_args + " --out " + ws.root + "/f2");
  REQUIRE(f2.exit_code == 0);

  // byte-identical fusion across runs
  std::ifstream a(ws.root + "/f1/scene.fused.hsc", std::ios::binary);
  std::ifstream b(ws.root + "/f2/scene.fused.hsc", std::ios::binary);
  const std::string ba((std::istreambuf_iterator<char>(a)), {});
  const std::string bb((std::istreambuf_iterator<char>(b)), {});
  CHECK(ba == bb);
  CHECK(!ba.empty());

  const RunResult ev = run("evaluate --config " + ws.cfg + " " + ws.data +
                           "/scene.hsc " + ws.root + "/f1/scene.fused.hsc");
  CHECK(ev.exit_code == 0);
  // grammar: name,psnr,sam,ergas,ssim
  int commas = 0;
  for (char ch : ev.out)
    if (ch == ',') ++commas;
  CHECK(commas == 4);
  CHECK(ev.out.find("scene.fused.hsc,") == 0);
}

TEST_CASE("evaluating a cube against itself prints the ideal row") {
  Workspace ws;
  const RunResult ev = run("evaluate --config " + ws.cfg + " " + ws.data +
                           "/scene.hsc " + ws.data + "/scene.hsc");
  CHECK(ev.exit_code == 0);
  CHECK(ev.out == "scene.hsc,inf,0,0,1\n");
}

TEST_CASE("evaluate with a missing file exits 2") {
  Workspace ws;
  const RunResult ev = run("evaluate --config " + ws.cfg + " " + ws.data +
                           "/scene.hsc " + ws.data + "/absent.hsc");
  CHECK(ev.exit_code == 2);
}

TEST_CASE("gradcheck exits clean, and 2 when a fault is injected") {
  CHECK(run("gradcheck --seed 3").exit_code == 0);
  const RunResult fault = run("gradcheck --seed 3 --inject-fault");
  CHECK(fault.exit_code == 2);
  CHECK(fault.out.find("FAIL") != std::string::npos);
}

TEST_CASE("ablate emits one row per variant plus artifacts") {
  Workspace ws;
  const RunResult ab = run("ablate --config " + ws.cfg + " --seed 4 --out " +
                           ws.root + "/abl");
  REQUIRE(ab.exit_code == 0);
  CHECK(ab.out.find("full,") != std::string::npos);
  CHECK(ab.out.find("no_highpass,") != std::string::npos);
  CHECK(ab.out.find("single_scale,") != std::string::npos);
  CHECK(fs::exists(ws.root + "/abl/ablate_metrics.csv"));
  CHECK(fs::exists(ws.root + "/abl/ablate_provenance.txt"));

  std::ifstream csv(ws.root + "/abl/ablate_metrics.csv");
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(csv, line)) lines.push_back(line);
  REQUIRE(lines.size() == 4);
  CHECK(lines[0] == "name,psnr_db,sam_deg,ergas,ssim");
  CHECK(lines[1].rfind("full,", 0) == 0);
  CHECK(lines[2].rfind("no_highpass,", 0) == 0);
  CHECK(lines[3].rfind("single_scale,", 0) == 0);
}

TEST_CASE("simulate is deterministic in its outputs") {
  Workspace ws;
  REQUIRE(run("simulate --config " + ws.cfg + " --out " + ws.root + "/s1")
              .exit_code == 0);
  REQUIRE(run("simulate --config " + ws.cfg + " --out " + ws.root + "/s2")
              .exit_code == 0);
  for (const char* name : {"/scene.lr.hsc", "/scene.msi.hsc"}) {
    std::ifstream a(ws.root + "/s1" + name, std::ios::binary);
    std::ifstream b(ws.root + "/s2" + name, std::ios::binary);
    const std::string ba((std::istreambuf_iterator<char>(a)), {});
    const std::string bb((std::istreambuf_iterator<char>(b)), {});
    CHECK(ba == bb);
    CHECK(!ba.empty());
  }
}
