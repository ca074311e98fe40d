#include "hsr/workflows.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "hsr/cube_io.hpp"
#include "hsr/gradcheck.hpp"
#include "hsr/metrics.hpp"
#include "hsr/trainer.hpp"

namespace fs = std::filesystem;

namespace hsr {

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// source cubes only; pipeline products are named *.lr.hsc / *.msi.hsc /
// *.fused.hsc and are skipped so simulate can write next to its inputs
std::vector<fs::path> list_source_cubes(const std::string& dir) {
  if (dir.empty()) throw ValidationError("data_dir is not set");
  if (!fs::is_directory(dir))
    throw ValidationError("data_dir '" + dir + "' is not a directory");
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (!ends_with(name, ".hsc")) continue;
    if (ends_with(name, ".lr.hsc") || ends_with(name, ".msi.hsc") ||
        ends_with(name, ".fused.hsc"))
      continue;
    out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty())
    throw ValidationError("no cubes found in '" + dir +
                          "' (expected *.hsc files)");
  return out;
}

std::string stem_of(const std::string& filename) {
  for (const char* suffix :
       {".lr.hsc", ".msi.hsc", ".fused.hsc", ".hsc"})
    if (ends_with(filename, suffix))
      return filename.substr(0, filename.size() - std::strlen(suffix));
  return filename;
}

// per-cube max normalization into [0,1]; returns the scale divided out
double max_normalize(HyperCube& cube, const std::string& name) {
  double mx = 0.0;
  for (double v : cube.data) mx = std::max(mx, v);
  if (!(mx > 0.0))
    throw ValidationError("cube '" + name +
                          "' has no positive samples; cannot normalize");
  for (double& v : cube.data) v /= mx;
  return mx;
}

struct LoadedData {
  std::vector<HyperCube> cubes;       // normalized
  std::vector<std::string> names;
  SpectralResponse response;
};

LoadedData load_training_data(const RunConfig& cfg) {
  if (cfg.response_file.empty())
    throw ValidationError("response_file is not set");
  LoadedData data;
  for (const fs::path& p : list_source_cubes(cfg.data_dir)) {
    HyperCube cube = read_cube(p.string());
    max_normalize(cube, p.filename().string());
    if (!data.cubes.empty()) {
      if (cube.bands != data.cubes.front().bands ||
          cube.wavelengths != data.cubes.front().wavelengths)
        throw ValidationError("cube '" + p.filename().string() +
                              "' disagrees with the first cube's bands or "
                              "wavelength grid");
    }
    data.names.push_back(stem_of(p.filename().string()));
    data.cubes.push_back(std::move(cube));
  }
  data.response = load_spectral_response(cfg.response_file,
                                         data.cubes.front().wavelengths);
  if (cfg.network.hsi_bands != data.cubes.front().bands)
    throw ValidationError(
        "config hsi_bands=" + std::to_string(cfg.network.hsi_bands) +
        " but the data has " + std::to_string(data.cubes.front().bands) +
        " bands");
  if (cfg.network.msi_bands != data.response.out_bands)
    throw ValidationError(
        "config msi_bands=" + std::to_string(cfg.network.msi_bands) +
        " but the response file defines " +
        std::to_string(data.response.out_bands) + " bands");
  return data;
}

void ensure_output_dir(const std::string& dir) {
  if (dir.empty()) throw ValidationError("output_dir is not set");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    throw IoError("cannot create output directory '" + dir +
                  "': " + ec.message());
}

MetricsReport mean_val_metrics(const NetworkParams<float>& params,
                               const RunConfig& cfg, const PatchDataset& val) {
  MetricsReport mean;
  for (const PatchTriple& item : val.items) {
    ForwardCache<float> cache =
        forward(params, cfg.network, item.lr, item.msi, false);
    HyperCube est = tensor_to_cube(cache.o, val.hsi_wavelengths);
    HyperCube ref = tensor_to_cube(item.hr, val.hsi_wavelengths);
    MetricsReport r = report(ref, est, cfg.network.scale_factor, cfg.peak);
    mean.psnr += r.psnr;
    mean.sam += r.sam;
    mean.ergas += r.ergas;
    mean.ssim += r.ssim;
  }
  const double n = static_cast<double>(val.items.size());
  mean.psnr /= n;
  mean.sam /= n;
  mean.ergas /= n;
  mean.ssim /= n;
  mean.ratio = cfg.network.scale_factor;
  return mean;
}

}  // namespace

void run_simulate(const RunConfig& cfg) {
  if (cfg.response_file.empty())
    throw ValidationError("response_file is not set");
  const std::vector<fs::path> sources = list_source_cubes(cfg.data_dir);
  ensure_output_dir(cfg.output_dir);

  for (const fs::path& p : sources) {
    HyperCube cube = read_cube(p.string());
    const double scale = max_normalize(cube, p.filename().string());
    const SpectralResponse response =
        load_spectral_response(cfg.response_file, cube.wavelengths);
    auto [lr, msi] = simulate_pair(cube, response, cfg.degradation);
    // wavelength slot 0 carries the normalization scale (documented
    // convention; slot 0 is no longer a wavelength downstream)
    lr.wavelengths[0] = scale;
    msi.wavelengths[0] = scale;

    const std::string stem = stem_of(p.filename().string());
    const std::string lr_path = cfg.output_dir + "/" + stem + ".lr.hsc";
    const std::string msi_path = cfg.output_dir + "/" + stem + ".msi.hsc";
    write_cube(lr, lr_path);
    write_cube(msi, msi_path);
    if (cfg.pseudo_r >= 0)
      export_pseudocolor(cube, cfg.pseudo_r, cfg.pseudo_g, cfg.pseudo_b,
                         cfg.output_dir + "/" + stem + ".png");
    std::cout << stem << ": " << cube.shape_str() << " -> lr "
              << lr.shape_str() << ", msi " << msi.shape_str() << "\n";
  }
}

void run_train(const RunConfig& cfg) {
  LoadedData data = load_training_data(cfg);
  ensure_output_dir(cfg.output_dir);

  PatchDataset all =
      extract_patches(data.cubes, data.response, cfg.degradation, cfg.train);
  auto [train_split, val_split] =
      split_dataset(all, cfg.train.val_fraction, cfg.train.seed);
  std::cout << "patches: " << all.items.size() << " ("
            << train_split.items.size() << " train, " << val_split.items.size()
            << " val)\n";

  TrainerState state = cfg.checkpoint.empty()
                           ? make_trainer_state(cfg.network, cfg.train)
                           : load_checkpoint(cfg.checkpoint, cfg.network);
  if (state.step > 0)
    std::cout << "resuming from step " << state.step << "\n";
  std::cout << "parameters: " << count_parameters(state.params) << " ("
            << variant_name(cfg.network.variant) << ")\n";

  TrainResult result =
      train(state, train_split, val_split, cfg.network, cfg.train,
            cfg.output_dir, cfg.output_dir + "/loss_log.csv");
  if (!result.log.empty())
    std::cout << "final train loss " << result.log.back().train_loss << " at step "
              << result.log.back().step << "\n";
  if (!result.last_checkpoint.empty())
    std::cout << "checkpoint: " << result.last_checkpoint << "\n";
}

void run_fuse(const RunConfig& cfg, const std::string& lr_path,
              const std::string& msi_path) {
  if (cfg.checkpoint.empty())
    throw ValidationError("checkpoint is not set (use --checkpoint or the "
                          "checkpoint config key)");
  // inputs are pipeline products, consumed as-is (already normalized)
  HyperCube lr = read_cube(lr_path);
  HyperCube msi = read_cube(msi_path);
  if (lr.bands != cfg.network.hsi_bands)
    throw ValidationError(
        "'" + lr_path + "' has " + std::to_string(lr.bands) +
        " bands but the checkpointed network expects hsi_bands=" +
        std::to_string(cfg.network.hsi_bands));
  if (msi.bands != cfg.network.msi_bands)
    throw ValidationError(
        "'" + msi_path + "' has " + std::to_string(msi.bands) +
        " bands but the checkpointed network expects msi_bands=" +
        std::to_string(cfg.network.msi_bands));
  TrainerState state = load_checkpoint(cfg.checkpoint, cfg.network);
  ensure_output_dir(cfg.output_dir);

  Tensor<float> y = cube_to_tensor<float>(lr);
  Tensor<float> z = cube_to_tensor<float>(msi);
  ForwardCache<float> cache = forward(state.params, cfg.network, y, z, false);
  HyperCube fused = tensor_to_cube(cache.o, lr.wavelengths);

  const std::string stem = stem_of(fs::path(lr_path).filename().string());
  const std::string out_path = cfg.output_dir + "/" + stem + ".fused.hsc";
  write_cube(fused, out_path);
  std::cout << stem << ".fused: " << fused.shape_str() << "\n";
}

void run_evaluate(const RunConfig& cfg, const std::string& ref_path,
                  const std::string& est_path) {
  const HyperCube ref = read_cube(ref_path);
  const HyperCube est = read_cube(est_path);
  const MetricsReport r =
      report(ref, est, cfg.network.scale_factor, cfg.peak);
  std::cout << format_metrics_line(fs::path(est_path).filename().string(), r)
            << "\n";
}

void run_ablate(const RunConfig& cfg) {
  LoadedData data = load_training_data(cfg);
  ensure_output_dir(cfg.output_dir);

  PatchDataset all =
      extract_patches(data.cubes, data.response, cfg.degradation, cfg.train);
  auto [train_split, val_split] =
      split_dataset(all, cfg.train.val_fraction, cfg.train.seed);

  // provenance: every variant consumes exactly this order with this seed
  {
    std::ofstream prov(cfg.output_dir + "/ablate_provenance.txt",
                       std::ios::trunc);
    if (!prov) throw IoError("cannot write ablate provenance log");
    prov << "seed " << cfg.train.seed << "\n";
    prov << "train " << train_split.items.size() << " val "
         << val_split.items.size() << "\n";
    auto dump = [&](const char* tag, const PatchDataset& d) {
      for (std::size_t i = 0; i < d.items.size(); ++i) {
        const PatchTriple& t = d.items[i];
        prov << tag << " " << i << " source " << data.names[t.source_id]
             << " row " << t.row << " col " << t.col << "\n";
      }
    };
    dump("train", train_split);
    dump("val", val_split);
    for (long long step = 0; step < std::min<long long>(3, cfg.train.iterations);
         ++step) {
      prov << "batch " << step << ":";
      for (int i : batch_indices(cfg.train.seed, step,
                                 static_cast<int>(train_split.items.size()),
                                 cfg.train.batch_size))
        prov << " " << i;
      prov << "\n";
    }
  }

  std::ofstream table(cfg.output_dir + "/ablate_metrics.csv", std::ios::trunc);
  if (!table) throw IoError("cannot write ablate metrics table");
  table << "name,psnr_db,sam_deg,ergas,ssim\n";

  for (Variant variant :
       {Variant::full, Variant::no_highpass, Variant::single_scale}) {
    RunConfig vc = cfg;
    vc.network.variant = variant;
    const std::string dir = cfg.output_dir + "/" + variant_name(variant);
    ensure_output_dir(dir);

    TrainerState state = make_trainer_state(vc.network, vc.train);
    try {
      train(state, train_split, val_split, vc.network, vc.train, dir,
            dir + "/loss_log.csv");
    } catch (const DivergenceError& e) {
      // keep the table complete: score the last parameters that were healthy
      std::cerr << "warning: variant " << variant_name(variant)
                << " diverged (" << e.what()
                << "); its row uses the last good parameters\n";
    }
    const MetricsReport r = mean_val_metrics(state.params, vc, val_split);
    const std::string line = format_metrics_line(variant_name(variant), r);
    std::cout << line << "\n";
    table << line << "\n";
  }
}

bool run_gradcheck(std::uint64_t seed, bool inject_fault) {
  bool all_passed = true;
  for (const FdCase& c : standard_cases(inject_fault)) {
    const GradCheckReport r = finite_difference_check(c, seed);
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-28s max_rel %.3e  tol %.0e  %s",
                  r.op_name.c_str(), r.max_rel_error, r.tolerance,
                  r.passed ? "PASS" : "FAIL");
    std::cout << buf << "\n";
    all_passed = all_passed && r.passed;
  }
  return all_passed;
}

}  // namespace hsr
