#include "hsr/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace hsr {

namespace {

HyperCube crop_cube(const HyperCube& c, int row, int col, int size) {
  HyperCube out(size, size, c.bands);
  out.wavelengths = c.wavelengths;
  for (int b = 0; b < c.bands; ++b)
    for (int y = 0; y < size; ++y)
      std::memcpy(out.band(b) + static_cast<std::size_t>(y) * size,
                  c.band(b) + (static_cast<std::size_t>(row) + y) * c.width +
                      col,
                  static_cast<std::size_t>(size) * sizeof(double));
  return out;
}

// permutation of [0, n) for a given epoch; identical for identical
// (seed, epoch, n), which is what makes checkpoint resume exact
std::vector<int> epoch_permutation(std::uint64_t seed, long long epoch,
                                   int n) {
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng =
      make_rng(seed, kStreamEpochBase + static_cast<std::uint64_t>(epoch));
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

void copy_sample(Tensor<float>& dst, int ni, const Tensor<float>& src) {
  std::memcpy(dst.plane(ni, 0), src.plane(0, 0),
              static_cast<std::size_t>(src.c) * src.h * src.w * sizeof(float));
}

struct Batch {
  Tensor<float> y, z, x;
};

Batch assemble_batch(const PatchDataset& data, const std::vector<int>& idx) {
  const PatchTriple& first = data.items[idx[0]];
  Batch b;
  const int n = static_cast<int>(idx.size());
  b.y = Tensor<float>(n, first.lr.c, first.lr.h, first.lr.w);
  b.z = Tensor<float>(n, first.msi.c, first.msi.h, first.msi.w);
  b.x = Tensor<float>(n, first.hr.c, first.hr.h, first.hr.w);
  for (int i = 0; i < n; ++i) {
    const PatchTriple& p = data.items[idx[i]];
    copy_sample(b.y, i, p.lr);
    copy_sample(b.z, i, p.msi);
    copy_sample(b.x, i, p.hr);
  }
  return b;
}

void put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4)
    throw ShortReadError("'" + path + "': truncated checkpoint");
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_record(std::ofstream& out, const std::string& name,
                const Tensor<float>& t) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(out, static_cast<std::uint32_t>(t.n));
  put_u32(out, static_cast<std::uint32_t>(t.c));
  put_u32(out, static_cast<std::uint32_t>(t.h));
  put_u32(out, static_cast<std::uint32_t>(t.w));
  for (float v : t.v) put_u32(out, std::bit_cast<std::uint32_t>(v));
}

struct Record {
  std::string name;
  Tensor<float> data;
};

Record get_record(std::ifstream& in, const std::string& path) {
  Record r;
  const std::uint32_t len = get_u32(in, path);
  if (len > 4096)
    throw FormatError("'" + path + "': implausible record name length");
  r.name.resize(len);
  in.read(r.name.data(), len);
  if (static_cast<std::uint32_t>(in.gcount()) != len)
    throw ShortReadError("'" + path + "': truncated checkpoint");
  const int n = static_cast<int>(get_u32(in, path));
  const int c = static_cast<int>(get_u32(in, path));
  const int h = static_cast<int>(get_u32(in, path));
  const int w = static_cast<int>(get_u32(in, path));
  if (static_cast<std::uint64_t>(n) * c * h * w > (1ull << 32))
    throw FormatError("'" + path + "': implausible record shape");
  r.data = Tensor<float>(n, c, h, w);
  for (auto& v : r.data.v) v = std::bit_cast<float>(get_u32(in, path));
  return r;
}

}  // namespace

PatchDataset extract_patches(const std::vector<HyperCube>& cubes,
                             const SpectralResponse& response,
                             const DegradationConfig& degrade,
                             const TrainConfig& cfg) {
  cfg.validate();
  degrade.validate();
  if (cubes.empty()) throw ValidationError("extract_patches: no cubes");
  if (degrade.scale_factor != cfg.scale_factor)
    throw ValidationError(
        "extract_patches: degradation and trainer scale factors differ");

  PatchDataset out;
  out.hsi_wavelengths = cubes.front().wavelengths;
  for (std::size_t id = 0; id < cubes.size(); ++id) {
    const HyperCube& cube = cubes[id];
    cube.validate();
    if (cube.bands != cubes.front().bands)
      throw ValidationError("extract_patches: cube " + std::to_string(id) +
                            " has " + std::to_string(cube.bands) +
                            " bands, expected " +
                            std::to_string(cubes.front().bands));
    if (cube.height < cfg.patch_size || cube.width < cfg.patch_size)
      throw ValidationError("extract_patches: cube " + std::to_string(id) +
                            " (" + cube.shape_str() +
                            ") is smaller than the patch size " +
                            std::to_string(cfg.patch_size));
    for (int row = 0; row + cfg.patch_size <= cube.height;
         row += cfg.patch_stride)
      for (int col = 0; col + cfg.patch_size <= cube.width;
           col += cfg.patch_stride) {
        HyperCube hr = crop_cube(cube, row, col, cfg.patch_size);
        auto [lr, msi] = simulate_pair(hr, response, degrade);
        if (out.msi_wavelengths.empty()) out.msi_wavelengths = msi.wavelengths;
        PatchTriple triple;
        triple.hr = cube_to_tensor<float>(hr);
        triple.lr = cube_to_tensor<float>(lr);
        triple.msi = cube_to_tensor<float>(msi);
        triple.source_id = static_cast<int>(id);
        triple.row = row;
        triple.col = col;
        out.items.push_back(std::move(triple));
      }
  }
  return out;
}

std::pair<PatchDataset, PatchDataset> split_dataset(const PatchDataset& data,
                                                    double val_fraction,
                                                    std::uint64_t seed) {
  if (!(val_fraction > 0.0) || !(val_fraction < 1.0))
    throw ValidationError("split_dataset: val fraction must be in (0,1)");
  const int n = static_cast<int>(data.items.size());
  if (n < 2)
    throw ValidationError("split_dataset: need at least 2 patches, have " +
                          std::to_string(n));
  const long long raw = std::llround(n * val_fraction);
  const int n_val =
      static_cast<int>(std::clamp<long long>(raw, 1, n - 1));

  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng = make_rng(seed, kStreamSplit);
  std::shuffle(perm.begin(), perm.end(), rng);

  PatchDataset train, val;
  train.hsi_wavelengths = val.hsi_wavelengths = data.hsi_wavelengths;
  train.msi_wavelengths = val.msi_wavelengths = data.msi_wavelengths;
  for (int i = 0; i < n - n_val; ++i)
    train.items.push_back(data.items[perm[i]]);
  for (int i = n - n_val; i < n; ++i) val.items.push_back(data.items[perm[i]]);
  return {std::move(train), std::move(val)};
}

std::vector<int> batch_indices(std::uint64_t seed, long long step, int n_items,
                               int batch_size) {
  if (n_items < 1) throw ValidationError("batch_indices: empty dataset");
  if (batch_size < 1) throw ValidationError("batch_indices: bad batch size");
  const long long bpe = (n_items + batch_size - 1) / batch_size;
  const long long epoch = step / bpe;
  const long long slot = step % bpe;
  std::vector<int> perm = epoch_permutation(seed, epoch, n_items);
  const long long lo = slot * batch_size;
  const long long hi = std::min<long long>(lo + batch_size, n_items);
  return std::vector<int>(perm.begin() + lo, perm.begin() + hi);
}

AdamState make_adam_state(const NetworkParams<float>& params) {
  AdamState st;
  for_each_param(params, [&](const std::string& name, const Tensor<float>& t) {
    st.names.push_back(name);
    st.m.push_back(Tensor<float>::zeros(t.n, t.c, t.h, t.w));
    st.v.push_back(Tensor<float>::zeros(t.n, t.c, t.h, t.w));
  });
  return st;
}

void adam_step(NetworkParams<float>& params, const NetworkParams<float>& grads,
               AdamState& state, const TrainConfig& cfg) {
  std::vector<Tensor<float>*> ps;
  std::vector<const Tensor<float>*> gs;
  std::vector<std::string> names;
  for_each_param(params, [&](const std::string& n, Tensor<float>& t) {
    ps.push_back(&t);
    names.push_back(n);
  });
  for_each_param(grads, [&](const std::string&, const Tensor<float>& t) {
    gs.push_back(&t);
  });
  if (ps.size() != gs.size() || ps.size() != state.m.size())
    throw ValidationError("adam_step: parameter/gradient/state mismatch");

  // reject non-finite gradients before mutating anything, so a divergent
  // step never leaves half-updated parameters behind
  for (std::size_t k = 0; k < gs.size(); ++k) {
    if (!gs[k]->same_shape(*ps[k]))
      throw ValidationError("adam_step: gradient shape mismatch for " +
                            names[k]);
    if (!gs[k]->all_finite())
      throw DivergenceError("non-finite gradient in " + names[k]);
  }

  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, state.t);
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, state.t);
  for (std::size_t k = 0; k < ps.size(); ++k) {
    Tensor<float>& th = *ps[k];
    const Tensor<float>& gr = *gs[k];
    Tensor<float>& m = state.m[k];
    Tensor<float>& v = state.v[k];
    for (std::size_t i = 0; i < th.v.size(); ++i) {
      // math in double, storage in float
      const double g = gr.v[i];
      const double mi = cfg.adam_beta1 * m.v[i] + (1.0 - cfg.adam_beta1) * g;
      const double vi =
          cfg.adam_beta2 * v.v[i] + (1.0 - cfg.adam_beta2) * g * g;
      m.v[i] = static_cast<float>(mi);
      v.v[i] = static_cast<float>(vi);
      const double update = cfg.learning_rate * (mi / bc1) /
                            (std::sqrt(vi / bc2) + cfg.adam_eps);
      th.v[i] = static_cast<float>(th.v[i] - update);
    }
  }
}

TrainerState make_trainer_state(const NetworkConfig& net_cfg,
                                const TrainConfig& cfg) {
  cfg.validate();
  TrainerState st;
  st.params = init_network<float>(net_cfg, cfg.seed);
  st.adam = make_adam_state(st.params);
  st.step = 0;
  return st;
}

double evaluate_loss(const NetworkParams<float>& params,
                     const NetworkConfig& net_cfg, const PatchDataset& split,
                     int batch_size) {
  if (split.items.empty())
    throw ValidationError("evaluate_loss: empty split");
  double sq_sum = 0.0;
  std::size_t count = 0;
  const int n = static_cast<int>(split.items.size());
  for (int lo = 0; lo < n; lo += batch_size) {
    std::vector<int> idx;
    for (int i = lo; i < std::min(lo + batch_size, n); ++i) idx.push_back(i);
    Batch b = assemble_batch(split, idx);
    ForwardCache<float> cache = forward(params, net_cfg, b.y, b.z, false);
    sq_sum += loss_mse(cache.o, b.x) * static_cast<double>(cache.o.numel());
    count += cache.o.numel();
  }
  return sq_sum / static_cast<double>(count);
}

void save_checkpoint(const TrainerState& state, const std::string& path) {
  if (state.step < 0 || state.step > 0xffffffffll)
    throw ValidationError("save_checkpoint: step out of range");
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp + "' for writing");
    out.write("HSCK", 4);
    put_u32(out, 1);
    put_u32(out, static_cast<std::uint32_t>(state.step));

    std::uint32_t n_records = 1;  // adam.t
    for_each_param(state.params,
                   [&](const std::string&, const Tensor<float>&) {
                     n_records += 3;  // param + adam.m + adam.v
                   });
    put_u32(out, n_records);

    std::size_t k = 0;
    for_each_param(state.params,
                   [&](const std::string& name, const Tensor<float>& t) {
                     put_record(out, name, t);
                     put_record(out, "adam.m." + name, state.adam.m[k]);
                     put_record(out, "adam.v." + name, state.adam.v[k]);
                     ++k;
                   });
    Tensor<float> tt(1, 1, 1, 1);
    tt.v[0] = static_cast<float>(state.adam.t);
    put_record(out, "adam.t", tt);
    out.flush();
    if (!out) throw IoError("write failed for '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec)
    throw IoError("cannot move checkpoint into place at '" + path +
                  "': " + ec.message());
}

TrainerState load_checkpoint(const std::string& path,
                             const NetworkConfig& net_cfg) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4)
    throw ShortReadError("'" + path + "': truncated checkpoint");
  if (std::memcmp(magic, "HSCK", 4) != 0)
    throw FormatError("'" + path + "': bad magic (not a checkpoint)");
  const std::uint32_t version = get_u32(in, path);
  if (version != 1)
    throw FormatError("'" + path + "': unsupported checkpoint version " +
                      std::to_string(version));
  const std::uint32_t step = get_u32(in, path);
  const std::uint32_t n_records = get_u32(in, path);

  std::vector<Record> records;
  records.reserve(n_records);
  for (std::uint32_t i = 0; i < n_records; ++i)
    records.push_back(get_record(in, path));

  auto find = [&](const std::string& name) -> const Tensor<float>& {
    for (const Record& r : records)
      if (r.name == name) return r.data;
    throw ValidationError("'" + path + "': checkpoint is missing '" + name +
                          "' required by the configured network");
  };

  TrainerState st;
  // seed value is irrelevant; every tensor is overwritten below
  st.params = init_network<float>(net_cfg, 0);
  st.adam = make_adam_state(st.params);
  st.step = step;

  std::size_t k = 0;
  std::size_t used = 0;
  for_each_param(st.params, [&](const std::string& name, Tensor<float>& t) {
    const Tensor<float>& src = find(name);
    if (!src.same_shape(t))
      throw ValidationError("'" + path + "': '" + name + "' has shape " +
                            src.shape_str() + " but the configured network (" +
                            variant_name(net_cfg.variant) + ", S=" +
                            std::to_string(net_cfg.hsi_bands) + ", s=" +
                            std::to_string(net_cfg.msi_bands) + ") expects " +
                            t.shape_str());
    t = src;
    st.adam.m[k] = find("adam.m." + name);
    st.adam.v[k] = find("adam.v." + name);
    if (!st.adam.m[k].same_shape(t) || !st.adam.v[k].same_shape(t))
      throw ValidationError("'" + path + "': optimizer state shape mismatch for '" +
                            name + "'");
    ++k;
    used += 3;
  });
  st.adam.t = static_cast<long long>(find("adam.t").v[0]);
  used += 1;
  if (used != records.size())
    throw ValidationError("'" + path + "': checkpoint holds " +
                          std::to_string(records.size()) +
                          " records but the configured network uses " +
                          std::to_string(used));
  return st;
}

void write_loss_log(const std::vector<LossLogRow>& rows,
                    const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "step,train_loss,val_loss\n";
  char buf[96];
  for (const LossLogRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%lld,%.9g,", r.step, r.train_loss);
    out << buf;
    if (r.has_val) {
      std::snprintf(buf, sizeof buf, "%.9g", r.val_loss);
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

TrainResult train(TrainerState& state, const PatchDataset& train_split,
                  const PatchDataset& val_split, const NetworkConfig& net_cfg,
                  const TrainConfig& cfg, const std::string& checkpoint_dir,
                  const std::string& loss_log_path) {
  cfg.validate();
  net_cfg.validate();
  if (train_split.items.empty())
    throw ValidationError("train: empty training split");
  const int n = static_cast<int>(train_split.items.size());
  const long long bpe = (n + cfg.batch_size - 1) / cfg.batch_size;

  TrainResult result;
  std::ofstream log;
  if (!loss_log_path.empty()) {
    // resuming appends so the combined log covers the whole schedule
    log.open(loss_log_path, state.step > 0 ? std::ios::app : std::ios::trunc);
    if (!log) throw IoError("cannot open '" + loss_log_path + "' for writing");
    if (state.step == 0) log << "step,train_loss,val_loss\n";
  }

  std::vector<int> perm;
  long long perm_epoch = -1;
  char buf[96];
  for (long long step = state.step; step < cfg.iterations; ++step) {
    const long long epoch = step / bpe;
    const long long slot = step % bpe;
    if (epoch != perm_epoch) {
      perm = epoch_permutation(cfg.seed, epoch, n);
      perm_epoch = epoch;
    }
    const long long lo = slot * cfg.batch_size;
    const long long hi = std::min<long long>(lo + cfg.batch_size, n);
    const std::vector<int> idx(perm.begin() + lo, perm.begin() + hi);

    Batch b = assemble_batch(train_split, idx);
    ForwardCache<float> cache = forward(state.params, net_cfg, b.y, b.z, true);
    const double loss = loss_mse(cache.o, b.x);
    if (!std::isfinite(loss))
      throw DivergenceError("loss diverged at step " + std::to_string(step + 1) +
                            "; last good checkpoint retained");
    NetworkParams<float> grads = backward(state.params, net_cfg, cache, b.x);
    adam_step(state.params, grads, state.adam, cfg);
    state.step = step + 1;

    LossLogRow row;
    row.step = state.step;
    row.train_loss = loss;
    const bool at_checkpoint = state.step % cfg.checkpoint_every == 0;
    if (at_checkpoint && !val_split.items.empty()) {
      row.val_loss =
          evaluate_loss(state.params, net_cfg, val_split, cfg.batch_size);
      row.has_val = true;
    }
    if (!checkpoint_dir.empty() &&
        (at_checkpoint || state.step == cfg.iterations)) {
      std::snprintf(buf, sizeof buf, "/checkpoint_%08lld.hsck", state.step);
      result.last_checkpoint = checkpoint_dir + buf;
      save_checkpoint(state, result.last_checkpoint);
    }
    result.log.push_back(row);
    if (log.is_open()) {
      std::snprintf(buf, sizeof buf, "%lld,%.9g,", row.step, row.train_loss);
      log << buf;
      if (row.has_val) {
        std::snprintf(buf, sizeof buf, "%.9g", row.val_loss);
        log << buf;
      }
      log << '\n';
      log.flush();
    }
  }
  return result;
}

}  // namespace hsr
