#include "csf/checkpoint.hpp"

#include <zlib.h>

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "csf/config.hpp"
#include "serialize.hpp"

namespace csf {

namespace {

constexpr char kMagic[4] = {'C', 'S', 'F', '1'};
constexpr std::uint16_t kVersion = 1;

std::uint32_t crc_of(const std::string& bytes) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()),
              static_cast<uInt>(bytes.size())));
}

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error("checkpoint: " + path + ": " + what);
}

void append_tensor_values(std::string& buf, const Tensor& t) {
  for (double v : t.values()) io::append_f64(buf, v);
}

// Names the first line where the stored and rebuilt config echoes diverge.
[[noreturn]] void fail_config_mismatch(const std::string& path, const std::string& stored,
                                       const std::string& current) {
  std::istringstream a(stored), b(current);
  std::string la, lb;
  int line = 0;
  while (true) {
    ++line;
    const bool ga = static_cast<bool>(std::getline(a, la));
    const bool gb = static_cast<bool>(std::getline(b, lb));
    if (!ga && !gb) break;
    if (!ga) la = "<end of stored config>";
    if (!gb) lb = "<end of current config>";
    if (!ga || !gb || la != lb) {
      fail(path, "configuration mismatch at config line " + std::to_string(line) + ": stored '" +
                     la + "' vs current '" + lb + "'");
    }
  }
  fail(path, "configuration mismatch");
}

}  // namespace

void save_checkpoint(const std::string& path, Model& model, const Adam& optimizer,
                     const TrainState& state) {
  const auto& entries = model.params().entries();
  if (!state.best_params.empty() && state.best_params.size() != entries.size()) {
    fail(path, "best snapshot holds " + std::to_string(state.best_params.size()) +
                   " tensors but the model has " + std::to_string(entries.size()));
  }

  std::string buf;
  io::append_u16(buf, kVersion);
  io::append_u16(buf, static_cast<std::uint16_t>(model.variant()));
  io::append_u64(buf, model.seed());
  io::append_u64(buf, static_cast<std::uint64_t>(state.epoch));
  io::append_u64(buf, static_cast<std::uint64_t>(state.step));
  io::append_u16(buf, state.best_params.empty() ? 0 : 1);
  io::append_u64(buf, static_cast<std::uint64_t>(state.best_epoch < 0 ? 0 : state.best_epoch));
  io::append_f64(buf, state.best_val_f1);

  const std::string config_text = format_model_config(model.config());
  io::append_u64(buf, config_text.size());
  buf += config_text;

  io::append_u64(buf, entries.size());
  for (const auto& e : entries) {
    io::append_u64(buf, e.name.size());
    buf += e.name;
    io::append_u64(buf, e.tensor.shape().size());
    for (Index d : e.tensor.shape()) io::append_u64(buf, static_cast<std::uint64_t>(d));
    append_tensor_values(buf, e.tensor);
  }

  const auto& m = optimizer.first_moments();
  const auto& v = optimizer.second_moments();
  io::append_u64(buf, m.size());
  io::append_u64(buf, static_cast<std::uint64_t>(optimizer.step_count()));
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (double x : m[i]) io::append_f64(buf, x);
    for (double x : v[i]) io::append_f64(buf, x);
  }

  if (!state.best_params.empty()) {
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const Tensor& t = state.best_params[i];
      if (t.size() != entries[i].tensor.size()) {
        fail(path, "best snapshot tensor '" + entries[i].name + "' has the wrong size");
      }
      append_tensor_values(buf, t);
    }
  }

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(path, "cannot open for writing");
  os.write(kMagic, 4);
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  std::string crc;
  io::append_u32(crc, crc_of(buf));
  os.write(crc.data(), 4);
  if (!os) fail(path, "write failed");
}

TrainState load_checkpoint(const std::string& path, Model& model, Adam& optimizer) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(path, "cannot open");
  std::stringstream ss;
  ss << is.rdbuf();
  const std::string file = ss.str();
  if (file.size() < 8 || file.compare(0, 4, kMagic, 4) != 0) fail(path, "bad magic");
  const std::string payload = file.substr(4, file.size() - 8);
  {
    std::istringstream tail(file.substr(file.size() - 4));
    std::uint32_t stored_crc = 0;
    io::get_u32(tail, stored_crc);
    if (stored_crc != crc_of(payload)) fail(path, "checksum mismatch");
  }

  std::istringstream in(payload);
  std::uint16_t version = 0, variant_raw = 0, has_best = 0;
  std::uint64_t seed = 0, epoch = 0, step = 0, best_epoch = 0;
  double best_val_f1 = 0.0;
  if (!io::get_u16(in, version)) fail(path, "truncated header");
  if (version != kVersion) {
    fail(path, "unsupported version " + std::to_string(version));
  }
  if (!io::get_u16(in, variant_raw) || !io::get_u64(in, seed) || !io::get_u64(in, epoch) ||
      !io::get_u64(in, step) || !io::get_u16(in, has_best) || !io::get_u64(in, best_epoch) ||
      !io::get_f64(in, best_val_f1)) {
    fail(path, "truncated header");
  }
  if (variant_raw > static_cast<std::uint16_t>(AblationVariant::NoGlobalAttention)) {
    fail(path, "unknown ablation variant tag " + std::to_string(variant_raw));
  }
  const auto variant = static_cast<AblationVariant>(variant_raw);
  if (variant != model.variant()) {
    fail(path, "variant mismatch: stored " + variant_name(variant) + ", model " +
                   variant_name(model.variant()));
  }
  if (seed != model.seed()) {
    fail(path, "seed mismatch: stored " + std::to_string(seed) + ", model " +
                   std::to_string(model.seed()));
  }

  std::uint64_t config_len = 0;
  if (!io::get_u64(in, config_len)) fail(path, "truncated header");
  std::string stored_config(config_len, '\0');
  if (!io::read_exact(in, stored_config.data(), config_len)) fail(path, "truncated config text");
  const std::string current_config = format_model_config(model.config());
  if (stored_config != current_config) fail_config_mismatch(path, stored_config, current_config);

  const auto& entries = model.params().entries();
  std::uint64_t entry_count = 0;
  if (!io::get_u64(in, entry_count)) fail(path, "truncated parameter table");
  if (entry_count != entries.size()) {
    fail(path, "parameter count mismatch: stored " + std::to_string(entry_count) + ", model has " +
                   std::to_string(entries.size()));
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    std::uint64_t name_len = 0;
    if (!io::get_u64(in, name_len)) fail(path, "truncated parameter " + std::to_string(i));
    std::string name(name_len, '\0');
    if (!io::read_exact(in, name.data(), name_len)) {
      fail(path, "truncated parameter " + std::to_string(i));
    }
    if (name != entries[i].name) {
      fail(path, "parameter order mismatch at index " + std::to_string(i) + ": stored '" + name +
                     "', model '" + entries[i].name + "'");
    }
    std::uint64_t rank = 0;
    if (!io::get_u64(in, rank) || rank > 8) fail(path, "bad shape for parameter '" + name + "'");
    Shape shape(rank);
    for (std::uint64_t d = 0; d < rank; ++d) {
      std::uint64_t dim = 0;
      if (!io::get_u64(in, dim)) fail(path, "truncated shape for parameter '" + name + "'");
      shape[d] = static_cast<Index>(dim);
    }
    if (shape != entries[i].tensor.shape()) {
      fail(path, "shape mismatch for parameter '" + name + "': stored " + shape_to_string(shape) +
                     ", model " + shape_to_string(entries[i].tensor.shape()));
    }
    Tensor target = entries[i].tensor;  // handle copy, shared storage
    for (double& slot : target.values()) {
      if (!io::get_f64(in, slot)) fail(path, "truncated values for parameter '" + name + "'");
    }
    target.zero_grad();
  }

  std::uint64_t moment_count = 0, adam_step = 0;
  if (!io::get_u64(in, moment_count) || !io::get_u64(in, adam_step)) {
    fail(path, "truncated optimizer state");
  }
  auto& m = optimizer.first_moments();
  auto& v = optimizer.second_moments();
  if (moment_count != m.size()) {
    fail(path, "optimizer moment count mismatch: stored " + std::to_string(moment_count) +
                   ", optimizer has " + std::to_string(m.size()));
  }
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (double& slot : m[i]) {
      if (!io::get_f64(in, slot)) fail(path, "truncated optimizer state");
    }
    for (double& slot : v[i]) {
      if (!io::get_f64(in, slot)) fail(path, "truncated optimizer state");
    }
  }
  optimizer.set_step_count(static_cast<Index>(adam_step));

  TrainState state;
  state.epoch = static_cast<Index>(epoch);
  state.step = static_cast<Index>(step);
  state.best_val_f1 = best_val_f1;
  state.best_epoch = has_best ? static_cast<Index>(best_epoch) : -1;
  if (has_best) {
    state.best_params.reserve(entries.size());
    for (const auto& e : entries) {
      std::vector<double> values(static_cast<std::size_t>(e.tensor.size()));
      for (double& slot : values) {
        if (!io::get_f64(in, slot)) fail(path, "truncated best snapshot");
      }
      state.best_params.push_back(Tensor::from(e.tensor.shape(), std::move(values)));
    }
  }

  char extra = 0;
  if (in.read(&extra, 1).gcount() != 0) fail(path, "trailing bytes after best snapshot");
  return state;
}

CheckpointInfo read_checkpoint_info(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(path, "cannot open");
  std::stringstream ss;
  ss << is.rdbuf();
  const std::string file = ss.str();
  if (file.size() < 8 || file.compare(0, 4, kMagic, 4) != 0) fail(path, "bad magic");
  const std::string payload = file.substr(4, file.size() - 8);
  {
    std::istringstream tail(file.substr(file.size() - 4));
    std::uint32_t stored_crc = 0;
    io::get_u32(tail, stored_crc);
    if (stored_crc != crc_of(payload)) fail(path, "checksum mismatch");
  }
  std::istringstream in(payload);
  std::uint16_t version = 0, variant_raw = 0, has_best = 0;
  std::uint64_t seed = 0, epoch = 0, step = 0, best_epoch = 0, config_len = 0;
  double best_val_f1 = 0.0;
  if (!io::get_u16(in, version)) fail(path, "truncated header");
  if (version != kVersion) fail(path, "unsupported version " + std::to_string(version));
  if (!io::get_u16(in, variant_raw) || !io::get_u64(in, seed) || !io::get_u64(in, epoch) ||
      !io::get_u64(in, step) || !io::get_u16(in, has_best) || !io::get_u64(in, best_epoch) ||
      !io::get_f64(in, best_val_f1) || !io::get_u64(in, config_len)) {
    fail(path, "truncated header");
  }
  if (variant_raw > static_cast<std::uint16_t>(AblationVariant::NoGlobalAttention)) {
    fail(path, "unknown ablation variant tag " + std::to_string(variant_raw));
  }
  CheckpointInfo info;
  info.variant = static_cast<AblationVariant>(variant_raw);
  info.seed = seed;
  info.epoch = static_cast<Index>(epoch);
  info.step = static_cast<Index>(step);
  info.has_best = has_best != 0;
  info.best_epoch = has_best ? static_cast<Index>(best_epoch) : -1;
  info.best_val_f1 = best_val_f1;
  info.config_text.resize(config_len);
  if (!io::read_exact(in, info.config_text.data(), config_len)) {
    fail(path, "truncated config text");
  }
  return info;
}

void restore_snapshot(Model& model, const std::vector<Tensor>& snapshot) {
  const auto& entries = model.params().entries();
  if (snapshot.size() != entries.size()) {
    throw std::invalid_argument("checkpoint: snapshot holds " +
                                std::to_string(snapshot.size()) + " tensors but the model has " +
                                std::to_string(entries.size()));
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (snapshot[i].size() != entries[i].tensor.size()) {
      throw std::invalid_argument("checkpoint: snapshot tensor '" + entries[i].name +
                                  "' has the wrong size");
    }
    Tensor target = entries[i].tensor;  // handle copy, shared storage
    target.values() = snapshot[i].values();
    target.zero_grad();
  }
}

}  // namespace csf
