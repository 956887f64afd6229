#include "mricolor/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <vector>

#include "mricolor/binio.hpp"
#include "mricolor/errors.hpp"

namespace mricolor::checkpoint {

namespace {

constexpr char kMagic[8] = {'M', 'R', 'C', 'K', 'P', 'T', '0', '1'};
constexpr uint32_t kFormat = 1;

void write_string(std::ostream& out, const std::string& s) {
  binio::write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in, const std::string& what) {
  uint64_t n = 0;
  if (!binio::read_u64(in, n) || n > (1ull << 32)) {
    throw CheckpointError("checkpoint: bad length for " + what);
  }
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), static_cast<std::streamsize>(n))) {
    throw CheckpointError("checkpoint: truncated reading " + what);
  }
  return s;
}

void write_tensor(std::ostream& out, const torch::Tensor& t) {
  auto v = t.detach().to(torch::kCPU, torch::kFloat32).contiguous();
  binio::write_u32(out, static_cast<uint32_t>(v.dim()));
  for (int64_t d = 0; d < v.dim(); ++d) binio::write_i64(out, v.size(d));
  binio::write_u64(out, static_cast<uint64_t>(v.numel()));
  binio::write_f32_array(out, v.data_ptr<float>(), static_cast<size_t>(v.numel()));
}

torch::Tensor read_tensor(std::istream& in, const std::string& name) {
  uint32_t ndim = 0;
  if (!binio::read_u32(in, ndim) || ndim > 8) {
    throw CheckpointError("checkpoint: bad rank for tensor " + name);
  }
  std::vector<int64_t> sizes(ndim);
  int64_t numel_from_sizes = 1;
  for (uint32_t d = 0; d < ndim; ++d) {
    if (!binio::read_i64(in, sizes[d]) || sizes[d] < 0) {
      throw CheckpointError("checkpoint: bad size for tensor " + name);
    }
    numel_from_sizes *= sizes[d];
  }
  uint64_t numel = 0;
  if (!binio::read_u64(in, numel) || static_cast<int64_t>(numel) != numel_from_sizes) {
    throw CheckpointError("checkpoint: element count mismatch for tensor " + name);
  }
  auto t = torch::empty(sizes, torch::kFloat32);
  if (numel > 0 && !binio::read_f32_array(in, t.data_ptr<float>(), numel)) {
    throw CheckpointError("checkpoint: truncated reading tensor " + name);
  }
  return t;
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("checkpoint: cannot open " + tmp.string() + " for writing");
    out.write(kMagic, sizeof(kMagic));
    binio::write_u32(out, kFormat);
    binio::write_u64(out, ck.fingerprint);
    binio::write_i64(out, ck.epoch);
    binio::write_i64(out, ck.step);
    write_string(out, ck.config_json);
    binio::write_u32(out, static_cast<uint32_t>(ck.counters.size()));
    for (const auto& [name, value] : ck.counters) {
      write_string(out, name);
      binio::write_i64(out, value);
    }
    binio::write_u32(out, static_cast<uint32_t>(ck.sections.size()));
    for (const auto& [section, tensors] : ck.sections) {
      write_string(out, section);
      binio::write_u32(out, static_cast<uint32_t>(tensors.size()));
      for (const auto& [name, t] : tensors) {
        write_string(out, name);
        write_tensor(out, t);
      }
    }
    out.flush();
    if (!out) throw CheckpointError("checkpoint: write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open " + path.string());
  char magic[8] = {};
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("checkpoint: " + path.string() + " is not a checkpoint file");
  }
  uint32_t format = 0;
  if (!binio::read_u32(in, format) || format != kFormat) {
    throw CheckpointError("checkpoint: unsupported format revision " + std::to_string(format) +
                          " in " + path.string());
  }
  Checkpoint ck;
  if (!binio::read_u64(in, ck.fingerprint) || !binio::read_i64(in, ck.epoch) ||
      !binio::read_i64(in, ck.step)) {
    throw CheckpointError("checkpoint: truncated header in " + path.string());
  }
  ck.config_json = read_string(in, "config");
  uint32_t n_counters = 0;
  if (!binio::read_u32(in, n_counters)) {
    throw CheckpointError("checkpoint: truncated counters in " + path.string());
  }
  for (uint32_t i = 0; i < n_counters; ++i) {
    auto name = read_string(in, "counter name");
    int64_t value = 0;
    if (!binio::read_i64(in, value)) {
      throw CheckpointError("checkpoint: truncated counter " + name);
    }
    ck.counters[name] = value;
  }
  uint32_t n_sections = 0;
  if (!binio::read_u32(in, n_sections)) {
    throw CheckpointError("checkpoint: truncated sections in " + path.string());
  }
  for (uint32_t i = 0; i < n_sections; ++i) {
    auto section = read_string(in, "section name");
    uint32_t n_tensors = 0;
    if (!binio::read_u32(in, n_tensors)) {
      throw CheckpointError("checkpoint: truncated section " + section);
    }
    auto& tensors = ck.sections[section];
    for (uint32_t j = 0; j < n_tensors; ++j) {
      auto name = read_string(in, "tensor name");
      tensors[name] = read_tensor(in, section + "." + name);
    }
  }
  // A stray trailing byte means the file was not produced by this writer.
  if (in.peek() != std::ifstream::traits_type::eof()) {
    throw CheckpointError("checkpoint: trailing data in " + path.string());
  }
  return ck;
}

void check_fingerprint(const Checkpoint& ck, uint64_t expected) {
  if (ck.fingerprint == expected) return;
  char got[32], want[32];
  std::snprintf(got, sizeof(got), "%016llx", static_cast<unsigned long long>(ck.fingerprint));
  std::snprintf(want, sizeof(want), "%016llx", static_cast<unsigned long long>(expected));
  throw CheckpointError(std::string("checkpoint: architecture fingerprint mismatch: file has ") +
                        got + " but the configuration derives " + want +
                        "; refusing to load weights into a different architecture");
}

std::map<std::string, torch::Tensor> state_dict(const torch::nn::Module& module) {
  std::map<std::string, torch::Tensor> out;
  for (const auto& p : module.named_parameters(/*recurse=*/true)) {
    out[p.key()] = p.value().detach().to(torch::kCPU, torch::kFloat32).clone();
  }
  for (const auto& b : module.named_buffers(/*recurse=*/true)) {
    out[b.key()] = b.value().detach().to(torch::kCPU, torch::kFloat32).clone();
  }
  return out;
}

void load_state(torch::nn::Module& module, const std::map<std::string, torch::Tensor>& dict,
                const std::string& who) {
  torch::NoGradGuard no_grad;
  std::set<std::string> used;
  auto restore = [&](const std::string& key, torch::Tensor dst) {
    auto it = dict.find(key);
    if (it == dict.end()) {
      throw CheckpointError("checkpoint: " + who + " is missing tensor " + key);
    }
    if (it->second.sizes() != dst.sizes()) {
      throw CheckpointError("checkpoint: " + who + " tensor " + key + " has shape " +
                            c10::str(it->second.sizes()) + " but the module expects " +
                            c10::str(dst.sizes()));
    }
    dst.copy_(it->second);
    used.insert(key);
  };
  for (const auto& p : module.named_parameters(/*recurse=*/true)) restore(p.key(), p.value());
  for (const auto& b : module.named_buffers(/*recurse=*/true)) restore(b.key(), b.value());
  for (const auto& [key, t] : dict) {
    if (!used.count(key)) {
      throw CheckpointError("checkpoint: " + who + " holds unexpected tensor " + key);
    }
  }
}

}  // namespace mricolor::checkpoint
