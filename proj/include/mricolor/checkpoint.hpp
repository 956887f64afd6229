#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace mricolor::checkpoint {

/// Everything a run needs to resume: module and optimizer tensors grouped
/// into named sections, scalar counters, and the resolved config that built
/// the models. Ordered maps keep the on-disk encoding canonical, so saving an
/// unmodified load reproduces the file byte for byte.
struct Checkpoint {
  uint64_t fingerprint = 0;  // architecture digest; load refuses a mismatch
  int64_t epoch = 0;
  int64_t step = 0;  // global optimizer-step count
  std::string config_json;
  std::map<std::string, std::map<std::string, torch::Tensor>> sections;
  std::map<std::string, int64_t> counters;
};

/// Writes to a temporary sibling and renames, so a crash never leaves a
/// truncated file at the target path.
void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);

/// Throws CheckpointError on a missing file, wrong magic, unsupported format
/// revision, or truncation.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Refuses (CheckpointError) when the stored fingerprint differs from the one
/// the current configuration derives; the message shows both digests.
void check_fingerprint(const Checkpoint& ck, uint64_t expected);

/// Detached float32 CPU clones of all parameters and buffers, keyed by
/// qualified name.
std::map<std::string, torch::Tensor> state_dict(const torch::nn::Module& module);

/// Strict restore: every module tensor must be present with a matching shape
/// and no stored key may be left over.
void load_state(torch::nn::Module& module, const std::map<std::string, torch::Tensor>& dict,
                const std::string& who);

}  // namespace mricolor::checkpoint
