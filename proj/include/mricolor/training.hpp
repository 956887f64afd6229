#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mricolor/checkpoint.hpp"
#include "mricolor/config.hpp"
#include "mricolor/losses.hpp"
#include "mricolor/metrics.hpp"
#include "mricolor/nets.hpp"
#include "mricolor/phantom.hpp"

namespace mricolor::training {

/// Adam with explicit first/second-moment tensors so optimizer state lands in
/// checkpoints byte for byte and resumed updates are exactly the ones the
/// uninterrupted run would have made.
struct Adam {
  double lr = 1e-3;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<torch::Tensor> params;
  std::vector<torch::Tensor> m, v;
  int64_t t = 0;

  Adam() = default;
  Adam(std::vector<torch::Tensor> parameters, double lr, double beta1, double beta2);
  void zero_grad();
  /// Classic bias-corrected update; parameters without a gradient are skipped.
  void step();

  /// Moment tensors keyed m/00000, v/00000, ... in parameter order.
  std::map<std::string, torch::Tensor> state() const;
  void load_state(const std::map<std::string, torch::Tensor>& state, int64_t step_count,
                  const std::string& who);
};

struct Models {
  nets::TranslationGenerator gen_forward{nullptr};
  nets::TranslationGenerator gen_reverse{nullptr};
  nets::Discriminator d_c{nullptr};
  nets::Discriminator d_m{nullptr};
  nets::UNetSegmenter segmenter{nullptr};  // empty handle when the ablation drops it
  config::DerivedAblation derived;
};

/// All networks for the config's ablation, each with its own deterministic
/// init seed. The segmenter is built (untrained, frozen unless configured
/// otherwise) only when a segmentation loss is active.
Models build_models(const config::RunConfig& cfg);

struct TrainState {
  Models models;
  Adam opt_gen;                 // both generators
  Adam opt_disc;                // both discriminators
  std::optional<Adam> opt_seg;  // only when train.unfreeze_segmenter
  int64_t epoch = 0;            // epoch the last step belonged to
  int64_t step = 0;             // completed optimizer steps
};

/// Fresh models and optimizers for the config.
TrainState make_state(const config::RunConfig& cfg);

checkpoint::Checkpoint to_checkpoint(const TrainState& state, const config::RunConfig& cfg);
/// Rebuilds models from cfg and restores every tensor; refuses on an
/// architecture fingerprint mismatch.
TrainState from_checkpoint(const checkpoint::Checkpoint& ck, const config::RunConfig& cfg);

/// Stacked (m, c, s) tensors plus source indices for error reports.
struct Batch {
  torch::Tensor m, c, s;
  std::vector<int64_t> indices;
};

Batch load_batch(const data::DatasetManifest& manifest, data::Split split,
                 const std::vector<int64_t>& indices);

/// Seeded Fisher-Yates permutation of 0..n-1; the stream depends only on
/// (seed, epoch), so a resumed run replays the exact epoch order without any
/// serialized RNG state.
std::vector<int64_t> epoch_order(uint64_t seed, int64_t epoch, int64_t n);

/// One alternating update: discriminators first on the adversarial objective,
/// then both generators (and the segmenter, when unfrozen) on the full
/// objective recomputed against the just-updated discriminators. Respects the
/// config's ablation; increments state.step.
losses::LossBundle train_step(TrainState& state, const Batch& batch,
                              const config::RunConfig& cfg);

struct SegPretrainOutcome {
  std::map<std::string, torch::Tensor> weights;  // best seen, by accuracy
  double accuracy = 0.0;
  int64_t epochs_run = 0;
  bool reached_target = false;
};

/// Trains the segmenter on the train split's (Cryosection, segmentation)
/// pairs until the pixel-accuracy target or the epoch budget; on a missed
/// target the best weights are kept with a warning. Writes segmenter.ckpt and
/// seg_log.jsonl under out_dir; an existing checkpoint there resumes.
SegPretrainOutcome pretrain_segmenter(const data::DatasetManifest& manifest,
                                      const config::RunConfig& cfg,
                                      const std::filesystem::path& out_dir);

struct TrainOutcome {
  std::filesystem::path final_checkpoint;
  std::filesystem::path loss_log;
  int64_t steps = 0;
  int64_t epochs = 0;
};

/// Full cyclic run: loads (or pretrains) the frozen segmenter as the ablation
/// requires, resumes from out_dir/latest.ckpt when present, checkpoints every
/// cfg.train.checkpoint_every steps and appends line-delimited loss records.
TrainOutcome train(const data::DatasetManifest& manifest, const config::RunConfig& cfg,
                   const std::filesystem::path& out_dir);

/// Colorizes an MRI batch (or a single (1,h,w) image) with the checkpointed
/// forward generator, rebuilt from the checkpoint's embedded config. Sides
/// must be at least 16 and divisible by 4; only the primary output returns.
torch::Tensor infer(const std::filesystem::path& checkpoint_path, const torch::Tensor& m);

struct AblationRow {
  std::string name;
  bool ok = false;
  std::string error;
  metrics::MetricReport report;
};

struct AblationOutcome {
  std::vector<AblationRow> rows;
  std::string table;
  std::filesystem::path table_path;
  std::filesystem::path json_path;
};

/// Trains and evaluates full plus A1..A5 under a shared seed, dataset and
/// pretrained segmenter; a failed row is recorded in its row, not fatal.
AblationOutcome run_ablation_suite(const data::DatasetManifest& manifest,
                                   const config::RunConfig& base_cfg,
                                   const std::filesystem::path& out_dir);

}  // namespace mricolor::training
