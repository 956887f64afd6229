#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "mricolor/losses.hpp"
#include "mricolor/nets.hpp"
#include "mricolor/phantom.hpp"

namespace mricolor::config {

/// The five mutually exclusive ablation switches; all off is the full model.
struct AblationFlags {
  bool disable_cycle_rec = false;          // A1: drop the L1 cycle term
  bool disable_seg_loss = false;           // A2: drop segmentation supervision
  bool disable_seg_and_pseudo = false;     // A3: A2 plus no pseudo-Cryo decoder
  bool seg_on_reconstructed_cryo = false;  // A4: no pseudo decoder; segment the
                                           //     cycle-reconstructed Cryosection
  bool disable_se_blocks = false;          // A5: plain convs on skip paths

  /// Throws ConfigError when more than one flag is set.
  void validate() const;
  /// "full" or "A1".."A5".
  std::string name() const;
  static AblationFlags from_name(const std::string& name);
};

/// What the ablation means for model construction and the loss set.
struct DerivedAblation {
  bool use_rec = true;
  bool use_seg = true;
  bool seg_on_rec = false;
  bool dual_decoder = true;
  bool se_blocks = true;
  bool needs_segmenter = true;
};
DerivedAblation derive(const AblationFlags& flags);

struct ModelConfig {
  int64_t base_channels = 64;
  int64_t depth = 3;
  int64_t num_residual_blocks = 4;
  int64_t se_reduction = 8;
  bool use_multiscale = true;
  int64_t disc_base_channels = 64;
  int64_t seg_depth = 4;
  int64_t seg_base_channels = 32;
};

struct TrainConfig {
  double lr_generators = 1e-3;
  double lr_discriminators = 1e-4;
  double lr_segmenter_pretrain = 1e-6;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int64_t epochs = 150;
  int64_t batch_size = 28;
  int64_t checkpoint_every = 100;  // steps
  int64_t seg_epochs = 200;
  double seg_target_accuracy = 0.9;
  losses::LossWeights weights;
  uint64_t seed = 1;
  std::string device = "cpu";
  // Exploration switches, both off by default: let the segmenter keep
  // learning (at the pretrain rate) during cyclic training, and show the
  // pseudo Cryosection to D_c as an extra fake.
  bool unfreeze_segmenter = false;
  bool cprime_to_disc = false;
};

struct RunConfig {
  data::PhantomSpec phantom;  // includes image_size, num_classes, data seed
  int64_t n_train = 200;
  int64_t n_test = 40;
  ModelConfig model;
  TrainConfig train;
  AblationFlags ablation;

  /// Throws ConfigError on any invalid field combination.
  void validate() const;

  nets::GeneratorConfig forward_generator_config() const;
  nets::GeneratorConfig reverse_generator_config() const;
  nets::DiscriminatorConfig discriminator_config(int64_t in_channels) const;
  nets::UNetConfig segmenter_config() const;
};

RunConfig default_config();

/// Parse from JSON text; unknown keys anywhere are rejected with the full
/// dotted path in the error.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config_file(const std::filesystem::path& path);

/// Applies one "dotted.key=value" override onto the config's JSON form and
/// re-parses, so type errors and unknown keys surface identically to file
/// input.
std::string apply_override(const std::string& json_text, const std::string& assignment);

/// Canonical JSON of the full resolved config.
std::string config_json(const RunConfig& cfg);

/// Digest over the architecture-defining subset (image size, classes, model
/// shape, ablation). Training-schedule fields are excluded so a resume may
/// extend epochs; any change that alters parameter shapes or the module tree
/// changes the digest.
uint64_t arch_fingerprint(const RunConfig& cfg);

/// Digest over the segmenter's architecture only, independent of the ablation
/// and generator shape, so one pretrained segmenter serves a whole ablation
/// suite.
uint64_t seg_fingerprint(const RunConfig& cfg);

}  // namespace mricolor::config
