#pragma once

#include <torch/torch.h>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace mricolor::losses {

/// Stabilizers and patch set of the structural similarity terms. Defaults are
/// the standard constants for unit dynamic range; c3 = c2/2 lets the
/// luminance/contrast/structure product collapse to a sqrt-free form with
/// smooth gradients at zero variance.
struct SSIMConstants {
  double c1 = 1e-4;
  double c2 = 9e-4;
  double c3 = 4.5e-4;
  std::vector<int64_t> patch_sizes = {3, 5, 7, 9};
};

/// Per-pixel product of luminance, contrast and structure similarity over a
/// patch x patch box window with symmetric padding. Inputs are rank-4
/// single-channel batches of equal shape; output has the same shape.
torch::Tensor local_ssim_map(const torch::Tensor& a, const torch::Tensor& b, int64_t patch,
                             const SSIMConstants& k = {});

/// Luminance and contrast-structure maps of the fused form, shared by the
/// training loss, the SSIM metric and MS-SSIM.
std::pair<torch::Tensor, torch::Tensor> ssim_l_cs_maps(const torch::Tensor& a,
                                                       const torch::Tensor& b, int64_t patch,
                                                       double c1, double c2);

/// Multi-patch similarity loss: sum over patch sizes of (1 - mean local SSIM).
/// Three-channel inputs are reduced to Rec.601 luminance first. Zero iff the
/// images are identical; at most patch_sizes.size() * 2.
torch::Tensor ssim_pair_loss(const torch::Tensor& a, const torch::Tensor& b,
                             const SSIMConstants& k = {});

struct SsimTerms {
  torch::Tensor m_chat;     // loss between input MRI and colorized output
  torch::Tensor c_mhat;     // loss between Cryosection and reverse output
  torch::Tensor c_cprime;   // per-RGB-channel loss against the pseudo Cryosection
  torch::Tensor total;
  bool has_cprime = false;
};

/// The three pairwise terms and their sum. Pass an undefined c_prime when the
/// pseudo-Cryosection decoder is disabled; its term is then exactly zero and
/// flagged absent.
SsimTerms total_ssim_loss(const torch::Tensor& m, const torch::Tensor& c,
                          const torch::Tensor& c_hat, const torch::Tensor& m_hat,
                          const torch::Tensor& c_prime, const SSIMConstants& k = {});

using ScoreFn = std::function<torch::Tensor(const torch::Tensor&)>;

struct AdvLosses {
  torch::Tensor d;  // discriminator objective over both domains
  torch::Tensor g;  // non-saturating generator term
};

/// Cross-domain adversarial objectives. Scores are clamped to
/// [eps, 1 - eps], eps = 1e-7; fakes are detached inside the discriminator
/// term so no gradient reaches the generators through it.
AdvLosses adversarial_losses(const torch::Tensor& real_c, const torch::Tensor& fake_c,
                             const torch::Tensor& real_m, const torch::Tensor& fake_m,
                             const ScoreFn& d_c, const ScoreFn& d_m);

/// The non-saturating generator term alone, scored by the discriminators as
/// they are now. The training step calls this after the in-place
/// discriminator update, which invalidates the graph of the term returned by
/// adversarial_losses.
torch::Tensor generator_adversarial_term(const torch::Tensor& fake_c, const torch::Tensor& fake_m,
                                         const ScoreFn& d_c, const ScoreFn& d_m);

/// Mean absolute error of both cycle reconstructions, summed.
torch::Tensor reconstruction_loss(const torch::Tensor& m, const torch::Tensor& m_rec,
                                  const torch::Tensor& c, const torch::Tensor& c_rec);

/// Cross entropy between a one-hot map and a per-pixel probability map,
/// normalized by the pixel count only and averaged over the batch.
/// Probabilities are clamped at 1e-12 before the log.
torch::Tensor segmentation_ce(const torch::Tensor& s, const torch::Tensor& s_hat);

/// segmentation_ce of the frozen segmenter's prediction on the pseudo
/// Cryosection; gradients flow into c_prime only.
torch::Tensor segmentation_loss(const torch::Tensor& s, const torch::Tensor& c_prime,
                                const ScoreFn& segmenter);

struct LossWeights {
  double cyc = 1.0;
  double ssim = 1.0;
  double seg = 1.0;
};

struct LossBundle {
  torch::Tensor adv_g, adv_d, rec, cyc;
  torch::Tensor ssim_m_chat, ssim_c_mhat, ssim_c_cprime, ssim_total;
  torch::Tensor seg, total;
  bool has_rec = true;
  bool has_seg = true;
  bool has_cprime = true;
  LossWeights weights;
};

/// Combines the generator-side objective: total = w.cyc * (adv_g + rec) +
/// w.ssim * ssim.total + w.seg * seg, with absent terms contributing zero.
/// The discriminator objective rides along untouched. Throws TrainingError
/// with a full value dump if any component is not finite.
LossBundle total_objective(const torch::Tensor& adv_g, const torch::Tensor& adv_d,
                           const std::optional<torch::Tensor>& rec, const SsimTerms& ssim,
                           const std::optional<torch::Tensor>& seg, const LossWeights& weights);

/// One line-delimited log record of the realized scalars.
std::string bundle_log_line(const LossBundle& bundle, int64_t step, int64_t epoch);

}  // namespace mricolor::losses
