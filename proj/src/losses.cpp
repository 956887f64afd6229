#include "mricolor/losses.hpp"

#include <cmath>
#include <iostream>

#include "json.hpp"
#include "mricolor/errors.hpp"
#include "mricolor/image.hpp"

namespace mricolor::losses {

namespace {

constexpr double kScoreEps = 1e-7;
constexpr double kProbEps = 1e-12;

void check_pair(const torch::Tensor& a, const torch::Tensor& b, const std::string& who) {
  if (a.dim() != 4 || b.dim() != 4) {
    throw ShapeError(who + ": expected rank-4 inputs");
  }
  if (a.sizes() != b.sizes()) {
    throw ShapeError(who + ": input shapes differ");
  }
}

/// Symmetric (edge-repeating) padding by p on both spatial axes.
torch::Tensor symmetric_pad(const torch::Tensor& x, int64_t p) {
  using torch::indexing::Slice;
  if (p <= 0) return x;
  if (p > x.size(2) || p > x.size(3)) {
    throw ShapeError("symmetric_pad: pad " + std::to_string(p) + " exceeds spatial size");
  }
  auto top = x.index({Slice(), Slice(), Slice(0, p)}).flip(2);
  auto bottom = x.index({Slice(), Slice(), Slice(x.size(2) - p, x.size(2))}).flip(2);
  auto y = torch::cat({top, x, bottom}, 2);
  auto left = y.index({Slice(), Slice(), Slice(), Slice(0, p)}).flip(3);
  auto right = y.index({Slice(), Slice(), Slice(), Slice(y.size(3) - p, y.size(3))}).flip(3);
  return torch::cat({left, y, right}, 3);
}

/// Box-filtered patch mean at every pixel, same spatial size as the input.
torch::Tensor box_mean(const torch::Tensor& x, int64_t patch) {
  auto kernel = torch::full({1, 1, patch, patch},
                            1.0 / static_cast<double>(patch * patch), x.options());
  return torch::conv2d(symmetric_pad(x, patch / 2), kernel);
}

}  // namespace

std::pair<torch::Tensor, torch::Tensor> ssim_l_cs_maps(const torch::Tensor& a,
                                                       const torch::Tensor& b, int64_t patch,
                                                       double c1, double c2) {
  check_pair(a, b, "ssim maps");
  if (a.size(1) != 1) throw ShapeError("ssim maps: expected single-channel inputs");
  if (patch < 3 || patch % 2 == 0) {
    throw ShapeError("ssim maps: patch size must be odd and >= 3, got " + std::to_string(patch));
  }
  auto mu_a = box_mean(a, patch);
  auto mu_b = box_mean(b, patch);
  auto var_a = box_mean(a * a, patch) - mu_a * mu_a;
  auto var_b = box_mean(b * b, patch) - mu_b * mu_b;
  auto cov = box_mean(a * b, patch) - mu_a * mu_b;
  auto l = (2.0 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1);
  auto cs = (2.0 * cov + c2) / (var_a + var_b + c2);
  return {l, cs};
}

torch::Tensor local_ssim_map(const torch::Tensor& a, const torch::Tensor& b, int64_t patch,
                             const SSIMConstants& k) {
  if (std::abs(k.c3 - k.c2 / 2.0) <= 1e-15 * k.c2) {
    // With c3 = c2/2 the contrast * structure product collapses to the fused
    // covariance form, which stays differentiable at zero variance.
    auto [l, cs] = ssim_l_cs_maps(a, b, patch, k.c1, k.c2);
    return l * cs;
  }
  check_pair(a, b, "local_ssim_map");
  if (a.size(1) != 1) throw ShapeError("local_ssim_map: expected single-channel inputs");
  if (patch < 3 || patch % 2 == 0) {
    throw ShapeError("local_ssim_map: patch size must be odd and >= 3");
  }
  auto mu_a = box_mean(a, patch);
  auto mu_b = box_mean(b, patch);
  auto var_a = (box_mean(a * a, patch) - mu_a * mu_a).clamp_min(0.0);
  auto var_b = (box_mean(b * b, patch) - mu_b * mu_b).clamp_min(0.0);
  auto cov = box_mean(a * b, patch) - mu_a * mu_b;
  auto sd_a = var_a.sqrt();
  auto sd_b = var_b.sqrt();
  auto l = (2.0 * mu_a * mu_b + k.c1) / (mu_a * mu_a + mu_b * mu_b + k.c1);
  auto con = (2.0 * sd_a * sd_b + k.c2) / (var_a + var_b + k.c2);
  auto str = (cov + k.c3) / (sd_a * sd_b + k.c3);
  return l * con * str;
}

torch::Tensor ssim_pair_loss(const torch::Tensor& a, const torch::Tensor& b,
                             const SSIMConstants& k) {
  if (a.dim() != 4 || b.dim() != 4) throw ShapeError("ssim_pair_loss: expected rank-4 inputs");
  torch::Tensor la = a.size(1) == 3 ? luminance(a) : a;
  torch::Tensor lb = b.size(1) == 3 ? luminance(b) : b;
  check_pair(la, lb, "ssim_pair_loss");
  torch::Tensor loss = torch::zeros({}, la.options());
  for (int64_t patch : k.patch_sizes) {
    loss = loss + (1.0 - local_ssim_map(la, lb, patch, k).mean());
  }
  return loss;
}

SsimTerms total_ssim_loss(const torch::Tensor& m, const torch::Tensor& c,
                          const torch::Tensor& c_hat, const torch::Tensor& m_hat,
                          const torch::Tensor& c_prime, const SSIMConstants& k) {
  using torch::indexing::Slice;
  SsimTerms out;
  out.m_chat = ssim_pair_loss(m, c_hat, k);
  out.c_mhat = ssim_pair_loss(c, m_hat, k);
  out.has_cprime = c_prime.defined();
  if (out.has_cprime) {
    torch::Tensor sum = torch::zeros({}, c.options());
    for (int64_t ch = 0; ch < 3; ++ch) {
      sum = sum + ssim_pair_loss(c.index({Slice(), Slice(ch, ch + 1)}),
                                 c_prime.index({Slice(), Slice(ch, ch + 1)}), k);
    }
    out.c_cprime = sum / 3.0;
  } else {
    out.c_cprime = torch::zeros({}, c.options());
  }
  out.total = out.m_chat + out.c_mhat + out.c_cprime;
  return out;
}

AdvLosses adversarial_losses(const torch::Tensor& real_c, const torch::Tensor& fake_c,
                             const torch::Tensor& real_m, const torch::Tensor& fake_m,
                             const ScoreFn& d_c, const ScoreFn& d_m) {
  auto clamp = [](torch::Tensor s) { return s.clamp(kScoreEps, 1.0 - kScoreEps); };
  auto dc_real = clamp(d_c(real_c));
  auto dc_fake = clamp(d_c(fake_c.detach()));
  auto dm_real = clamp(d_m(real_m));
  auto dm_fake = clamp(d_m(fake_m.detach()));
  AdvLosses out;
  out.d = -(dc_real.log().mean() + (1.0 - dc_fake).log().mean() + dm_real.log().mean() +
            (1.0 - dm_fake).log().mean());
  out.g = generator_adversarial_term(fake_c, fake_m, d_c, d_m);
  return out;
}

torch::Tensor generator_adversarial_term(const torch::Tensor& fake_c, const torch::Tensor& fake_m,
                                         const ScoreFn& d_c, const ScoreFn& d_m) {
  auto clamp = [](torch::Tensor s) { return s.clamp(kScoreEps, 1.0 - kScoreEps); };
  return -(clamp(d_c(fake_c)).log().mean() + clamp(d_m(fake_m)).log().mean());
}

torch::Tensor reconstruction_loss(const torch::Tensor& m, const torch::Tensor& m_rec,
                                  const torch::Tensor& c, const torch::Tensor& c_rec) {
  check_pair(m, m_rec, "reconstruction_loss (m)");
  check_pair(c, c_rec, "reconstruction_loss (c)");
  return (m_rec - m).abs().mean() + (c_rec - c).abs().mean();
}

torch::Tensor segmentation_ce(const torch::Tensor& s, const torch::Tensor& s_hat) {
  check_pair(s, s_hat, "segmentation_ce");
  {
    torch::NoGradGuard no_grad;
    int64_t clamped = (s.gt(0.5) & s_hat.le(0.0)).sum().item<int64_t>();
    if (clamped > 0) {
      std::cerr << "segmentation_ce: clamped " << clamped
                << " zero probabilities on true classes\n";
    }
  }
  double wh = static_cast<double>(s.size(2) * s.size(3));
  auto per_item = -(s * s_hat.clamp_min(kProbEps).log()).sum({1, 2, 3}) / wh;
  return per_item.mean();
}

torch::Tensor segmentation_loss(const torch::Tensor& s, const torch::Tensor& c_prime,
                                const ScoreFn& segmenter) {
  auto s_hat = segmenter(c_prime);
  if (s_hat.size(1) != s.size(1)) {
    throw ConfigError("segmentation_loss: segmenter produces " + std::to_string(s_hat.size(1)) +
                      " classes but targets have " + std::to_string(s.size(1)));
  }
  return segmentation_ce(s, s_hat);
}

LossBundle total_objective(const torch::Tensor& adv_g, const torch::Tensor& adv_d,
                           const std::optional<torch::Tensor>& rec, const SsimTerms& ssim,
                           const std::optional<torch::Tensor>& seg, const LossWeights& weights) {
  LossBundle b;
  b.weights = weights;
  b.adv_g = adv_g;
  b.adv_d = adv_d;
  b.has_rec = rec.has_value();
  b.rec = b.has_rec ? *rec : torch::zeros({}, adv_g.options());
  b.cyc = b.adv_g + b.rec;
  b.ssim_m_chat = ssim.m_chat;
  b.ssim_c_mhat = ssim.c_mhat;
  b.ssim_c_cprime = ssim.c_cprime;
  b.ssim_total = ssim.total;
  b.has_cprime = ssim.has_cprime;
  b.has_seg = seg.has_value();
  b.seg = b.has_seg ? *seg : torch::zeros({}, adv_g.options());
  b.total = weights.cyc * b.cyc + weights.ssim * b.ssim_total + weights.seg * b.seg;

  for (const auto* t : {&b.adv_g, &b.adv_d, &b.rec, &b.ssim_total, &b.seg, &b.total}) {
    if (!torch::isfinite(*t).all().item<bool>()) {
      throw TrainingError("total_objective: non-finite loss component; bundle: " +
                          bundle_log_line(b, -1, -1));
    }
  }
  return b;
}

std::string bundle_log_line(const LossBundle& b, int64_t step, int64_t epoch) {
  auto value = [](const torch::Tensor& t) { return t.detach().item<double>(); };
  nlohmann::ordered_json j;
  j["step"] = step;
  j["epoch"] = epoch;
  j["adv_d"] = value(b.adv_d);
  j["adv_g"] = value(b.adv_g);
  if (b.has_rec) j["rec"] = value(b.rec);
  j["cyc"] = value(b.cyc);
  j["ssim_m_chat"] = value(b.ssim_m_chat);
  j["ssim_c_mhat"] = value(b.ssim_c_mhat);
  if (b.has_cprime) j["ssim_c_cprime"] = value(b.ssim_c_cprime);
  j["ssim_total"] = value(b.ssim_total);
  if (b.has_seg) j["seg"] = value(b.seg);
  j["total"] = value(b.total);
  return j.dump();
}

}  // namespace mricolor::losses
