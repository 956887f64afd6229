#pragma once

// Independent reference implementations used to pin down the library's loss
// and metric kernels. Everything here is direct-formula, loop-based double
// arithmetic with no shared code with src/, so agreement is meaningful.

#include <torch/torch.h>

#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

/// Symmetric (edge-repeating) boundary index for pad sizes up to n.
inline int64_t sym_index(int64_t i, int64_t n) {
  if (i < 0) return -1 - i;
  if (i >= n) return 2 * n - 1 - i;
  return i;
}

/// Per-pixel three-factor SSIM over a patch x patch window on (h,w) doubles.
inline std::vector<double> local_ssim(const std::vector<double>& a, const std::vector<double>& b,
                                      int64_t h, int64_t w, int64_t patch, double c1, double c2,
                                      double c3) {
  std::vector<double> map(static_cast<size_t>(h * w));
  int64_t r = patch / 2;
  for (int64_t cy = 0; cy < h; ++cy) {
    for (int64_t cx = 0; cx < w; ++cx) {
      double sum_a = 0, sum_b = 0, sum_aa = 0, sum_bb = 0, sum_ab = 0;
      for (int64_t dy = -r; dy <= r; ++dy) {
        for (int64_t dx = -r; dx <= r; ++dx) {
          int64_t y = sym_index(cy + dy, h);
          int64_t x = sym_index(cx + dx, w);
          double va = a[static_cast<size_t>(y * w + x)];
          double vb = b[static_cast<size_t>(y * w + x)];
          sum_a += va;
          sum_b += vb;
          sum_aa += va * va;
          sum_bb += vb * vb;
          sum_ab += va * vb;
        }
      }
      double np = static_cast<double>(patch * patch);
      double mu_a = sum_a / np;
      double mu_b = sum_b / np;
      double var_a = sum_aa / np - mu_a * mu_a;
      double var_b = sum_bb / np - mu_b * mu_b;
      double cov = sum_ab / np - mu_a * mu_b;
      if (var_a < 0) var_a = 0;
      if (var_b < 0) var_b = 0;
      double sd_a = std::sqrt(var_a);
      double sd_b = std::sqrt(var_b);
      double lum = (2 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1);
      double con = (2 * sd_a * sd_b + c2) / (var_a + var_b + c2);
      double str = (cov + c3) / (sd_a * sd_b + c3);
      map[static_cast<size_t>(cy * w + cx)] = lum * con * str;
    }
  }
  return map;
}

inline std::vector<double> to_vec(const torch::Tensor& t) {
  auto flat = t.reshape(-1).to(torch::kFloat64).contiguous();
  const double* p = flat.data_ptr<double>();
  return std::vector<double>(p, p + flat.numel());
}

/// Cross entropy of one-hot s against probabilities s_hat, both (l,h,w),
/// normalized by h*w only.
inline double segmentation_ce(const torch::Tensor& s, const torch::Tensor& s_hat) {
  auto sv = to_vec(s);
  auto pv = to_vec(s_hat);
  int64_t l = s.size(0), h = s.size(1), w = s.size(2);
  double acc = 0;
  for (int64_t k = 0; k < l; ++k) {
    for (int64_t j = 0; j < h; ++j) {
      for (int64_t i = 0; i < w; ++i) {
        size_t idx = static_cast<size_t>((k * h + j) * w + i);
        double p = pv[idx];
        if (p < 1e-12) p = 1e-12;
        acc += sv[idx] * std::log(p);
      }
    }
  }
  return -acc / static_cast<double>(h * w);
}

/// Hasler-Suesstrunk colorfulness of a (3,h,w) image with population stds.
inline double colorfulness(const torch::Tensor& img) {
  auto v = to_vec(img);
  int64_t n = img.size(1) * img.size(2);
  double sum_rg = 0, sum_rg2 = 0, sum_yb = 0, sum_yb2 = 0;
  for (int64_t i = 0; i < n; ++i) {
    double r = v[static_cast<size_t>(i)];
    double g = v[static_cast<size_t>(n + i)];
    double b = v[static_cast<size_t>(2 * n + i)];
    double rg = r - g;
    double yb = 0.5 * (r + g) - b;
    sum_rg += rg;
    sum_rg2 += rg * rg;
    sum_yb += yb;
    sum_yb2 += yb * yb;
  }
  double nd = static_cast<double>(n);
  double mu_rg = sum_rg / nd;
  double mu_yb = sum_yb / nd;
  double var_rg = sum_rg2 / nd - mu_rg * mu_rg;
  double var_yb = sum_yb2 / nd - mu_yb * mu_yb;
  if (var_rg < 0) var_rg = 0;
  if (var_yb < 0) var_yb = 0;
  return std::sqrt(var_rg + var_yb) + 0.3 * std::sqrt(mu_rg * mu_rg + mu_yb * mu_yb);
}

/// Mean absolute difference of two equally shaped tensors, by loops.
inline double mean_abs_diff(const torch::Tensor& a, const torch::Tensor& b) {
  auto va = to_vec(a);
  auto vb = to_vec(b);
  double acc = 0;
  for (size_t i = 0; i < va.size(); ++i) acc += std::abs(va[i] - vb[i]);
  return acc / static_cast<double>(va.size());
}

/// Central finite-difference gradient check. f must be a pure scalar function
/// of the tensor's values; grad is compared element-by-element. Returns the
/// worst relative error.
inline double max_grad_rel_error(const std::function<torch::Tensor(const torch::Tensor&)>& f,
                                 torch::Tensor x0, double h = 1e-4) {
  torch::Tensor x = x0.detach().clone().set_requires_grad(true);
  torch::Tensor y = f(x);
  y.backward();
  torch::Tensor grad = x.grad().reshape(-1);
  torch::Tensor flat = x0.detach().clone().reshape(-1);
  double worst = 0;
  for (int64_t i = 0; i < flat.numel(); ++i) {
    auto probe = [&](double delta) {
      torch::NoGradGuard no_grad;
      torch::Tensor xp = x0.detach().clone();
      xp.view(-1)[i] += delta;
      return f(xp).item<double>();
    };
    double fd = (probe(h) - probe(-h)) / (2 * h);
    double an = grad[i].item<double>();
    double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
    worst = std::max(worst, std::abs(fd - an) / denom);
  }
  return worst;
}

}  // namespace oracle
