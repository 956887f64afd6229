#include "mricolor/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mricolor/errors.hpp"
#include "mricolor/image.hpp"
#include "mricolor/losses.hpp"
#include "spectral.hpp"

namespace mricolor::metrics {

namespace detail {

torch::Tensor to_plane(const torch::Tensor& t, const char* what) {
  if (!t.defined()) throw ShapeError(std::string(what) + ": undefined tensor");
  torch::Tensor x = t;
  if (x.dim() == 4) {
    if (x.size(0) != 1)
      throw ShapeError(std::string(what) + ": expected a single image, got batch size " +
                       std::to_string(x.size(0)));
    x = x.squeeze(0);
  }
  if (x.dim() == 3) {
    if (x.size(0) == 3) {
      x = luminance_hw(x);
    } else if (x.size(0) == 1) {
      x = x.squeeze(0);
    } else {
      throw ShapeError(std::string(what) + ": expected 1 or 3 channels, got " +
                       std::to_string(x.size(0)));
    }
  }
  if (x.dim() != 2)
    throw ShapeError(std::string(what) + ": expected (h,w), (c,h,w) or (1,c,h,w) input");
  if (x.size(0) < 1 || x.size(1) < 1) throw ShapeError(std::string(what) + ": empty image");
  return x.to(torch::kFloat64).contiguous();
}

void joint_normalize(torch::Tensor& a, torch::Tensor& b, double lo, double hi) {
  double mn = std::min(a.min().item<double>(), b.min().item<double>());
  double mx = std::max(a.max().item<double>(), b.max().item<double>());
  if (mx - mn < 1e-12) {
    a = torch::full_like(a, lo);
    b = torch::full_like(b, lo);
    return;
  }
  double scale = (hi - lo) / (mx - mn);
  a = (a - mn) * scale + lo;
  b = (b - mn) * scale + lo;
}

}  // namespace detail

namespace {

void check_same_size(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.size(0) != b.size(0) || a.size(1) != b.size(1))
    throw ShapeError(std::string(what) + ": input sizes differ: " + std::to_string(a.size(0)) +
                     "x" + std::to_string(a.size(1)) + " vs " + std::to_string(b.size(0)) + "x" +
                     std::to_string(b.size(1)));
}

torch::Tensor to_rgb_chw(const torch::Tensor& t, const char* what) {
  torch::Tensor x = t;
  if (x.dim() == 4) {
    if (x.size(0) != 1)
      throw ShapeError(std::string(what) + ": expected a single image, got batch size " +
                       std::to_string(x.size(0)));
    x = x.squeeze(0);
  }
  if (x.dim() != 3 || x.size(0) != 3)
    throw ShapeError(std::string(what) + ": expected a (3,h,w) image");
  return x.to(torch::kFloat64);
}

}  // namespace

double colorfulness(const torch::Tensor& img) {
  torch::Tensor x = to_rgb_chw(img, "colorfulness");
  torch::Tensor r = x[0], g = x[1], b = x[2];
  torch::Tensor rg = r - g;
  torch::Tensor yb = 0.5 * (r + g) - b;
  // Population statistics so single-pixel images are defined (CF of any
  // constant image reduces to the mean term alone).
  double var_rg = rg.var(/*unbiased=*/false).item<double>();
  double var_yb = yb.var(/*unbiased=*/false).item<double>();
  double mu_rg = rg.mean().item<double>();
  double mu_yb = yb.mean().item<double>();
  return std::sqrt(var_rg + var_yb) + 0.3 * std::sqrt(mu_rg * mu_rg + mu_yb * mu_yb);
}

double delta_cf(const torch::Tensor& ref, const torch::Tensor& gen) {
  return colorfulness(ref) - colorfulness(gen);
}

double ssim_metric(const torch::Tensor& a, const torch::Tensor& b) {
  torch::Tensor pa = detail::to_plane(a, "ssim_metric");
  torch::Tensor pb = detail::to_plane(b, "ssim_metric");
  check_same_size(pa, pb, "ssim_metric");
  torch::Tensor map = losses::local_ssim_map(pa.unsqueeze(0).unsqueeze(0),
                                             pb.unsqueeze(0).unsqueeze(0), /*patch=*/7);
  return map.mean().item<double>();
}

double ms_ssim(const torch::Tensor& a, const torch::Tensor& b, int64_t scales) {
  static const double kWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  torch::Tensor pa = detail::to_plane(a, "ms_ssim");
  torch::Tensor pb = detail::to_plane(b, "ms_ssim");
  check_same_size(pa, pb, "ms_ssim");

  // A scale is usable when both dims are still >= 7 (the window must fit) and
  // every halving up to it divides evenly.
  auto max_scales = [&](int64_t h, int64_t w) {
    int64_t m = 1;
    while (m < 5) {
      if (h % 2 != 0 || w % 2 != 0) break;
      if (h / 2 < 7 || w / 2 < 7) break;
      h /= 2;
      w /= 2;
      ++m;
    }
    return m;
  };
  int64_t fit = max_scales(pa.size(0), pa.size(1));
  int64_t m = scales == 0 ? fit : scales;
  if (m < 1 || m > 5)
    throw ConfigError("ms_ssim: scale count must be in [1,5], got " + std::to_string(m));
  if (m > fit)
    throw ConfigError("ms_ssim: image " + std::to_string(pa.size(0)) + "x" +
                      std::to_string(pa.size(1)) + " supports only " + std::to_string(fit) +
                      " scales; " + std::to_string(m) + " requested (needs >= " +
                      std::to_string(7L << (m - 1)) + " per side, divisible by " +
                      std::to_string(1L << (m - 1)) + ")");

  double wsum = 0;
  for (int64_t j = 0; j < m; ++j) wsum += kWeights[j];

  torch::Tensor xa = pa.unsqueeze(0).unsqueeze(0);
  torch::Tensor xb = pb.unsqueeze(0).unsqueeze(0);
  losses::SSIMConstants k;
  double result = 1.0;
  for (int64_t j = 0; j < m; ++j) {
    auto [l, cs] = losses::ssim_l_cs_maps(xa, xb, /*patch=*/7, k.c1, k.c2);
    double w = kWeights[j] / wsum;
    double cs_mean = cs.mean().item<double>();
    result *= std::pow(std::max(cs_mean, 0.0), w);
    if (j == m - 1) {
      double l_mean = l.mean().item<double>();
      result *= std::pow(std::max(l_mean, 0.0), w);
    } else {
      xa = downsample(xa, 2);
      xb = downsample(xb, 2);
    }
  }
  return result;
}

MetricAggregate compute_aggregate(const std::vector<SampleMetrics>& per_image) {
  MetricAggregate agg;
  auto fill = [&](Aggregate& out, auto pick) {
    double sum = 0, sum2 = 0;
    int64_t n = 0;
    for (const auto& row : per_image) {
      if (!row.valid) continue;
      double v = pick(row);
      sum += v;
      sum2 += v * v;
      ++n;
    }
    if (n == 0) {
      out = {0, 0};
      return;
    }
    out.mean = sum / static_cast<double>(n);
    out.stddev = std::sqrt(std::max(sum2 / static_cast<double>(n) - out.mean * out.mean, 0.0));
  };
  fill(agg.cf, [](const SampleMetrics& r) { return r.cf; });
  fill(agg.delta_cf, [](const SampleMetrics& r) { return r.delta_cf; });
  fill(agg.ssim, [](const SampleMetrics& r) { return r.ssim; });
  fill(agg.ms_ssim, [](const SampleMetrics& r) { return r.ms_ssim; });
  fill(agg.stsim, [](const SampleMetrics& r) { return r.stsim; });
  fill(agg.fsim, [](const SampleMetrics& r) { return r.fsim; });
  for (const auto& row : per_image) {
    if (row.valid) {
      ++agg.valid_count;
    } else {
      ++agg.nan_count;
      agg.nan_samples.push_back(row.index);
    }
  }
  return agg;
}

MetricReport evaluate_with(const ColorizeFn& colorize, const data::DatasetManifest& manifest,
                           data::Split split, const std::string& checkpoint_id) {
  torch::NoGradGuard no_grad;
  MetricReport report;
  {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(data::manifest_checksum(manifest)));
    report.dataset_id = buf;
  }
  report.checkpoint_id = checkpoint_id;

  int64_t n = manifest.split_size(split);
  if (n <= 0) throw DatasetError("evaluate: split " + data::split_name(split) + " is empty");
  for (int64_t i = 0; i < n; ++i) {
    data::TripletSample sample = data::load_triplet(manifest, split, i);
    torch::Tensor m = sample.m.unsqueeze(0);
    torch::Tensor chat = colorize(m);
    if (chat.dim() != 4 || chat.size(0) != 1 || chat.size(1) != 3 ||
        chat.size(2) != m.size(2) || chat.size(3) != m.size(3))
      throw ShapeError("evaluate: colorizer returned an invalid shape for sample " +
                       std::to_string(i));
    SampleMetrics row;
    row.index = i;
    row.cf = colorfulness(chat);
    row.delta_cf = delta_cf(sample.c, chat);
    row.ssim = ssim_metric(chat, m);
    row.ms_ssim = ms_ssim(chat, m);
    row.fsim = fsim(chat, sample.c);
    row.stsim = stsim(chat, sample.c);
    row.valid = std::isfinite(row.cf) && std::isfinite(row.delta_cf) && std::isfinite(row.ssim) &&
                std::isfinite(row.ms_ssim) && std::isfinite(row.fsim) && std::isfinite(row.stsim);
    report.per_image.push_back(row);
  }
  report.aggregate = compute_aggregate(report.per_image);
  return report;
}

namespace {

nlohmann::ordered_json aggregate_json(const Aggregate& a) {
  return nlohmann::ordered_json{{"mean", a.mean}, {"std", a.stddev}};
}

double json_safe(double v) { return std::isfinite(v) ? v : 0.0; }

}  // namespace

std::string report_json(const MetricReport& report) {
  nlohmann::ordered_json j;
  j["dataset"] = report.dataset_id;
  j["checkpoint"] = report.checkpoint_id;
  j["note"] = report.note;
  j["per_image"] = nlohmann::ordered_json::array();
  for (const auto& row : report.per_image) {
    nlohmann::ordered_json r;
    r["index"] = row.index;
    r["valid"] = row.valid;
    r["cf"] = json_safe(row.cf);
    r["delta_cf"] = json_safe(row.delta_cf);
    r["ssim"] = json_safe(row.ssim);
    r["ms_ssim"] = json_safe(row.ms_ssim);
    r["stsim"] = json_safe(row.stsim);
    r["fsim"] = json_safe(row.fsim);
    j["per_image"].push_back(r);
  }
  const MetricAggregate& a = report.aggregate;
  j["aggregate"] = nlohmann::ordered_json{
      {"cf", aggregate_json(a.cf)},         {"delta_cf", aggregate_json(a.delta_cf)},
      {"ssim", aggregate_json(a.ssim)},     {"ms_ssim", aggregate_json(a.ms_ssim)},
      {"stsim", aggregate_json(a.stsim)},   {"fsim", aggregate_json(a.fsim)},
      {"valid_count", a.valid_count},       {"nan_count", a.nan_count},
      {"nan_samples", a.nan_samples}};
  return j.dump(2) + "\n";
}

void write_report_json(const std::filesystem::path& path, const MetricReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write report: " + path.string());
  out << report_json(report);
}

std::string report_table(const MetricReport& report) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-8s %10s %10s %10s %10s %10s %10s\n", "image", "CF", "dCF",
                "SSIM", "MS-SSIM", "STSIM", "FSIM");
  out << line;
  auto row_line = [&](const char* label, double cf, double dcf, double ssim, double ms,
                      double st, double fs, bool valid) {
    std::snprintf(line, sizeof(line), "%-8s %10.4f %10.4f %10.4f %10.4f %10.4f %10.4f%s\n", label,
                  cf, dcf, ssim, ms, st, fs, valid ? "" : "  (excluded)");
    out << line;
  };
  for (const auto& r : report.per_image) {
    std::string label = std::to_string(r.index);
    row_line(label.c_str(), r.cf, r.delta_cf, r.ssim, r.ms_ssim, r.stsim, r.fsim, r.valid);
  }
  const MetricAggregate& a = report.aggregate;
  row_line("mean", a.cf.mean, a.delta_cf.mean, a.ssim.mean, a.ms_ssim.mean, a.stsim.mean,
           a.fsim.mean, true);
  row_line("std", a.cf.stddev, a.delta_cf.stddev, a.ssim.stddev, a.ms_ssim.stddev,
           a.stsim.stddev, a.fsim.stddev, true);
  std::snprintf(line, sizeof(line), "valid %lld of %lld\n",
                static_cast<long long>(a.valid_count),
                static_cast<long long>(a.valid_count + a.nan_count));
  out << line;
  return out.str();
}

}  // namespace mricolor::metrics
