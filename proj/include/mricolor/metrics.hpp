#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mricolor/phantom.hpp"

namespace mricolor::metrics {

// Scalar metrics accept (h,w), (1,h,w), (3,h,w) or the same with a leading
// singleton batch axis; color inputs are reduced to Rec.601 luminance where a
// single channel is required.

/// Hasler-Suesstrunk colorfulness of a 3-channel image on [0,1] channels.
double colorfulness(const torch::Tensor& img);

/// Signed difference CF(ref) - CF(gen); negative when the generated image is
/// more colorful than the reference.
double delta_cf(const torch::Tensor& ref, const torch::Tensor& gen);

/// Mean of the single-scale 7x7 local SSIM map.
double ssim_metric(const torch::Tensor& a, const torch::Tensor& b);

/// Multi-scale SSIM with the standard five exponent weights, renormalized to
/// the scale count actually used. scales = 0 picks the largest count (up to 5)
/// the image supports; an explicit count that does not fit raises an error
/// naming the minimum size.
double ms_ssim(const torch::Tensor& a, const torch::Tensor& b, int64_t scales = 0);

/// Feature similarity from log-Gabor phase congruency, Scharr gradients and a
/// signed even-response agreement term (so contrast inversion is penalized),
/// weighted by the maximum phase congruency. Inputs at least 32x32.
double fsim(const torch::Tensor& a, const torch::Tensor& b);

/// Structural texture similarity over the same log-Gabor subbands: windowed
/// subband mean, variance and lag-1 autocorrelations compared by SSIM-style
/// ratios, pooled by geometric mean. Inputs at least 32x32.
double stsim(const torch::Tensor& a, const torch::Tensor& b);

struct SampleMetrics {
  int64_t index = 0;
  double cf = 0, delta_cf = 0, ssim = 0, ms_ssim = 0, stsim = 0, fsim = 0;
  bool valid = true;
};

struct Aggregate {
  double mean = 0, stddev = 0;
};

struct MetricAggregate {
  Aggregate cf, delta_cf, ssim, ms_ssim, stsim, fsim;
  int64_t valid_count = 0;
  int64_t nan_count = 0;
  std::vector<int64_t> nan_samples;
};

struct MetricReport {
  std::string dataset_id;     // manifest checksum, hex
  std::string checkpoint_id;  // architecture fingerprint, hex, or a stub tag
  std::string note = "FSIM/STSIM computed on luminance";
  std::vector<SampleMetrics> per_image;
  MetricAggregate aggregate;
};

/// Mean and population std over the valid rows; exactly reproducible from
/// per_image.
MetricAggregate compute_aggregate(const std::vector<SampleMetrics>& per_image);

using ColorizeFn = std::function<torch::Tensor(const torch::Tensor&)>;

/// Runs colorize on every split sample's MRI and pairs the metrics as:
/// ssim and ms_ssim between the output's luminance and the input MRI;
/// cf of the output; delta_cf against the ground-truth Cryosection; fsim and
/// stsim between the output's and the Cryosection's luminance. Rows with any
/// non-finite metric are kept, flagged invalid and excluded from aggregates.
MetricReport evaluate_with(const ColorizeFn& colorize, const data::DatasetManifest& manifest,
                           data::Split split, const std::string& checkpoint_id = "stub");

/// Inference with the checkpointed model; defined alongside the training
/// module, which owns model reconstruction.
MetricReport evaluate(const data::DatasetManifest& manifest,
                      const std::filesystem::path& checkpoint_path,
                      data::Split split = data::Split::Test);

/// One JSON object: metadata, per_image array, aggregate.
std::string report_json(const MetricReport& report);
void write_report_json(const std::filesystem::path& path, const MetricReport& report);

/// Fixed-width table with columns CF, dCF, SSIM, MS-SSIM, STSIM, FSIM.
std::string report_table(const MetricReport& report);

}  // namespace mricolor::metrics
