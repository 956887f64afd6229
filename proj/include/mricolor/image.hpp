#pragma once

#include <torch/torch.h>

#include <string>

namespace mricolor {

enum class Modality { MRI, CRYO, SEG, FEATURE };

std::string modality_name(Modality m);

/// Rank-4 (n, ch, h, w) image batch with a modality tag. MRI batches carry one
/// channel, Cryosection three, segmentation maps one channel per class.
/// Image modalities live in [0, 1]; FEATURE is unconstrained.
struct ImageBatch {
  torch::Tensor data;
  Modality modality = Modality::FEATURE;

  ImageBatch() = default;
  ImageBatch(torch::Tensor t, Modality m) : data(std::move(t)), modality(m) {}

  int64_t n() const { return data.size(0); }
  int64_t channels() const { return data.size(1); }
  int64_t height() const { return data.size(2); }
  int64_t width() const { return data.size(3); }
};

ImageBatch make_mri(torch::Tensor t);
ImageBatch make_cryo(torch::Tensor t);
ImageBatch make_seg(torch::Tensor t);
ImageBatch make_feature(torch::Tensor t);

/// Throws ShapeError unless t is rank-4 with the given channel count (pass -1
/// to skip the channel check).
void check_image(const torch::Tensor& t, int64_t channels, const std::string& who);

/// Mean-pooled downsampling by 2 or 4. Spatial dims must be divisible by the
/// factor; channel count is preserved.
torch::Tensor downsample(const torch::Tensor& img, int64_t factor);
ImageBatch downsample(const ImageBatch& img, int64_t factor);

/// Rec.601 luma of an RGB batch (n,3,h,w) -> (n,1,h,w). One-channel input
/// passes through unchanged.
torch::Tensor luminance(const torch::Tensor& rgb);

/// (3,h,w) or (h,w) single-image variant -> (h,w).
torch::Tensor luminance_hw(const torch::Tensor& img);

}  // namespace mricolor
