#include "mricolor/image.hpp"

#include <string>

#include "mricolor/errors.hpp"

namespace mricolor {

std::string modality_name(Modality m) {
  switch (m) {
    case Modality::MRI: return "MRI";
    case Modality::CRYO: return "CRYO";
    case Modality::SEG: return "SEG";
    case Modality::FEATURE: return "FEATURE";
  }
  return "?";
}

ImageBatch make_mri(torch::Tensor t) {
  check_image(t, 1, "make_mri");
  return {std::move(t), Modality::MRI};
}

ImageBatch make_cryo(torch::Tensor t) {
  check_image(t, 3, "make_cryo");
  return {std::move(t), Modality::CRYO};
}

ImageBatch make_seg(torch::Tensor t) {
  check_image(t, -1, "make_seg");
  return {std::move(t), Modality::SEG};
}

ImageBatch make_feature(torch::Tensor t) {
  check_image(t, -1, "make_feature");
  return {std::move(t), Modality::FEATURE};
}

void check_image(const torch::Tensor& t, int64_t channels, const std::string& who) {
  if (t.dim() != 4) {
    throw ShapeError(who + ": expected rank-4 (n,ch,h,w) tensor, got rank " +
                     std::to_string(t.dim()));
  }
  if (channels >= 0 && t.size(1) != channels) {
    throw ShapeError(who + ": expected " + std::to_string(channels) + " channels, got " +
                     std::to_string(t.size(1)));
  }
  if (t.size(0) < 1) {
    throw ShapeError(who + ": empty batch");
  }
}

torch::Tensor downsample(const torch::Tensor& img, int64_t factor) {
  if (factor != 2 && factor != 4) {
    throw ShapeError("downsample: factor must be 2 or 4, got " + std::to_string(factor));
  }
  if (img.dim() < 2) throw ShapeError("downsample: need at least rank-2 input");
  int64_t h = img.size(img.dim() - 2);
  int64_t w = img.size(img.dim() - 1);
  if (h % factor != 0 || w % factor != 0) {
    throw ShapeError("downsample: spatial dims " + std::to_string(h) + "x" + std::to_string(w) +
                     " not divisible by " + std::to_string(factor));
  }
  // avg_pool2d wants (n,ch,h,w); lift lower-rank inputs temporarily.
  torch::Tensor x = img;
  int64_t added = 0;
  while (x.dim() < 4) {
    x = x.unsqueeze(0);
    ++added;
  }
  x = torch::avg_pool2d(x, factor);
  while (added-- > 0) x = x.squeeze(0);
  return x;
}

ImageBatch downsample(const ImageBatch& img, int64_t factor) {
  return {downsample(img.data, factor), img.modality};
}

torch::Tensor luminance(const torch::Tensor& rgb) {
  check_image(rgb, -1, "luminance");
  if (rgb.size(1) == 1) return rgb;
  if (rgb.size(1) != 3) {
    throw ShapeError("luminance: expected 1 or 3 channels, got " + std::to_string(rgb.size(1)));
  }
  auto w = torch::tensor({0.299, 0.587, 0.114}, rgb.options()).view({1, 3, 1, 1});
  return (rgb * w).sum(1, /*keepdim=*/true);
}

torch::Tensor luminance_hw(const torch::Tensor& img) {
  if (img.dim() == 2) return img;
  if (img.dim() == 3 && img.size(0) == 1) return img.squeeze(0);
  if (img.dim() == 3 && img.size(0) == 3) {
    auto w = torch::tensor({0.299, 0.587, 0.114}, img.options()).view({3, 1, 1});
    return (img * w).sum(0);
  }
  throw ShapeError("luminance_hw: expected (h,w), (1,h,w) or (3,h,w)");
}

}  // namespace mricolor
