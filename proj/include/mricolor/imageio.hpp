#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <vector>

namespace mricolor::io {

// PNG round trips use the fixed 8-bit convention: round(v*255) on save,
// v/255 on load. All tensors are CPU float32 in [0,1] unless noted.

void save_png_gray(const std::filesystem::path& path, const torch::Tensor& img);  // (1,h,w)|(h,w)
torch::Tensor load_png_gray(const std::filesystem::path& path);                   // (1,h,w)

void save_png_rgb(const std::filesystem::path& path, const torch::Tensor& img);  // (3,h,w)
torch::Tensor load_png_rgb(const std::filesystem::path& path);                   // (3,h,w)

/// Label ids stored verbatim as 8-bit values; ids must be < 256.
void save_png_labels(const std::filesystem::path& path, const torch::Tensor& labels);  // (h,w) long
torch::Tensor load_png_labels(const std::filesystem::path& path);                      // (h,w) long

/// Raw float32 sidecar: magic "MRWARP01", then u32 channels/height/width and
/// little-endian float32 data in (ch,h,w) order.
void save_warp(const std::filesystem::path& path, const torch::Tensor& field);  // (ch,h,w)
torch::Tensor load_warp(const std::filesystem::path& path);

/// Writes one annotated grid: rows (ground-truth Cryosection, input MRI,
/// colorized output), one column per sample.
void save_comparison_grid(const std::filesystem::path& path,
                          const std::vector<torch::Tensor>& gt_cryo,    // (3,h,w) each
                          const std::vector<torch::Tensor>& input_mri,  // (1,h,w) each
                          const std::vector<torch::Tensor>& output);    // (3,h,w) each

}  // namespace mricolor::io
