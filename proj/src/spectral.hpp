#pragma once

#include <torch/torch.h>

#include <vector>

namespace mricolor::metrics::detail {

// Shared log-Gabor machinery for fsim and stsim; internal to the library.

struct GaborBank {
  int64_t h = 0, w = 0;
  // One frequency-domain filter per (scale, orientation), real-valued, with a
  // single-sided angular window so ifft products are analytic signals.
  std::vector<torch::Tensor> filters;  // scales*orients entries, (h,w) f64
  int64_t scales = 4, orients = 4;
};

/// Builds (and caches per size) the 4x4 log-Gabor bank used by both metrics.
const GaborBank& gabor_bank(int64_t h, int64_t w);

struct SubbandResponse {
  torch::Tensor even;  // (s*o, h, w) real part
  torch::Tensor odd;   // (s*o, h, w) imaginary part
};

/// Complex subband responses of a (h,w) float64 image.
SubbandResponse analyze(const torch::Tensor& img, const GaborBank& bank);

/// Phase congruency map plus summed even responses and amplitude per
/// orientation, combined over scales.
struct PhaseCongruency {
  torch::Tensor pc;        // (h,w)
  torch::Tensor even_sum;  // (h,w), sum of even responses over all subbands
};

PhaseCongruency phase_congruency(const SubbandResponse& resp, const GaborBank& bank);

/// Scharr gradient magnitude, kernels [[-3,0,3],[-10,0,10],[-3,0,3]]/16,
/// replicate padding.
torch::Tensor scharr_magnitude(const torch::Tensor& img);

/// Reduces a metric input to a (h,w) float64 luminance plane; throws
/// ShapeError on unsupported shapes, names `what` in messages.
torch::Tensor to_plane(const torch::Tensor& t, const char* what);

/// min/max over both planes jointly, then affine map to [lo, hi]; constant
/// pairs map both planes to lo.
void joint_normalize(torch::Tensor& a, torch::Tensor& b, double lo, double hi);

}  // namespace mricolor::metrics::detail
