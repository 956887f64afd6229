#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <utility>
#include <vector>

namespace mricolor::nets {

/// Channel width of encoder level j for base width b: b, b, 2b, 4b, ...
/// Level 0 is full resolution; the bottleneck sits at level `depth`.
inline int64_t level_width(int64_t base, int64_t j) {
  return base * (int64_t{1} << std::max<int64_t>(0, j - 1));
}

/// Squeeze the spatial field to a channel descriptor, pass it through a
/// two-layer bottleneck and gate every channel with a sigmoid in (0,1).
struct SEBlockImpl : torch::nn::Module {
  SEBlockImpl(int64_t channels, int64_t reduction = 8);
  torch::Tensor forward(const torch::Tensor& f);

  torch::nn::Linear fc1{nullptr}, fc2{nullptr};
  int64_t channels = 0, reduction = 8;
};
TORCH_MODULE(SEBlock);

/// Skip-path transform: channel attention by default, a plain 3x3 convolution
/// when attention is ablated. Channel count is preserved either way.
struct SkipGateImpl : torch::nn::Module {
  SkipGateImpl(int64_t channels, bool use_se, int64_t reduction = 8);
  torch::Tensor forward(const torch::Tensor& f);

  SEBlock se{nullptr};
  torch::nn::Conv2d conv{nullptr};
  bool use_se = true;
};
TORCH_MODULE(SkipGate);

/// Three-path input pyramid. Paths bring the image, its half- and its
/// quarter-resolution mean-pooled copies to (h/4, w/4) with k channels each;
/// the output concatenates the full-resolution path with the sum of the other
/// two (2k channels). Paths are conv+ReLU without normalization so a single
/// path's contribution (even a pure bias) stays observable.
struct MultiscaleInputImpl : torch::nn::Module {
  MultiscaleInputImpl(int64_t in_channels, int64_t k);
  /// Fused feature plus the half-resolution intermediate of the full path,
  /// reused as the level-1 encoder skip.
  std::pair<torch::Tensor, torch::Tensor> forward_with_skip(const torch::Tensor& m);
  torch::Tensor forward(const torch::Tensor& m);

  torch::nn::Conv2d m_conv1{nullptr}, m_conv2{nullptr}, m2_conv{nullptr}, m4_conv{nullptr};
  int64_t in_channels = 1, k = 64;
};
TORCH_MODULE(MultiscaleInput);

struct ResidualBlockImpl : torch::nn::Module {
  explicit ResidualBlockImpl(int64_t channels);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::InstanceNorm2d norm1{nullptr}, norm2{nullptr};
};
TORCH_MODULE(ResidualBlock);

struct GeneratorConfig {
  int64_t in_channels = 1;
  int64_t out_channels = 3;
  int64_t base_channels = 64;
  int64_t depth = 3;  // halvings between input and bottleneck
  int64_t num_residual_blocks = 4;
  bool use_multiscale = true;
  bool use_dual_decoder = true;
  bool use_se_skips = true;
  bool inter_decoder_skips = true;
  int64_t se_reduction = 8;

  /// Throws ConfigError on inconsistent settings (depth < 2, channel widths
  /// not divisible by the SE reduction, inter-decoder skips without a second
  /// decoder).
  void validate() const;
};

struct GeneratorOutput {
  torch::Tensor primary;   // c_hat for the forward generator, m_hat reversed
  torch::Tensor secondary; // c_prime; undefined when single-decoder
  bool has_secondary = false;
};

/// Encoder-decoder translator. The encoder trunk starts with the multiscale
/// pyramid (levels 1 and 2) when enabled, or plain strided convolutions; a
/// full-resolution stem feeds the level-0 skip either way. The bottleneck is a
/// residual stack. Decoders upsample with transposed convolutions, concatenate
/// the gated skip of each level and, in the dual configuration, the primary
/// decoder additionally receives the secondary decoder's gated feature at
/// every level. Outputs are sigmoid-bounded; spatial size is preserved for any
/// input with h, w >= 16 and divisible by 4.
struct TranslationGeneratorImpl : torch::nn::Module {
  explicit TranslationGeneratorImpl(GeneratorConfig cfg);
  GeneratorOutput forward_all(const torch::Tensor& x);
  torch::Tensor forward(const torch::Tensor& x);  // primary output only

  GeneratorConfig cfg;
  torch::nn::Conv2d stem{nullptr};
  torch::nn::InstanceNorm2d stem_norm{nullptr};
  MultiscaleInput multiscale{nullptr};
  torch::nn::ModuleList enc_stages;  // strided conv blocks after the pyramid
  torch::nn::ModuleList bottleneck;

  struct Decoder {
    torch::nn::ModuleList ups;         // transposed conv blocks, coarse to fine
    torch::nn::ModuleList fusers;      // post-concat fuse conv blocks
    torch::nn::ModuleList skip_gates;  // one per encoder level
    torch::nn::Conv2d head{nullptr};
  };
  Decoder primary_dec, secondary_dec;
  torch::nn::ModuleList inter_gates;  // secondary -> primary, one per level

 private:
  Decoder make_decoder(const char* name, int64_t out_channels);
  std::vector<torch::Tensor> encode(const torch::Tensor& x, torch::Tensor& bottom);
  torch::Tensor decode_level(Decoder& dec, int64_t level, const torch::Tensor& below,
                             const torch::Tensor& skip);
};
TORCH_MODULE(TranslationGenerator);

struct DiscriminatorConfig {
  int64_t in_channels = 3;
  int64_t base_channels = 64;
  int64_t image_size = 256;  // square input edge, >= 32
  double leaky_slope = 0.2;

  void validate() const;
};

/// Five stride-2 convolutions with LeakyReLU, then flatten and a single
/// sigmoid-activated linear unit: one whole-image realness score per item.
struct DiscriminatorImpl : torch::nn::Module {
  explicit DiscriminatorImpl(DiscriminatorConfig cfg);
  /// (n, ch, s, s) -> (n, 1) strictly inside (0, 1).
  torch::Tensor forward(const torch::Tensor& img);

  DiscriminatorConfig cfg;
  torch::nn::ModuleList convs;
  torch::nn::Linear fc{nullptr};
};
TORCH_MODULE(Discriminator);

struct UNetConfig {
  int64_t in_channels = 3;
  int64_t num_classes = 8;
  int64_t depth = 4;
  int64_t base_channels = 32;

  void validate() const;
};

/// Compact U-Net: strided-conv encoder, transposed-conv decoder with skip
/// concatenation, 1x1 head, softmax over classes.
struct UNetSegmenterImpl : torch::nn::Module {
  explicit UNetSegmenterImpl(UNetConfig cfg);
  /// (n, 3, h, w) -> (n, num_classes, h, w); channels sum to 1 per pixel.
  torch::Tensor forward(const torch::Tensor& c);

  UNetConfig cfg;
  torch::nn::ModuleList enc_blocks, downs, ups, dec_blocks;
  torch::nn::Conv2d head{nullptr};
};
TORCH_MODULE(UNetSegmenter);

/// Truncated-normal(0, 0.02) weights resampled inside two sigmas, zero
/// biases; deterministic for a fixed seed and module layout.
void init_weights(torch::nn::Module& module, uint64_t seed);

/// Direct count of Conv2d instances anywhere in the module tree.
int64_t count_conv_layers(const torch::nn::Module& module);
/// Count of SEBlock instances anywhere in the module tree.
int64_t count_se_blocks(const torch::nn::Module& module);
int64_t parameter_count(const torch::nn::Module& module);

}  // namespace mricolor::nets
