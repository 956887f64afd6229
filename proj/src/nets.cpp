#include "mricolor/nets.hpp"

#include <string>

#include "mricolor/errors.hpp"
#include "mricolor/image.hpp"

namespace mricolor::nets {

namespace {

torch::nn::Conv2d conv3(int64_t in, int64_t out, int64_t stride = 1) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

torch::nn::Sequential conv_block(int64_t in, int64_t out, int64_t stride) {
  return torch::nn::Sequential(
      conv3(in, out, stride),
      torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(out)),
      torch::nn::ReLU());
}

torch::nn::Sequential up_block(int64_t in, int64_t out) {
  return torch::nn::Sequential(
      torch::nn::ConvTranspose2d(
          torch::nn::ConvTranspose2dOptions(in, out, 3).stride(2).padding(1).output_padding(1)),
      torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(out)),
      torch::nn::ReLU());
}

torch::Tensor crop_to(const torch::Tensor& x, int64_t h, int64_t w) {
  if (x.size(2) == h && x.size(3) == w) return x;
  return x.narrow(2, 0, h).narrow(3, 0, w);
}

void check_input(const torch::Tensor& x, int64_t channels, const char* who) {
  check_image(x, channels, who);
  if (x.size(2) < 16 || x.size(3) < 16)
    throw ShapeError(std::string(who) + ": spatial size must be at least 16, got " +
                     std::to_string(x.size(2)) + "x" + std::to_string(x.size(3)));
}

}  // namespace

SEBlockImpl::SEBlockImpl(int64_t channels_, int64_t reduction_)
    : channels(channels_), reduction(reduction_) {
  if (channels <= 0 || reduction <= 0 || channels % reduction != 0)
    throw ConfigError("SEBlock: channels (" + std::to_string(channels) +
                      ") must be a positive multiple of the reduction ratio (" +
                      std::to_string(reduction) + ")");
  fc1 = register_module("fc1", torch::nn::Linear(channels, channels / reduction));
  fc2 = register_module("fc2", torch::nn::Linear(channels / reduction, channels));
}

torch::Tensor SEBlockImpl::forward(const torch::Tensor& f) {
  check_image(f, channels, "SEBlock");
  torch::Tensor squeeze = f.mean({2, 3});
  torch::Tensor gate = torch::sigmoid(fc2(torch::relu(fc1(squeeze))));
  return f * gate.view({f.size(0), channels, 1, 1});
}

SkipGateImpl::SkipGateImpl(int64_t channels, bool use_se_, int64_t reduction) : use_se(use_se_) {
  if (use_se) {
    se = register_module("se", SEBlock(channels, reduction));
  } else {
    conv = register_module("conv", conv3(channels, channels));
  }
}

torch::Tensor SkipGateImpl::forward(const torch::Tensor& f) {
  return use_se ? se(f) : conv(f);
}

MultiscaleInputImpl::MultiscaleInputImpl(int64_t in_channels_, int64_t k_)
    : in_channels(in_channels_), k(k_) {
  m_conv1 = register_module("m_conv1", conv3(in_channels, k, 2));
  m_conv2 = register_module("m_conv2", conv3(k, k, 2));
  m2_conv = register_module("m2_conv", conv3(in_channels, k, 2));
  m4_conv = register_module("m4_conv", conv3(in_channels, k, 1));
}

std::pair<torch::Tensor, torch::Tensor> MultiscaleInputImpl::forward_with_skip(
    const torch::Tensor& m) {
  check_image(m, in_channels, "MultiscaleInput");
  if (m.size(2) % 4 != 0 || m.size(3) % 4 != 0)
    throw ShapeError("MultiscaleInput: spatial size must be divisible by 4, got " +
                     std::to_string(m.size(2)) + "x" + std::to_string(m.size(3)));
  torch::Tensor m2 = downsample(m, 2);
  torch::Tensor m4 = downsample(m, 4);
  torch::Tensor half = torch::relu(m_conv1(m));
  torch::Tensor feat_m = torch::relu(m_conv2(half));
  torch::Tensor feat_m2 = torch::relu(m2_conv(m2));
  torch::Tensor feat_m4 = torch::relu(m4_conv(m4));
  return {torch::cat({feat_m, feat_m2 + feat_m4}, 1), half};
}

torch::Tensor MultiscaleInputImpl::forward(const torch::Tensor& m) {
  return forward_with_skip(m).first;
}

ResidualBlockImpl::ResidualBlockImpl(int64_t channels) {
  conv1 = register_module("conv1", conv3(channels, channels));
  norm1 = register_module("norm1",
                          torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(channels)));
  conv2 = register_module("conv2", conv3(channels, channels));
  norm2 = register_module("norm2",
                          torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(channels)));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
  torch::Tensor h = norm2(conv2(torch::relu(norm1(conv1(x)))));
  return x + h;
}

void GeneratorConfig::validate() const {
  if (depth < 2) throw ConfigError("generator depth must be at least 2");
  if (base_channels <= 0) throw ConfigError("base_channels must be positive");
  if (num_residual_blocks < 0) throw ConfigError("num_residual_blocks must be nonnegative");
  if (inter_decoder_skips && !use_dual_decoder)
    throw ConfigError("inter-decoder skips require the dual decoder");
  if (use_se_skips) {
    for (int64_t j = 0; j < depth; ++j) {
      int64_t w = level_width(base_channels, j);
      if (w % se_reduction != 0)
        throw ConfigError("level width " + std::to_string(w) +
                          " is not divisible by the SE reduction ratio " +
                          std::to_string(se_reduction));
    }
  }
}

TranslationGeneratorImpl::TranslationGeneratorImpl(GeneratorConfig cfg_) : cfg(cfg_) {
  cfg.validate();
  int64_t b = cfg.base_channels;
  stem = register_module("stem", conv3(cfg.in_channels, level_width(b, 0)));
  stem_norm = register_module(
      "stem_norm", torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(level_width(b, 0))));

  enc_stages = register_module("enc_stages", torch::nn::ModuleList());
  if (cfg.use_multiscale) {
    multiscale = register_module("multiscale", MultiscaleInput(cfg.in_channels, b));
    for (int64_t j = 3; j <= cfg.depth; ++j)
      enc_stages->push_back(conv_block(level_width(b, j - 1), level_width(b, j), 2));
  } else {
    for (int64_t j = 1; j <= cfg.depth; ++j)
      enc_stages->push_back(conv_block(level_width(b, j - 1), level_width(b, j), 2));
  }

  bottleneck = register_module("bottleneck", torch::nn::ModuleList());
  for (int64_t i = 0; i < cfg.num_residual_blocks; ++i)
    bottleneck->push_back(ResidualBlock(level_width(b, cfg.depth)));

  primary_dec = make_decoder("dec_primary", cfg.out_channels);
  if (cfg.use_dual_decoder) secondary_dec = make_decoder("dec_secondary", cfg.out_channels);

  inter_gates = register_module("inter_gates", torch::nn::ModuleList());
  if (cfg.inter_decoder_skips) {
    for (int64_t level = cfg.depth; level >= 1; --level)
      inter_gates->push_back(
          SkipGate(level_width(b, level - 1), cfg.use_se_skips, cfg.se_reduction));
  }
}

TranslationGeneratorImpl::Decoder TranslationGeneratorImpl::make_decoder(const char* name,
                                                                         int64_t out_channels) {
  int64_t b = cfg.base_channels;
  Decoder dec;
  dec.ups = register_module(std::string(name) + "_ups", torch::nn::ModuleList());
  dec.fusers = register_module(std::string(name) + "_fuse", torch::nn::ModuleList());
  dec.skip_gates = register_module(std::string(name) + "_gates", torch::nn::ModuleList());
  for (int64_t level = cfg.depth; level >= 1; --level) {
    int64_t wout = level_width(b, level - 1);
    dec.ups->push_back(up_block(level_width(b, level), wout));
    dec.fusers->push_back(conv_block(2 * wout, wout, 1));
    dec.skip_gates->push_back(SkipGate(wout, cfg.use_se_skips, cfg.se_reduction));
  }
  dec.head = register_module(std::string(name) + "_head", conv3(level_width(b, 0), out_channels));
  return dec;
}

std::vector<torch::Tensor> TranslationGeneratorImpl::encode(const torch::Tensor& x,
                                                            torch::Tensor& bottom) {
  check_input(x, cfg.in_channels, "TranslationGenerator");
  std::vector<torch::Tensor> skips;
  torch::Tensor stem_f = torch::relu(stem_norm(stem(x)));
  skips.push_back(stem_f);

  if (cfg.use_multiscale) {
    // The pyramid covers levels 1 and 2: its intermediate is the level-1 skip
    // and its fused output the level-2 feature. Each later stage's input is a
    // skip (levels 2 .. depth-1), its final output the bottleneck feature.
    auto [fused, half] = multiscale->forward_with_skip(x);
    skips.push_back(half);
    torch::Tensor cur = fused;
    for (size_t i = 0; i < enc_stages->size(); ++i) {
      skips.push_back(cur);
      cur = enc_stages[i]->as<torch::nn::Sequential>()->forward(cur);
    }
    bottom = cur;
  } else {
    torch::Tensor cur = stem_f;
    for (size_t i = 0; i < enc_stages->size(); ++i) {
      cur = enc_stages[i]->as<torch::nn::Sequential>()->forward(cur);
      if (i + 1 < enc_stages->size()) skips.push_back(cur);
    }
    bottom = cur;
  }
  return skips;
}

torch::Tensor TranslationGeneratorImpl::decode_level(Decoder& dec, int64_t idx,
                                                     const torch::Tensor& below,
                                                     const torch::Tensor& skip) {
  torch::Tensor up = dec.ups[static_cast<size_t>(idx)]->as<torch::nn::Sequential>()->forward(below);
  up = crop_to(up, skip.size(2), skip.size(3));
  torch::Tensor gated =
      dec.skip_gates[static_cast<size_t>(idx)]->as<SkipGate>()->forward(skip);
  return dec.fusers[static_cast<size_t>(idx)]->as<torch::nn::Sequential>()->forward(
      torch::cat({up, gated}, 1));
}

GeneratorOutput TranslationGeneratorImpl::forward_all(const torch::Tensor& x) {
  torch::Tensor bottom;
  std::vector<torch::Tensor> skips = encode(x, bottom);
  for (size_t i = 0; i < bottleneck->size(); ++i)
    bottom = bottleneck[i]->as<ResidualBlock>()->forward(bottom);

  GeneratorOutput out;
  std::vector<torch::Tensor> secondary_feats;
  if (cfg.use_dual_decoder) {
    torch::Tensor cur = bottom;
    for (int64_t i = 0; i < cfg.depth; ++i) {
      cur = decode_level(secondary_dec, i, cur, skips[static_cast<size_t>(cfg.depth - 1 - i)]);
      secondary_feats.push_back(cur);
    }
    out.secondary = torch::sigmoid(secondary_dec.head(cur));
    out.has_secondary = true;
  }

  torch::Tensor cur = bottom;
  for (int64_t i = 0; i < cfg.depth; ++i) {
    cur = decode_level(primary_dec, i, cur, skips[static_cast<size_t>(cfg.depth - 1 - i)]);
    if (cfg.inter_decoder_skips)
      cur = cur + inter_gates[static_cast<size_t>(i)]->as<SkipGate>()->forward(
                      secondary_feats[static_cast<size_t>(i)]);
  }
  out.primary = torch::sigmoid(primary_dec.head(cur));
  return out;
}

torch::Tensor TranslationGeneratorImpl::forward(const torch::Tensor& x) {
  return forward_all(x).primary;
}

void DiscriminatorConfig::validate() const {
  if (in_channels <= 0) throw ConfigError("discriminator in_channels must be positive");
  if (base_channels <= 0) throw ConfigError("discriminator base_channels must be positive");
  if (image_size < 32)
    throw ConfigError("discriminator image_size must be at least 32 for 5 conv layers, got " +
                      std::to_string(image_size));
}

DiscriminatorImpl::DiscriminatorImpl(DiscriminatorConfig cfg_) : cfg(cfg_) {
  cfg.validate();
  convs = register_module("convs", torch::nn::ModuleList());
  int64_t widths[6] = {cfg.in_channels, cfg.base_channels, 2 * cfg.base_channels,
                       4 * cfg.base_channels, 8 * cfg.base_channels, 8 * cfg.base_channels};
  int64_t n = cfg.image_size;
  for (int i = 0; i < 5; ++i) {
    convs->push_back(torch::nn::Conv2d(
        torch::nn::Conv2dOptions(widths[i], widths[i + 1], 4).stride(2).padding(1)));
    n = (n - 2) / 2 + 1;
    if (n < 1)
      throw ConfigError("discriminator image_size " + std::to_string(cfg.image_size) +
                        " collapses before 5 conv layers");
  }
  fc = register_module("fc", torch::nn::Linear(widths[5] * n * n, 1));
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& img) {
  check_image(img, cfg.in_channels, "Discriminator");
  if (img.size(2) != cfg.image_size || img.size(3) != cfg.image_size)
    throw ShapeError("Discriminator: expected " + std::to_string(cfg.image_size) + "x" +
                     std::to_string(cfg.image_size) + " input, got " + std::to_string(img.size(2)) +
                     "x" + std::to_string(img.size(3)));
  torch::Tensor h = img;
  for (size_t i = 0; i < convs->size(); ++i)
    h = torch::leaky_relu(convs[i]->as<torch::nn::Conv2d>()->forward(h), cfg.leaky_slope);
  return torch::sigmoid(fc(h.flatten(1)));
}

void UNetConfig::validate() const {
  if (in_channels <= 0 || num_classes < 2) throw ConfigError("UNet needs >= 2 classes");
  if (depth < 1 || depth > 6) throw ConfigError("UNet depth must be in [1, 6]");
  if (base_channels <= 0) throw ConfigError("UNet base_channels must be positive");
}

UNetSegmenterImpl::UNetSegmenterImpl(UNetConfig cfg_) : cfg(cfg_) {
  cfg.validate();
  auto width = [&](int64_t i) { return cfg.base_channels << std::min<int64_t>(i, 3); };
  enc_blocks = register_module("enc_blocks", torch::nn::ModuleList());
  downs = register_module("downs", torch::nn::ModuleList());
  ups = register_module("ups", torch::nn::ModuleList());
  dec_blocks = register_module("dec_blocks", torch::nn::ModuleList());

  enc_blocks->push_back(conv_block(cfg.in_channels, width(0), 1));
  for (int64_t i = 0; i < cfg.depth; ++i) {
    downs->push_back(conv_block(width(i), width(i + 1), 2));
    enc_blocks->push_back(conv_block(width(i + 1), width(i + 1), 1));
  }
  for (int64_t i = cfg.depth - 1; i >= 0; --i) {
    ups->push_back(up_block(width(i + 1), width(i)));
    dec_blocks->push_back(conv_block(2 * width(i), width(i), 1));
  }
  head = register_module("head",
                         torch::nn::Conv2d(torch::nn::Conv2dOptions(width(0), cfg.num_classes, 1)));
}

torch::Tensor UNetSegmenterImpl::forward(const torch::Tensor& c) {
  check_image(c, cfg.in_channels, "UNetSegmenter");
  int64_t min_side = int64_t{1} << cfg.depth;
  if (c.size(2) < min_side || c.size(3) < min_side)
    throw ShapeError("UNetSegmenter: input must be at least " + std::to_string(min_side) +
                     " per side for depth " + std::to_string(cfg.depth));
  std::vector<torch::Tensor> feats;
  torch::Tensor cur = enc_blocks[0]->as<torch::nn::Sequential>()->forward(c);
  for (int64_t i = 0; i < cfg.depth; ++i) {
    feats.push_back(cur);
    cur = downs[static_cast<size_t>(i)]->as<torch::nn::Sequential>()->forward(cur);
    cur = enc_blocks[static_cast<size_t>(i + 1)]->as<torch::nn::Sequential>()->forward(cur);
  }
  for (int64_t i = 0; i < cfg.depth; ++i) {
    const torch::Tensor& skip = feats[static_cast<size_t>(cfg.depth - 1 - i)];
    cur = ups[static_cast<size_t>(i)]->as<torch::nn::Sequential>()->forward(cur);
    cur = crop_to(cur, skip.size(2), skip.size(3));
    cur = dec_blocks[static_cast<size_t>(i)]->as<torch::nn::Sequential>()->forward(
        torch::cat({cur, skip}, 1));
  }
  return torch::softmax(head(cur), 1);
}

void init_weights(torch::nn::Module& module, uint64_t seed) {
  torch::NoGradGuard no_grad;
  torch::manual_seed(static_cast<int64_t>(seed));
  const double std = 0.02;
  for (auto& named : module.named_parameters()) {
    torch::Tensor& t = named.value();
    if (named.key().find("bias") != std::string::npos) {
      t.zero_();
      continue;
    }
    t.normal_(0.0, std);
    // Resample the tails so the result is a truncated normal, not a clip.
    for (int pass = 0; pass < 8; ++pass) {
      torch::Tensor mask = t.abs() > 2.0 * std;
      if (!mask.any().item<bool>()) break;
      torch::Tensor redraw = torch::empty_like(t).normal_(0.0, std);
      t.copy_(torch::where(mask, redraw, t));
    }
    t.clamp_(-2.0 * std, 2.0 * std);
  }
}

int64_t count_conv_layers(const torch::nn::Module& module) {
  int64_t count = 0;
  for (const auto& m : module.modules(/*include_self=*/false))
    if (m->as<torch::nn::Conv2d>() != nullptr) ++count;
  return count;
}

int64_t count_se_blocks(const torch::nn::Module& module) {
  int64_t count = 0;
  for (const auto& m : module.modules(/*include_self=*/false))
    if (m->as<SEBlock>() != nullptr) ++count;
  return count;
}

int64_t parameter_count(const torch::nn::Module& module) {
  int64_t count = 0;
  for (const auto& p : module.parameters()) count += p.numel();
  return count;
}

}  // namespace mricolor::nets
