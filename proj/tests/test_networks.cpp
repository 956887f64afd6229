#include "mricolor/nets.hpp"

#include <map>
#include <set>
#include <string>

#include "mricolor/errors.hpp"
#include "testing.hpp"

using namespace mricolor;
using namespace mricolor::nets;

namespace {

GeneratorConfig small_gen_cfg() {
  GeneratorConfig cfg;
  cfg.base_channels = 8;
  cfg.depth = 3;
  cfg.num_residual_blocks = 2;
  return cfg;
}

}  // namespace

TEST_CASE("se block zero input and saturated gate") {
  SEBlock se(16, 8);
  init_weights(*se, 11);
  auto zeros = torch::zeros({2, 16, 5, 5});
  CHECK(se(zeros).abs().max().item<double>() == 0.0);

  {
    torch::NoGradGuard g;
    se->fc2->bias.fill_(50.0);  // saturate the sigmoid so every gate is ~1
  }
  auto f = torch::rand({1, 16, 6, 6});
  CHECK((se(f) - f).abs().max().item<double>() < 1e-6);
}

TEST_CASE("se block scales each channel by a single factor in (0,1)") {
  SEBlock se(16, 8);
  init_weights(*se, 12);
  torch::manual_seed(5);
  auto f = torch::randn({2, 16, 7, 7});
  auto out = se(f);
  CHECK((out.abs() <= f.abs() + 1e-7).all().item<bool>());
  for (int64_t n = 0; n < 2; ++n) {
    for (int64_t ch = 0; ch < 16; ++ch) {
      auto fi = f[n][ch].flatten();
      auto oi = out[n][ch].flatten();
      auto mask = fi.abs() > 1e-3;
      auto ratio = oi.masked_select(mask) / fi.masked_select(mask);
      REQUIRE(ratio.numel() > 0);
      CHECK((ratio.max() - ratio.min()).item<double>() < 1e-5);
      CHECK(ratio.min().item<double>() > 0.0);
      CHECK(ratio.max().item<double>() < 1.0);
    }
  }
}

TEST_CASE("se block rejects bad channel configs and inputs") {
  CHECK_THROWS_AS(SEBlock(12, 8), ConfigError);
  CHECK_THROWS_AS(SEBlock(0, 8), ConfigError);
  SEBlock se(16, 8);
  CHECK_THROWS_AS(se(torch::rand({1, 8, 4, 4})), ShapeError);
  CHECK_THROWS_AS(se(torch::rand({16, 4, 4})), ShapeError);
}

TEST_CASE("multiscale module shape contract at both paper scales") {
  MultiscaleInput ms(1, 64);
  init_weights(*ms, 21);
  torch::NoGradGuard g;
  auto big = ms(torch::rand({1, 1, 256, 256}));
  CHECK(big.sizes() == torch::IntArrayRef({1, 128, 64, 64}));
  auto small = ms(torch::rand({1, 1, 64, 64}));
  CHECK(small.sizes() == torch::IntArrayRef({1, 128, 16, 16}));
  CHECK_THROWS_AS(ms(torch::rand({1, 1, 30, 30})), ShapeError);
}

TEST_CASE("multiscale fusion sums the m2 and m4 paths into the upper channels") {
  const int64_t k = 4;
  MultiscaleInput ms(1, k);
  {
    torch::NoGradGuard g;
    for (auto& p : ms->parameters()) p.zero_();
    ms->m2_conv->bias.fill_(0.3);
  }
  auto m = torch::rand({1, 1, 32, 32});
  auto out = ms(m);
  // All weights zero: the lower channels carry only the m-path bias (zero),
  // the upper ones only the m2-path bias map.
  CHECK(out.narrow(1, 0, k).abs().max().item<double>() == 0.0);
  CHECK((out.narrow(1, k, k) - 0.3).abs().max().item<double>() < 1e-7);
  {
    torch::NoGradGuard g;
    ms->m4_conv->bias.fill_(0.5);
  }
  out = ms(m);
  CHECK((out.narrow(1, k, k) - 0.8).abs().max().item<double>() < 1e-7);
  {
    torch::NoGradGuard g;
    ms->m_conv2->bias.fill_(0.1);
  }
  out = ms(m);
  CHECK((out.narrow(1, 0, k) - 0.1).abs().max().item<double>() < 1e-7);
}

TEST_CASE("generator produces both decoders' outputs at the input size") {
  TranslationGenerator gen(small_gen_cfg());
  init_weights(*gen, 31);
  torch::NoGradGuard g;
  for (int64_t size : {32, 48, 36}) {
    auto out = gen->forward_all(torch::rand({1, 1, size, size}));
    CHECK(out.primary.sizes() == torch::IntArrayRef({1, 3, size, size}));
    REQUIRE(out.has_secondary);
    CHECK(out.secondary.sizes() == torch::IntArrayRef({1, 3, size, size}));
    CHECK(out.primary.min().item<double>() >= 0.0);
    CHECK(out.primary.max().item<double>() <= 1.0);
  }
}

TEST_CASE("single-decoder generator is smaller and has no secondary output") {
  auto cfg = small_gen_cfg();
  TranslationGenerator dual(cfg);
  cfg.use_dual_decoder = false;
  cfg.inter_decoder_skips = false;
  TranslationGenerator single(cfg);
  torch::NoGradGuard g;
  auto out = single->forward_all(torch::rand({1, 1, 32, 32}));
  CHECK_FALSE(out.has_secondary);
  CHECK_FALSE(out.secondary.defined());
  CHECK(parameter_count(*single) < parameter_count(*dual));
}

TEST_CASE("generator forward is batching equivariant and deterministic") {
  TranslationGenerator gen(small_gen_cfg());
  init_weights(*gen, 32);
  gen->eval();
  torch::NoGradGuard g;
  torch::manual_seed(7);
  auto batch = torch::rand({2, 1, 32, 32});
  auto full = gen->forward_all(batch);
  auto one = gen->forward_all(batch.narrow(0, 0, 1));
  auto two = gen->forward_all(batch.narrow(0, 1, 1));
  CHECK((full.primary[0] - one.primary[0]).abs().max().item<double>() < 1e-5);
  CHECK((full.primary[1] - two.primary[0]).abs().max().item<double>() < 1e-5);
  CHECK((full.secondary[0] - one.secondary[0]).abs().max().item<double>() < 1e-5);

  auto again = gen->forward_all(batch);
  CHECK((full.primary - again.primary).abs().max().item<double>() == 0.0);
}

TEST_CASE("se block census follows the ablation flags") {
  auto cfg = small_gen_cfg();
  CHECK(count_se_blocks(*TranslationGenerator(cfg)) == 3 * cfg.depth);

  auto no_inter = cfg;
  no_inter.inter_decoder_skips = false;
  CHECK(count_se_blocks(*TranslationGenerator(no_inter)) == 2 * cfg.depth);

  auto single = cfg;
  single.use_dual_decoder = false;
  single.inter_decoder_skips = false;
  CHECK(count_se_blocks(*TranslationGenerator(single)) == cfg.depth);

  auto plain = cfg;
  plain.use_se_skips = false;
  CHECK(count_se_blocks(*TranslationGenerator(plain)) == 0);

  CHECK_THROWS_AS(
      [] {
        auto bad = small_gen_cfg();
        bad.use_dual_decoder = false;
        bad.inter_decoder_skips = true;
        return TranslationGenerator(bad);
      }(),
      ConfigError);
}

TEST_CASE("reverse generator maps color to one channel at both scales") {
  auto cfg = small_gen_cfg();
  cfg.in_channels = 3;
  cfg.out_channels = 1;
  cfg.use_dual_decoder = false;
  cfg.inter_decoder_skips = false;
  TranslationGenerator rev(cfg);
  init_weights(*rev, 33);
  torch::NoGradGuard g;
  auto out = rev(torch::rand({1, 3, 128, 128}));
  CHECK(out.sizes() == torch::IntArrayRef({1, 1, 128, 128}));
  auto out64 = rev(torch::rand({2, 3, 64, 64}));
  CHECK(out64.sizes() == torch::IntArrayRef({2, 1, 64, 64}));
  CHECK_THROWS_AS(rev(torch::rand({1, 1, 64, 64})), ShapeError);
}

TEST_CASE("every generator layer group receives gradient at initialization") {
  TranslationGenerator gen(small_gen_cfg());
  init_weights(*gen, 34);
  auto out = gen->forward_all(torch::rand({1, 1, 32, 32}));
  (out.primary.sum() + out.secondary.sum()).backward();

  std::map<std::string, double> group_norms;
  for (auto& named : gen->named_parameters()) {
    std::string group = named.key().substr(0, named.key().find('.'));
    double n = named.value().grad().defined()
                   ? named.value().grad().abs().sum().item<double>()
                   : 0.0;
    group_norms[group] += n;
  }
  std::set<std::string> expected = {"stem",         "multiscale",    "enc_stages",
                                    "bottleneck",   "dec_primary_ups", "dec_primary_fuse",
                                    "dec_primary_gates", "dec_primary_head",
                                    "dec_secondary_ups", "dec_secondary_fuse",
                                    "dec_secondary_gates", "dec_secondary_head", "inter_gates"};
  for (const auto& name : expected) {
    INFO(name);
    REQUIRE(group_norms.count(name) == 1);
    CHECK(group_norms[name] > 0.0);
  }
}

TEST_CASE("discriminator yields one bounded score per item") {
  DiscriminatorConfig cfg;
  cfg.in_channels = 3;
  cfg.base_channels = 8;
  cfg.image_size = 32;
  Discriminator d(cfg);
  init_weights(*d, 41);
  torch::NoGradGuard g;
  auto score = d(torch::rand({3, 3, 32, 32}));
  CHECK(score.sizes() == torch::IntArrayRef({3, 1}));
  CHECK(score.min().item<double>() > 0.0);
  CHECK(score.max().item<double>() < 1.0);
}

TEST_CASE("zero-weight discriminator scores exactly one half") {
  DiscriminatorConfig cfg;
  cfg.in_channels = 1;
  cfg.base_channels = 4;
  cfg.image_size = 32;
  Discriminator d(cfg);
  {
    torch::NoGradGuard g;
    for (auto& p : d->parameters()) p.zero_();
  }
  torch::NoGradGuard g;
  auto score = d(torch::rand({2, 1, 32, 32}));
  CHECK((score - 0.5).abs().max().item<double>() == 0.0);
}

TEST_CASE("discriminator has exactly five conv layers and guards its input") {
  DiscriminatorConfig cfg;
  cfg.base_channels = 4;
  cfg.image_size = 32;
  Discriminator d(cfg);
  CHECK(count_conv_layers(*d) == 5);
  CHECK_THROWS_AS(d(torch::rand({1, 1, 32, 32})), ShapeError);
  CHECK_THROWS_AS(d(torch::rand({1, 3, 64, 64})), ShapeError);
  auto bad = cfg;
  bad.image_size = 16;
  CHECK_THROWS_AS(Discriminator{bad}, ConfigError);
}

TEST_CASE("segmenter emits a per-pixel probability simplex") {
  UNetConfig cfg;
  cfg.num_classes = 5;
  cfg.depth = 3;
  cfg.base_channels = 8;
  UNetSegmenter seg(cfg);
  init_weights(*seg, 51);
  torch::NoGradGuard g;
  auto probs = seg(torch::rand({2, 3, 32, 32}));
  CHECK(probs.sizes() == torch::IntArrayRef({2, 5, 32, 32}));
  CHECK((probs.sum(1) - 1.0).abs().max().item<double>() < 1e-6);
  CHECK(probs.min().item<double>() >= 0.0);

  auto labels = probs.argmax(1);
  CHECK(labels.min().item<int64_t>() >= 0);
  CHECK(labels.max().item<int64_t>() < 5);

  CHECK_THROWS_AS(seg(torch::rand({1, 1, 32, 32})), ShapeError);
  CHECK_THROWS_AS(seg(torch::rand({1, 3, 4, 4})), ShapeError);
}

TEST_CASE("weight init truncates, zeroes biases and follows the seed") {
  TranslationGenerator a(small_gen_cfg());
  TranslationGenerator b(small_gen_cfg());
  init_weights(*a, 99);
  init_weights(*b, 99);
  for (auto& named : a->named_parameters()) {
    auto other = b->named_parameters()[named.key()];
    CHECK((named.value() - other).abs().max().item<double>() == 0.0);
    if (named.key().find("bias") != std::string::npos) {
      CHECK(named.value().abs().max().item<double>() == 0.0);
    } else {
      CHECK(named.value().abs().max().item<double>() <= 0.04 + 1e-8);
      CHECK(named.value().abs().max().item<double>() > 0.0);
    }
  }
  TranslationGenerator c(small_gen_cfg());
  init_weights(*c, 100);
  bool any_diff = false;
  for (auto& named : a->named_parameters()) {
    if (named.key().find("bias") != std::string::npos) continue;
    if ((named.value() - c->named_parameters()[named.key()]).abs().max().item<double>() > 0)
      any_diff = true;
  }
  CHECK(any_diff);
}
