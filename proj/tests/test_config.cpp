#include "mricolor/config.hpp"

#include <fstream>

#include "mricolor/errors.hpp"
#include "testing.hpp"

using namespace mricolor;
using namespace mricolor::config;

namespace {

std::string msg_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("default config serializes and re-parses to the same canonical text") {
  auto cfg = default_config();
  auto text = config_json(cfg);
  auto back = parse_config(text);
  CHECK(config_json(back) == text);
  CHECK(back.phantom.image_size == 256);
  CHECK(back.train.epochs == 150);
  CHECK(back.train.batch_size == 28);
  CHECK(back.train.lr_generators == 1e-3);
  CHECK(back.train.lr_discriminators == 1e-4);
  CHECK(back.train.lr_segmenter_pretrain == 1e-6);
  CHECK(back.train.beta1 == 0.5);
  CHECK(back.ablation.name() == "full");
}

TEST_CASE("parse reads every section including nested weights") {
  auto cfg = parse_config(R"({
    "data": {"image_size": 64, "num_classes": 4, "n_train": 10, "n_test": 2, "seed": 9},
    "model": {"base_channels": 16, "depth": 2, "num_residual_blocks": 1, "se_reduction": 4,
              "use_multiscale": false, "disc_base_channels": 8, "seg_depth": 3, "seg_base_channels": 8},
    "train": {"epochs": 5, "batch_size": 4, "weights": {"cyc": 2.0, "ssim": 0.5, "seg": 0.25},
              "seed": 3, "checkpoint_every": 7},
    "ablation": "A5"
  })");
  CHECK(cfg.phantom.image_size == 64);
  CHECK(cfg.phantom.num_classes == 4);
  CHECK(cfg.phantom.seed == 9);
  CHECK(cfg.n_train == 10);
  CHECK(cfg.n_test == 2);
  CHECK(cfg.model.base_channels == 16);
  CHECK_FALSE(cfg.model.use_multiscale);
  CHECK(cfg.train.epochs == 5);
  CHECK(cfg.train.weights.cyc == 2.0);
  CHECK(cfg.train.weights.ssim == 0.5);
  CHECK(cfg.train.weights.seg == 0.25);
  CHECK(cfg.train.checkpoint_every == 7);
  CHECK(cfg.ablation.disable_se_blocks);
  CHECK(cfg.ablation.name() == "A5");
}

TEST_CASE("unknown keys are rejected with their dotted path") {
  CHECK(msg_of([] { parse_config(R"({"bogus": 1})"); }).find("bogus") != std::string::npos);
  CHECK(msg_of([] {
          parse_config(R"({"data": {"image_sizes": 64}})");
        }).find("data.image_sizes") != std::string::npos);
  CHECK(msg_of([] {
          parse_config(R"({"train": {"weights": {"cycle": 1.0}}})");
        }).find("train.weights.cycle") != std::string::npos);
  CHECK_THROWS_AS(parse_config(R"({"train": {"momentum": 0.9}})"), ConfigError);
}

TEST_CASE("type violations and malformed JSON name the offending key") {
  CHECK(msg_of([] {
          parse_config(R"({"data": {"image_size": "big"}})");
        }).find("data.image_size") != std::string::npos);
  CHECK_THROWS_AS(parse_config("not json at all"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"([1, 2, 3])"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"train": 5})"), ConfigError);
}

TEST_CASE("ablation names round-trip and unknown names are refused") {
  for (const auto* name : {"full", "A1", "A2", "A3", "A4", "A5"}) {
    CHECK(AblationFlags::from_name(name).name() == name);
  }
  CHECK_THROWS_AS(AblationFlags::from_name("A6"), ConfigError);
  CHECK_THROWS_AS(AblationFlags::from_name(""), ConfigError);

  AblationFlags two;
  two.disable_cycle_rec = true;
  two.disable_se_blocks = true;
  CHECK_THROWS_AS(two.validate(), ConfigError);
  CHECK_THROWS_AS(two.name(), ConfigError);
}

TEST_CASE("derive maps each ablation onto the documented model effects") {
  auto full = derive(AblationFlags::from_name("full"));
  CHECK(full.use_rec);
  CHECK(full.use_seg);
  CHECK(full.dual_decoder);
  CHECK(full.se_blocks);
  CHECK(full.needs_segmenter);
  CHECK_FALSE(full.seg_on_rec);

  auto a1 = derive(AblationFlags::from_name("A1"));
  CHECK_FALSE(a1.use_rec);
  CHECK(a1.use_seg);
  CHECK(a1.dual_decoder);

  auto a2 = derive(AblationFlags::from_name("A2"));
  CHECK(a2.use_rec);
  CHECK_FALSE(a2.use_seg);
  CHECK(a2.dual_decoder);  // only the loss drops; the decoder stays
  CHECK_FALSE(a2.needs_segmenter);

  auto a3 = derive(AblationFlags::from_name("A3"));
  CHECK_FALSE(a3.use_seg);
  CHECK_FALSE(a3.dual_decoder);
  CHECK_FALSE(a3.needs_segmenter);

  auto a4 = derive(AblationFlags::from_name("A4"));
  CHECK(a4.use_seg);
  CHECK(a4.seg_on_rec);
  CHECK_FALSE(a4.dual_decoder);
  CHECK(a4.needs_segmenter);
  CHECK(a4.use_rec);

  auto a5 = derive(AblationFlags::from_name("A5"));
  CHECK_FALSE(a5.se_blocks);
  CHECK(a5.dual_decoder);
  CHECK(a5.use_seg);
}

TEST_CASE("generator configs follow the ablation") {
  auto cfg = default_config();
  cfg.ablation = AblationFlags::from_name("A3");
  auto g3 = cfg.forward_generator_config();
  CHECK_FALSE(g3.use_dual_decoder);
  CHECK_FALSE(g3.inter_decoder_skips);
  CHECK(g3.use_se_skips);

  cfg.ablation = AblationFlags::from_name("A5");
  auto g5 = cfg.forward_generator_config();
  CHECK(g5.use_dual_decoder);
  CHECK_FALSE(g5.use_se_skips);

  cfg.ablation = AblationFlags{};
  auto fwd = cfg.forward_generator_config();
  CHECK(fwd.in_channels == 1);
  CHECK(fwd.out_channels == 3);
  CHECK(fwd.use_dual_decoder);
  CHECK(fwd.inter_decoder_skips);

  auto rev = cfg.reverse_generator_config();
  CHECK(rev.in_channels == 3);
  CHECK(rev.out_channels == 1);
  CHECK_FALSE(rev.use_dual_decoder);
  CHECK_FALSE(rev.inter_decoder_skips);
  CHECK(rev.use_multiscale == cfg.model.use_multiscale);
}

TEST_CASE("apply_override handles numbers, bools, bare strings and nesting") {
  auto base = config_json(default_config());
  auto cfg = parse_config(apply_override(base, "train.epochs=7"));
  CHECK(cfg.train.epochs == 7);
  cfg = parse_config(apply_override(base, "model.use_multiscale=false"));
  CHECK_FALSE(cfg.model.use_multiscale);
  cfg = parse_config(apply_override(base, "train.weights.ssim=2.5"));
  CHECK(cfg.train.weights.ssim == 2.5);
  cfg = parse_config(apply_override(base, "ablation=A3"));
  CHECK(cfg.ablation.name() == "A3");

  auto chained = apply_override(apply_override(base, "data.image_size=64"), "data.n_train=12");
  cfg = parse_config(chained);
  CHECK(cfg.phantom.image_size == 64);
  CHECK(cfg.n_train == 12);

  CHECK_THROWS_AS(parse_config(apply_override(base, "zap.x=1")), ConfigError);
  CHECK_THROWS_AS(apply_override(base, "noequals"), ConfigError);
  CHECK_THROWS_AS(apply_override(base, "=5"), ConfigError);
}

TEST_CASE("validate rejects out-of-range fields") {
  auto with = [](const std::string& override_kv) {
    return parse_config(apply_override(config_json(default_config()), override_kv));
  };
  CHECK_THROWS_AS(with("train.device=cuda"), ConfigError);
  CHECK_THROWS_AS(with("train.batch_size=0"), ConfigError);
  CHECK_THROWS_AS(with("train.epochs=0"), ConfigError);
  CHECK_THROWS_AS(with("train.beta1=1.0"), ConfigError);
  CHECK_THROWS_AS(with("train.seg_target_accuracy=0"), ConfigError);
  CHECK_THROWS_AS(with("train.lr_generators=0"), ConfigError);
  CHECK_THROWS_AS(with("train.weights.cyc=-1"), ConfigError);
  CHECK_THROWS_AS(with("data.image_size=48"), ConfigError);  // not a power of two
  CHECK_THROWS_AS(with("model.depth=1"), ConfigError);
  CHECK_NOTHROW(with("data.image_size=64"));
}

TEST_CASE("load_config_file reads a file and reports a missing one") {
  testutil::TempDir tmp("config_file");
  auto path = tmp.path() / "run.json";
  std::ofstream(path) << config_json(default_config());
  auto cfg = load_config_file(path);
  CHECK(cfg.train.epochs == 150);
  CHECK_THROWS_AS(load_config_file(tmp.path() / "absent.json"), ConfigError);
}

TEST_CASE("architecture fingerprint tracks shape-relevant fields only") {
  auto a = default_config();
  auto b = default_config();
  CHECK(arch_fingerprint(a) == arch_fingerprint(b));

  b.train.epochs = 999;
  b.train.lr_generators = 0.5;
  b.train.batch_size = 2;
  b.train.seed = 12345;
  CHECK(arch_fingerprint(a) == arch_fingerprint(b));  // schedule is not architecture

  b = default_config();
  b.model.depth = 4;
  CHECK(arch_fingerprint(a) != arch_fingerprint(b));

  b = default_config();
  b.ablation = AblationFlags::from_name("A3");
  CHECK(arch_fingerprint(a) != arch_fingerprint(b));

  b = default_config();
  b.phantom.image_size = 64;
  CHECK(arch_fingerprint(a) != arch_fingerprint(b));
}

TEST_CASE("segmenter fingerprint ignores the ablation but not its own shape") {
  auto a = default_config();
  auto b = default_config();
  b.ablation = AblationFlags::from_name("A4");
  b.model.base_channels = 16;  // generator shape is irrelevant to the segmenter
  b.train.epochs = 3;
  CHECK(seg_fingerprint(a) == seg_fingerprint(b));

  b.model.seg_depth = 3;
  CHECK(seg_fingerprint(a) != seg_fingerprint(b));
  b = default_config();
  b.phantom.num_classes = 5;
  CHECK(seg_fingerprint(a) != seg_fingerprint(b));
}
