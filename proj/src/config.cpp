#include "mricolor/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mricolor/errors.hpp"
#include "mricolor/rng.hpp"

namespace mricolor::config {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

[[noreturn]] void bad(const std::string& path, const std::string& what) {
  throw ConfigError("config: " + path + ": " + what);
}

void check_known(const json& j, const std::set<std::string>& allowed, const std::string& path) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) {
      bad(path.empty() ? it.key() : path + "." + it.key(), "unknown key");
    }
  }
}

const json* section(const json& j, const char* key, const std::string& path) {
  if (!j.contains(key)) return nullptr;
  const json& s = j.at(key);
  if (!s.is_object()) bad(path, "expected an object");
  return &s;
}

template <typename T>
void assign(const json& j, const char* key, T& out, const std::string& path) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    bad(path.empty() ? key : path + "." + std::string(key), e.what());
  }
}

}  // namespace

void AblationFlags::validate() const {
  int set = static_cast<int>(disable_cycle_rec) + static_cast<int>(disable_seg_loss) +
            static_cast<int>(disable_seg_and_pseudo) + static_cast<int>(seg_on_reconstructed_cryo) +
            static_cast<int>(disable_se_blocks);
  if (set > 1) {
    throw ConfigError("config: ablation flags are mutually exclusive, but " + std::to_string(set) +
                      " are set");
  }
}

std::string AblationFlags::name() const {
  validate();
  if (disable_cycle_rec) return "A1";
  if (disable_seg_loss) return "A2";
  if (disable_seg_and_pseudo) return "A3";
  if (seg_on_reconstructed_cryo) return "A4";
  if (disable_se_blocks) return "A5";
  return "full";
}

AblationFlags AblationFlags::from_name(const std::string& name) {
  AblationFlags f;
  if (name == "full") return f;
  if (name == "A1") {
    f.disable_cycle_rec = true;
  } else if (name == "A2") {
    f.disable_seg_loss = true;
  } else if (name == "A3") {
    f.disable_seg_and_pseudo = true;
  } else if (name == "A4") {
    f.seg_on_reconstructed_cryo = true;
  } else if (name == "A5") {
    f.disable_se_blocks = true;
  } else {
    throw ConfigError("config: unknown ablation \"" + name + "\"; expected full or A1..A5");
  }
  return f;
}

DerivedAblation derive(const AblationFlags& flags) {
  flags.validate();
  DerivedAblation d;
  if (flags.disable_cycle_rec) d.use_rec = false;
  if (flags.disable_seg_loss) d.use_seg = false;
  if (flags.disable_seg_and_pseudo) {
    d.use_seg = false;
    d.dual_decoder = false;
  }
  if (flags.seg_on_reconstructed_cryo) {
    d.dual_decoder = false;
    d.seg_on_rec = true;
  }
  if (flags.disable_se_blocks) d.se_blocks = false;
  d.needs_segmenter = d.use_seg;
  return d;
}

void RunConfig::validate() const {
  ablation.validate();
  phantom.resolved().validate();
  if (n_train < 1) throw ConfigError("config: data.n_train must be >= 1");
  if (n_test < 1) throw ConfigError("config: data.n_test must be >= 1");

  forward_generator_config().validate();
  reverse_generator_config().validate();
  discriminator_config(3).validate();
  discriminator_config(1).validate();
  auto seg = segmenter_config();
  seg.validate();
  auto d = derive(ablation);
  if (d.needs_segmenter && phantom.image_size < (int64_t{1} << model.seg_depth)) {
    throw ConfigError("config: image_size " + std::to_string(phantom.image_size) +
                      " is below the segmenter's minimum of 2^depth = " +
                      std::to_string(int64_t{1} << model.seg_depth));
  }

  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw ConfigError(std::string("config: train.") + name + " must be > 0");
  };
  positive(train.lr_generators, "lr_generators");
  positive(train.lr_discriminators, "lr_discriminators");
  positive(train.lr_segmenter_pretrain, "lr_segmenter_pretrain");
  if (!(train.beta1 >= 0.0 && train.beta1 < 1.0) || !(train.beta2 >= 0.0 && train.beta2 < 1.0)) {
    throw ConfigError("config: train.beta1/beta2 must lie in [0, 1)");
  }
  if (train.epochs < 1) throw ConfigError("config: train.epochs must be >= 1");
  if (train.batch_size < 1) throw ConfigError("config: train.batch_size must be >= 1");
  if (train.checkpoint_every < 1) throw ConfigError("config: train.checkpoint_every must be >= 1");
  if (train.seg_epochs < 1) throw ConfigError("config: train.seg_epochs must be >= 1");
  if (!(train.seg_target_accuracy > 0.0 && train.seg_target_accuracy <= 1.0)) {
    throw ConfigError("config: train.seg_target_accuracy must lie in (0, 1]");
  }
  if (train.weights.cyc < 0.0 || train.weights.ssim < 0.0 || train.weights.seg < 0.0) {
    throw ConfigError("config: train.weights must be >= 0");
  }
  if (train.device != "cpu") {
    throw ConfigError("config: train.device \"" + train.device + "\" unsupported; this build is CPU only");
  }
}

nets::GeneratorConfig RunConfig::forward_generator_config() const {
  auto d = derive(ablation);
  nets::GeneratorConfig g;
  g.in_channels = 1;
  g.out_channels = 3;
  g.base_channels = model.base_channels;
  g.depth = model.depth;
  g.num_residual_blocks = model.num_residual_blocks;
  g.use_multiscale = model.use_multiscale;
  g.use_dual_decoder = d.dual_decoder;
  g.use_se_skips = d.se_blocks;
  g.inter_decoder_skips = d.dual_decoder;
  g.se_reduction = model.se_reduction;
  return g;
}

nets::GeneratorConfig RunConfig::reverse_generator_config() const {
  auto g = forward_generator_config();
  g.in_channels = 3;
  g.out_channels = 1;
  g.use_dual_decoder = false;
  g.inter_decoder_skips = false;
  return g;
}

nets::DiscriminatorConfig RunConfig::discriminator_config(int64_t in_channels) const {
  nets::DiscriminatorConfig d;
  d.in_channels = in_channels;
  d.base_channels = model.disc_base_channels;
  d.image_size = phantom.image_size;
  return d;
}

nets::UNetConfig RunConfig::segmenter_config() const {
  nets::UNetConfig u;
  u.in_channels = 3;
  u.num_classes = phantom.num_classes;
  u.depth = model.seg_depth;
  u.base_channels = model.seg_base_channels;
  return u;
}

RunConfig default_config() { return RunConfig{}; }

RunConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  check_known(j, {"data", "model", "train", "ablation"}, "");

  RunConfig cfg = default_config();
  if (const json* d = section(j, "data", "data")) {
    check_known(*d,
                {"image_size", "num_classes", "organ_count_min", "organ_count_max", "noise_sigma",
                 "deformation_amplitude", "n_train", "n_test", "seed"},
                "data");
    assign(*d, "image_size", cfg.phantom.image_size, "data");
    assign(*d, "num_classes", cfg.phantom.num_classes, "data");
    assign(*d, "organ_count_min", cfg.phantom.organ_count_min, "data");
    assign(*d, "organ_count_max", cfg.phantom.organ_count_max, "data");
    assign(*d, "noise_sigma", cfg.phantom.noise_sigma, "data");
    assign(*d, "deformation_amplitude", cfg.phantom.deformation_amplitude, "data");
    assign(*d, "n_train", cfg.n_train, "data");
    assign(*d, "n_test", cfg.n_test, "data");
    assign(*d, "seed", cfg.phantom.seed, "data");
  }
  if (const json* m = section(j, "model", "model")) {
    check_known(*m,
                {"base_channels", "depth", "num_residual_blocks", "se_reduction", "use_multiscale",
                 "disc_base_channels", "seg_depth", "seg_base_channels"},
                "model");
    assign(*m, "base_channels", cfg.model.base_channels, "model");
    assign(*m, "depth", cfg.model.depth, "model");
    assign(*m, "num_residual_blocks", cfg.model.num_residual_blocks, "model");
    assign(*m, "se_reduction", cfg.model.se_reduction, "model");
    assign(*m, "use_multiscale", cfg.model.use_multiscale, "model");
    assign(*m, "disc_base_channels", cfg.model.disc_base_channels, "model");
    assign(*m, "seg_depth", cfg.model.seg_depth, "model");
    assign(*m, "seg_base_channels", cfg.model.seg_base_channels, "model");
  }
  if (const json* t = section(j, "train", "train")) {
    check_known(*t,
                {"lr_generators", "lr_discriminators", "lr_segmenter_pretrain", "beta1", "beta2",
                 "epochs", "batch_size", "checkpoint_every", "seg_epochs", "seg_target_accuracy",
                 "weights", "seed", "device", "unfreeze_segmenter", "cprime_to_disc"},
                "train");
    assign(*t, "lr_generators", cfg.train.lr_generators, "train");
    assign(*t, "lr_discriminators", cfg.train.lr_discriminators, "train");
    assign(*t, "lr_segmenter_pretrain", cfg.train.lr_segmenter_pretrain, "train");
    assign(*t, "beta1", cfg.train.beta1, "train");
    assign(*t, "beta2", cfg.train.beta2, "train");
    assign(*t, "epochs", cfg.train.epochs, "train");
    assign(*t, "batch_size", cfg.train.batch_size, "train");
    assign(*t, "checkpoint_every", cfg.train.checkpoint_every, "train");
    assign(*t, "seg_epochs", cfg.train.seg_epochs, "train");
    assign(*t, "seg_target_accuracy", cfg.train.seg_target_accuracy, "train");
    if (const json* w = section(*t, "weights", "train.weights")) {
      check_known(*w, {"cyc", "ssim", "seg"}, "train.weights");
      assign(*w, "cyc", cfg.train.weights.cyc, "train.weights");
      assign(*w, "ssim", cfg.train.weights.ssim, "train.weights");
      assign(*w, "seg", cfg.train.weights.seg, "train.weights");
    }
    assign(*t, "seed", cfg.train.seed, "train");
    assign(*t, "device", cfg.train.device, "train");
    assign(*t, "unfreeze_segmenter", cfg.train.unfreeze_segmenter, "train");
    assign(*t, "cprime_to_disc", cfg.train.cprime_to_disc, "train");
  }
  if (j.contains("ablation")) {
    std::string name;
    assign(j, "ablation", name, "");
    cfg.ablation = AblationFlags::from_name(name);
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string apply_override(const std::string& json_text, const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("config: override must look like dotted.key=value, got \"" + assignment +
                      "\"");
  }
  std::string key = assignment.substr(0, eq);
  std::string value = assignment.substr(eq + 1);
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON input to override: ") + e.what());
  }
  std::string pointer = "/" + key;
  for (auto& ch : pointer) {
    if (ch == '.') ch = '/';
  }
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    parsed = value;  // bare words are strings, e.g. ablation=A3
  }
  try {
    j[json::json_pointer(pointer)] = parsed;
  } catch (const json::exception& e) {
    throw ConfigError("config: cannot apply override \"" + assignment + "\": " + e.what());
  }
  // round-trip through the schema so bad keys or types fail here, with the
  // offending assignment in hand, and the output stays canonical
  try {
    return config_json(parse_config(j.dump()));
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(e.what()) + " (override \"" + assignment + "\")");
  }
}

std::string config_json(const RunConfig& cfg) {
  ordered_json j;
  j["data"] = {{"image_size", cfg.phantom.image_size},
               {"num_classes", cfg.phantom.num_classes},
               {"organ_count_min", cfg.phantom.organ_count_min},
               {"organ_count_max", cfg.phantom.organ_count_max},
               {"noise_sigma", cfg.phantom.noise_sigma},
               {"deformation_amplitude", cfg.phantom.deformation_amplitude},
               {"n_train", cfg.n_train},
               {"n_test", cfg.n_test},
               {"seed", cfg.phantom.seed}};
  j["model"] = {{"base_channels", cfg.model.base_channels},
                {"depth", cfg.model.depth},
                {"num_residual_blocks", cfg.model.num_residual_blocks},
                {"se_reduction", cfg.model.se_reduction},
                {"use_multiscale", cfg.model.use_multiscale},
                {"disc_base_channels", cfg.model.disc_base_channels},
                {"seg_depth", cfg.model.seg_depth},
                {"seg_base_channels", cfg.model.seg_base_channels}};
  j["train"] = {{"lr_generators", cfg.train.lr_generators},
                {"lr_discriminators", cfg.train.lr_discriminators},
                {"lr_segmenter_pretrain", cfg.train.lr_segmenter_pretrain},
                {"beta1", cfg.train.beta1},
                {"beta2", cfg.train.beta2},
                {"epochs", cfg.train.epochs},
                {"batch_size", cfg.train.batch_size},
                {"checkpoint_every", cfg.train.checkpoint_every},
                {"seg_epochs", cfg.train.seg_epochs},
                {"seg_target_accuracy", cfg.train.seg_target_accuracy},
                {"weights",
                 ordered_json{{"cyc", cfg.train.weights.cyc},
                              {"ssim", cfg.train.weights.ssim},
                              {"seg", cfg.train.weights.seg}}},
                {"seed", cfg.train.seed},
                {"device", cfg.train.device},
                {"unfreeze_segmenter", cfg.train.unfreeze_segmenter},
                {"cprime_to_disc", cfg.train.cprime_to_disc}};
  j["ablation"] = cfg.ablation.name();
  return j.dump(2) + "\n";
}

uint64_t arch_fingerprint(const RunConfig& cfg) {
  // Only fields that change parameter shapes or the module tree participate;
  // schedule knobs (epochs, rates, batch) stay out so resumes may adjust them.
  ordered_json j;
  j["image_size"] = cfg.phantom.image_size;
  j["num_classes"] = cfg.phantom.num_classes;
  j["base_channels"] = cfg.model.base_channels;
  j["depth"] = cfg.model.depth;
  j["num_residual_blocks"] = cfg.model.num_residual_blocks;
  j["se_reduction"] = cfg.model.se_reduction;
  j["use_multiscale"] = cfg.model.use_multiscale;
  j["disc_base_channels"] = cfg.model.disc_base_channels;
  j["seg_depth"] = cfg.model.seg_depth;
  j["seg_base_channels"] = cfg.model.seg_base_channels;
  j["ablation"] = cfg.ablation.name();
  return fnv1a64(j.dump());
}

uint64_t seg_fingerprint(const RunConfig& cfg) {
  ordered_json j;
  j["image_size"] = cfg.phantom.image_size;
  j["num_classes"] = cfg.phantom.num_classes;
  j["seg_depth"] = cfg.model.seg_depth;
  j["seg_base_channels"] = cfg.model.seg_base_channels;
  return fnv1a64("segmenter:" + j.dump());
}

}  // namespace mricolor::config
