#include "mricolor/cli.hpp"

#include <torch/torch.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mricolor/checkpoint.hpp"
#include "mricolor/config.hpp"
#include "mricolor/errors.hpp"
#include "mricolor/imageio.hpp"
#include "mricolor/metrics.hpp"
#include "mricolor/phantom.hpp"
#include "mricolor/training.hpp"

namespace mricolor::cli {

namespace fs = std::filesystem;

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  bool verbose = false;
};

void add_common(CLI::App* sub, CommonOpts& opts) {
  sub->add_option("--config", opts.config_path, "JSON config file; defaults apply when omitted")
      ->check(CLI::ExistingFile);
  sub->add_option("--set", opts.overrides,
                  "dotted-key=value override, repeatable (e.g. --set train.epochs=5)");
  sub->add_flag("-v,--verbose", opts.verbose, "print the resolved config to stderr");
}

std::string schema_help() {
  return "config schema: JSON object with sections data/model/train and \"ablation\" "
         "(full|A1|A2|A3|A4|A5);\nunknown keys are rejected. Defaults:\n" +
         config::config_json(config::default_config());
}

/// Config file (or defaults), then MRICOLOR_DEVICE, then --set, then validate.
config::RunConfig resolve(const CommonOpts& opts) {
  std::string text;
  if (opts.config_path.empty()) {
    text = config::config_json(config::default_config());
  } else {
    std::ifstream in(opts.config_path, std::ios::binary);
    if (!in) throw ConfigError("cli: cannot open config file " + opts.config_path);
    text.assign(std::istreambuf_iterator<char>(in), {});
  }
  if (const char* device = std::getenv("MRICOLOR_DEVICE")) {
    text = config::apply_override(text, std::string("train.device=") + device);
  }
  for (const auto& assignment : opts.overrides) {
    text = config::apply_override(text, assignment);
  }
  auto cfg = config::parse_config(text);
  cfg.validate();
  if (opts.verbose) std::cerr << config::config_json(cfg);
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  out.flush();
  if (!out) throw DatasetError("cli: cannot write " + path.string());
}

void write_resolved(const config::RunConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  write_text(dir / "resolved_config.json", config::config_json(cfg));
}

/// The dataset directory stays read-only for every subcommand.
void refuse_writing_into(const fs::path& data_dir, const fs::path& out_dir) {
  std::error_code ec;
  if (fs::weakly_canonical(out_dir, ec) == fs::weakly_canonical(data_dir, ec)) {
    throw ConfigError("cli: --out must not be the dataset directory");
  }
}

void check_dataset_matches(const data::DatasetManifest& manifest, const config::RunConfig& cfg) {
  if (manifest.spec.image_size != cfg.phantom.image_size ||
      manifest.spec.num_classes != cfg.phantom.num_classes) {
    throw ConfigError(
        "cli: dataset at " + manifest.root.string() + " was generated with image_size " +
        std::to_string(manifest.spec.image_size) + ", num_classes " +
        std::to_string(manifest.spec.num_classes) + " but the config says " +
        std::to_string(cfg.phantom.image_size) + ", " + std::to_string(cfg.phantom.num_classes));
  }
}

std::string hex16(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Fig-style inspection grid over the first test samples of the dataset.
void emit_grid(const data::DatasetManifest& manifest, const fs::path& ckpt_path,
               const fs::path& out_path) {
  int64_t n = std::min<int64_t>(4, manifest.n_test);
  if (n == 0) return;
  std::vector<torch::Tensor> gt, mri;
  for (int64_t i = 0; i < n; ++i) {
    auto t = data::load_triplet(manifest, data::Split::Test, i);
    gt.push_back(t.c);
    mri.push_back(t.m);
  }
  auto outputs = training::infer(ckpt_path, torch::stack(mri));
  std::vector<torch::Tensor> out;
  for (int64_t i = 0; i < n; ++i) out.push_back(outputs[i]);
  io::save_comparison_grid(out_path, gt, mri, out);
  std::cout << "wrote " << out_path.string() << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"cycle-consistent adversarial MRI colorization"};
  app.require_subcommand(1);

  CommonOpts gen_opts;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-data", "generate a phantom (MRI, Cryosection, labels) dataset");
  add_common(gen, gen_opts);
  gen->add_option("--out", gen_out, "dataset output directory")->required();

  CommonOpts seg_opts;
  std::string seg_data, seg_out;
  auto* seg = app.add_subcommand("train-seg", "pretrain the segmenter on a dataset");
  add_common(seg, seg_opts);
  seg->add_option("--data", seg_data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  seg->add_option("--out", seg_out, "run output directory")->required();

  CommonOpts train_opts;
  std::string train_data, train_out;
  auto* trainer = app.add_subcommand("train", "run the cyclic adversarial training loop");
  add_common(trainer, train_opts);
  trainer->add_option("--data", train_data, "dataset directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  trainer->add_option("--out", train_out, "run output directory")->required();

  std::string infer_ckpt, infer_in, infer_out;
  auto* inf = app.add_subcommand("infer", "colorize one grayscale MRI image");
  inf->add_option("--ckpt", infer_ckpt, "trained checkpoint")->required()->check(CLI::ExistingFile);
  inf->add_option("--in", infer_in, "grayscale input image (png)")
      ->required()
      ->check(CLI::ExistingFile);
  inf->add_option("--out", infer_out, "colorized output image (png)")->required();

  std::string eval_ckpt, eval_data, eval_out, eval_split = "test";
  auto* evaluator = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  evaluator->add_option("--ckpt", eval_ckpt, "trained checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  evaluator->add_option("--data", eval_data, "dataset directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  evaluator->add_option("--split", eval_split, "which split to score")
      ->check(CLI::IsMember({"train", "test"}));
  evaluator->add_option("--out", eval_out, "directory for report.json, table.txt and the grid");

  CommonOpts ablate_opts;
  std::string ablate_data, ablate_out;
  auto* ablate = app.add_subcommand("ablate", "train and evaluate full plus A1..A5");
  add_common(ablate, ablate_opts);
  ablate->add_option("--data", ablate_data, "dataset directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  ablate->add_option("--out", ablate_out, "suite output directory")->required();

  try {
    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("mricolor");
    for (const auto& a : args) argv.push_back(a.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      auto cfg = resolve(gen_opts);
      auto manifest = data::generate_dataset(cfg.phantom, cfg.n_train, cfg.n_test, gen_out);
      write_resolved(cfg, gen_out);
      std::cout << "gen-data: " << manifest.n_train << " train and " << manifest.n_test
                << " test samples in " << gen_out << " (dataset "
                << hex16(data::manifest_checksum(manifest)) << ")\n";
    } else if (seg->parsed()) {
      auto cfg = resolve(seg_opts);
      auto manifest = data::load_manifest(seg_data);
      check_dataset_matches(manifest, cfg);
      refuse_writing_into(seg_data, seg_out);
      write_resolved(cfg, seg_out);
      auto outcome = training::pretrain_segmenter(manifest, cfg, seg_out);
      std::cout << "train-seg: accuracy " << outcome.accuracy << " after " << outcome.epochs_run
                << " epochs ("
                << (outcome.reached_target ? "target reached" : "target missed; best weights kept")
                << ")\n"
                << "wrote " << (fs::path(seg_out) / "segmenter.ckpt").string() << "\n";
    } else if (trainer->parsed()) {
      auto cfg = resolve(train_opts);
      auto manifest = data::load_manifest(train_data);
      refuse_writing_into(train_data, train_out);
      write_resolved(cfg, train_out);
      auto outcome = training::train(manifest, cfg, train_out);
      std::cout << "train: " << outcome.steps << " steps over " << outcome.epochs << " epochs\n"
                << "wrote " << outcome.final_checkpoint.string() << "\n"
                << "wrote " << outcome.loss_log.string() << "\n";
      emit_grid(manifest, outcome.final_checkpoint, fs::path(train_out) / "comparison.png");
    } else if (inf->parsed()) {
      auto m = io::load_png_gray(infer_in);
      auto y = training::infer(infer_ckpt, m);
      fs::path out_path(infer_out);
      if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
      io::save_png_rgb(out_path, y.squeeze(0));
      auto ck = checkpoint::load_checkpoint(infer_ckpt);
      fs::path cfg_dir = out_path.has_parent_path() ? out_path.parent_path() : fs::path(".");
      write_text(cfg_dir / "resolved_config.json", ck.config_json);
      std::cout << "infer: wrote " << out_path.string() << " (" << y.size(3) << "x" << y.size(2)
                << ")\n";
    } else if (evaluator->parsed()) {
      auto manifest = data::load_manifest(eval_data);
      auto split = eval_split == "train" ? data::Split::Train : data::Split::Test;
      auto report = metrics::evaluate(manifest, eval_ckpt, split);
      std::cout << metrics::report_table(report);
      if (!eval_out.empty()) {
        refuse_writing_into(eval_data, eval_out);
        fs::create_directories(eval_out);
        metrics::write_report_json(fs::path(eval_out) / "report.json", report);
        write_text(fs::path(eval_out) / "table.txt", metrics::report_table(report));
        auto ck = checkpoint::load_checkpoint(eval_ckpt);
        write_text(fs::path(eval_out) / "resolved_config.json", ck.config_json);
        std::cout << "wrote " << (fs::path(eval_out) / "report.json").string() << "\n"
                  << "wrote " << (fs::path(eval_out) / "table.txt").string() << "\n";
        emit_grid(manifest, eval_ckpt, fs::path(eval_out) / "comparison.png");
      }
    } else if (ablate->parsed()) {
      auto cfg = resolve(ablate_opts);
      auto manifest = data::load_manifest(ablate_data);
      check_dataset_matches(manifest, cfg);
      refuse_writing_into(ablate_data, ablate_out);
      write_resolved(cfg, ablate_out);
      auto outcome = training::run_ablation_suite(manifest, cfg, ablate_out);
      std::cout << outcome.table;
      std::cout << "wrote " << outcome.table_path.string() << "\n"
                << "wrote " << outcome.json_path.string() << "\n";
      for (const auto& row : outcome.rows) {
        if (!row.ok) {
          std::cerr << "error: ablation " << row.name << " failed: " << row.error << "\n";
        }
      }
      for (const auto& row : outcome.rows) {
        if (!row.ok) return 2;
      }
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << schema_help();
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace mricolor::cli
