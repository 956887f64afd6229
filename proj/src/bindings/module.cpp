#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <torch/torch.h>

#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "mricolor/checkpoint.hpp"
#include "mricolor/cli.hpp"
#include "mricolor/config.hpp"
#include "mricolor/errors.hpp"
#include "mricolor/metrics.hpp"
#include "mricolor/phantom.hpp"
#include "mricolor/training.hpp"

namespace py = pybind11;
using namespace mricolor;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

torch::Tensor to_tensor(const FloatArray& arr) {
  std::vector<int64_t> shape(arr.ndim());
  for (py::ssize_t i = 0; i < arr.ndim(); ++i) shape[static_cast<size_t>(i)] = arr.shape(i);
  auto t = torch::empty(shape, torch::kFloat32);
  std::memcpy(t.data_ptr<float>(), arr.data(), sizeof(float) * static_cast<size_t>(t.numel()));
  return t;
}

py::array_t<float> to_array(const torch::Tensor& tensor) {
  auto t = tensor.detach().to(torch::kFloat32).contiguous();
  std::vector<py::ssize_t> shape(t.sizes().begin(), t.sizes().end());
  py::array_t<float> arr(shape);
  std::memcpy(arr.mutable_data(), t.data_ptr<float>(),
              sizeof(float) * static_cast<size_t>(t.numel()));
  return arr;
}

config::RunConfig parse_and_validate(const std::string& config_text) {
  auto cfg = config::parse_config(config_text);
  cfg.validate();
  return cfg;
}

data::Split split_of(const std::string& name) {
  if (name == "train") return data::Split::Train;
  if (name == "test") return data::Split::Test;
  throw ConfigError("split must be \"train\" or \"test\", got \"" + name + "\"");
}

std::string hex16(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "cycle-consistent adversarial MRI colorization core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<DatasetError>(m, "DatasetError", PyExc_RuntimeError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_RuntimeError);
  py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);

  m.def(
      "default_config", [] { return config::config_json(config::default_config()); },
      "Canonical JSON text of the default configuration.");

  m.def(
      "apply_override",
      [](const std::string& config_text, const std::string& assignment) {
        return config::apply_override(config_text, assignment);
      },
      py::arg("config_text"), py::arg("assignment"),
      "Apply one dotted-key=value override to config JSON text.");

  m.def(
      "validate_config",
      [](const std::string& config_text) { parse_and_validate(config_text); },
      py::arg("config_text"), "Raise ConfigError unless the config text is valid.");

  m.def(
      "generate_dataset",
      [](const std::string& config_text, const std::string& out_dir) {
        auto cfg = parse_and_validate(config_text);
        data::DatasetManifest manifest;
        {
          py::gil_scoped_release release;
          manifest = data::generate_dataset(cfg.phantom, cfg.n_train, cfg.n_test, out_dir);
        }
        py::dict d;
        d["root"] = manifest.root.string();
        d["n_train"] = manifest.n_train;
        d["n_test"] = manifest.n_test;
        d["checksum"] = hex16(data::manifest_checksum(manifest));
        return d;
      },
      py::arg("config_text"), py::arg("out_dir"),
      "Generate the phantom (MRI, Cryosection, labels) dataset described by the config.");

  m.def(
      "manifest_checksum",
      [](const std::string& data_dir) {
        return hex16(data::manifest_checksum(data::load_manifest(data_dir)));
      },
      py::arg("data_dir"), "Checksum identifying a generated dataset.");

  m.def(
      "load_triplet",
      [](const std::string& data_dir, const std::string& split, int64_t index) {
        auto manifest = data::load_manifest(data_dir);
        auto t = data::load_triplet(manifest, split_of(split), index);
        py::dict d;
        d["m"] = to_array(t.m);
        d["c"] = to_array(t.c);
        d["s"] = to_array(t.s);
        d["warp"] = to_array(t.warp);
        return d;
      },
      py::arg("data_dir"), py::arg("split"), py::arg("index"),
      "One (MRI, Cryosection, one-hot labels, warp) sample as numpy arrays.");

  m.def(
      "pretrain_segmenter",
      [](const std::string& config_text, const std::string& data_dir,
         const std::string& out_dir) {
        auto cfg = parse_and_validate(config_text);
        auto manifest = data::load_manifest(data_dir);
        training::SegPretrainOutcome outcome;
        {
          py::gil_scoped_release release;
          outcome = training::pretrain_segmenter(manifest, cfg, out_dir);
        }
        py::dict d;
        d["accuracy"] = outcome.accuracy;
        d["epochs_run"] = outcome.epochs_run;
        d["reached_target"] = outcome.reached_target;
        return d;
      },
      py::arg("config_text"), py::arg("data_dir"), py::arg("out_dir"),
      "Pretrain the segmenter; writes segmenter.ckpt and seg_log.jsonl under out_dir.");

  m.def(
      "train",
      [](const std::string& config_text, const std::string& data_dir,
         const std::string& out_dir) {
        auto cfg = parse_and_validate(config_text);
        auto manifest = data::load_manifest(data_dir);
        training::TrainOutcome outcome;
        {
          py::gil_scoped_release release;
          outcome = training::train(manifest, cfg, out_dir);
        }
        py::dict d;
        d["final_checkpoint"] = outcome.final_checkpoint.string();
        d["loss_log"] = outcome.loss_log.string();
        d["steps"] = outcome.steps;
        d["epochs"] = outcome.epochs;
        return d;
      },
      py::arg("config_text"), py::arg("data_dir"), py::arg("out_dir"),
      "Run (or resume) the cyclic adversarial training loop.");

  m.def(
      "infer",
      [](const std::string& checkpoint_path, const FloatArray& m) {
        auto input = to_tensor(m);
        if (input.dim() == 2) input = input.unsqueeze(0);
        torch::Tensor out;
        {
          py::gil_scoped_release release;
          out = training::infer(checkpoint_path, input);
        }
        return to_array(out);
      },
      py::arg("checkpoint_path"), py::arg("m"),
      "Colorize MRI input of shape (h,w), (1,h,w) or (n,1,h,w); returns (n,3,h,w).");

  m.def(
      "evaluate",
      [](const std::string& checkpoint_path, const std::string& data_dir,
         const std::string& split) {
        auto manifest = data::load_manifest(data_dir);
        metrics::MetricReport report;
        {
          py::gil_scoped_release release;
          report = metrics::evaluate(manifest, checkpoint_path, split_of(split));
        }
        return metrics::report_json(report);
      },
      py::arg("checkpoint_path"), py::arg("data_dir"), py::arg("split") = "test",
      "Score a checkpoint on a dataset split; returns the report as JSON text.");

  m.def(
      "run_ablation_suite",
      [](const std::string& config_text, const std::string& data_dir,
         const std::string& out_dir) {
        auto cfg = parse_and_validate(config_text);
        auto manifest = data::load_manifest(data_dir);
        training::AblationOutcome outcome;
        {
          py::gil_scoped_release release;
          outcome = training::run_ablation_suite(manifest, cfg, out_dir);
        }
        bool ok = true;
        for (const auto& row : outcome.rows) ok = ok && row.ok;
        py::dict d;
        d["table"] = outcome.table;
        d["table_path"] = outcome.table_path.string();
        d["json_path"] = outcome.json_path.string();
        d["ok"] = ok;
        return d;
      },
      py::arg("config_text"), py::arg("data_dir"), py::arg("out_dir"),
      "Train and evaluate the full model plus A1..A5 on one dataset.");

  m.def(
      "colorfulness", [](const FloatArray& img) { return metrics::colorfulness(to_tensor(img)); },
      py::arg("img"), "Hasler-Suesstrunk colorfulness of a 3-channel image.");
  m.def(
      "delta_cf",
      [](const FloatArray& ref, const FloatArray& gen) {
        return metrics::delta_cf(to_tensor(ref), to_tensor(gen));
      },
      py::arg("ref"), py::arg("gen"), "CF(ref) - CF(gen).");
  m.def(
      "ssim",
      [](const FloatArray& a, const FloatArray& b) {
        return metrics::ssim_metric(to_tensor(a), to_tensor(b));
      },
      py::arg("a"), py::arg("b"), "Mean single-scale 7x7 SSIM.");
  m.def(
      "ms_ssim",
      [](const FloatArray& a, const FloatArray& b, int64_t scales) {
        return metrics::ms_ssim(to_tensor(a), to_tensor(b), scales);
      },
      py::arg("a"), py::arg("b"), py::arg("scales") = 0, "Multi-scale SSIM.");
  m.def(
      "fsim",
      [](const FloatArray& a, const FloatArray& b) {
        return metrics::fsim(to_tensor(a), to_tensor(b));
      },
      py::arg("a"), py::arg("b"), "Feature similarity (inputs at least 32x32).");
  m.def(
      "stsim",
      [](const FloatArray& a, const FloatArray& b) {
        return metrics::stsim(to_tensor(a), to_tensor(b));
      },
      py::arg("a"), py::arg("b"), "Structural texture similarity (inputs at least 32x32).");

  m.def(
      "run_cli", [](const std::vector<std::string>& args) { return cli::run(args); },
      py::arg("args"), "Run one CLI invocation; returns the exit code.");
}
