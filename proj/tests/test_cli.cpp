#include "mricolor/cli.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "mricolor/config.hpp"
#include "mricolor/imageio.hpp"
#include "mricolor/phantom.hpp"
#include "mricolor/rng.hpp"
#include "testing.hpp"

using namespace mricolor;

namespace {

namespace fs = std::filesystem;

config::RunConfig tiny_config() {
  auto cfg = config::default_config();
  cfg.phantom.image_size = 32;
  cfg.phantom.num_classes = 4;
  cfg.phantom.organ_count_min = 2;
  cfg.phantom.organ_count_max = 3;
  cfg.phantom.noise_sigma = 0.01f;
  cfg.phantom.deformation_amplitude = 1.5f;
  cfg.phantom.seed = 77;
  cfg.n_train = 4;
  cfg.n_test = 2;
  cfg.model.base_channels = 8;
  cfg.model.depth = 2;
  cfg.model.num_residual_blocks = 1;
  cfg.model.se_reduction = 4;
  cfg.model.disc_base_channels = 8;
  cfg.model.seg_depth = 3;
  cfg.model.seg_base_channels = 8;
  cfg.train.epochs = 1;
  cfg.train.batch_size = 2;
  cfg.train.checkpoint_every = 2;
  cfg.train.seg_epochs = 2;
  cfg.train.seg_target_accuracy = 0.05;
  cfg.train.seed = 5;
  cfg.validate();
  return cfg;
}

fs::path write_tiny_config(const fs::path& dir) {
  fs::create_directories(dir);
  auto path = dir / "tiny.json";
  std::ofstream out(path, std::ios::binary);
  out << config::config_json(tiny_config());
  return path;
}

struct CaptureStream {
  std::ostream& stream;
  std::ostringstream buffer;
  std::streambuf* old;
  explicit CaptureStream(std::ostream& s) : stream(s), old(s.rdbuf(buffer.rdbuf())) {}
  ~CaptureStream() { stream.rdbuf(old); }
  std::string text() const { return buffer.str(); }
};

int run_quiet(const std::vector<std::string>& args, std::string* out = nullptr,
              std::string* err = nullptr) {
  CaptureStream cout_cap(std::cout);
  CaptureStream cerr_cap(std::cerr);
  int code = cli::run(args);
  if (out) *out = cout_cap.text();
  if (err) *err = cerr_cap.text();
  return code;
}

/// Relative path -> content hash, to prove a directory was left untouched.
std::map<std::string, uint64_t> dir_census(const fs::path& root) {
  std::map<std::string, uint64_t> census;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::string bytes(std::istreambuf_iterator<char>(in), {});
    census[fs::relative(entry.path(), root).string()] = fnv1a64(bytes);
  }
  return census;
}

}  // namespace

TEST_CASE("gen-data writes a loadable dataset plus its resolved config") {
  testutil::TempDir tmp("cli_gen");
  auto cfg_path = write_tiny_config(tmp.path());
  auto ds = (tmp.path() / "ds").string();

  std::string out;
  int code = run_quiet({"gen-data", "--config", cfg_path.string(), "--out", ds}, &out);
  CHECK(code == 0);
  CHECK(out.find("gen-data: 4 train and 2 test samples") != std::string::npos);

  auto manifest = data::load_manifest(ds);
  CHECK(manifest.n_train == 4);
  CHECK(manifest.spec.image_size == 32);

  // the resolved config alone reproduces the invocation
  std::ifstream in(fs::path(ds) / "resolved_config.json", std::ios::binary);
  std::string text(std::istreambuf_iterator<char>(in), {});
  auto parsed = config::parse_config(text);
  CHECK(parsed.phantom.image_size == 32);
  CHECK(parsed.n_train == 4);
  CHECK(config::config_json(parsed) == config::config_json(tiny_config()));
}

TEST_CASE("usage errors exit 1 and print schema help") {
  testutil::TempDir tmp("cli_usage");
  std::string err;

  CHECK(run_quiet({"bogus-cmd"}, nullptr, &err) == 1);
  CHECK(run_quiet({}, nullptr, &err) == 1);
  CHECK(run_quiet({"gen-data"}, nullptr, &err) == 1);  // --out missing
  CHECK(run_quiet({"--help"}) == 0);
  CHECK(run_quiet({"train", "--help"}) == 0);

  auto ds = (tmp.path() / "ds").string();
  auto cfg_path = write_tiny_config(tmp.path());
  REQUIRE(run_quiet({"gen-data", "--config", cfg_path.string(), "--out", ds}) == 0);

  // unknown config key: rejected with the schema printed
  CHECK(run_quiet({"gen-data", "--config", cfg_path.string(), "--out",
                   (tmp.path() / "ds2").string(), "--set", "data.image_sizes=64"},
                  nullptr, &err) == 1);
  CHECK(err.find("unknown key") != std::string::npos);
  CHECK(err.find("config schema") != std::string::npos);

  // type violation in an override
  CHECK(run_quiet({"gen-data", "--config", cfg_path.string(), "--out",
                   (tmp.path() / "ds3").string(), "--set", "train.epochs=soon"},
                  nullptr, &err) == 1);

  // writing into the dataset directory is refused
  CHECK(run_quiet({"train", "--config", cfg_path.string(), "--data", ds, "--out", ds}, nullptr,
                  &err) == 1);
  CHECK(err.find("must not be the dataset directory") != std::string::npos);

  // config/dataset mismatch is a config error
  CHECK(run_quiet({"train-seg", "--config", cfg_path.string(), "--set", "data.num_classes=5",
                   "--data", ds, "--out", (tmp.path() / "seg").string()},
                  nullptr, &err) == 1);
  CHECK(err.find("generated with") != std::string::npos);
}

TEST_CASE("train, infer and eval round-trip through the CLI") {
  testutil::TempDir tmp("cli_train");
  auto cfg_path = write_tiny_config(tmp.path());
  auto ds = (tmp.path() / "ds").string();
  auto run_dir = (tmp.path() / "run").string();
  REQUIRE(run_quiet({"gen-data", "--config", cfg_path.string(), "--out", ds}) == 0);
  auto before = dir_census(ds);

  std::string out, err;
  int code = run_quiet({"train", "--config", cfg_path.string(), "--data", ds, "--out", run_dir},
                       &out, &err);
  CAPTURE(err);
  REQUIRE(code == 0);
  CHECK(out.find("train: 2 steps over 1 epochs") != std::string::npos);
  auto final_ckpt = fs::path(run_dir) / "final.ckpt";
  CHECK(fs::exists(final_ckpt));
  CHECK(fs::exists(fs::path(run_dir) / "comparison.png"));
  CHECK(fs::exists(fs::path(run_dir) / "resolved_config.json"));
  CHECK(fs::exists(fs::path(run_dir) / "loss_log.jsonl"));
  CHECK(dir_census(ds) == before);  // dataset directory untouched

  // infer on one of the dataset's MRI slices
  auto chat = (tmp.path() / "out" / "chat.png").string();
  code = run_quiet({"infer", "--ckpt", final_ckpt.string(), "--in",
                    (fs::path(ds) / "test" / "0_m.png").string(), "--out", chat},
                   &out, &err);
  REQUIRE(code == 0);
  CHECK(out.find("infer: wrote") != std::string::npos);
  auto colorized = io::load_png_rgb(chat);
  CHECK(colorized.sizes() == torch::IntArrayRef({3, 32, 32}));
  CHECK(fs::exists(tmp.path() / "out" / "resolved_config.json"));

  // a 250x250 input fails the size rule at runtime: exit 2, rule named
  auto odd = tmp.path() / "odd.png";
  io::save_png_gray(odd, torch::rand({1, 250, 250}));
  code = run_quiet({"infer", "--ckpt", final_ckpt.string(), "--in", odd.string(), "--out",
                    (tmp.path() / "odd_out.png").string()},
                   &out, &err);
  CHECK(code == 2);
  CHECK(err.find("divisible by 4") != std::string::npos);

  // eval prints the fixed-width table and writes the report next to it
  auto eval_dir = (tmp.path() / "eval").string();
  code = run_quiet({"eval", "--ckpt", final_ckpt.string(), "--data", ds, "--out", eval_dir}, &out,
                   &err);
  REQUIRE(code == 0);
  for (const char* column : {"CF", "dCF", "SSIM", "MS-SSIM", "STSIM", "FSIM"}) {
    CHECK(out.find(column) != std::string::npos);
  }
  auto report = nlohmann::json::parse(
      std::ifstream(fs::path(eval_dir) / "report.json", std::ios::binary));
  CHECK(report.at("per_image").size() == 2);
  CHECK(fs::exists(fs::path(eval_dir) / "table.txt"));
  CHECK(fs::exists(fs::path(eval_dir) / "comparison.png"));

  code = run_quiet({"eval", "--ckpt", final_ckpt.string(), "--data", ds, "--split", "train"},
                   &out, &err);
  CHECK(code == 0);
  CHECK(dir_census(ds) == before);
}

TEST_CASE("the ablate subcommand runs the suite end to end") {
  testutil::TempDir tmp("cli_ablate");
  auto cfg_path = write_tiny_config(tmp.path());
  auto ds = (tmp.path() / "ds").string();
  auto suite = (tmp.path() / "suite").string();
  REQUIRE(run_quiet({"gen-data", "--config", cfg_path.string(), "--out", ds}) == 0);

  std::string out, err;
  int code = run_quiet({"ablate", "--config", cfg_path.string(), "--set", "train.seg_epochs=1",
                        "--data", ds, "--out", suite},
                       &out, &err);
  CAPTURE(err);
  REQUIRE(code == 0);
  for (const char* name : {"full", "A1", "A2", "A3", "A4", "A5"}) {
    CHECK(out.find(name) != std::string::npos);
    CHECK(fs::exists(fs::path(suite) / name / "final.ckpt"));
  }
  CHECK(fs::exists(fs::path(suite) / "ablation_table.txt"));
  CHECK(fs::exists(fs::path(suite) / "ablation.json"));
  CHECK(fs::exists(fs::path(suite) / "resolved_config.json"));
}
