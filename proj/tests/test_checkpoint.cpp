#include "mricolor/checkpoint.hpp"

#include <fstream>

#include "mricolor/errors.hpp"
#include "mricolor/nets.hpp"
#include "testing.hpp"

using namespace mricolor;
using namespace mricolor::checkpoint;

namespace {

Checkpoint sample_checkpoint() {
  torch::manual_seed(11);
  Checkpoint ck;
  ck.fingerprint = 0x1234abcd5678ef00ull;
  ck.epoch = 3;
  ck.step = 42;
  ck.config_json = "{\"model\":{\"depth\":3}}\n";
  ck.sections["alpha"]["w"] = torch::randn({4, 3, 3, 3});
  ck.sections["alpha"]["b"] = torch::randn({4});
  ck.sections["alpha"]["scalar"] = torch::tensor(2.5f);
  ck.sections["beta"]["m/00000"] = torch::randn({7});
  ck.sections["beta"]["v/00000"] = torch::zeros({7});
  ck.counters["opt.t"] = 42;
  ck.counters["aux"] = -5;
  return ck;
}

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("checkpoint round-trips every field and tensor exactly") {
  testutil::TempDir tmp("ckpt_roundtrip");
  auto ck = sample_checkpoint();
  auto path = tmp.path() / "a.ckpt";
  save_checkpoint(ck, path);
  auto back = load_checkpoint(path);

  CHECK(back.fingerprint == ck.fingerprint);
  CHECK(back.epoch == ck.epoch);
  CHECK(back.step == ck.step);
  CHECK(back.config_json == ck.config_json);
  CHECK(back.counters == ck.counters);
  REQUIRE(back.sections.size() == ck.sections.size());
  for (const auto& [name, tensors] : ck.sections) {
    REQUIRE(back.sections.count(name) == 1);
    REQUIRE(back.sections.at(name).size() == tensors.size());
    for (const auto& [key, t] : tensors) {
      auto& r = back.sections.at(name).at(key);
      CHECK(r.sizes() == t.sizes());
      CHECK(torch::equal(r, t));
    }
  }
}

TEST_CASE("save-load-save produces byte-identical files") {
  testutil::TempDir tmp("ckpt_bytes");
  auto ck = sample_checkpoint();
  auto p1 = tmp.path() / "one.ckpt";
  auto p2 = tmp.path() / "two.ckpt";
  save_checkpoint(ck, p1);
  save_checkpoint(load_checkpoint(p1), p2);
  auto b1 = file_bytes(p1);
  auto b2 = file_bytes(p2);
  CHECK(b1.size() > 0);
  CHECK(b1 == b2);
}

TEST_CASE("save replaces an existing file atomically and leaves no temp") {
  testutil::TempDir tmp("ckpt_atomic");
  auto path = tmp.path() / "a.ckpt";
  auto ck = sample_checkpoint();
  save_checkpoint(ck, path);
  ck.step = 43;
  save_checkpoint(ck, path);
  CHECK(load_checkpoint(path).step == 43);
  CHECK_FALSE(std::filesystem::exists(tmp.path() / "a.ckpt.tmp"));
}

TEST_CASE("load rejects missing, foreign, truncated and padded files") {
  testutil::TempDir tmp("ckpt_badfiles");
  CHECK_THROWS_AS(load_checkpoint(tmp.path() / "nope.ckpt"), CheckpointError);

  auto foreign = tmp.path() / "foreign.ckpt";
  std::ofstream(foreign, std::ios::binary) << "definitely not a checkpoint";
  CHECK_THROWS_AS(load_checkpoint(foreign), CheckpointError);

  auto good = tmp.path() / "good.ckpt";
  save_checkpoint(sample_checkpoint(), good);
  auto bytes = file_bytes(good);

  auto truncated = tmp.path() / "short.ckpt";
  std::ofstream(truncated, std::ios::binary)
      << bytes.substr(0, bytes.size() / 2);
  CHECK_THROWS_AS(load_checkpoint(truncated), CheckpointError);

  auto padded = tmp.path() / "padded.ckpt";
  std::ofstream(padded, std::ios::binary) << bytes << '\0';
  CHECK_THROWS_AS(load_checkpoint(padded), CheckpointError);
}

TEST_CASE("fingerprint check names both digests and passes on match") {
  Checkpoint ck;
  ck.fingerprint = 0xdeadbeef00000001ull;
  CHECK_NOTHROW(check_fingerprint(ck, 0xdeadbeef00000001ull));
  try {
    check_fingerprint(ck, 0x0102030405060708ull);
    FAIL("expected CheckpointError");
  } catch (const CheckpointError& e) {
    std::string msg = e.what();
    CHECK(msg.find("deadbeef00000001") != std::string::npos);
    CHECK(msg.find("0102030405060708") != std::string::npos);
  }
}

TEST_CASE("state_dict and strict load restore a module exactly") {
  nets::DiscriminatorConfig cfg;
  cfg.in_channels = 1;
  cfg.base_channels = 4;
  cfg.image_size = 32;
  nets::Discriminator a(cfg), b(cfg);
  nets::init_weights(*a, 5);
  nets::init_weights(*b, 6);

  auto dict = state_dict(*a);
  CHECK(dict.size() > 0);
  load_state(*b, dict, "disc");
  for (const auto& p : a->named_parameters()) {
    CHECK(torch::equal(p.value(), b->named_parameters()[p.key()]));
  }

  auto input = torch::rand({2, 1, 32, 32});
  CHECK(torch::equal(a->forward(input), b->forward(input)));
}

TEST_CASE("strict load rejects missing, extra and misshapen tensors") {
  nets::DiscriminatorConfig cfg;
  cfg.in_channels = 1;
  cfg.base_channels = 4;
  cfg.image_size = 32;
  nets::Discriminator net(cfg);
  nets::init_weights(*net, 5);
  auto dict = state_dict(*net);

  auto missing = dict;
  missing.erase(missing.begin()->first);
  CHECK_THROWS_AS(load_state(*net, missing, "disc"), CheckpointError);

  auto extra = dict;
  extra["phantom.weight"] = torch::zeros({1});
  CHECK_THROWS_AS(load_state(*net, extra, "disc"), CheckpointError);

  auto misshapen = dict;
  misshapen.begin()->second = torch::zeros({1, 2, 3});
  CHECK_THROWS_AS(load_state(*net, misshapen, "disc"), CheckpointError);
}

TEST_CASE("state_dict detaches: mutating the module later leaves the dict untouched") {
  nets::SEBlock se(8, 4);
  nets::init_weights(*se, 9);
  auto dict = state_dict(*se);
  auto before = dict.at("fc1.weight").clone();
  {
    torch::NoGradGuard no_grad;
    se->fc1->weight.add_(1.0);
  }
  CHECK(torch::equal(dict.at("fc1.weight"), before));
}
