#include "mricolor/training.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "mricolor/errors.hpp"
#include "mricolor/rng.hpp"

namespace mricolor::training {

namespace fs = std::filesystem;

namespace {

constexpr double kScoreEps = 1e-7;

// Stream offsets keep training draws away from the data pipeline's
// per-sample streams even when data and train seeds coincide.
constexpr uint64_t kInitStreamBase = 0x4d430000ull;   // per-network init seeds
constexpr uint64_t kEpochStreamBase = 0x4d431000ull;  // cyclic epoch shuffles
constexpr uint64_t kSegStreamBase = 0x4d432000ull;    // pretrain epoch shuffles

uint64_t init_seed(const config::RunConfig& cfg, uint64_t which) {
  return SampleRng::for_stream(cfg.train.seed, kInitStreamBase + which).next_u64();
}

std::string hex16(uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string ids_string(const std::vector<int64_t>& ids) {
  std::string out = "[";
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(ids[i]);
  }
  return out + "]";
}

const std::map<std::string, torch::Tensor>& section_of(const checkpoint::Checkpoint& ck,
                                                       const std::string& name) {
  auto it = ck.sections.find(name);
  if (it == ck.sections.end()) {
    throw CheckpointError("checkpoint: missing section " + name);
  }
  return it->second;
}

int64_t counter_of(const checkpoint::Checkpoint& ck, const std::string& name) {
  auto it = ck.counters.find(name);
  if (it == ck.counters.end()) {
    throw CheckpointError("checkpoint: missing counter " + name);
  }
  return it->second;
}

void check_data_compat(const data::DatasetManifest& manifest, const config::RunConfig& cfg) {
  if (manifest.spec.image_size != cfg.phantom.image_size) {
    throw ConfigError("train: dataset images are " + std::to_string(manifest.spec.image_size) +
                      " px but the config expects " + std::to_string(cfg.phantom.image_size));
  }
  if (manifest.spec.num_classes != cfg.phantom.num_classes) {
    throw ConfigError("train: dataset has " + std::to_string(manifest.spec.num_classes) +
                      " classes but the config expects " + std::to_string(cfg.phantom.num_classes));
  }
}

/// Keeps only records with step (or the given key) <= limit; drops a
/// malformed tail left by a crash.
void truncate_jsonl(const fs::path& path, const char* key, int64_t limit) {
  if (!fs::exists(path)) return;
  std::ifstream in(path);
  std::vector<std::string> keep;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      if (j.contains(key) && j.at(key).get<int64_t>() <= limit) keep.push_back(line);
    } catch (const nlohmann::json::exception&) {
    }
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : keep) out << l << "\n";
}

double seg_accuracy(nets::UNetSegmenter& seg, const torch::Tensor& c, const torch::Tensor& s,
                    int64_t chunk) {
  torch::NoGradGuard no_grad;
  int64_t n = c.size(0), correct = 0, total = 0;
  for (int64_t i = 0; i < n; i += chunk) {
    int64_t hi = std::min(n, i + chunk);
    auto pred = seg->forward(c.slice(0, i, hi)).argmax(1);
    auto truth = s.slice(0, i, hi).argmax(1);
    correct += (pred == truth).sum().item<int64_t>();
    total += pred.numel();
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

std::vector<torch::Tensor> concat_params(const std::vector<std::vector<torch::Tensor>>& groups) {
  std::vector<torch::Tensor> all;
  for (const auto& g : groups) all.insert(all.end(), g.begin(), g.end());
  return all;
}

}  // namespace

Adam::Adam(std::vector<torch::Tensor> parameters, double lr_, double beta1_, double beta2_)
    : lr(lr_), beta1(beta1_), beta2(beta2_), params(std::move(parameters)) {
  m.reserve(params.size());
  v.reserve(params.size());
  for (const auto& p : params) {
    m.push_back(torch::zeros_like(p));
    v.push_back(torch::zeros_like(p));
  }
}

void Adam::zero_grad() {
  for (auto& p : params) {
    if (p.grad().defined()) p.mutable_grad().zero_();
  }
}

void Adam::step() {
  torch::NoGradGuard no_grad;
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.grad().defined()) continue;
    const auto& g = p.grad();
    m[i].mul_(beta1).add_(g, 1.0 - beta1);
    v[i].mul_(beta2).addcmul_(g, g, 1.0 - beta2);
    auto m_hat = m[i] / bc1;
    auto v_hat = v[i] / bc2;
    p.add_(m_hat / (v_hat.sqrt() + eps), -lr);
  }
}

std::map<std::string, torch::Tensor> Adam::state() const {
  std::map<std::string, torch::Tensor> out;
  char key[16];
  for (size_t i = 0; i < params.size(); ++i) {
    std::snprintf(key, sizeof(key), "m/%05zu", i);
    out[key] = m[i].clone();
    std::snprintf(key, sizeof(key), "v/%05zu", i);
    out[key] = v[i].clone();
  }
  return out;
}

void Adam::load_state(const std::map<std::string, torch::Tensor>& state, int64_t step_count,
                      const std::string& who) {
  if (state.size() != params.size() * 2) {
    throw CheckpointError("checkpoint: " + who + " holds " + std::to_string(state.size()) +
                          " moment tensors but the optimizer has " +
                          std::to_string(params.size()) + " parameters");
  }
  torch::NoGradGuard no_grad;
  char key[16];
  for (size_t i = 0; i < params.size(); ++i) {
    for (auto [letter, slot] : {std::pair<char, std::vector<torch::Tensor>*>{'m', &m},
                                std::pair<char, std::vector<torch::Tensor>*>{'v', &v}}) {
      std::snprintf(key, sizeof(key), "%c/%05zu", letter, i);
      auto it = state.find(key);
      if (it == state.end()) {
        throw CheckpointError("checkpoint: " + who + " is missing moment " + key);
      }
      if (it->second.sizes() != params[i].sizes()) {
        throw CheckpointError("checkpoint: " + who + " moment " + key + " has shape " +
                              c10::str(it->second.sizes()) + " but the parameter is " +
                              c10::str(params[i].sizes()));
      }
      (*slot)[i].copy_(it->second);
    }
  }
  t = step_count;
}

Models build_models(const config::RunConfig& cfg) {
  Models out;
  out.derived = config::derive(cfg.ablation);
  out.gen_forward = nets::TranslationGenerator(cfg.forward_generator_config());
  nets::init_weights(*out.gen_forward, init_seed(cfg, 1));
  out.gen_reverse = nets::TranslationGenerator(cfg.reverse_generator_config());
  nets::init_weights(*out.gen_reverse, init_seed(cfg, 2));
  out.d_c = nets::Discriminator(cfg.discriminator_config(3));
  nets::init_weights(*out.d_c, init_seed(cfg, 3));
  out.d_m = nets::Discriminator(cfg.discriminator_config(1));
  nets::init_weights(*out.d_m, init_seed(cfg, 4));
  if (out.derived.needs_segmenter) {
    out.segmenter = nets::UNetSegmenter(cfg.segmenter_config());
    nets::init_weights(*out.segmenter, init_seed(cfg, 5));
    if (!cfg.train.unfreeze_segmenter) {
      for (auto& p : out.segmenter->parameters()) p.set_requires_grad(false);
    }
  }
  return out;
}

TrainState make_state(const config::RunConfig& cfg) {
  TrainState st;
  st.models = build_models(cfg);
  st.opt_gen = Adam(
      concat_params({st.models.gen_forward->parameters(), st.models.gen_reverse->parameters()}),
      cfg.train.lr_generators, cfg.train.beta1, cfg.train.beta2);
  st.opt_disc = Adam(concat_params({st.models.d_c->parameters(), st.models.d_m->parameters()}),
                     cfg.train.lr_discriminators, cfg.train.beta1, cfg.train.beta2);
  if (cfg.train.unfreeze_segmenter && !st.models.segmenter.is_empty()) {
    st.opt_seg = Adam(st.models.segmenter->parameters(), cfg.train.lr_segmenter_pretrain,
                      cfg.train.beta1, cfg.train.beta2);
  }
  return st;
}

checkpoint::Checkpoint to_checkpoint(const TrainState& state, const config::RunConfig& cfg) {
  checkpoint::Checkpoint ck;
  ck.fingerprint = config::arch_fingerprint(cfg);
  ck.epoch = state.epoch;
  ck.step = state.step;
  ck.config_json = config::config_json(cfg);
  ck.sections["gen_forward"] = checkpoint::state_dict(*state.models.gen_forward);
  ck.sections["gen_reverse"] = checkpoint::state_dict(*state.models.gen_reverse);
  ck.sections["d_c"] = checkpoint::state_dict(*state.models.d_c);
  ck.sections["d_m"] = checkpoint::state_dict(*state.models.d_m);
  if (!state.models.segmenter.is_empty()) {
    ck.sections["segmenter"] = checkpoint::state_dict(*state.models.segmenter);
  }
  ck.sections["opt_gen"] = state.opt_gen.state();
  ck.sections["opt_disc"] = state.opt_disc.state();
  ck.counters["opt_gen.t"] = state.opt_gen.t;
  ck.counters["opt_disc.t"] = state.opt_disc.t;
  if (state.opt_seg) {
    ck.sections["opt_seg"] = state.opt_seg->state();
    ck.counters["opt_seg.t"] = state.opt_seg->t;
  }
  return ck;
}

TrainState from_checkpoint(const checkpoint::Checkpoint& ck, const config::RunConfig& cfg) {
  checkpoint::check_fingerprint(ck, config::arch_fingerprint(cfg));
  TrainState st = make_state(cfg);
  checkpoint::load_state(*st.models.gen_forward, section_of(ck, "gen_forward"), "gen_forward");
  checkpoint::load_state(*st.models.gen_reverse, section_of(ck, "gen_reverse"), "gen_reverse");
  checkpoint::load_state(*st.models.d_c, section_of(ck, "d_c"), "d_c");
  checkpoint::load_state(*st.models.d_m, section_of(ck, "d_m"), "d_m");
  if (!st.models.segmenter.is_empty()) {
    checkpoint::load_state(*st.models.segmenter, section_of(ck, "segmenter"), "segmenter");
  }
  st.opt_gen.load_state(section_of(ck, "opt_gen"), counter_of(ck, "opt_gen.t"), "opt_gen");
  st.opt_disc.load_state(section_of(ck, "opt_disc"), counter_of(ck, "opt_disc.t"), "opt_disc");
  if (st.opt_seg) {
    st.opt_seg->load_state(section_of(ck, "opt_seg"), counter_of(ck, "opt_seg.t"), "opt_seg");
  }
  st.epoch = ck.epoch;
  st.step = ck.step;
  return st;
}

Batch load_batch(const data::DatasetManifest& manifest, data::Split split,
                 const std::vector<int64_t>& indices) {
  std::vector<torch::Tensor> ms, cs, ss;
  ms.reserve(indices.size());
  cs.reserve(indices.size());
  ss.reserve(indices.size());
  for (int64_t i : indices) {
    auto t = data::load_triplet(manifest, split, i);
    ms.push_back(t.m);
    cs.push_back(t.c);
    ss.push_back(t.s);
  }
  return Batch{torch::stack(ms), torch::stack(cs), torch::stack(ss), indices};
}

std::vector<int64_t> epoch_order(uint64_t seed, int64_t epoch, int64_t n) {
  std::vector<int64_t> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  auto rng = SampleRng::for_stream(seed, kEpochStreamBase + static_cast<uint64_t>(epoch));
  for (int64_t i = n - 1; i > 0; --i) {
    int64_t j = rng.uniform_int(0, i);
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
  }
  return idx;
}

losses::LossBundle train_step(TrainState& state, const Batch& batch,
                              const config::RunConfig& cfg) {
  auto& mdl = state.models;
  const auto& d = mdl.derived;
  auto d_c_fn = [&](const torch::Tensor& x) { return mdl.d_c->forward(x); };
  auto d_m_fn = [&](const torch::Tensor& x) { return mdl.d_m->forward(x); };

  auto fwd = mdl.gen_forward->forward_all(batch.m);
  auto c_hat = fwd.primary;
  auto m_hat = mdl.gen_reverse->forward_all(batch.c).primary;

  const bool need_cycles = d.use_rec || (d.use_seg && d.seg_on_rec);
  torch::Tensor m_rec, c_rec;
  if (need_cycles) {
    m_rec = mdl.gen_reverse->forward_all(c_hat).primary;
    c_rec = mdl.gen_forward->forward_all(m_hat).primary;
  }

  auto adv = losses::adversarial_losses(batch.c, c_hat, batch.m, m_hat, d_c_fn, d_m_fn);
  auto adv_d = adv.d;
  if (cfg.train.cprime_to_disc && fwd.has_secondary) {
    auto score = d_c_fn(fwd.secondary.detach()).clamp(kScoreEps, 1.0 - kScoreEps);
    adv_d = adv_d - (1.0 - score).log().mean();
  }

  state.opt_disc.zero_grad();
  adv_d.backward();
  state.opt_disc.step();

  // The discriminators just moved in place, so the generator term from
  // adversarial_losses rides a stale graph; rebuild it against the updated
  // weights.
  auto adv_g = losses::generator_adversarial_term(c_hat, m_hat, d_c_fn, d_m_fn);

  std::optional<torch::Tensor> rec;
  if (d.use_rec) rec = losses::reconstruction_loss(batch.m, m_rec, batch.c, c_rec);

  auto ssim = losses::total_ssim_loss(batch.m, batch.c, c_hat, m_hat,
                                      fwd.has_secondary ? fwd.secondary : torch::Tensor());

  std::optional<torch::Tensor> seg;
  if (d.use_seg) {
    auto seg_fn = [&](const torch::Tensor& x) { return mdl.segmenter->forward(x); };
    seg = losses::segmentation_loss(batch.s, d.seg_on_rec ? c_rec : fwd.secondary, seg_fn);
  }

  auto bundle =
      losses::total_objective(adv_g, adv_d.detach(), rec, ssim, seg, cfg.train.weights);

  state.opt_gen.zero_grad();
  if (state.opt_seg) state.opt_seg->zero_grad();
  bundle.total.backward();
  state.opt_gen.step();
  if (state.opt_seg) state.opt_seg->step();

  state.step += 1;
  return bundle;
}

SegPretrainOutcome pretrain_segmenter(const data::DatasetManifest& manifest,
                                      const config::RunConfig& cfg, const fs::path& out_dir) {
  check_data_compat(manifest, cfg);
  fs::create_directories(out_dir);
  // Two artifacts: the resume file tracks the in-progress optimizer state,
  // while segmenter.ckpt always holds the weights a caller should consume
  // (the best seen when the target was missed).
  const fs::path resume_path = out_dir / "segmenter_resume.ckpt";
  const fs::path ckpt_path = out_dir / "segmenter.ckpt";
  const fs::path log_path = out_dir / "seg_log.jsonl";

  nets::UNetSegmenter seg(cfg.segmenter_config());
  nets::init_weights(*seg, init_seed(cfg, 5));
  Adam opt(seg->parameters(), cfg.train.lr_segmenter_pretrain, cfg.train.beta1, cfg.train.beta2);

  SegPretrainOutcome out;
  bool have_best = false;
  int64_t start_epoch = 0;
  if (fs::exists(resume_path)) {
    auto ck = checkpoint::load_checkpoint(resume_path);
    checkpoint::check_fingerprint(ck, config::seg_fingerprint(cfg));
    checkpoint::load_state(*seg, section_of(ck, "segmenter"), "segmenter");
    opt.load_state(section_of(ck, "opt_seg"), counter_of(ck, "opt_seg.t"), "opt_seg");
    start_epoch = ck.epoch;
    if (ck.sections.count("best_segmenter")) {
      out.weights = ck.sections.at("best_segmenter");
      out.accuracy = std::bit_cast<double>(counter_of(ck, "best_acc_bits"));
      have_best = true;
    }
  }
  truncate_jsonl(log_path, "epoch", start_epoch);

  const int64_t n = manifest.n_train;
  std::vector<torch::Tensor> cs, ss;
  cs.reserve(static_cast<size_t>(n));
  ss.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    auto t = data::load_triplet(manifest, data::Split::Train, i);
    cs.push_back(t.c);
    ss.push_back(t.s);
  }
  auto all_c = torch::stack(cs);
  auto all_s = torch::stack(ss);
  const int64_t batch = std::min<int64_t>(cfg.train.batch_size, n);

  auto save = [&](const fs::path& path, int64_t epochs_done) {
    checkpoint::Checkpoint ck;
    ck.fingerprint = config::seg_fingerprint(cfg);
    ck.epoch = epochs_done;
    ck.step = opt.t;
    ck.config_json = config::config_json(cfg);
    ck.sections["segmenter"] = checkpoint::state_dict(*seg);
    ck.sections["opt_seg"] = opt.state();
    ck.sections["best_segmenter"] = out.weights;
    ck.counters["opt_seg.t"] = opt.t;
    ck.counters["best_acc_bits"] = std::bit_cast<int64_t>(out.accuracy);
    checkpoint::save_checkpoint(ck, path);
  };

  out.epochs_run = start_epoch;
  double current_acc = seg_accuracy(seg, all_c, all_s, batch);
  if (!have_best || current_acc > out.accuracy) {
    out.accuracy = current_acc;
    out.weights = checkpoint::state_dict(*seg);
  }
  out.reached_target = out.accuracy >= cfg.train.seg_target_accuracy;

  std::ofstream log(log_path, std::ios::app);
  for (int64_t e = start_epoch; e < cfg.train.seg_epochs && !out.reached_target; ++e) {
    auto order = epoch_order(cfg.train.seed, static_cast<int64_t>(kSegStreamBase) + e, n);
    double epoch_loss = 0.0;
    int64_t batches = 0;
    for (int64_t b = 0; b < n; b += batch) {
      int64_t hi = std::min(n, b + batch);
      auto idx = torch::tensor(
          std::vector<int64_t>(order.begin() + b, order.begin() + hi), torch::kInt64);
      auto pred = seg->forward(all_c.index_select(0, idx));
      auto loss = losses::segmentation_ce(all_s.index_select(0, idx), pred);
      opt.zero_grad();
      loss.backward();
      opt.step();
      epoch_loss += loss.item<double>();
      ++batches;
    }
    double acc = seg_accuracy(seg, all_c, all_s, batch);
    nlohmann::ordered_json rec;
    rec["epoch"] = e + 1;
    rec["loss"] = epoch_loss / static_cast<double>(batches);
    rec["accuracy"] = acc;
    log << rec.dump() << "\n" << std::flush;
    out.epochs_run = e + 1;
    if (acc > out.accuracy || acc >= cfg.train.seg_target_accuracy) {
      out.accuracy = acc;
      out.weights = checkpoint::state_dict(*seg);
    }
    save(resume_path, e + 1);
    if (acc >= cfg.train.seg_target_accuracy) out.reached_target = true;
  }

  if (!out.reached_target) {
    std::cerr << "pretrain_segmenter: accuracy " << out.accuracy << " after " << out.epochs_run
              << " epochs is below the target " << cfg.train.seg_target_accuracy
              << "; keeping the best weights seen\n";
  }
  if (!fs::exists(resume_path)) save(resume_path, out.epochs_run);
  // The deliverable always carries the returned weights.
  checkpoint::load_state(*seg, out.weights, "segmenter");
  save(ckpt_path, out.epochs_run);
  return out;
}

TrainOutcome train(const data::DatasetManifest& manifest, const config::RunConfig& cfg,
                   const fs::path& out_dir) {
  cfg.validate();
  check_data_compat(manifest, cfg);
  fs::create_directories(out_dir);
  const auto derived = config::derive(cfg.ablation);
  const fs::path latest = out_dir / "latest.ckpt";
  const fs::path log_path = out_dir / "loss_log.jsonl";

  const int64_t n = manifest.n_train;
  const int64_t batch_size = cfg.train.batch_size;
  const int64_t steps_per_epoch = (n + batch_size - 1) / batch_size;
  const int64_t total_steps = cfg.train.epochs * steps_per_epoch;

  TrainState state;
  if (fs::exists(latest)) {
    state = from_checkpoint(checkpoint::load_checkpoint(latest), cfg);
  } else {
    state = make_state(cfg);
    if (derived.needs_segmenter) {
      const fs::path seg_ckpt = out_dir / "segmenter.ckpt";
      if (!fs::exists(seg_ckpt)) {
        std::cerr << "train: no pretrained segmenter at " << seg_ckpt.string()
                  << "; pretraining now\n";
        pretrain_segmenter(manifest, cfg, out_dir);
      }
      auto ck = checkpoint::load_checkpoint(seg_ckpt);
      checkpoint::check_fingerprint(ck, config::seg_fingerprint(cfg));
      checkpoint::load_state(*state.models.segmenter, section_of(ck, "segmenter"), "segmenter");
    }
  }

  if (state.step > 0) {
    truncate_jsonl(log_path, "step", state.step);
  } else {
    std::ofstream(log_path, std::ios::trunc);
  }
  std::ofstream log(log_path, std::ios::app);

  auto save_all = [&](bool numbered) {
    auto ck = to_checkpoint(state, cfg);
    if (numbered) {
      char name[32];
      std::snprintf(name, sizeof(name), "ckpt_%06lld.ckpt",
                    static_cast<long long>(state.step));
      checkpoint::save_checkpoint(ck, out_dir / name);
    }
    checkpoint::save_checkpoint(ck, latest);
  };

  const int64_t start_epoch = state.step / steps_per_epoch;
  const int64_t start_offset = state.step % steps_per_epoch;
  for (int64_t e = start_epoch; e < cfg.train.epochs; ++e) {
    auto order = epoch_order(cfg.train.seed, e, n);
    for (int64_t b = e == start_epoch ? start_offset : 0; b < steps_per_epoch; ++b) {
      int64_t lo = b * batch_size;
      int64_t hi = std::min<int64_t>(n, lo + batch_size);
      std::vector<int64_t> idx(order.begin() + lo, order.begin() + hi);
      auto batch = load_batch(manifest, data::Split::Train, idx);
      state.epoch = e;
      losses::LossBundle bundle;
      try {
        bundle = train_step(state, batch, cfg);
      } catch (const TrainingError& err) {
        throw TrainingError(std::string(err.what()) + "; batch sample ids " + ids_string(idx));
      }
      log << losses::bundle_log_line(bundle, state.step, e) << "\n" << std::flush;
      if (state.step % cfg.train.checkpoint_every == 0 && state.step < total_steps) {
        save_all(/*numbered=*/true);
      }
    }
  }

  const fs::path final_path = out_dir / "final.ckpt";
  auto ck = to_checkpoint(state, cfg);
  checkpoint::save_checkpoint(ck, final_path);
  checkpoint::save_checkpoint(ck, latest);
  return TrainOutcome{final_path, log_path, state.step, cfg.train.epochs};
}

torch::Tensor infer(const fs::path& checkpoint_path, const torch::Tensor& m_in) {
  auto ck = checkpoint::load_checkpoint(checkpoint_path);
  auto cfg = config::parse_config(ck.config_json);
  checkpoint::check_fingerprint(ck, config::arch_fingerprint(cfg));

  auto m = m_in.dim() == 3 ? m_in.unsqueeze(0) : m_in;
  if (m.dim() != 4 || m.size(1) != 1) {
    throw ShapeError("infer: expected an MRI batch shaped (n,1,h,w) or (1,h,w)");
  }
  if (m.size(2) < 16 || m.size(3) < 16 || m.size(2) % 4 != 0 || m.size(3) % 4 != 0) {
    throw ShapeError("infer: input sides must be at least 16 and divisible by 4, got " +
                     std::to_string(m.size(2)) + "x" + std::to_string(m.size(3)));
  }

  nets::TranslationGenerator gen(cfg.forward_generator_config());
  checkpoint::load_state(*gen, section_of(ck, "gen_forward"), "gen_forward");
  gen->eval();
  torch::NoGradGuard no_grad;
  return gen->forward(m.to(torch::kFloat32));
}

AblationOutcome run_ablation_suite(const data::DatasetManifest& manifest,
                                   const config::RunConfig& base_cfg, const fs::path& out_dir) {
  base_cfg.validate();
  check_data_compat(manifest, base_cfg);
  fs::create_directories(out_dir);

  // One pretrained segmenter serves every row that wants one; its fingerprint
  // ignores the ablation, so the file is shared as-is.
  config::RunConfig seg_cfg = base_cfg;
  seg_cfg.ablation = config::AblationFlags{};
  pretrain_segmenter(manifest, seg_cfg, out_dir);

  AblationOutcome out;
  const std::vector<std::string> names = {"full", "A1", "A2", "A3", "A4", "A5"};
  for (const auto& name : names) {
    AblationRow row;
    row.name = name;
    config::RunConfig cfg = base_cfg;
    cfg.ablation = config::AblationFlags::from_name(name);
    fs::path row_dir = out_dir / name;
    try {
      fs::create_directories(row_dir);
      if (config::derive(cfg.ablation).needs_segmenter) {
        fs::copy_file(out_dir / "segmenter.ckpt", row_dir / "segmenter.ckpt",
                      fs::copy_options::overwrite_existing);
      }
      auto trained = train(manifest, cfg, row_dir);
      row.report = metrics::evaluate(manifest, trained.final_checkpoint, data::Split::Test);
      row.ok = true;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    out.rows.push_back(std::move(row));
  }

  std::ostringstream table;
  char line[256];
  std::snprintf(line, sizeof(line), "%-6s %10s %10s %10s %10s %10s %10s\n", "model", "CF", "dCF",
                "SSIM", "MS-SSIM", "STSIM", "FSIM");
  table << line;
  for (const auto& row : out.rows) {
    if (!row.ok) {
      std::snprintf(line, sizeof(line), "%-6s failed: %s\n", row.name.c_str(),
                    row.error.c_str());
      table << line;
      continue;
    }
    const auto& a = row.report.aggregate;
    std::snprintf(line, sizeof(line), "%-6s %10.4f %10.4f %10.4f %10.4f %10.4f %10.4f\n",
                  row.name.c_str(), a.cf.mean, a.delta_cf.mean, a.ssim.mean, a.ms_ssim.mean,
                  a.stsim.mean, a.fsim.mean);
    table << line;
  }
  table << "dataset " << hex16(data::manifest_checksum(manifest)) << ", test split of "
        << manifest.n_test << "\n";
  out.table = table.str();

  out.table_path = out_dir / "ablation_table.txt";
  std::ofstream(out.table_path, std::ios::trunc) << out.table;

  nlohmann::ordered_json j;
  j["manifest_checksum"] = hex16(data::manifest_checksum(manifest));
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& row : out.rows) {
    nlohmann::ordered_json r;
    r["name"] = row.name;
    r["ok"] = row.ok;
    if (row.ok) {
      r["report"] = nlohmann::ordered_json::parse(metrics::report_json(row.report));
    } else {
      r["error"] = row.error;
    }
    j["rows"].push_back(std::move(r));
  }
  out.json_path = out_dir / "ablation.json";
  std::ofstream(out.json_path, std::ios::trunc) << j.dump(2) << "\n";
  return out;
}

}  // namespace mricolor::training

namespace mricolor::metrics {

MetricReport evaluate(const data::DatasetManifest& manifest,
                      const std::filesystem::path& checkpoint_path, data::Split split) {
  auto ck = checkpoint::load_checkpoint(checkpoint_path);
  auto cfg = config::parse_config(ck.config_json);
  checkpoint::check_fingerprint(ck, config::arch_fingerprint(cfg));
  nets::TranslationGenerator gen(cfg.forward_generator_config());
  {
    auto it = ck.sections.find("gen_forward");
    if (it == ck.sections.end()) {
      throw CheckpointError("checkpoint: missing section gen_forward");
    }
    checkpoint::load_state(*gen, it->second, "gen_forward");
  }
  gen->eval();
  char id[40];
  std::snprintf(id, sizeof(id), "%016llx@%lld", static_cast<unsigned long long>(ck.fingerprint),
                static_cast<long long>(ck.step));
  ColorizeFn colorize = [gen](const torch::Tensor& m) mutable { return gen->forward(m); };
  return evaluate_with(colorize, manifest, split, id);
}

}  // namespace mricolor::metrics
