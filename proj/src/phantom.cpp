#include "mricolor/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "json.hpp"
#include "mricolor/errors.hpp"
#include "mricolor/imageio.hpp"
#include "mricolor/rng.hpp"

namespace mricolor::data {

namespace {

std::array<float, 3> hsv_to_rgb(float h, float s, float v) {
  h = h - std::floor(h);
  float c = v * s;
  float hp = h * 6.0f;
  float x = c * (1.0f - std::abs(std::fmod(hp, 2.0f) - 1.0f));
  float r = 0, g = 0, b = 0;
  if (hp < 1) {
    r = c, g = x;
  } else if (hp < 2) {
    r = x, g = c;
  } else if (hp < 3) {
    g = c, b = x;
  } else if (hp < 4) {
    g = x, b = c;
  } else if (hp < 5) {
    r = x, b = c;
  } else {
    r = c, b = x;
  }
  float m = v - c;
  return {r + m, g + m, b + m};
}

struct Organ {
  int64_t class_id;
  float cx, cy;      // center, pixels
  float a, b;        // semi-axes, pixels
  float cos_t, sin_t;
  float w1, p1, w2, p2;  // boundary wobble
};

/// Labels drawn back-to-front: later organs overwrite earlier ones.
std::vector<int64_t> draw_labels(const PhantomSpec& spec, SampleRng& rng) {
  const int64_t n = spec.image_size;
  std::vector<int64_t> labels(static_cast<size_t>(n * n), 0);
  int64_t count = spec.organ_count_max > 0
                      ? rng.uniform_int(spec.organ_count_min, spec.organ_count_max)
                      : 0;
  std::vector<Organ> organs;
  organs.reserve(static_cast<size_t>(count));
  for (int64_t k = 0; k < count; ++k) {
    Organ o;
    o.class_id = rng.uniform_int(1, spec.num_classes - 1);
    o.cx = static_cast<float>(rng.uniform(0.15, 0.85)) * n;
    o.cy = static_cast<float>(rng.uniform(0.15, 0.85)) * n;
    o.a = static_cast<float>(rng.uniform(0.08, 0.28)) * n;
    o.b = static_cast<float>(rng.uniform(0.08, 0.28)) * n;
    float theta = static_cast<float>(rng.uniform(0.0, M_PI));
    o.cos_t = std::cos(theta);
    o.sin_t = std::sin(theta);
    o.w1 = static_cast<float>(rng.uniform(0.0, 0.12));
    o.p1 = static_cast<float>(rng.uniform(0.0, 2.0 * M_PI));
    o.w2 = static_cast<float>(rng.uniform(0.0, 0.08));
    o.p2 = static_cast<float>(rng.uniform(0.0, 2.0 * M_PI));
    organs.push_back(o);
  }
  for (const Organ& o : organs) {
    for (int64_t y = 0; y < n; ++y) {
      for (int64_t x = 0; x < n; ++x) {
        float dx = static_cast<float>(x) + 0.5f - o.cx;
        float dy = static_cast<float>(y) + 0.5f - o.cy;
        float u = (dx * o.cos_t + dy * o.sin_t) / o.a;
        float v = (-dx * o.sin_t + dy * o.cos_t) / o.b;
        float rho = std::sqrt(u * u + v * v);
        float phi = std::atan2(v, u);
        float edge = 1.0f + o.w1 * std::sin(3.0f * phi + o.p1) + o.w2 * std::sin(5.0f * phi + o.p2);
        if (rho <= edge) labels[static_cast<size_t>(y * n + x)] = o.class_id;
      }
    }
  }
  return labels;
}

struct Sinusoid {
  float amp, kx, ky, phase;
};

Sinusoid draw_sinusoid(SampleRng& rng, double amp_lo, double amp_hi, double freq_lo,
                       double freq_hi) {
  Sinusoid s;
  s.amp = static_cast<float>(rng.uniform(amp_lo, amp_hi));
  float freq = static_cast<float>(rng.uniform(freq_lo, freq_hi));
  float dir = static_cast<float>(rng.uniform(0.0, 2.0 * M_PI));
  s.kx = freq * std::cos(dir);
  s.ky = freq * std::sin(dir);
  s.phase = static_cast<float>(rng.uniform(0.0, 2.0 * M_PI));
  return s;
}

float eval_sinusoids(const std::vector<Sinusoid>& comps, float x, float y, float inv_size) {
  float v = 0.0f;
  for (const Sinusoid& s : comps) {
    v += s.amp * std::sin(2.0f * static_cast<float>(M_PI) * (s.kx * x + s.ky * y) * inv_size +
                          s.phase);
  }
  return v;
}

float sample_bilinear(const std::vector<float>& img, int64_t n, float y, float x) {
  float fx = std::floor(x);
  float fy = std::floor(y);
  float ax = x - fx;
  float ay = y - fy;
  auto clampi = [n](int64_t i) { return std::clamp<int64_t>(i, 0, n - 1); };
  int64_t x0 = clampi(static_cast<int64_t>(fx));
  int64_t x1 = clampi(static_cast<int64_t>(fx) + 1);
  int64_t y0 = clampi(static_cast<int64_t>(fy));
  int64_t y1 = clampi(static_cast<int64_t>(fy) + 1);
  float v00 = img[static_cast<size_t>(y0 * n + x0)];
  float v01 = img[static_cast<size_t>(y0 * n + x1)];
  float v10 = img[static_cast<size_t>(y1 * n + x0)];
  float v11 = img[static_cast<size_t>(y1 * n + x1)];
  return (1.0f - ay) * ((1.0f - ax) * v00 + ax * v01) + ay * ((1.0f - ax) * v10 + ax * v11);
}

std::vector<float> render_from_labels(const PhantomSpec& spec, const std::vector<int64_t>& labels) {
  std::vector<float> img(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) {
    img[i] = spec.mri_intensity[static_cast<size_t>(labels[i])];
  }
  return img;
}

std::vector<int64_t> labels_for_index(const PhantomSpec& spec, int64_t index) {
  SampleRng rng_layout = SampleRng::for_stream(spec.seed, static_cast<uint64_t>(index) * 4 + 0);
  return draw_labels(spec, rng_layout);
}

}  // namespace

PhantomSpec PhantomSpec::resolved() const {
  PhantomSpec out = *this;
  if (out.palette.empty()) out.palette = default_palette(out.num_classes);
  if (out.mri_intensity.empty()) out.mri_intensity = default_mri_intensities(out.num_classes);
  return out;
}

void PhantomSpec::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("PhantomSpec: " + msg); };
  if (image_size < 16 || (image_size & (image_size - 1)) != 0) {
    fail("image_size must be a power of two >= 16, got " + std::to_string(image_size));
  }
  if (num_classes < 1) fail("num_classes must be >= 1");
  if (organ_count_min < 0 || organ_count_max < organ_count_min) {
    fail("organ_count range invalid");
  }
  if (organ_count_max > 0 && num_classes < 2) {
    fail("organs require at least one non-background class");
  }
  if (static_cast<int64_t>(palette.size()) != num_classes) {
    fail("palette must have exactly " + std::to_string(num_classes) + " entries, got " +
         std::to_string(palette.size()));
  }
  if (static_cast<int64_t>(mri_intensity.size()) != num_classes) {
    fail("mri_intensity must have exactly " + std::to_string(num_classes) + " entries");
  }
  for (const auto& rgb : palette) {
    for (float v : rgb) {
      if (v < 0.0f || v > 1.0f) fail("palette values must lie in [0,1]");
    }
  }
  for (float v : mri_intensity) {
    if (v < 0.0f || v > 1.0f) fail("mri_intensity values must lie in [0,1]");
  }
  for (size_t i = 0; i < palette.size(); ++i) {
    for (size_t j = i + 1; j < palette.size(); ++j) {
      if (palette[i] == palette[j]) {
        fail("palette colors of classes " + std::to_string(i) + " and " + std::to_string(j) +
             " are not distinct");
      }
    }
  }
  if (noise_sigma < 0.0f || noise_sigma > 0.2f) fail("noise_sigma must lie in [0, 0.2]");
  if (deformation_amplitude < 0.0f) fail("deformation_amplitude must be >= 0");
}

std::vector<std::array<float, 3>> default_palette(int64_t num_classes) {
  std::vector<std::array<float, 3>> out;
  out.reserve(static_cast<size_t>(num_classes));
  out.push_back({0.05f, 0.05f, 0.06f});
  for (int64_t k = 1; k < num_classes; ++k) {
    // Golden-angle hue walk keeps neighbours well separated for any l.
    float hue = std::fmod(0.08f + 0.618034f * static_cast<float>(k - 1), 1.0f);
    float sat = 0.55f + 0.25f * static_cast<float>(k % 2);
    float val = 0.65f + 0.05f * static_cast<float>(k % 3);
    out.push_back(hsv_to_rgb(hue, sat, val));
  }
  return out;
}

std::vector<float> default_mri_intensities(int64_t num_classes) {
  std::vector<float> out;
  out.reserve(static_cast<size_t>(num_classes));
  out.push_back(0.05f);
  if (num_classes == 2) {
    out.push_back(0.65f);
    return out;
  }
  for (int64_t k = 1; k < num_classes; ++k) {
    out.push_back(0.2f + 0.75f * static_cast<float>(k - 1) / static_cast<float>(num_classes - 2));
  }
  return out;
}

std::string split_name(Split s) { return s == Split::Train ? "train" : "test"; }

std::filesystem::path DatasetManifest::m_path(Split s, int64_t i) const {
  return root / split_name(s) / (std::to_string(i) + "_m.png");
}
std::filesystem::path DatasetManifest::c_path(Split s, int64_t i) const {
  return root / split_name(s) / (std::to_string(i) + "_c.png");
}
std::filesystem::path DatasetManifest::s_path(Split s, int64_t i) const {
  return root / split_name(s) / (std::to_string(i) + "_s.png");
}
std::filesystem::path DatasetManifest::warp_path(Split s, int64_t i) const {
  return root / split_name(s) / (std::to_string(i) + "_warp.bin");
}

torch::Tensor render_intensity(const PhantomSpec& raw_spec, int64_t index) {
  PhantomSpec spec = raw_spec.resolved();
  spec.validate();
  const int64_t n = spec.image_size;
  auto render = render_from_labels(spec, labels_for_index(spec, index));
  return torch::from_blob(render.data(), {1, n, n}, torch::kFloat32).clone();
}

TripletSample generate_phantom(const PhantomSpec& raw_spec, int64_t index) {
  PhantomSpec spec = raw_spec.resolved();
  spec.validate();
  if (index < 0) throw ConfigError("generate_phantom: index must be >= 0");
  const int64_t n = spec.image_size;
  const size_t npx = static_cast<size_t>(n * n);
  const float inv_size = 1.0f / static_cast<float>(n);

  // Independent streams per concern so the draw sequence of one knob never
  // shifts another (e.g. amplitude sweeps keep noise identical).
  SampleRng rng_texture = SampleRng::for_stream(spec.seed, static_cast<uint64_t>(index) * 4 + 1);
  SampleRng rng_warp = SampleRng::for_stream(spec.seed, static_cast<uint64_t>(index) * 4 + 2);
  SampleRng rng_noise = SampleRng::for_stream(spec.seed, static_cast<uint64_t>(index) * 4 + 3);

  std::vector<int64_t> labels = labels_for_index(spec, index);

  // Cryosection: palette color per class plus a mild brightness texture.
  std::vector<Sinusoid> texture;
  texture.push_back(draw_sinusoid(rng_texture, 0.01, 0.03, 2.0, 6.0));
  texture.push_back(draw_sinusoid(rng_texture, 0.01, 0.03, 2.0, 6.0));
  std::vector<float> c(3 * npx);
  for (int64_t y = 0; y < n; ++y) {
    for (int64_t x = 0; x < n; ++x) {
      size_t i = static_cast<size_t>(y * n + x);
      float t = eval_sinusoids(texture, static_cast<float>(x), static_cast<float>(y), inv_size);
      const auto& rgb = spec.palette[static_cast<size_t>(labels[i])];
      for (int64_t ch = 0; ch < 3; ++ch) {
        c[static_cast<size_t>(ch) * npx + i] = std::clamp(rgb[static_cast<size_t>(ch)] + t, 0.0f, 1.0f);
      }
    }
  }

  // Displacement field: low-frequency sinusoid mixture, normalized so the
  // maximum displacement magnitude equals deformation_amplitude exactly.
  std::vector<Sinusoid> comps_dx, comps_dy;
  for (int j = 0; j < 3; ++j) comps_dx.push_back(draw_sinusoid(rng_warp, 0.2, 1.0, 0.5, 2.5));
  for (int j = 0; j < 3; ++j) comps_dy.push_back(draw_sinusoid(rng_warp, 0.2, 1.0, 0.5, 2.5));
  std::vector<float> dx(npx), dy(npx);
  float max_mag = 0.0f;
  for (int64_t y = 0; y < n; ++y) {
    for (int64_t x = 0; x < n; ++x) {
      size_t i = static_cast<size_t>(y * n + x);
      dx[i] = eval_sinusoids(comps_dx, static_cast<float>(x), static_cast<float>(y), inv_size);
      dy[i] = eval_sinusoids(comps_dy, static_cast<float>(x), static_cast<float>(y), inv_size);
      max_mag = std::max(max_mag, std::sqrt(dx[i] * dx[i] + dy[i] * dy[i]));
    }
  }
  float scale = max_mag > 0.0f ? spec.deformation_amplitude / max_mag : 0.0f;
  for (size_t i = 0; i < npx; ++i) {
    dx[i] *= scale;
    dy[i] *= scale;
  }

  // MRI: warped intensity rendering plus clipped Gaussian noise.
  std::vector<float> render = render_from_labels(spec, labels);
  std::vector<float> m(npx);
  for (int64_t y = 0; y < n; ++y) {
    for (int64_t x = 0; x < n; ++x) {
      size_t i = static_cast<size_t>(y * n + x);
      float v = (scale == 0.0f)
                    ? render[i]
                    : sample_bilinear(render, n, static_cast<float>(y) + dy[i],
                                      static_cast<float>(x) + dx[i]);
      if (spec.noise_sigma > 0.0f) {
        v += spec.noise_sigma * static_cast<float>(rng_noise.normal());
      }
      m[i] = std::clamp(v, 0.0f, 1.0f);
    }
  }

  TripletSample out;
  out.m = torch::from_blob(m.data(), {1, n, n}, torch::kFloat32).clone();
  out.c = torch::from_blob(c.data(), {3, n, n}, torch::kFloat32).clone();
  auto label_t = torch::from_blob(labels.data(), {n, n}, torch::kInt64).clone();
  out.s = torch::one_hot(label_t, spec.num_classes).permute({2, 0, 1}).to(torch::kFloat32).contiguous();
  std::vector<float> warp(2 * npx);
  std::copy(dy.begin(), dy.end(), warp.begin());
  std::copy(dx.begin(), dx.end(), warp.begin() + static_cast<int64_t>(npx));
  out.warp = torch::from_blob(warp.data(), {2, n, n}, torch::kFloat32).clone();
  return out;
}

namespace {

nlohmann::ordered_json spec_to_json(const PhantomSpec& spec) {
  nlohmann::ordered_json j;
  j["image_size"] = spec.image_size;
  j["num_classes"] = spec.num_classes;
  j["organ_count_min"] = spec.organ_count_min;
  j["organ_count_max"] = spec.organ_count_max;
  j["palette"] = spec.palette;
  j["mri_intensity"] = spec.mri_intensity;
  j["noise_sigma"] = spec.noise_sigma;
  j["deformation_amplitude"] = spec.deformation_amplitude;
  j["seed"] = spec.seed;
  return j;
}

PhantomSpec spec_from_json(const nlohmann::json& j) {
  PhantomSpec spec;
  spec.image_size = j.at("image_size").get<int64_t>();
  spec.num_classes = j.at("num_classes").get<int64_t>();
  spec.organ_count_min = j.at("organ_count_min").get<int64_t>();
  spec.organ_count_max = j.at("organ_count_max").get<int64_t>();
  spec.palette = j.at("palette").get<std::vector<std::array<float, 3>>>();
  spec.mri_intensity = j.at("mri_intensity").get<std::vector<float>>();
  spec.noise_sigma = j.at("noise_sigma").get<float>();
  spec.deformation_amplitude = j.at("deformation_amplitude").get<float>();
  spec.seed = j.at("seed").get<uint64_t>();
  return spec;
}

}  // namespace

std::string manifest_json(const DatasetManifest& manifest) {
  nlohmann::ordered_json j;
  j["format_version"] = manifest.format_version;
  j["spec"] = spec_to_json(manifest.spec);
  j["n_train"] = manifest.n_train;
  j["n_test"] = manifest.n_test;
  for (Split split : {Split::Train, Split::Test}) {
    nlohmann::ordered_json files = nlohmann::ordered_json::array();
    for (int64_t i = 0; i < manifest.split_size(split); ++i) {
      nlohmann::ordered_json entry;
      entry["m"] = manifest.m_path(split, i).filename().string();
      entry["c"] = manifest.c_path(split, i).filename().string();
      entry["s"] = manifest.s_path(split, i).filename().string();
      entry["warp"] = manifest.warp_path(split, i).filename().string();
      files.push_back(entry);
    }
    j[split_name(split)] = files;
  }
  return j.dump(2) + "\n";
}

uint64_t manifest_checksum(const DatasetManifest& manifest) {
  return fnv1a64(manifest_json(manifest));
}

DatasetManifest generate_dataset(const PhantomSpec& raw_spec, int64_t n_train, int64_t n_test,
                                 const std::filesystem::path& root) {
  PhantomSpec spec = raw_spec.resolved();
  spec.validate();
  if (n_train <= 0 || n_test <= 0) {
    throw ConfigError("generate_dataset: split sizes must be positive");
  }
  DatasetManifest manifest{root, spec, n_train, n_test};
  std::error_code ec;
  std::filesystem::create_directories(root / "train", ec);
  std::filesystem::create_directories(root / "test", ec);
  if (!std::filesystem::is_directory(root / "train") ||
      !std::filesystem::is_directory(root / "test")) {
    throw DatasetError("generate_dataset: cannot create dataset directories under " +
                       root.string());
  }
  // Split by sample index: train samples use indices [0, n_train), test the
  // following n_test indices.
  for (Split split : {Split::Train, Split::Test}) {
    int64_t base = split == Split::Train ? 0 : n_train;
    for (int64_t i = 0; i < manifest.split_size(split); ++i) {
      TripletSample t = generate_phantom(spec, base + i);
      io::save_png_gray(manifest.m_path(split, i), t.m);
      io::save_png_rgb(manifest.c_path(split, i), t.c);
      io::save_png_labels(manifest.s_path(split, i), t.s.argmax(0));
      io::save_warp(manifest.warp_path(split, i), t.warp);
    }
  }
  std::ofstream out(root / "manifest.json", std::ios::binary);
  out << manifest_json(manifest);
  if (!out) throw DatasetError("generate_dataset: failed writing " + (root / "manifest.json").string());
  return manifest;
}

DatasetManifest load_manifest(const std::filesystem::path& root) {
  std::ifstream in(root / "manifest.json", std::ios::binary);
  if (!in) throw DatasetError("load_manifest: cannot open " + (root / "manifest.json").string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError("load_manifest: invalid JSON in " + (root / "manifest.json").string() +
                       ": " + e.what());
  }
  DatasetManifest manifest;
  manifest.root = root;
  try {
    manifest.format_version = j.at("format_version").get<int>();
    manifest.spec = spec_from_json(j.at("spec"));
    manifest.n_train = j.at("n_train").get<int64_t>();
    manifest.n_test = j.at("n_test").get<int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError("load_manifest: missing field in " + (root / "manifest.json").string() +
                       ": " + e.what());
  }
  if (manifest.format_version != 1) {
    throw DatasetError("load_manifest: unsupported format_version " +
                       std::to_string(manifest.format_version));
  }
  for (Split split : {Split::Train, Split::Test}) {
    for (int64_t i = 0; i < manifest.split_size(split); ++i) {
      for (const auto& p : {manifest.m_path(split, i), manifest.c_path(split, i),
                            manifest.s_path(split, i), manifest.warp_path(split, i)}) {
        if (!std::filesystem::exists(p)) {
          throw DatasetError("load_manifest: listed file missing: " + p.string());
        }
      }
    }
  }
  return manifest;
}

TripletSample load_triplet(const DatasetManifest& manifest, Split split, int64_t i) {
  if (i < 0 || i >= manifest.split_size(split)) {
    throw DatasetError("load_triplet: index " + std::to_string(i) + " out of range for " +
                       split_name(split) + " split of size " +
                       std::to_string(manifest.split_size(split)));
  }
  TripletSample t;
  t.m = io::load_png_gray(manifest.m_path(split, i));
  t.c = io::load_png_rgb(manifest.c_path(split, i));
  torch::Tensor labels = io::load_png_labels(manifest.s_path(split, i));
  int64_t max_id = labels.max().item<int64_t>();
  if (max_id >= manifest.spec.num_classes) {
    throw DatasetError("load_triplet: label id " + std::to_string(max_id) + " >= num_classes " +
                       std::to_string(manifest.spec.num_classes) + " in " +
                       manifest.s_path(split, i).string());
  }
  t.s = torch::one_hot(labels, manifest.spec.num_classes)
            .permute({2, 0, 1})
            .to(torch::kFloat32)
            .contiguous();
  t.warp = io::load_warp(manifest.warp_path(split, i));
  return t;
}

}  // namespace mricolor::data
