#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mricolor::data {

/// Parameters of the procedural triplet generator. A default-constructed spec
/// with an empty palette/intensity table resolves to built-in tables sized to
/// num_classes.
struct PhantomSpec {
  int64_t image_size = 256;  // square, power of two
  int64_t num_classes = 8;   // incl. background class 0
  int64_t organ_count_min = 3;
  int64_t organ_count_max = 8;
  std::vector<std::array<float, 3>> palette;  // per-class RGB in [0,1]
  std::vector<float> mri_intensity;           // per-class mean gray in [0,1]
  float noise_sigma = 0.02f;                  // additive Gaussian std on the MRI
  float deformation_amplitude = 3.0f;         // max displacement in pixels
  uint64_t seed = 1;

  /// Copy with empty palette / intensity tables replaced by defaults.
  PhantomSpec resolved() const;
  /// Throws ConfigError on any violated invariant. Call on a resolved spec.
  void validate() const;
};

/// Deterministic default tables for l classes; class 0 is a dark background.
std::vector<std::array<float, 3>> default_palette(int64_t num_classes);
std::vector<float> default_mri_intensities(int64_t num_classes);

/// One aligned (MRI, Cryosection, segmentation) sample. Tensors are float32,
/// shapes (1,h,w), (3,h,w), (l,h,w) one-hot, and (2,h,w) displacement (dy, dx).
struct TripletSample {
  torch::Tensor m;
  torch::Tensor c;
  torch::Tensor s;
  torch::Tensor warp;
};

enum class Split { Train, Test };
std::string split_name(Split s);

struct DatasetManifest {
  std::filesystem::path root;
  PhantomSpec spec;
  int64_t n_train = 0;
  int64_t n_test = 0;
  int format_version = 1;

  int64_t split_size(Split s) const { return s == Split::Train ? n_train : n_test; }
  /// File paths of sample i within a split, all relative to root.
  std::filesystem::path m_path(Split s, int64_t i) const;
  std::filesystem::path c_path(Split s, int64_t i) const;
  std::filesystem::path s_path(Split s, int64_t i) const;
  std::filesystem::path warp_path(Split s, int64_t i) const;
};

/// Generates one triplet; identical (spec, index) pairs yield identical bytes.
TripletSample generate_phantom(const PhantomSpec& spec, int64_t index);

/// The intensity-table rendering of the sample's label map, before warp and
/// noise. Exposed so tests can compare m against its undeformed source.
torch::Tensor render_intensity(const PhantomSpec& spec, int64_t index);

/// Writes n_train + n_test triplets plus manifest.json under root.
DatasetManifest generate_dataset(const PhantomSpec& spec, int64_t n_train, int64_t n_test,
                                 const std::filesystem::path& root);

/// Reads manifest.json and checks every listed file exists.
DatasetManifest load_manifest(const std::filesystem::path& root);

/// Canonical JSON text of a manifest (sorted keys); its FNV-1a digest is the
/// manifest checksum used by determinism tests and the ablation table.
std::string manifest_json(const DatasetManifest& manifest);
uint64_t manifest_checksum(const DatasetManifest& manifest);

/// Decodes sample i of a split back to unit-interval tensors.
TripletSample load_triplet(const DatasetManifest& manifest, Split split, int64_t i);

}  // namespace mricolor::data
