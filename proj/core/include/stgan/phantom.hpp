#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stgan/image.hpp"

namespace stgan {

struct Range {
  double min = 0;
  double max = 0;
  friend bool operator==(const Range&, const Range&) = default;
};

struct IntRange {
  int min = 0;
  int max = 0;
  friend bool operator==(const IntRange&, const IntRange&) = default;
};

/// Mean intensity per class, normalized units.
struct IntensityProfile {
  double background = 0;
  double lv = 0;
  double myo = 0;
  double rv = 0;
  friend bool operator==(const IntensityProfile&, const IntensityProfile&) = default;
};

/// Parameters of the synthetic two-domain heart-slice generator.
///
/// Geometry fields are fractions of `image_size`. The source domain mimics a
/// cine acquisition (bright blood, dark muscle, sharp edges); the target
/// domain mimics a late-enhancement scan (low blood/muscle contrast, bright
/// intra-muscle patches, blurred edges, more noise).
struct PhantomSpec {
  int image_size = 64;
  Range lv_radius{0.10, 0.15};
  Range myo_thickness{0.05, 0.08};
  bool rv_crescent = true;
  Range rv_angle_deg{100.0, 160.0};
  Range rv_thickness{0.06, 0.10};
  IntRange scar_patch_count{1, 3};
  double scar_intensity = 0.9;
  double noise_sigma_source = 0.04;
  double noise_sigma_target = 0.08;
  double boundary_blur_target = 1.0;
  IntensityProfile intensity_source{-0.3, 0.8, -0.7, 0.7};
  IntensityProfile intensity_target{-0.7, 0.2, -0.1, 0.25};

  /// Throws ValidationError naming the first offending field.
  void validate() const;
  friend bool operator==(const PhantomSpec&, const PhantomSpec&) = default;
};

struct PhantomSample {
  ImageSlice image;
  LabelMask mask;
  Domain domain = Domain::kSource;
  std::uint64_t seed = 0;
  int patient_id = 0;
  int slice_index = 0;
};

/// Pure function of (spec, domain, seed). The mask depends on the seed only,
/// so one seed yields the same anatomy in both domains.
PhantomSample generate_sample(const PhantomSpec& spec, Domain domain, std::uint64_t seed);

/// Seed of one dataset entry; mixes the domain in so source and target sets
/// drawn with the same dataset seed are unpaired.
std::uint64_t sample_seed(std::uint64_t dataset_seed, Domain domain, int patient_id,
                          int slice_index);

struct ManifestEntry {
  int patient_id = 0;
  int slice_index = 0;
  Domain domain = Domain::kSource;
  std::string image_path;  // relative to the manifest directory
  std::string mask_path;   // empty when absent
  std::uint64_t seed = 0;
  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  int image_size = 0;
  std::filesystem::path path;  // location of manifest.json

  std::vector<int> patient_ids() const;
};

inline constexpr const char* kManifestName = "manifest.json";

DatasetManifest read_manifest(const std::filesystem::path& manifest_path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& manifest_path);

struct GenerateOptions {
  int n_patients = 1;
  int slices_per_patient = 1;
  Domain domain = Domain::kSource;
  std::uint64_t seed = 0;
  bool overwrite = false;
  bool write_masks = true;
};

/// Writes images, masks and `manifest.json` under `out_dir`.
DatasetManifest generate_dataset(const PhantomSpec& spec, const GenerateOptions& opts,
                                 const std::filesystem::path& out_dir);

}  // namespace stgan
