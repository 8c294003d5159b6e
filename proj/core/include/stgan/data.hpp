#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "stgan/image.hpp"
#include "stgan/losses.hpp"
#include "stgan/tensor.hpp"

namespace stgan {

/// Process-wide count of label-mask reads per domain: every mask file decoded
/// by load_dataset() and every Dataset::mask() access. Training code must
/// leave the target counter at zero.
class MaskReadCounter {
 public:
  static std::int64_t reads(Domain d);
  static void reset();
  static void record(Domain d, std::int64_t n = 1);
};

struct DataSample {
  ImageSlice image;
  int patient_id = 0;
  int slice_index = 0;
  Domain domain = Domain::kSource;
};

class Dataset {
 public:
  Dataset() = default;

  void add(DataSample sample, std::optional<LabelMask> mask);

  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  const DataSample& sample(std::size_t i) const { return samples_.at(i); }
  bool has_mask(std::size_t i) const { return masks_.at(i).has_value(); }
  bool all_masked() const;
  /// Counted access; throws when the sample carries no mask.
  const LabelMask& mask(std::size_t i) const;
  /// Side length of the (square) samples, 0 when empty.
  int image_size() const;

  std::filesystem::path manifest_path;

 private:
  std::vector<DataSample> samples_;
  std::vector<std::optional<LabelMask>> masks_;
};

struct LoadOptions {
  bool require_masks = false;
  /// Preprocessed side length; 0 keeps the manifest's native short side.
  int target_size = 0;
  /// Skip mask files entirely even when listed.
  bool skip_masks = false;
};

Dataset load_dataset(const std::filesystem::path& manifest_path, const LoadOptions& opts);

/// Min-max rescale to [-1, 1], bilinear resize of the short side to
/// `target_size`, then center crop. Constant images map to zeros.
ImageSlice preprocess(const Grid<double>& raw, int target_size, Domain domain = Domain::kSource);

/// Nearest-neighbour resize and the same center crop as preprocess().
LabelMask preprocess_mask(const LabelMask& raw, int target_size);

struct Batch {
  Tensor<float> images;               // (B, 1, S, S)
  std::optional<LabelTensor> masks;   // (B, 1, S, S)
  Domain domain = Domain::kSource;
  std::vector<std::size_t> indices;
};

/// Deterministic permutation of [0, n) for (seed, epoch).
std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::uint64_t epoch);

/// Index batches for one epoch; the last batch may be short.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, int batch_size,
                                                    std::uint64_t shuffle_seed,
                                                    std::uint64_t epoch);

Batch make_batch(const Dataset& ds, std::span<const std::size_t> indices, bool with_masks);

/// All batches of one epoch.
std::vector<Batch> batch_iterator(const Dataset& ds, int batch_size, std::uint64_t shuffle_seed,
                                  std::uint64_t epoch, bool with_masks);

}  // namespace stgan
