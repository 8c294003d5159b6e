#include "stgan/data.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>

#include "stgan/image_io.hpp"
#include "stgan/phantom.hpp"

namespace stgan {
namespace {

std::atomic<std::int64_t> g_mask_reads[2];

// Resize geometry shared by images and masks: scale the short side to
// `target`, keep aspect, then crop the centre `target` x `target` window.
struct ResizePlan {
  int scaled_h, scaled_w, off_y, off_x;
};

ResizePlan plan_resize(int h, int w, int target) {
  if (h <= 0 || w <= 0) throw ValidationError("preprocess: empty input");
  if (target <= 0) throw ValidationError("preprocess: target size must be positive");
  ResizePlan p{};
  if (h <= w) {
    p.scaled_h = target;
    p.scaled_w = static_cast<int>(std::lround(double(w) * target / h));
  } else {
    p.scaled_w = target;
    p.scaled_h = static_cast<int>(std::lround(double(h) * target / w));
  }
  p.off_y = (p.scaled_h - target) / 2;
  p.off_x = (p.scaled_w - target) / 2;
  return p;
}

// Half-pixel-centre source coordinate, clamped to the valid range.
double source_coord(int dst, int src_extent, int dst_extent) {
  const double s = (dst + 0.5) * double(src_extent) / double(dst_extent) - 0.5;
  return std::clamp(s, 0.0, double(src_extent - 1));
}

}  // namespace

std::int64_t MaskReadCounter::reads(Domain d) { return g_mask_reads[int(d)].load(); }
void MaskReadCounter::reset() {
  g_mask_reads[0] = 0;
  g_mask_reads[1] = 0;
}
void MaskReadCounter::record(Domain d, std::int64_t n) { g_mask_reads[int(d)] += n; }

void Dataset::add(DataSample sample, std::optional<LabelMask> mask) {
  if (!samples_.empty()) {
    const auto& first = samples_.front().image.pixels;
    if (!first.same_shape(sample.image.pixels)) {
      throw ValidationError("dataset: all samples must share one shape");
    }
  }
  if (mask && (mask->h != sample.image.pixels.h || mask->w != sample.image.pixels.w)) {
    throw ValidationError("dataset: mask shape differs from image shape");
  }
  samples_.push_back(std::move(sample));
  masks_.push_back(std::move(mask));
}

bool Dataset::all_masked() const {
  return std::all_of(masks_.begin(), masks_.end(), [](const auto& m) { return m.has_value(); });
}

const LabelMask& Dataset::mask(std::size_t i) const {
  const auto& m = masks_.at(i);
  if (!m) throw ValidationError("dataset: sample " + std::to_string(i) + " has no mask");
  MaskReadCounter::record(samples_[i].domain);
  return *m;
}

int Dataset::image_size() const {
  return samples_.empty() ? 0 : samples_.front().image.pixels.h;
}

ImageSlice preprocess(const Grid<double>& raw, int target_size, Domain domain) {
  if (raw.size() == 0) throw ValidationError("preprocess: empty image");
  double lo = INFINITY, hi = -INFINITY;
  for (double v : raw.v) {
    if (!std::isfinite(v)) throw ValidationError("preprocess: non-finite pixel value");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  Grid<double> norm(raw.h, raw.w, 0.0);
  if (hi > lo) {
    for (std::size_t i = 0; i < raw.size(); ++i) norm.v[i] = 2.0 * (raw.v[i] - lo) / (hi - lo) - 1.0;
  }
  const ResizePlan p = plan_resize(raw.h, raw.w, target_size);
  ImageSlice out;
  out.domain = domain;
  out.pixels = Grid<float>(target_size, target_size);
  for (int y = 0; y < target_size; ++y) {
    const double sy = source_coord(y + p.off_y, raw.h, p.scaled_h);
    const int y0 = static_cast<int>(std::floor(sy));
    const int y1 = std::min(y0 + 1, raw.h - 1);
    const double fy = sy - y0;
    for (int x = 0; x < target_size; ++x) {
      const double sx = source_coord(x + p.off_x, raw.w, p.scaled_w);
      const int x0 = static_cast<int>(std::floor(sx));
      const int x1 = std::min(x0 + 1, raw.w - 1);
      const double fx = sx - x0;
      const double top = norm.at(y0, x0) * (1 - fx) + norm.at(y0, x1) * fx;
      const double bot = norm.at(y1, x0) * (1 - fx) + norm.at(y1, x1) * fx;
      out.pixels.at(y, x) = static_cast<float>(std::clamp(top * (1 - fy) + bot * fy, -1.0, 1.0));
    }
  }
  return out;
}

LabelMask preprocess_mask(const LabelMask& raw, int target_size) {
  if (raw.size() == 0) throw ValidationError("preprocess_mask: empty mask");
  if (!valid_label_alphabet(raw)) throw ValidationError("preprocess_mask: label outside {0,1,2,3}");
  const ResizePlan p = plan_resize(raw.h, raw.w, target_size);
  LabelMask out(target_size, target_size);
  for (int y = 0; y < target_size; ++y) {
    const int sy = std::min(raw.h - 1, static_cast<int>(std::floor((y + p.off_y + 0.5) * raw.h / p.scaled_h)));
    for (int x = 0; x < target_size; ++x) {
      const int sx = std::min(raw.w - 1, static_cast<int>(std::floor((x + p.off_x + 0.5) * raw.w / p.scaled_w)));
      out.at(y, x) = raw.at(sy, sx);
    }
  }
  return out;
}

Dataset load_dataset(const std::filesystem::path& manifest_path, const LoadOptions& opts) {
  const DatasetManifest m = read_manifest(manifest_path);
  const auto root = manifest_path.parent_path();
  Dataset ds;
  ds.manifest_path = manifest_path;
  int target = opts.target_size;
  for (const ManifestEntry& e : m.entries) {
    const auto img_path = root / e.image_path;
    if (!std::filesystem::exists(img_path)) throw IoError(img_path.string(), "missing image file");
    const Grid<std::uint16_t> raw16 = io::read_pgm(img_path);
    if (target == 0) target = std::min(raw16.h, raw16.w);
    Grid<double> raw(raw16.h, raw16.w);
    std::transform(raw16.v.begin(), raw16.v.end(), raw.v.begin(), [](auto v) { return double(v); });

    std::optional<LabelMask> mask;
    if (!e.mask_path.empty() && !opts.skip_masks) {
      const auto mask_path = root / e.mask_path;
      if (!std::filesystem::exists(mask_path)) throw IoError(mask_path.string(), "missing mask file");
      LabelMask rawm = io::read_label_png(mask_path);
      MaskReadCounter::record(e.domain);
      if (!valid_label_alphabet(rawm)) {
        throw ValidationError("mask has a value outside {0,1,2,3}: " + mask_path.string());
      }
      if (rawm.h != raw16.h || rawm.w != raw16.w) {
        throw ValidationError("mask shape differs from image: " + mask_path.string());
      }
      mask = preprocess_mask(rawm, target);
    } else if (opts.require_masks) {
      throw ValidationError("manifest entry without mask (patient " + std::to_string(e.patient_id) +
                            ", slice " + std::to_string(e.slice_index) + ") in " +
                            manifest_path.string());
    }
    DataSample s;
    s.image = preprocess(raw, target, e.domain);
    s.patient_id = e.patient_id;
    s.slice_index = e.slice_index;
    s.domain = e.domain;
    ds.add(std::move(s), std::move(mask));
  }
  return ds;
}

std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
  std::mt19937_64 rng(seq);
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, int batch_size,
                                                    std::uint64_t shuffle_seed,
                                                    std::uint64_t epoch) {
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (n == 0) throw ValidationError("cannot batch an empty dataset");
  const auto perm = epoch_permutation(n, shuffle_seed, epoch);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(n, i + static_cast<std::size_t>(batch_size));
    out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(i),
                     perm.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

Batch make_batch(const Dataset& ds, std::span<const std::size_t> indices, bool with_masks) {
  if (indices.empty()) throw ValidationError("empty batch");
  const int s = ds.image_size();
  const int b = static_cast<int>(indices.size());
  Batch batch;
  batch.domain = ds.sample(indices[0]).domain;
  batch.indices.assign(indices.begin(), indices.end());
  batch.images = Tensor<float>(Shape{b, 1, s, s});
  if (with_masks) batch.masks = LabelTensor(Shape{b, 1, s, s});
  for (int i = 0; i < b; ++i) {
    const auto& px = ds.sample(indices[std::size_t(i)]).image.pixels.v;
    std::copy(px.begin(), px.end(), batch.images.plane(i, 0));
    if (with_masks) {
      const auto& m = ds.mask(indices[std::size_t(i)]).v;
      std::copy(m.begin(), m.end(), batch.masks->plane(i, 0));
    }
  }
  return batch;
}

std::vector<Batch> batch_iterator(const Dataset& ds, int batch_size, std::uint64_t shuffle_seed,
                                  std::uint64_t epoch, bool with_masks) {
  std::vector<Batch> out;
  for (const auto& idx : batch_indices(ds.size(), batch_size, shuffle_seed, epoch)) {
    out.push_back(make_batch(ds, idx, with_masks));
  }
  return out;
}

}  // namespace stgan
