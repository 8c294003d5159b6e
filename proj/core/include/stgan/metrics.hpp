#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stgan/image.hpp"

namespace stgan::metrics {

// Overlap scores on binary regions (nonzero = inside). Both regions empty
// scores 1.0.
double dice(std::span<const std::uint8_t> seg, std::span<const std::uint8_t> gt);
double jaccard(std::span<const std::uint8_t> seg, std::span<const std::uint8_t> gt);

struct Spacing {
  double x = 1.0;
  double y = 1.0;
  double z = 1.0;  // between stacked slices
};

struct Point {
  int x = 0;
  int y = 0;
  int z = 0;
  friend bool operator==(const Point&, const Point&) = default;
};

struct BoundarySet {
  std::vector<Point> points;
  Spacing spacing;
};

enum class Structure { kLV, kRV, kMyo };
enum class Boundary { kLVEndo, kLVEpi, kRVEndo };

inline constexpr std::array<Structure, 3> kStructures{Structure::kLV, Structure::kRV, Structure::kMyo};
inline constexpr std::array<Boundary, 3> kBoundaries{Boundary::kLVEndo, Boundary::kLVEpi,
                                                      Boundary::kRVEndo};

std::string name(Structure s);
std::string name(Boundary b);

/// Binary membership of a structure (or boundary region) in a label mask.
Grid<std::uint8_t> region(const LabelMask& mask, Structure s);
Grid<std::uint8_t> region(const LabelMask& mask, Boundary b);

/// Region pixels with a 4-neighbour outside the region (the image border
/// counts as outside). nullopt when the region is empty.
std::optional<BoundarySet> extract_boundary(const LabelMask& mask, Boundary b,
                                            Spacing spacing = {}, int slice = 0);
std::vector<Point> boundary_points(const Grid<std::uint8_t>& region, int slice = 0);

/// Average symmetric surface distance; nullopt if either set is empty.
std::optional<double> asd(const BoundarySet& a, const BoundarySet& b);
/// Symmetric Hausdorff distance; nullopt if either set is empty.
std::optional<double> hd(const BoundarySet& a, const BoundarySet& b);

enum class DistanceMode { kStacked3D, kPerSliceMean };

struct PatientMetrics {
  int patient_id = 0;
  std::array<double, 3> dice{};       // indexed like kStructures
  std::array<double, 3> jaccard{};
  std::array<std::optional<double>, 3> asd{};  // indexed like kBoundaries
  std::array<std::optional<double>, 3> hd{};
};

PatientMetrics evaluate_volume(std::span<const LabelMask> seg_slices,
                               std::span<const LabelMask> gt_slices, Spacing spacing = {},
                               DistanceMode mode = DistanceMode::kStacked3D);

struct SummaryRow {
  std::string metric;     // Dice | Jaccard | ASD | HD
  std::string structure;  // LV | RV | Myo | LV endo | LV epi | RV endo
  double mean = 0;
  double std = 0;  // sample standard deviation (n - 1); 0 when n == 1
  int n = 0;       // defined per-patient values
};

/// Mean and sample standard deviation per metric; undefined values skipped.
std::vector<SummaryRow> aggregate_cohort(std::span<const PatientMetrics> per_patient);

}  // namespace stgan::metrics
