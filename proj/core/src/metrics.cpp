#include "stgan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace stgan::metrics {
namespace {

struct Counts {
  std::size_t seg = 0, gt = 0, both = 0;
};

Counts count(std::span<const std::uint8_t> seg, std::span<const std::uint8_t> gt) {
  if (seg.size() != gt.size()) throw ValidationError("overlap metric: shape mismatch");
  Counts c;
  for (std::size_t i = 0; i < seg.size(); ++i) {
    const bool a = seg[i] != 0;
    const bool b = gt[i] != 0;
    c.seg += a;
    c.gt += b;
    c.both += a && b;
  }
  return c;
}

double dist(const Point& p, const Point& q, const Spacing& s) {
  const double dx = (p.x - q.x) * s.x;
  const double dy = (p.y - q.y) * s.y;
  const double dz = (p.z - q.z) * s.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// Distance from each point of `from` to the nearest point of `to`.
std::vector<double> nearest(const BoundarySet& from, const BoundarySet& to) {
  std::vector<double> d(from.points.size(), std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < from.points.size(); ++i) {
    for (const Point& q : to.points) d[i] = std::min(d[i], dist(from.points[i], q, from.spacing));
  }
  return d;
}

Grid<std::uint8_t> stack_region(std::span<const LabelMask> slices, Structure s) {
  Grid<std::uint8_t> out;
  for (const auto& m : slices) {
    const auto r = region(m, s);
    out.w = r.w;
    out.h += r.h;
    out.v.insert(out.v.end(), r.v.begin(), r.v.end());
  }
  return out;
}

std::optional<BoundarySet> stacked_boundary(std::span<const LabelMask> slices, Boundary b,
                                            Spacing spacing) {
  BoundarySet out;
  out.spacing = spacing;
  for (std::size_t z = 0; z < slices.size(); ++z) {
    const auto pts = boundary_points(region(slices[z], b), static_cast<int>(z));
    out.points.insert(out.points.end(), pts.begin(), pts.end());
  }
  if (out.points.empty()) return std::nullopt;
  return out;
}

std::optional<double> mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  double s = 0;
  for (double x : v) s += x;
  return s / double(v.size());
}

}  // namespace

double dice(std::span<const std::uint8_t> seg, std::span<const std::uint8_t> gt) {
  const Counts c = count(seg, gt);
  if (c.seg + c.gt == 0) return 1.0;
  return 2.0 * double(c.both) / double(c.seg + c.gt);
}

double jaccard(std::span<const std::uint8_t> seg, std::span<const std::uint8_t> gt) {
  const Counts c = count(seg, gt);
  const std::size_t uni = c.seg + c.gt - c.both;
  if (uni == 0) return 1.0;
  return double(c.both) / double(uni);
}

std::string name(Structure s) {
  switch (s) {
    case Structure::kLV: return "LV";
    case Structure::kRV: return "RV";
    case Structure::kMyo: return "Myo";
  }
  return "?";
}

std::string name(Boundary b) {
  switch (b) {
    case Boundary::kLVEndo: return "LV endo";
    case Boundary::kLVEpi: return "LV epi";
    case Boundary::kRVEndo: return "RV endo";
  }
  return "?";
}

Grid<std::uint8_t> region(const LabelMask& mask, Structure s) {
  const std::uint8_t label = s == Structure::kLV ? kLV : (s == Structure::kRV ? kRV : kMyo);
  Grid<std::uint8_t> out(mask.h, mask.w, 0);
  for (std::size_t i = 0; i < mask.size(); ++i) out.v[i] = mask.v[i] == label;
  return out;
}

Grid<std::uint8_t> region(const LabelMask& mask, Boundary b) {
  Grid<std::uint8_t> out(mask.h, mask.w, 0);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const std::uint8_t v = mask.v[i];
    switch (b) {
      case Boundary::kLVEndo: out.v[i] = v == kLV; break;
      case Boundary::kLVEpi: out.v[i] = v == kLV || v == kMyo; break;
      case Boundary::kRVEndo: out.v[i] = v == kRV; break;
    }
  }
  return out;
}

std::vector<Point> boundary_points(const Grid<std::uint8_t>& r, int slice) {
  std::vector<Point> pts;
  auto outside = [&r](int y, int x) {
    return y < 0 || x < 0 || y >= r.h || x >= r.w || r.at(y, x) == 0;
  };
  for (int y = 0; y < r.h; ++y) {
    for (int x = 0; x < r.w; ++x) {
      if (r.at(y, x) == 0) continue;
      if (outside(y - 1, x) || outside(y + 1, x) || outside(y, x - 1) || outside(y, x + 1)) {
        pts.push_back({x, y, slice});
      }
    }
  }
  return pts;
}

std::optional<BoundarySet> extract_boundary(const LabelMask& mask, Boundary b, Spacing spacing,
                                            int slice) {
  if (!valid_label_alphabet(mask)) throw ValidationError("extract_boundary: label outside {0,1,2,3}");
  BoundarySet out;
  out.spacing = spacing;
  out.points = boundary_points(region(mask, b), slice);
  if (out.points.empty()) return std::nullopt;
  return out;
}

std::optional<double> asd(const BoundarySet& a, const BoundarySet& b) {
  if (a.points.empty() || b.points.empty()) return std::nullopt;
  double sum = 0.0;
  for (double d : nearest(a, b)) sum += d;
  for (double d : nearest(b, a)) sum += d;
  return sum / double(a.points.size() + b.points.size());
}

std::optional<double> hd(const BoundarySet& a, const BoundarySet& b) {
  if (a.points.empty() || b.points.empty()) return std::nullopt;
  double m = 0.0;
  for (double d : nearest(a, b)) m = std::max(m, d);
  for (double d : nearest(b, a)) m = std::max(m, d);
  return m;
}

PatientMetrics evaluate_volume(std::span<const LabelMask> seg, std::span<const LabelMask> gt,
                               Spacing spacing, DistanceMode mode) {
  if (seg.size() != gt.size()) throw ValidationError("evaluate_volume: slice count mismatch");
  if (seg.empty()) throw ValidationError("evaluate_volume: empty volume");
  for (std::size_t z = 0; z < seg.size(); ++z) {
    if (!seg[z].same_shape(gt[z]) || !seg[z].same_shape(seg[0])) {
      throw ValidationError("evaluate_volume: slice shape mismatch at slice " + std::to_string(z));
    }
  }
  PatientMetrics r;
  for (std::size_t i = 0; i < kStructures.size(); ++i) {
    const auto a = stack_region(seg, kStructures[i]);
    const auto b = stack_region(gt, kStructures[i]);
    r.dice[i] = dice(a.v, b.v);
    r.jaccard[i] = jaccard(a.v, b.v);
  }
  for (std::size_t i = 0; i < kBoundaries.size(); ++i) {
    if (mode == DistanceMode::kStacked3D) {
      const auto a = stacked_boundary(seg, kBoundaries[i], spacing);
      const auto b = stacked_boundary(gt, kBoundaries[i], spacing);
      if (a && b) {
        r.asd[i] = asd(*a, *b);
        r.hd[i] = hd(*a, *b);
      }
    } else {
      std::vector<double> asds, hds;
      for (std::size_t z = 0; z < seg.size(); ++z) {
        const auto a = extract_boundary(seg[z], kBoundaries[i], spacing);
        const auto b = extract_boundary(gt[z], kBoundaries[i], spacing);
        if (!a || !b) continue;
        asds.push_back(*asd(*a, *b));
        hds.push_back(*hd(*a, *b));
      }
      r.asd[i] = mean_of(asds);
      r.hd[i] = mean_of(hds);
    }
  }
  return r;
}

std::vector<SummaryRow> aggregate_cohort(std::span<const PatientMetrics> per_patient) {
  if (per_patient.empty()) throw ValidationError("aggregate_cohort: no reports");
  std::vector<SummaryRow> rows;
  auto summarize = [&rows](std::string metric, std::string structure,
                           const std::vector<double>& vals) {
    SummaryRow row{std::move(metric), std::move(structure), 0.0, 0.0, static_cast<int>(vals.size())};
    if (!vals.empty()) {
      double s = 0;
      for (double v : vals) s += v;
      row.mean = s / double(vals.size());
      if (vals.size() > 1) {
        double ss = 0;
        for (double v : vals) ss += (v - row.mean) * (v - row.mean);
        row.std = std::sqrt(ss / double(vals.size() - 1));
      }
    } else {
      row.mean = std::numeric_limits<double>::quiet_NaN();
    }
    rows.push_back(std::move(row));
  };
  for (std::size_t i = 0; i < kStructures.size(); ++i) {
    std::vector<double> d, j;
    for (const auto& p : per_patient) {
      d.push_back(p.dice[i]);
      j.push_back(p.jaccard[i]);
    }
    summarize("Dice", name(kStructures[i]), d);
    summarize("Jaccard", name(kStructures[i]), j);
  }
  for (std::size_t i = 0; i < kBoundaries.size(); ++i) {
    std::vector<double> a, h;
    for (const auto& p : per_patient) {
      if (p.asd[i]) a.push_back(*p.asd[i]);
      if (p.hd[i]) h.push_back(*p.hd[i]);
    }
    summarize("ASD", name(kBoundaries[i]), a);
    summarize("HD", name(kBoundaries[i]), h);
  }
  return rows;
}

}  // namespace stgan::metrics
