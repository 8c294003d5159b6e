#include "stgan/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "stgan/image_io.hpp"

namespace stgan {
namespace {

using json = nlohmann::json;

void require(bool ok, const std::string& field, const std::string& why) {
  if (!ok) throw ValidationError("phantom spec: " + field + " " + why);
}

void check_fraction_range(const Range& r, const std::string& field) {
  require(std::isfinite(r.min) && std::isfinite(r.max), field, "must be finite");
  require(r.min <= r.max, field, "has min > max");
  require(r.min > 0.0 && r.max < 0.5, field, "must lie in (0, 0.5)");
}

void check_profile(const IntensityProfile& p, const std::string& field) {
  for (auto [name, v] : {std::pair{"background", p.background}, std::pair{"lv", p.lv},
                         std::pair{"myo", p.myo}, std::pair{"rv", p.rv}}) {
    require(std::isfinite(v) && v >= -1.0 && v <= 1.0, field + "." + name, "must lie in [-1, 1]");
  }
}

std::mt19937_64 make_rng(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    stream};
  return std::mt19937_64(seq);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

struct Geometry {
  double cx, cy, r_lv, r_epi;
  bool has_rv;
  double rv_dir, rv_half_extent, rv_width;
};

Geometry draw_geometry(const PhantomSpec& spec, std::uint64_t seed) {
  auto rng = make_rng(seed, 0x9e01);
  const double s = spec.image_size;
  Geometry g{};
  g.cx = s / 2.0 + uniform(rng, -0.05, 0.05) * s;
  g.cy = s / 2.0 + uniform(rng, -0.05, 0.05) * s;
  g.r_lv = uniform(rng, spec.lv_radius.min, spec.lv_radius.max) * s;
  g.r_epi = g.r_lv + uniform(rng, spec.myo_thickness.min, spec.myo_thickness.max) * s;
  g.has_rv = spec.rv_crescent;
  const double extent = uniform(rng, spec.rv_angle_deg.min, spec.rv_angle_deg.max);
  g.rv_half_extent = extent * std::numbers::pi / 360.0;
  g.rv_dir = uniform(rng, 160.0, 200.0) * std::numbers::pi / 180.0;
  g.rv_width = uniform(rng, spec.rv_thickness.min, spec.rv_thickness.max) * s;
  return g;
}

LabelMask rasterize(const PhantomSpec& spec, const Geometry& g) {
  const int n = spec.image_size;
  LabelMask m(n, n, kBackground);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double dx = x + 0.5 - g.cx;
      const double dy = y + 0.5 - g.cy;
      const double r = std::hypot(dx, dy);
      if (r < g.r_lv) {
        m.at(y, x) = kLV;
      } else if (r < g.r_epi) {
        m.at(y, x) = kMyo;
      } else if (g.has_rv) {
        double dtheta = std::atan2(dy, dx) - g.rv_dir;
        dtheta = std::remainder(dtheta, 2.0 * std::numbers::pi);
        if (std::abs(dtheta) < g.rv_half_extent) {
          const double taper = std::cos(0.5 * std::numbers::pi * dtheta / g.rv_half_extent);
          if (r < g.r_epi + g.rv_width * taper) m.at(y, x) = kRV;
        }
      }
    }
  }
  return m;
}

double class_mean(const IntensityProfile& p, std::uint8_t label) {
  switch (label) {
    case kLV: return p.lv;
    case kMyo: return p.myo;
    case kRV: return p.rv;
    default: return p.background;
  }
}

// Unions of small disks seeded on muscle pixels, clipped to the muscle.
void paint_scars(const PhantomSpec& spec, const LabelMask& mask, std::mt19937_64& rng,
                 Grid<double>& img) {
  std::vector<std::pair<int, int>> myo;
  for (int y = 0; y < mask.h; ++y) {
    for (int x = 0; x < mask.w; ++x) {
      if (mask.at(y, x) == kMyo) myo.emplace_back(y, x);
    }
  }
  if (myo.empty()) return;
  const int count = std::uniform_int_distribution<int>(spec.scar_patch_count.min,
                                                       spec.scar_patch_count.max)(rng);
  const double unit = spec.image_size / 64.0;
  for (int p = 0; p < count; ++p) {
    const auto [py, px] = myo[std::uniform_int_distribution<std::size_t>(0, myo.size() - 1)(rng)];
    const int blobs = std::uniform_int_distribution<int>(1, 3)(rng);
    for (int b = 0; b < blobs; ++b) {
      const double rad = uniform(rng, 1.0, 2.5) * unit;
      const double by = py + 0.5 + uniform(rng, -rad, rad);
      const double bx = px + 0.5 + uniform(rng, -rad, rad);
      const int y0 = std::max(0, static_cast<int>(std::floor(by - rad)));
      const int y1 = std::min(mask.h - 1, static_cast<int>(std::ceil(by + rad)));
      const int x0 = std::max(0, static_cast<int>(std::floor(bx - rad)));
      const int x1 = std::min(mask.w - 1, static_cast<int>(std::ceil(bx + rad)));
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          if (mask.at(y, x) == kMyo && std::hypot(y + 0.5 - by, x + 0.5 - bx) <= rad) {
            img.at(y, x) = spec.scar_intensity;
          }
        }
      }
    }
  }
}

// Separable Gaussian with edge clamping.
void gaussian_blur(Grid<double>& img, double sigma) {
  if (sigma <= 0.0) return;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[std::size_t(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[std::size_t(i + radius)];
  }
  for (double& v : k) v /= sum;
  Grid<double> tmp(img.h, img.w);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        acc += k[std::size_t(i + radius)] * img.at(y, std::clamp(x + i, 0, img.w - 1));
      }
      tmp.at(y, x) = acc;
    }
  }
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        acc += k[std::size_t(i + radius)] * tmp.at(std::clamp(y + i, 0, img.h - 1), x);
      }
      img.at(y, x) = acc;
    }
  }
}

std::string sample_stem(int patient, int slice) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "p%03d_s%02d", patient, slice);
  return buf;
}

}  // namespace

void PhantomSpec::validate() const {
  require(image_size >= 32, "image_size", "must be >= 32");
  check_fraction_range(lv_radius, "lv_radius_range");
  check_fraction_range(myo_thickness, "myo_thickness_range");
  check_fraction_range(rv_thickness, "rv_thickness_range");
  require(rv_angle_deg.min <= rv_angle_deg.max, "rv_angle_range", "has min > max");
  require(rv_angle_deg.min > 0.0 && rv_angle_deg.max <= 360.0, "rv_angle_range",
          "must lie in (0, 360]");
  require(scar_patch_count.min <= scar_patch_count.max, "scar_patch_count_range",
          "has min > max");
  require(scar_patch_count.min >= 0, "scar_patch_count_range", "must be >= 0");
  require(std::isfinite(scar_intensity) && scar_intensity >= -1.0 && scar_intensity <= 1.0,
          "scar_intensity", "must lie in [-1, 1]");
  require(std::isfinite(noise_sigma_source) && noise_sigma_source >= 0.0, "noise_sigma_source",
          "must be >= 0");
  require(std::isfinite(noise_sigma_target) && noise_sigma_target >= 0.0, "noise_sigma_target",
          "must be >= 0");
  require(std::isfinite(boundary_blur_target) && boundary_blur_target >= 0.0,
          "boundary_blur_target", "must be >= 0");
  require(lv_radius.max + myo_thickness.max + (rv_crescent ? rv_thickness.max : 0.0) < 0.45,
          "lv_radius_range", "plus wall and RV thickness must stay inside the image");
  check_profile(intensity_source, "intensity_profile_source");
  check_profile(intensity_target, "intensity_profile_target");
}

PhantomSample generate_sample(const PhantomSpec& spec, Domain domain, std::uint64_t seed) {
  spec.validate();
  const Geometry geo = draw_geometry(spec, seed);
  PhantomSample out;
  out.mask = rasterize(spec, geo);
  out.domain = domain;
  out.seed = seed;

  const bool target = domain == Domain::kTarget;
  const IntensityProfile& prof = target ? spec.intensity_target : spec.intensity_source;
  auto rng = make_rng(seed, target ? 0x7a61u : 0x50c3u);
  Grid<double> img(spec.image_size, spec.image_size);
  for (std::size_t i = 0; i < img.size(); ++i) img.v[i] = class_mean(prof, out.mask.v[i]);
  if (target) {
    paint_scars(spec, out.mask, rng, img);
    gaussian_blur(img, spec.boundary_blur_target);
  }
  std::normal_distribution<double> noise(0.0, 1.0);
  const double sigma = target ? spec.noise_sigma_target : spec.noise_sigma_source;
  out.image.domain = domain;
  out.image.pixels = Grid<float>(spec.image_size, spec.image_size);
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double v = img.v[i] + sigma * noise(rng);
    out.image.pixels.v[i] = static_cast<float>(std::clamp(v, -1.0, 1.0));
  }
  return out;
}

std::uint64_t sample_seed(std::uint64_t dataset_seed, Domain domain, int patient_id,
                          int slice_index) {
  std::seed_seq seq{static_cast<std::uint32_t>(dataset_seed),
                    static_cast<std::uint32_t>(dataset_seed >> 32),
                    static_cast<std::uint32_t>(domain), static_cast<std::uint32_t>(patient_id),
                    static_cast<std::uint32_t>(slice_index)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (std::uint64_t(words[0]) << 32) | words[1];
}

std::vector<int> DatasetManifest::patient_ids() const {
  std::set<int> ids;
  for (const auto& e : entries) ids.insert(e.patient_id);
  return {ids.begin(), ids.end()};
}

DatasetManifest read_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError(manifest_path.string(), "cannot open manifest");
  DatasetManifest m;
  m.path = manifest_path;
  try {
    const json j = json::parse(in);
    m.image_size = j.value("image_size", 0);
    for (const auto& e : j.at("samples")) {
      ManifestEntry me;
      me.patient_id = e.at("patient_id").get<int>();
      me.slice_index = e.at("slice_index").get<int>();
      me.domain = parse_domain(e.at("domain").get<std::string>());
      me.image_path = e.at("image_path").get<std::string>();
      if (e.contains("mask_path") && !e.at("mask_path").is_null()) {
        me.mask_path = e.at("mask_path").get<std::string>();
      }
      me.seed = e.value("seed", std::uint64_t{0});
      m.entries.push_back(std::move(me));
    }
  } catch (const json::exception& ex) {
    throw CorruptFileError(manifest_path.string(), std::string("malformed manifest (") + ex.what() + ")");
  }
  return m;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& manifest_path) {
  json samples = json::array();
  for (const auto& e : manifest.entries) {
    json je{{"patient_id", e.patient_id},
            {"slice_index", e.slice_index},
            {"domain", std::string(to_string(e.domain))},
            {"image_path", e.image_path},
            {"mask_path", e.mask_path.empty() ? json(nullptr) : json(e.mask_path)},
            {"seed", e.seed}};
    samples.push_back(std::move(je));
  }
  const json j{{"format", "stgan-manifest"},
               {"version", 1},
               {"image_size", manifest.image_size},
               {"samples", std::move(samples)}};
  std::ofstream out(manifest_path);
  if (!out) throw IoError(manifest_path.string(), "cannot write manifest");
  out << j.dump(2) << "\n";
  if (!out) throw IoError(manifest_path.string(), "write failed");
}

DatasetManifest generate_dataset(const PhantomSpec& spec, const GenerateOptions& opts,
                                 const std::filesystem::path& out_dir) {
  spec.validate();
  if (opts.n_patients < 1) throw ValidationError("n_patients must be >= 1");
  if (opts.slices_per_patient < 1) throw ValidationError("slices_per_patient must be >= 1");
  const auto manifest_path = out_dir / kManifestName;
  std::error_code ec;
  if (std::filesystem::exists(manifest_path, ec) && !opts.overwrite) {
    throw IoError(manifest_path.string(), "manifest already exists (pass overwrite to replace)");
  }
  std::filesystem::create_directories(out_dir / "images", ec);
  if (opts.write_masks) std::filesystem::create_directories(out_dir / "masks", ec);
  if (ec) throw IoError(out_dir.string(), "cannot create dataset directory (" + ec.message() + ")");

  DatasetManifest m;
  m.image_size = spec.image_size;
  m.path = manifest_path;
  for (int p = 0; p < opts.n_patients; ++p) {
    for (int s = 0; s < opts.slices_per_patient; ++s) {
      const std::uint64_t seed = sample_seed(opts.seed, opts.domain, p, s);
      PhantomSample smp = generate_sample(spec, opts.domain, seed);
      ManifestEntry e;
      e.patient_id = p;
      e.slice_index = s;
      e.domain = opts.domain;
      e.seed = seed;
      e.image_path = "images/" + sample_stem(p, s) + ".pgm";
      io::write_pgm16(out_dir / e.image_path, io::quantize16(smp.image.pixels));
      if (opts.write_masks) {
        e.mask_path = "masks/" + sample_stem(p, s) + ".png";
        io::write_label_png(out_dir / e.mask_path, smp.mask);
      }
      m.entries.push_back(std::move(e));
    }
  }
  write_manifest(m, manifest_path);
  return m;
}

std::string_view to_string(Domain d) { return d == Domain::kSource ? "source" : "target"; }

Domain parse_domain(std::string_view s) {
  if (s == "source") return Domain::kSource;
  if (s == "target") return Domain::kTarget;
  throw ValidationError("unknown domain '" + std::string(s) + "' (expected source|target)");
}

}  // namespace stgan
