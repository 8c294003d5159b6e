#include <doctest.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <set>

#include "oracles.hpp"
#include "stgan/image_io.hpp"
#include "stgan/phantom.hpp"
#include "test_util.hpp"

using namespace stgan;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct RegionStats {
  double sum = 0, sq = 0;
  long n = 0;
  void add(double v) {
    sum += v;
    sq += v * v;
    ++n;
  }
  double mean() const { return sum / double(n); }
  double var() const { return (sq - sum * sum / double(n)) / double(n - 1); }
};

}  // namespace

TEST_CASE("generation is a pure function of spec, domain and seed") {
  const PhantomSpec spec;
  for (Domain d : {Domain::kSource, Domain::kTarget}) {
    const auto a = generate_sample(spec, d, 42);
    const auto b = generate_sample(spec, d, 42);
    CHECK(a.image.pixels == b.image.pixels);
    CHECK(a.mask == b.mask);
  }
  CHECK_FALSE(generate_sample(spec, Domain::kSource, 1).mask ==
              generate_sample(spec, Domain::kSource, 2).mask);
}

TEST_CASE("one seed gives the same anatomy in both domains") {
  const PhantomSpec spec;
  const auto s = generate_sample(spec, Domain::kSource, 9);
  const auto t = generate_sample(spec, Domain::kTarget, 9);
  CHECK(s.mask == t.mask);
  CHECK_FALSE(s.image.pixels == t.image.pixels);
}

TEST_CASE("image and mask shapes agree and pixels stay in range") {
  PhantomSpec spec;
  spec.image_size = 48;
  const auto s = generate_sample(spec, Domain::kTarget, 3);
  CHECK(s.image.pixels.h == 48);
  CHECK(s.mask.h == 48);
  CHECK(s.image.pixels.w == s.mask.w);
  for (float v : s.image.pixels.v) {
    CHECK(v >= -1.0f);
    CHECK(v <= 1.0f);
  }
  CHECK(valid_label_alphabet(s.mask));
}

TEST_CASE("myocardium rings the blood pool and the RV sits outside it") {
  const PhantomSpec spec;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto s = generate_sample(spec, Domain::kSource, seed);
    const LabelMask& m = s.mask;
    long lv = 0, myo = 0, rv = 0;
    bool rv_touches_myo = false, rv_touches_lv = false;
    for (int y = 0; y < m.h; ++y) {
      for (int x = 0; x < m.w; ++x) {
        const auto v = m.at(y, x);
        lv += v == kLV;
        myo += v == kMyo;
        rv += v == kRV;
        if (v != kRV) continue;
        const int dy[] = {-1, 1, 0, 0}, dx[] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
          const int ny = y + dy[k], nx = x + dx[k];
          if (ny < 0 || nx < 0 || ny >= m.h || nx >= m.w) continue;
          rv_touches_myo |= m.at(ny, nx) == kMyo;
          rv_touches_lv |= m.at(ny, nx) == kLV;
        }
      }
    }
    CHECK(lv > 0);
    CHECK(myo > 0);
    CHECK(rv > 0);
    CHECK(rv_touches_myo);
    CHECK_FALSE(rv_touches_lv);
    CHECK(oracle::myo_encloses_lv(m));
  }
}

TEST_CASE("without scars the muscle carries only noise") {
  PhantomSpec spec;
  spec.scar_patch_count = {0, 0};
  spec.boundary_blur_target = 0.0;
  RegionStats st;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = generate_sample(spec, Domain::kTarget, seed);
    for (std::size_t i = 0; i < s.mask.size(); ++i) {
      if (s.mask.v[i] == kMyo) st.add(s.image.pixels.v[i]);
    }
  }
  const double noise_var = spec.noise_sigma_target * spec.noise_sigma_target;
  CHECK(st.n > 2000);
  CHECK(st.mean() == doctest::Approx(spec.intensity_target.myo).epsilon(0.02));
  CHECK(st.var() == doctest::Approx(noise_var).epsilon(0.1));

  spec.scar_patch_count = {2, 3};
  RegionStats scarred;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = generate_sample(spec, Domain::kTarget, seed);
    for (std::size_t i = 0; i < s.mask.size(); ++i) {
      if (s.mask.v[i] == kMyo) scarred.add(s.image.pixels.v[i]);
    }
  }
  CHECK(scarred.var() > 2 * noise_var);
}

TEST_CASE("scar pixels lie strictly inside the muscle") {
  PhantomSpec spec;
  spec.boundary_blur_target = 0.0;
  spec.noise_sigma_target = 0.0;
  spec.scar_patch_count = {1, 3};
  int with_scar = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto s = generate_sample(spec, Domain::kTarget, seed);
    bool any = false;
    for (std::size_t i = 0; i < s.mask.size(); ++i) {
      if (std::abs(s.image.pixels.v[i] - float(spec.scar_intensity)) < 1e-6f) {
        CHECK(s.mask.v[i] == kMyo);
        any = true;
      }
    }
    with_scar += any;
  }
  CHECK(with_scar == 50);
}

TEST_CASE("source separates muscle from blood better than target") {
  const PhantomSpec spec;
  double src = 0, tgt = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    for (Domain d : {Domain::kSource, Domain::kTarget}) {
      const auto s = generate_sample(spec, d, seed);
      RegionStats lv, myo;
      for (std::size_t i = 0; i < s.mask.size(); ++i) {
        if (s.mask.v[i] == kLV) lv.add(s.image.pixels.v[i]);
        if (s.mask.v[i] == kMyo) myo.add(s.image.pixels.v[i]);
      }
      (d == Domain::kSource ? src : tgt) += std::abs(myo.mean() - lv.mean());
    }
  }
  CHECK(src > tgt);
}

TEST_CASE("invalid specs name the offending field") {
  auto message = [](const PhantomSpec& s) {
    try {
      s.validate();
    } catch (const ValidationError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  PhantomSpec s;
  s.image_size = 16;
  CHECK(message(s).find("image_size") != std::string::npos);
  s = {};
  s.lv_radius = {0.2, 0.1};
  CHECK(message(s).find("lv_radius") != std::string::npos);
  s = {};
  s.myo_thickness = {0.0, 0.1};
  CHECK(message(s).find("myo_thickness") != std::string::npos);
  s = {};
  s.intensity_target.myo = 1.5;
  CHECK(message(s).find("intensity_profile_target.myo") != std::string::npos);
  s = {};
  s.scar_patch_count = {3, 1};
  CHECK(message(s).find("scar_patch_count") != std::string::npos);
  CHECK_THROWS_AS(generate_sample(s, Domain::kTarget, 0), ValidationError);
}

TEST_CASE("sample seeds are unpaired across domains") {
  CHECK(sample_seed(7, Domain::kSource, 0, 0) != sample_seed(7, Domain::kTarget, 0, 0));
  CHECK(sample_seed(7, Domain::kSource, 0, 1) != sample_seed(7, Domain::kSource, 1, 0));
  CHECK(sample_seed(7, Domain::kSource, 2, 3) == sample_seed(7, Domain::kSource, 2, 3));
}

TEST_SUITE("dataset") {
  TEST_CASE("counts and patient grouping") {
    testutil::TempDir dir("phantom_count");
    PhantomSpec spec;
    spec.image_size = 32;
    const auto m = generate_dataset(spec, {5, 4, Domain::kSource, 7}, dir.path());
    CHECK(m.entries.size() == 20);
    CHECK(m.patient_ids() == std::vector<int>{0, 1, 2, 3, 4});
    const auto back = read_manifest(dir / kManifestName);
    CHECK(back.entries == m.entries);
    CHECK(back.image_size == 32);
    for (const auto& e : back.entries) {
      CHECK(std::filesystem::exists(dir.path() / e.image_path));
      CHECK(std::filesystem::exists(dir.path() / e.mask_path));
    }
  }

  TEST_CASE("regenerating with overwrite is byte-identical") {
    testutil::TempDir dir("phantom_overwrite");
    PhantomSpec spec;
    spec.image_size = 32;
    GenerateOptions opts{2, 2, Domain::kTarget, 11};
    const auto m = generate_dataset(spec, opts, dir.path());
    std::vector<std::string> before{slurp(dir / kManifestName)};
    for (const auto& e : m.entries) {
      before.push_back(slurp(dir.path() / e.image_path));
      before.push_back(slurp(dir.path() / e.mask_path));
    }
    CHECK_THROWS_AS(generate_dataset(spec, opts, dir.path()), IoError);
    opts.overwrite = true;
    generate_dataset(spec, opts, dir.path());
    std::vector<std::string> after{slurp(dir / kManifestName)};
    for (const auto& e : m.entries) {
      after.push_back(slurp(dir.path() / e.image_path));
      after.push_back(slurp(dir.path() / e.mask_path));
    }
    CHECK(before == after);
  }

  TEST_CASE("mask files decode to at most four labels") {
    testutil::TempDir dir("phantom_alphabet");
    const PhantomSpec spec;
    const auto m = generate_dataset(spec, {1, 1, Domain::kTarget, 3}, dir.path());
    const LabelMask mask = io::read_label_png(dir.path() / m.entries[0].mask_path);
    const std::set<std::uint8_t> labels(mask.v.begin(), mask.v.end());
    CHECK(labels.size() <= 4);
    CHECK(*labels.rbegin() <= 3);
    CHECK(mask == generate_sample(spec, Domain::kTarget, m.entries[0].seed).mask);
  }

  TEST_CASE("stored images round-trip within quantization") {
    testutil::TempDir dir("phantom_pgm");
    const PhantomSpec spec;
    const auto m = generate_dataset(spec, {1, 1, Domain::kSource, 5}, dir.path());
    const auto raw = io::read_pgm(dir.path() / m.entries[0].image_path);
    const auto s = generate_sample(spec, Domain::kSource, m.entries[0].seed);
    for (std::size_t i = 0; i < raw.size(); ++i) {
      const double v = raw.v[i] / 65535.0 * 2.0 - 1.0;
      CHECK(std::abs(v - s.image.pixels.v[i]) < 1e-4);
    }
  }

  TEST_CASE("masks can be withheld") {
    testutil::TempDir dir("phantom_nomask");
    PhantomSpec spec;
    spec.image_size = 32;
    GenerateOptions opts{1, 2, Domain::kTarget, 1};
    opts.write_masks = false;
    const auto m = generate_dataset(spec, opts, dir.path());
    for (const auto& e : m.entries) CHECK(e.mask_path.empty());
    CHECK_FALSE(std::filesystem::exists(dir / "masks"));
  }

  TEST_CASE("unwritable destination reports the path") {
    testutil::TempDir dir("phantom_io");
    std::ofstream(dir / "blocker") << "x";
    const auto bad = dir / "blocker" / "sub";
    try {
      generate_dataset(PhantomSpec{}, {1, 1}, bad);
      FAIL("expected an IoError");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find("blocker") != std::string::npos);
    }
  }

  TEST_CASE("degenerate sizes are rejected") {
    testutil::TempDir dir("phantom_sizes");
    CHECK_THROWS_AS(generate_dataset(PhantomSpec{}, {0, 1}, dir.path()), ValidationError);
    CHECK_THROWS_AS(generate_dataset(PhantomSpec{}, {1, 0}, dir.path()), ValidationError);
  }
}
