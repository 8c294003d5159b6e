#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "stgan/metrics.hpp"
#include "stgan/phantom.hpp"

using namespace stgan;
using namespace stgan::metrics;

namespace {

std::vector<std::uint8_t> random_binary(std::size_t n, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution b(p);
  std::vector<std::uint8_t> v(n);
  for (auto& x : v) x = b(rng);
  return v;
}

LabelMask random_mask(int h, int w, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(0, 3);
  LabelMask m(h, w);
  for (auto& v : m.v) v = static_cast<std::uint8_t>(u(rng));
  return m;
}

BoundarySet to_set(const std::vector<std::pair<int, int>>& yx, Spacing sp = {}, int z = 0) {
  BoundarySet s;
  s.spacing = sp;
  for (auto [y, x] : yx) s.points.push_back({x, y, z});
  return s;
}

std::vector<oracle::P3> to_oracle(const BoundarySet& s) {
  std::vector<oracle::P3> out;
  for (const auto& p : s.points) {
    out.push_back({p.x * s.spacing.x, p.y * s.spacing.y, p.z * s.spacing.z});
  }
  return out;
}

BoundarySet random_points(int n, std::mt19937_64& rng, int extent = 16) {
  std::uniform_int_distribution<int> u(0, extent - 1);
  BoundarySet s;
  for (int i = 0; i < n; ++i) s.points.push_back({u(rng), u(rng), 0});
  return s;
}

}  // namespace

TEST_SUITE("overlap") {
  TEST_CASE("closed forms") {
    const std::vector<std::uint8_t> a{1, 1, 1, 1, 0, 0, 0, 0};
    const std::vector<std::uint8_t> b{0, 0, 1, 1, 1, 1, 0, 0};
    const std::vector<std::uint8_t> c{0, 0, 0, 0, 0, 0, 1, 1};
    CHECK(dice(a, a) == 1.0);
    CHECK(jaccard(a, a) == 1.0);
    CHECK(dice(a, c) == 0.0);
    CHECK(dice(a, b) == doctest::Approx(0.5));
    CHECK(jaccard(a, b) == doctest::Approx(1.0 / 3.0));
  }

  TEST_CASE("both empty scores 1, one empty scores 0") {
    const std::vector<std::uint8_t> z(9, 0), one{0, 0, 1, 0, 0, 0, 0, 0, 0};
    CHECK(dice(z, z) == 1.0);
    CHECK(jaccard(z, z) == 1.0);
    CHECK(dice(z, one) == 0.0);
    CHECK(jaccard(one, z) == 0.0);
  }

  TEST_CASE("shape mismatch is an error") {
    const std::vector<std::uint8_t> a(4, 1), b(5, 1);
    CHECK_THROWS_AS(dice(a, b), ValidationError);
    CHECK_THROWS_AS(jaccard(a, b), ValidationError);
  }

  TEST_CASE("random 16x16 pairs agree with counting and the Jaccard identity") {
    std::mt19937_64 rng(123);
    std::uniform_real_distribution<double> dens(0.0, 0.8);
    for (int trial = 0; trial < 250; ++trial) {
      const auto a = random_binary(256, dens(rng), rng);
      const auto b = random_binary(256, dens(rng), rng);
      const double d = dice(a, b), j = jaccard(a, b);
      CHECK(std::abs(d - oracle::dice(a, b)) < 1e-12);
      CHECK(std::abs(j - oracle::jaccard(a, b)) < 1e-12);
      CHECK(std::abs(j - d / (2 - d)) < 1e-12);
      CHECK(d == dice(b, a));
      CHECK(j == jaccard(b, a));
      CHECK(j <= d);
      CHECK(d >= 0.0);
      CHECK(d <= 1.0);
    }
  }
}

TEST_SUITE("boundary") {
  TEST_CASE("single pixel is its own boundary") {
    LabelMask m(5, 5, 0);
    m.at(2, 3) = kLV;
    const auto b = extract_boundary(m, Boundary::kLVEndo);
    REQUIRE(b.has_value());
    REQUIRE(b->points.size() == 1);
    CHECK(b->points[0] == Point{3, 2, 0});
  }

  TEST_CASE("3x3 square has 8 boundary pixels") {
    LabelMask m(7, 7, 0);
    for (int y = 2; y < 5; ++y)
      for (int x = 2; x < 5; ++x) m.at(y, x) = kRV;
    const auto b = extract_boundary(m, Boundary::kRVEndo);
    REQUIRE(b.has_value());
    CHECK(b->points.size() == 8);
    for (const auto& p : b->points) CHECK_FALSE((p.x == 3 && p.y == 3));
  }

  TEST_CASE("image border counts as outside") {
    const LabelMask full(4, 4, kLV);
    const auto b = extract_boundary(full, Boundary::kLVEndo);
    REQUIRE(b.has_value());
    CHECK(b->points.size() == 12);
  }

  TEST_CASE("empty region signals undefined") {
    const LabelMask m(6, 6, 0);
    CHECK_FALSE(extract_boundary(m, Boundary::kLVEpi).has_value());
  }

  TEST_CASE("random masks match the neighbour oracle") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
      const LabelMask m = random_mask(16, 16, rng);
      for (Boundary kind : kBoundaries) {
        const auto r = region(m, kind);
        const auto expect = oracle::boundary(r);
        const auto got = extract_boundary(m, kind);
        REQUIRE(got.has_value() == !expect.empty());
        if (!got) continue;
        REQUIRE(got->points.size() == expect.size());
        for (std::size_t i = 0; i < expect.size(); ++i) {
          CHECK(got->points[i].y == expect[i].first);
          CHECK(got->points[i].x == expect[i].second);
          CHECK(r.at(got->points[i].y, got->points[i].x) == 1);
        }
      }
    }
  }

  TEST_CASE("phantom epicardium is longer than endocardium") {
    const PhantomSpec spec;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto s = generate_sample(spec, Domain::kSource, seed);
      const auto endo = extract_boundary(s.mask, Boundary::kLVEndo);
      const auto epi = extract_boundary(s.mask, Boundary::kLVEpi);
      REQUIRE(endo.has_value());
      REQUIRE(epi.has_value());
      CHECK(epi->points.size() > endo->points.size());
    }
  }
}

TEST_SUITE("distances") {
  TEST_CASE("closed forms") {
    const BoundarySet a = to_set({{0, 0}});
    const BoundarySet b = to_set({{4, 3}});
    CHECK(*asd(a, a) == 0.0);
    CHECK(*hd(a, a) == 0.0);
    CHECK(*asd(a, b) == doctest::Approx(5.0));
    const BoundarySet two = to_set({{0, 0}, {0, 10}});
    CHECK(*hd(two, a) == 10.0);
  }

  TEST_CASE("spacing scales each axis") {
    const BoundarySet a = to_set({{0, 0}}, {2.0, 0.5, 1.0});
    const BoundarySet b = to_set({{4, 3}}, {2.0, 0.5, 1.0});
    CHECK(*hd(a, b) == doctest::Approx(std::sqrt(36.0 + 4.0)));
  }

  TEST_CASE("empty sets are undefined") {
    const BoundarySet e, a = to_set({{1, 1}});
    CHECK_FALSE(asd(e, a).has_value());
    CHECK_FALSE(hd(a, e).has_value());
  }

  TEST_CASE("random 20-point sets match the pairwise oracle") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 250; ++trial) {
      BoundarySet a = random_points(20, rng), b = random_points(20, rng);
      if (trial % 2) a.spacing = b.spacing = {0.75, 0.75, 2.5};
      const double s = *asd(a, b), h = *hd(a, b);
      CHECK(std::abs(s - oracle::asd(to_oracle(a), to_oracle(b))) < 1e-9);
      CHECK(h == oracle::hd(to_oracle(a), to_oracle(b)));
      CHECK(s == doctest::Approx(*asd(b, a)).epsilon(1e-12));
      CHECK(h == *hd(b, a));
      CHECK(h >= s);
      CHECK(s >= 0.0);
    }
  }

  TEST_CASE("random 16x16 mask pairs match oracles end to end") {
    std::mt19937_64 rng(78);
    int compared = 0;
    for (int trial = 0; trial < 200; ++trial) {
      const LabelMask m1 = random_mask(16, 16, rng), m2 = random_mask(16, 16, rng);
      for (Boundary kind : kBoundaries) {
        const auto a = extract_boundary(m1, kind), b = extract_boundary(m2, kind);
        if (!a || !b) continue;
        std::vector<oracle::P3> oa, ob;
        for (auto [y, x] : oracle::boundary(region(m1, kind))) oa.push_back({double(x), double(y), 0});
        for (auto [y, x] : oracle::boundary(region(m2, kind))) ob.push_back({double(x), double(y), 0});
        CHECK(*hd(*a, *b) == oracle::hd(oa, ob));
        CHECK(std::abs(*asd(*a, *b) - oracle::asd(oa, ob)) < 1e-9);
        ++compared;
      }
    }
    CHECK(compared >= 200);
  }
}

TEST_SUITE("volume") {
  TEST_CASE("identical stacks are perfect") {
    std::mt19937_64 rng(9);
    std::vector<LabelMask> v{random_mask(16, 16, rng), random_mask(16, 16, rng)};
    const auto r = evaluate_volume(v, v);
    for (int i = 0; i < 3; ++i) {
      CHECK(r.dice[i] == 1.0);
      CHECK(r.jaccard[i] == 1.0);
      REQUIRE(r.asd[i].has_value());
      CHECK(*r.asd[i] == 0.0);
      CHECK(*r.hd[i] == 0.0);
    }
  }

  TEST_CASE("single slice reduces to 2-D metrics") {
    std::mt19937_64 rng(10);
    const LabelMask a = random_mask(16, 16, rng), b = random_mask(16, 16, rng);
    const auto r = evaluate_volume(std::vector{a}, std::vector{b});
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(r.dice[i] == dice(region(a, kStructures[i]).v, region(b, kStructures[i]).v));
      const auto ba = extract_boundary(a, kBoundaries[i]), bb = extract_boundary(b, kBoundaries[i]);
      CHECK(*r.asd[i] == doctest::Approx(*asd(*ba, *bb)).epsilon(1e-12));
      CHECK(*r.hd[i] == *hd(*ba, *bb));
    }
  }

  TEST_CASE("two-slice Dice equals flattened voxel count") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<LabelMask> s{random_mask(16, 16, rng), random_mask(16, 16, rng)};
      std::vector<LabelMask> g{random_mask(16, 16, rng), random_mask(16, 16, rng)};
      const auto r = evaluate_volume(s, g);
      for (std::size_t i = 0; i < 3; ++i) {
        std::vector<std::uint8_t> fs, fg;
        for (int z = 0; z < 2; ++z) {
          const auto rs = region(s[z], kStructures[i]), rg = region(g[z], kStructures[i]);
          fs.insert(fs.end(), rs.v.begin(), rs.v.end());
          fg.insert(fg.end(), rg.v.begin(), rg.v.end());
        }
        CHECK(std::abs(r.dice[i] - oracle::dice(fs, fg)) < 1e-12);
        CHECK(std::abs(r.jaccard[i] - oracle::jaccard(fs, fg)) < 1e-12);
      }
    }
  }

  TEST_CASE("stacked distances use slice spacing on the third axis") {
    LabelMask a(8, 8, 0), b(8, 8, 0), empty(8, 8, 0);
    a.at(3, 3) = kLV;
    b.at(3, 3) = kLV;
    // LV present on slice 0 of the prediction, slice 1 of the truth.
    const Spacing sp{1.0, 1.0, 4.0};
    const auto r = evaluate_volume(std::vector{a, empty}, std::vector{empty, b}, sp);
    CHECK(*r.hd[0] == doctest::Approx(4.0));
    const auto per_slice =
        evaluate_volume(std::vector{a, empty}, std::vector{empty, b}, sp, DistanceMode::kPerSliceMean);
    CHECK_FALSE(per_slice.hd[0].has_value());
  }

  TEST_CASE("mismatched volumes are rejected") {
    const LabelMask a(8, 8), b(4, 4);
    CHECK_THROWS_AS(evaluate_volume(std::vector{a}, std::vector{a, a}), ValidationError);
    CHECK_THROWS_AS(evaluate_volume(std::vector{a}, std::vector{b}), ValidationError);
  }
}

TEST_SUITE("cohort") {
  PatientMetrics with_myo_dice(double d) {
    PatientMetrics p;
    p.dice = {d, d, d};
    p.jaccard = {d / (2 - d), d / (2 - d), d / (2 - d)};
    return p;
  }

  TEST_CASE("single patient has zero spread") {
    const std::vector<PatientMetrics> one{with_myo_dice(0.7)};
    const auto rows = aggregate_cohort(one);
    CHECK(rows.size() == 12);
    CHECK(rows[0].mean == doctest::Approx(0.7));
    CHECK(rows[0].std == 0.0);
    CHECK(rows[0].n == 1);
  }

  TEST_CASE("sample standard deviation of two values") {
    const std::vector<PatientMetrics> two{with_myo_dice(0.8), with_myo_dice(0.9)};
    const auto rows = aggregate_cohort(two);
    CHECK(rows[0].mean == doctest::Approx(0.85));
    CHECK(rows[0].std == doctest::Approx(0.0707107).epsilon(1e-5));
  }

  TEST_CASE("forty synthetic reports match a direct recomputation") {
    std::mt19937_64 rng(40);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<PatientMetrics> ps(40);
    for (auto& p : ps) {
      for (int i = 0; i < 3; ++i) {
        p.dice[i] = u(rng);
        p.jaccard[i] = u(rng);
        if (u(rng) < 0.8) p.asd[i] = 10 * u(rng);
        if (u(rng) < 0.8) p.hd[i] = 20 * u(rng);
      }
    }
    const auto rows = aggregate_cohort(ps);
    auto check_row = [&](const SummaryRow& row, auto pick) {
      std::vector<double> v;
      for (const auto& p : ps) {
        if (auto x = pick(p)) v.push_back(*x);
      }
      double m = 0;
      for (double x : v) m += x;
      m /= double(v.size());
      double ss = 0;
      for (double x : v) ss += (x - m) * (x - m);
      CHECK(row.n == int(v.size()));
      CHECK(std::abs(row.mean - m) < 1e-12);
      CHECK(std::abs(row.std - std::sqrt(ss / double(v.size() - 1))) < 1e-12);
    };
    for (int i = 0; i < 3; ++i) {
      check_row(rows[2 * i], [i](const PatientMetrics& p) { return std::optional(p.dice[i]); });
      check_row(rows[2 * i + 1], [i](const PatientMetrics& p) { return std::optional(p.jaccard[i]); });
      check_row(rows[6 + 2 * i], [i](const PatientMetrics& p) { return p.asd[i]; });
      check_row(rows[7 + 2 * i], [i](const PatientMetrics& p) { return p.hd[i]; });
    }
  }

  TEST_CASE("empty cohort is an error") {
    CHECK_THROWS_AS(aggregate_cohort({}), ValidationError);
  }
}
