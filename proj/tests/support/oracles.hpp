#pragma once

// Reference implementations used only by tests. Each one is written the
// slow, obvious way and shares no code with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <queue>
#include <random>
#include <vector>

#include "stgan/image.hpp"

namespace oracle {

struct Overlap {
  long inter = 0, a = 0, b = 0, uni = 0;
};

inline Overlap count(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  Overlap o;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool in_a = a[i] != 0, in_b = b[i] != 0;
    o.a += in_a;
    o.b += in_b;
    o.inter += in_a && in_b;
    o.uni += in_a || in_b;
  }
  return o;
}

inline double dice(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  const Overlap o = count(a, b);
  if (o.a + o.b == 0) return 1.0;
  return 2.0 * double(o.inter) / double(o.a + o.b);
}

inline double jaccard(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  const Overlap o = count(a, b);
  if (o.uni == 0) return 1.0;
  return double(o.inter) / double(o.uni);
}

struct P3 {
  double x, y, z;
};

inline double dist(const P3& p, const P3& q) {
  return std::sqrt((p.x - q.x) * (p.x - q.x) + (p.y - q.y) * (p.y - q.y) + (p.z - q.z) * (p.z - q.z));
}

inline double point_to_set(const P3& p, const std::vector<P3>& s) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& q : s) best = std::min(best, dist(p, q));
  return best;
}

inline double asd(const std::vector<P3>& a, const std::vector<P3>& b) {
  double sum = 0;
  for (const auto& p : a) sum += point_to_set(p, b);
  for (const auto& q : b) sum += point_to_set(q, a);
  return sum / double(a.size() + b.size());
}

inline double hd(const std::vector<P3>& a, const std::vector<P3>& b) {
  double h = 0;
  for (const auto& p : a) h = std::max(h, point_to_set(p, b));
  for (const auto& q : b) h = std::max(h, point_to_set(q, a));
  return h;
}

/// Pixels of `inside` touching a 4-neighbour that is outside or off-grid.
inline std::vector<std::pair<int, int>> boundary(const stgan::Grid<std::uint8_t>& inside) {
  std::vector<std::pair<int, int>> out;
  auto in = [&](int y, int x) {
    return y >= 0 && x >= 0 && y < inside.h && x < inside.w && inside.at(y, x) != 0;
  };
  for (int y = 0; y < inside.h; ++y) {
    for (int x = 0; x < inside.w; ++x) {
      if (!in(y, x)) continue;
      if (!in(y - 1, x) || !in(y + 1, x) || !in(y, x - 1) || !in(y, x + 1)) out.emplace_back(y, x);
    }
  }
  return out;
}

/// True when no 4-connected path from an LV pixel reaches the image border
/// without stepping on MYO.
inline bool myo_encloses_lv(const stgan::LabelMask& m) {
  std::vector<char> seen(m.size(), 0);
  std::queue<std::pair<int, int>> q;
  for (int y = 0; y < m.h; ++y) {
    for (int x = 0; x < m.w; ++x) {
      if (m.at(y, x) == stgan::kLV) {
        q.emplace(y, x);
        seen[std::size_t(y) * m.w + x] = 1;
      }
    }
  }
  while (!q.empty()) {
    const auto [y, x] = q.front();
    q.pop();
    if (y == 0 || x == 0 || y == m.h - 1 || x == m.w - 1) return false;
    const int dy[] = {-1, 1, 0, 0}, dx[] = {0, 0, -1, 1};
    for (int k = 0; k < 4; ++k) {
      const int ny = y + dy[k], nx = x + dx[k];
      const std::size_t i = std::size_t(ny) * m.w + nx;
      if (seen[i] || m.at(ny, nx) == stgan::kMyo) continue;
      seen[i] = 1;
      q.emplace(ny, nx);
    }
  }
  return true;
}

/// Plain bilinear resize with half-pixel centres and edge clamping.
inline std::vector<double> bilinear(const std::vector<double>& src, int sh, int sw, int dh, int dw) {
  std::vector<double> out(std::size_t(dh) * dw);
  auto px = [&](int y, int x) {
    y = std::clamp(y, 0, sh - 1);
    x = std::clamp(x, 0, sw - 1);
    return src[std::size_t(y) * sw + x];
  };
  for (int y = 0; y < dh; ++y) {
    for (int x = 0; x < dw; ++x) {
      double sy = (y + 0.5) * sh / dh - 0.5;
      double sx = (x + 0.5) * sw / dw - 0.5;
      sy = std::min(std::max(sy, 0.0), double(sh - 1));
      sx = std::min(std::max(sx, 0.0), double(sw - 1));
      const int y0 = int(sy), x0 = int(sx);
      const double wy = sy - y0, wx = sx - x0;
      out[std::size_t(y) * dw + x] = (1 - wy) * (1 - wx) * px(y0, x0) + (1 - wy) * wx * px(y0, x0 + 1) +
                                     wy * (1 - wx) * px(y0 + 1, x0) + wy * wx * px(y0 + 1, x0 + 1);
    }
  }
  return out;
}

/// Central difference of `f` along `dir` at `x`.
inline double directional_fd(const std::function<double(const std::vector<double>&)>& f,
                             const std::vector<double>& x, const std::vector<double>& dir,
                             double h = 1e-5) {
  std::vector<double> plus = x, minus = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    plus[i] += h * dir[i];
    minus[i] -= h * dir[i];
  }
  return (f(plus) - f(minus)) / (2 * h);
}

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

inline std::vector<double> unit_direction(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  std::vector<double> d(n);
  double norm = 0;
  for (auto& v : d) {
    v = nd(rng);
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (auto& v : d) v /= norm;
  return d;
}

}  // namespace oracle
