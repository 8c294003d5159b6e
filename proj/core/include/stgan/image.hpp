#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "stgan/errors.hpp"

namespace stgan {

enum class Domain { kSource = 0, kTarget = 1 };

std::string_view to_string(Domain d);
Domain parse_domain(std::string_view s);

enum Label : std::uint8_t { kBackground = 0, kLV = 1, kMyo = 2, kRV = 3 };

/// Row-major 2-D array.
template <typename T>
struct Grid {
  int h = 0;
  int w = 0;
  std::vector<T> v;

  Grid() = default;
  Grid(int height, int width, T fill = T{}) : h(height), w(width), v(std::size_t(height) * width, fill) {}

  T& at(int y, int x) { return v[std::size_t(y) * w + x]; }
  const T& at(int y, int x) const { return v[std::size_t(y) * w + x]; }
  std::size_t size() const { return v.size(); }
  bool same_shape(const Grid& o) const { return h == o.h && w == o.w; }
  friend bool operator==(const Grid&, const Grid&) = default;
};

/// Single-channel slice with values in [-1, 1].
struct ImageSlice {
  Grid<float> pixels;
  Domain domain = Domain::kSource;
};

/// Per-pixel class map over {BG, LV, MYO, RV}.
using LabelMask = Grid<std::uint8_t>;

inline bool valid_label_alphabet(const LabelMask& m) {
  for (std::uint8_t v : m.v) {
    if (v > kRV) return false;
  }
  return true;
}

}  // namespace stgan
