#pragma once

#include <cstdint>
#include <filesystem>

#include "stgan/image.hpp"

namespace stgan::io {

/// Binary PGM (P5). Writes 16-bit big-endian; reads 8- or 16-bit.
void write_pgm16(const std::filesystem::path& path, const Grid<std::uint16_t>& image);
Grid<std::uint16_t> read_pgm(const std::filesystem::path& path);

/// 8-bit paletted PNG with one palette entry per class.
void write_label_png(const std::filesystem::path& path, const LabelMask& mask);
/// Accepts paletted or 8-bit grayscale PNG; raw sample values become labels.
LabelMask read_label_png(const std::filesystem::path& path);

/// [-1, 1] <-> full 16-bit range.
Grid<std::uint16_t> quantize16(const Grid<float>& image);

}  // namespace stgan::io
