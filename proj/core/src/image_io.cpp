#include "stgan/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

namespace stgan::io {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError(path.string(), std::string("cannot open for ") + (mode[0] == 'r' ? "reading" : "writing"));
  return f;
}

// Reads the next whitespace-delimited header token, skipping comments.
std::string header_token(std::istream& in) {
  std::string tok;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(c);
  }
  return tok;
}

constexpr png_color kPalette[4] = {{0, 0, 0}, {220, 40, 40}, {40, 200, 60}, {50, 90, 230}};

}  // namespace

Grid<std::uint16_t> quantize16(const Grid<float>& image) {
  Grid<std::uint16_t> out(image.h, image.w);
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double v = std::clamp(static_cast<double>(image.v[i]), -1.0, 1.0);
    out.v[i] = static_cast<std::uint16_t>(std::lround((v + 1.0) * 0.5 * 65535.0));
  }
  return out;
}

void write_pgm16(const std::filesystem::path& path, const Grid<std::uint16_t>& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out << "P5\n" << image.w << " " << image.h << "\n65535\n";
  std::vector<unsigned char> bytes(image.size() * 2);
  for (std::size_t i = 0; i < image.size(); ++i) {
    bytes[2 * i] = static_cast<unsigned char>(image.v[i] >> 8);
    bytes[2 * i + 1] = static_cast<unsigned char>(image.v[i] & 0xff);
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(path.string(), "write failed");
}

Grid<std::uint16_t> read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open image");
  if (header_token(in) != "P5") throw CorruptFileError(path.string(), "not a binary PGM");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(header_token(in));
    h = std::stoi(header_token(in));
    maxval = std::stoi(header_token(in));
  } catch (const std::exception&) {
    throw CorruptFileError(path.string(), "malformed PGM header");
  }
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) {
    throw CorruptFileError(path.string(), "invalid PGM dimensions");
  }
  const std::size_t bpp = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> bytes(std::size_t(w) * h * bpp);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw CorruptFileError(path.string(), "truncated PGM data");
  }
  Grid<std::uint16_t> img(h, w);
  for (std::size_t i = 0; i < img.size(); ++i) {
    img.v[i] = bpp == 2 ? static_cast<std::uint16_t>((bytes[2 * i] << 8) | bytes[2 * i + 1])
                        : bytes[i];
  }
  return img;
}

void write_label_png(const std::filesystem::path& path, const LabelMask& mask) {
  if (!valid_label_alphabet(mask)) throw ValidationError("label outside {0,1,2,3}: " + path.string());
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError(path.string(), "libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError(path.string(), "PNG encode failed");
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(mask.w), static_cast<png_uint_32>(mask.h), 8,
               PNG_COLOR_TYPE_PALETTE, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_set_PLTE(png, info, kPalette, 4);
  png_write_info(png, info);
  for (int y = 0; y < mask.h; ++y) {
    png_write_row(png, mask.v.data() + std::size_t(y) * mask.w);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

LabelMask read_label_png(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  unsigned char sig[8] = {};
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw CorruptFileError(path.string(), "not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path.string(), "libpng initialisation failed");
  }
  LabelMask mask;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw CorruptFileError(path.string(), "PNG decode failed");
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color != PNG_COLOR_TYPE_PALETTE && color != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ValidationError("label PNG must be paletted or grayscale: " + path.string());
  }
  if (depth < 8) png_set_packing(png);
  if (depth == 16) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ValidationError("label PNG must be 8-bit: " + path.string());
  }
  png_read_update_info(png, info);
  mask = LabelMask(static_cast<int>(png_get_image_height(png, info)),
                   static_cast<int>(png_get_image_width(png, info)));
  std::vector<png_bytep> rows(static_cast<std::size_t>(mask.h));
  for (int y = 0; y < mask.h; ++y) rows[std::size_t(y)] = mask.v.data() + std::size_t(y) * mask.w;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return mask;
}

}  // namespace stgan::io
