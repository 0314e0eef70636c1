#ifndef RESSAM_IO_HPP
#define RESSAM_IO_HPP

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <png.h>

#include "ressam/frame.hpp"

namespace ressam {

namespace fs = std::filesystem;

enum class FrameFormat { pgm, png_gray, csv, f32_raw };

/// 8-bit single-channel raster (masks, renders, PGM/PNG payloads).
struct Gray8Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

inline std::string read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to '" + path.string() + "'");
}

inline std::optional<FrameFormat> format_for_path(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".pgm") return FrameFormat::pgm;
  if (ext == ".png") return FrameFormat::png_gray;
  if (ext == ".csv") return FrameFormat::csv;
  if (ext == ".f32" || ext == ".raw") return FrameFormat::f32_raw;
  return std::nullopt;
}

namespace detail {

inline void skip_pnm_space(std::string_view bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
      ++pos;
    } else {
      break;
    }
  }
}

inline long parse_pnm_int(std::string_view bytes, std::size_t& pos, const char* what) {
  skip_pnm_space(bytes, pos);
  long value = 0;
  auto [ptr, ec] = std::from_chars(bytes.data() + pos, bytes.data() + bytes.size(), value);
  if (ec != std::errc() || value <= 0) throw Error(std::string("PGM: bad ") + what);
  pos = static_cast<std::size_t>(ptr - bytes.data());
  return value;
}

}  // namespace detail

/// Binary PGM (P5), 8- or 16-bit. Returns raw sample values.
inline Grid decode_pgm(std::string_view bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw Error("PGM: missing P5 magic");
  std::size_t pos = 2;
  const long w = detail::parse_pnm_int(bytes, pos, "width");
  const long h = detail::parse_pnm_int(bytes, pos, "height");
  const long maxval = detail::parse_pnm_int(bytes, pos, "maxval");
  if (maxval > 65535) throw Error("PGM: maxval out of range");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw Error("PGM: truncated header");
  }
  ++pos;
  const std::size_t bpp = maxval < 256 ? 1 : 2;
  const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * bpp;
  if (bytes.size() - pos < need) {
    throw Error("PGM: dimension mismatch, header declares " + std::to_string(w) + "x" +
                std::to_string(h) + " but payload is short");
  }
  Grid g(h, w);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
  for (long i = 0; i < w * h; ++i) {
    g.data()[i] = bpp == 1 ? p[i] : static_cast<double>((p[2 * i] << 8) | p[2 * i + 1]);
  }
  return g;
}

inline std::string encode_pgm(const Gray8Image& img) {
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
  return out;
}

inline Gray8Image decode_png_gray(std::string_view bytes) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw Error(std::string("PNG: ") + image.message);
  }
  if (image.format & PNG_FORMAT_FLAG_COLOR) {
    png_image_free(&image);
    throw Error("PNG: expected a single-channel grayscale image");
  }
  image.format = PNG_FORMAT_GRAY;
  Gray8Image out;
  out.width = static_cast<int>(image.width);
  out.height = static_cast<int>(image.height);
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw Error("PNG: " + msg);
  }
  return out;
}

inline std::string encode_png_gray(const Gray8Image& img) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(image, size, 0, img.pixels.data(), 0, nullptr)) {
    throw Error(std::string("PNG encode: ") + image.message);
  }
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, img.pixels.data(), 0, nullptr)) {
    throw Error(std::string("PNG encode: ") + image.message);
  }
  out.resize(size);
  return out;
}

/// Reads an 8-bit PGM or PNG as a raster.
inline Gray8Image load_gray8(const fs::path& path) {
  const std::string bytes = read_file_bytes(path);
  const auto fmt = format_for_path(path);
  if (fmt == FrameFormat::png_gray) return decode_png_gray(bytes);
  if (fmt == FrameFormat::pgm) {
    Grid g = decode_pgm(bytes);
    Gray8Image img{static_cast<int>(g.cols()), static_cast<int>(g.rows()), {}};
    img.pixels.reserve(static_cast<std::size_t>(g.size()));
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      img.pixels.push_back(static_cast<std::uint8_t>(std::clamp(g.data()[i], 0.0, 255.0)));
    }
    return img;
  }
  throw Error("'" + path.string() + "' is not a PGM or PNG image");
}

/// Comma-separated, one row per line. Blank lines are skipped.
inline Grid decode_csv(std::string_view text) {
  std::vector<double> values;
  long width = -1;
  long height = 0;
  std::size_t line_start = 0;
  while (line_start < text.size()) {
    std::size_t line_end = text.find('\n', line_start);
    if (line_end == std::string_view::npos) line_end = text.size();
    std::string_view line = text.substr(line_start, line_end - line_start);
    line_start = line_end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    long cols = 0;
    std::size_t cell_start = 0;
    while (true) {
      std::size_t comma = line.find(',', cell_start);
      std::string_view cell = line.substr(cell_start, comma == std::string_view::npos ? line.npos : comma - cell_start);
      while (!cell.empty() && std::isspace(static_cast<unsigned char>(cell.front()))) cell.remove_prefix(1);
      while (!cell.empty() && std::isspace(static_cast<unsigned char>(cell.back()))) cell.remove_suffix(1);
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw Error("CSV: unparsable cell '" + std::string(cell) + "' on row " + std::to_string(height));
      }
      if (!std::isfinite(v)) throw Error("CSV: non-finite value on row " + std::to_string(height));
      values.push_back(v);
      ++cols;
      if (comma == std::string_view::npos) break;
      cell_start = comma + 1;
    }
    if (width < 0) width = cols;
    if (cols != width) {
      throw Error("CSV: dimension mismatch, row " + std::to_string(height) + " has " +
                  std::to_string(cols) + " cells, expected " + std::to_string(width));
    }
    ++height;
  }
  if (height == 0) throw Error("CSV: no data rows");
  Grid g(height, width);
  std::copy(values.begin(), values.end(), g.data());
  return g;
}

namespace detail {

inline std::uint32_t load_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void store_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

}  // namespace detail

/// 8-byte header (width u32 LE, height u32 LE) then width*height f32 LE.
inline Grid decode_f32(std::string_view bytes) {
  if (bytes.size() < 8) throw Error("f32: missing 8-byte header");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t w = detail::load_u32_le(p);
  const std::uint32_t h = detail::load_u32_le(p + 4);
  const std::size_t expect = 8 + 4 * static_cast<std::size_t>(w) * h;
  if (w == 0 || h == 0 || bytes.size() != expect) {
    throw Error("f32: dimension mismatch, header declares " + std::to_string(w) + "x" +
                std::to_string(h) + " (" + std::to_string(expect) + " bytes) but file has " +
                std::to_string(bytes.size()) + " bytes");
  }
  Grid g(h, w);
  for (std::size_t i = 0; i < static_cast<std::size_t>(w) * h; ++i) {
    const std::uint32_t bits = detail::load_u32_le(p + 8 + 4 * i);
    g.data()[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
  return g;
}

inline std::string encode_f32(const BScanFrame& frame) {
  std::string out;
  out.reserve(8 + 4 * frame.size());
  detail::store_u32_le(out, static_cast<std::uint32_t>(frame.width()));
  detail::store_u32_le(out, static_cast<std::uint32_t>(frame.height()));
  for (double v : frame.values()) detail::store_u32_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

inline std::string encode_csv(const BScanFrame& frame) {
  std::ostringstream out;
  out.precision(17);
  for (int y = 0; y < frame.height(); ++y) {
    for (int x = 0; x < frame.width(); ++x) {
      if (x) out << ',';
      out << frame.at(x, y);
    }
    out << '\n';
  }
  return out.str();
}

/// Loads a frame; the id is the file stem. Gray images keep raw [0, 255] levels.
inline BScanFrame load_frame(const fs::path& path, FrameFormat format) {
  const std::string bytes = read_file_bytes(path);
  Grid g;
  switch (format) {
    case FrameFormat::pgm: g = decode_pgm(bytes); break;
    case FrameFormat::csv: g = decode_csv(bytes); break;
    case FrameFormat::f32_raw: g = decode_f32(bytes); break;
    case FrameFormat::png_gray: {
      const Gray8Image img = decode_png_gray(bytes);
      g.resize(img.height, img.width);
      for (std::size_t i = 0; i < img.pixels.size(); ++i) g.data()[i] = img.pixels[i];
      break;
    }
  }
  return BScanFrame(path.stem().string(), g);
}

inline BScanFrame load_frame(const fs::path& path) {
  const auto fmt = format_for_path(path);
  if (!fmt) throw Error("cannot infer frame format from '" + path.string() + "'");
  return load_frame(path, *fmt);
}

/// Frame files in `dir` with a recognised extension, sorted by file name.
inline std::vector<fs::path> list_frame_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error("'" + dir.string() + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && format_for_path(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

/// Affine map of [lo, hi] onto [0, 255]; lo == hi renders mid-gray.
inline Gray8Image render_gray8(const BScanFrame& frame) {
  const auto [lo_it, hi_it] = std::minmax_element(frame.values().begin(), frame.values().end());
  const double lo = *lo_it;
  const double span = *hi_it - lo;
  Gray8Image img{frame.width(), frame.height(), {}};
  img.pixels.reserve(frame.size());
  for (double v : frame.values()) {
    const double t = span > 0 ? (v - lo) / span : 0.5;
    img.pixels.push_back(static_cast<std::uint8_t>(std::lround(t * 255.0)));
  }
  return img;
}

}  // namespace ressam

#endif
