// Grayscale images in [0,1] with bilinear sampling, plus PGM/PPM codecs
// (the only image formats the pipeline requires).
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <sstream>
#include <string>

#include "askin/geometry.hpp"
#include "askin/util.hpp"

namespace askin {

struct Image {
  // row-major, row 0 at the top
  Eigen::MatrixXd pixels;

  int width() const { return static_cast<int>(pixels.cols()); }
  int height() const { return static_cast<int>(pixels.rows()); }
  bool empty() const { return pixels.size() == 0; }

  double at(int row, int col) const {
    return pixels(std::clamp(row, 0, height() - 1), std::clamp(col, 0, width() - 1));
  }
};

// Bilinear sample at continuous pixel coordinates; pixel (r, c) covers
// [c, c+1) x [r, r+1) with its center at (c+0.5, r+0.5). Border clamped.
inline double bilinear_sample(const Image& img, const Vec2& p) {
  const double x = p.x() - 0.5, y = p.y() - 0.5;
  const double fx = std::floor(x), fy = std::floor(y);
  const int c0 = static_cast<int>(fx), r0 = static_cast<int>(fy);
  const double tx = x - fx, ty = y - fy;
  const double v00 = img.at(r0, c0), v01 = img.at(r0, c0 + 1);
  const double v10 = img.at(r0 + 1, c0), v11 = img.at(r0 + 1, c0 + 1);
  return (1 - ty) * ((1 - tx) * v00 + tx * v01) + ty * ((1 - tx) * v10 + tx * v11);
}

// d(sample)/d(pixel coords); piecewise constant per bilinear cell, the
// frozen-cell derivative of the sample above.
inline Vec2 bilinear_gradient(const Image& img, const Vec2& p) {
  const double x = p.x() - 0.5, y = p.y() - 0.5;
  const double fx = std::floor(x), fy = std::floor(y);
  const int c0 = static_cast<int>(fx), r0 = static_cast<int>(fy);
  const double tx = x - fx, ty = y - fy;
  const double v00 = img.at(r0, c0), v01 = img.at(r0, c0 + 1);
  const double v10 = img.at(r0 + 1, c0), v11 = img.at(r0 + 1, c0 + 1);
  return {(1 - ty) * (v01 - v00) + ty * (v11 - v10), (1 - tx) * (v10 - v00) + tx * (v11 - v01)};
}

// --- PGM / PPM -------------------------------------------------------------

namespace detail {

inline int next_pnm_int(std::istringstream& in) {
  // skips whitespace and '#' comments
  while (true) {
    in >> std::ws;
    if (in.peek() == '#') {
      std::string comment;
      std::getline(in, comment);
      continue;
    }
    int v;
    if (!(in >> v)) fail("pnm: malformed header");
    return v;
  }
}

}  // namespace detail

inline Image load_pnm(const std::string& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 2 || bytes[0] != 'P') fail("pnm: not a PGM/PPM file: " + path);
  const char kind = bytes[1];
  if (kind != '2' && kind != '3' && kind != '5' && kind != '6')
    fail("pnm: unsupported variant P" + std::string(1, kind) + " in " + path);
  std::istringstream in(bytes.substr(2));
  const int width = detail::next_pnm_int(in);
  const int height = detail::next_pnm_int(in);
  const int maxval = detail::next_pnm_int(in);
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535) fail("pnm: bad dimensions in " + path);
  const int channels = (kind == '3' || kind == '6') ? 3 : 1;
  Image img;
  img.pixels.resize(height, width);

  auto to_gray = [&](double r, double g, double b) {
    return (0.299 * r + 0.587 * g + 0.114 * b) / maxval;
  };

  if (kind == '2' || kind == '3') {
    for (int r = 0; r < height; ++r)
      for (int c = 0; c < width; ++c) {
        if (channels == 1) {
          img.pixels(r, c) = static_cast<double>(detail::next_pnm_int(in)) / maxval;
        } else {
          const double red = detail::next_pnm_int(in);
          const double green = detail::next_pnm_int(in);
          const double blue = detail::next_pnm_int(in);
          img.pixels(r, c) = to_gray(red, green, blue);
        }
      }
  } else {
    // binary: one whitespace byte after maxval, then raw samples
    const std::size_t off = 2 + static_cast<std::size_t>(in.tellg()) + 1;
    const int bpc = maxval > 255 ? 2 : 1;
    const std::size_t need = static_cast<std::size_t>(width) * height * channels * bpc;
    if (off + need > bytes.size()) fail("pnm: truncated pixel data in " + path);
    auto sample = [&](std::size_t i) -> double {
      if (bpc == 1) return static_cast<unsigned char>(bytes[off + i]);
      return (static_cast<unsigned char>(bytes[off + 2 * i]) << 8) |
             static_cast<unsigned char>(bytes[off + 2 * i + 1]);
    };
    std::size_t i = 0;
    for (int r = 0; r < height; ++r)
      for (int c = 0; c < width; ++c) {
        if (channels == 1) {
          img.pixels(r, c) = sample(i++) / maxval;
        } else {
          const double red = sample(i++), green = sample(i++), blue = sample(i++);
          img.pixels(r, c) = to_gray(red, green, blue);
        }
      }
  }
  return img;
}

// 8-bit binary PGM; values clamped to [0,1] and rounded to nearest.
inline std::string pgm_bytes(const Image& img) {
  std::string out = "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  out.reserve(out.size() + static_cast<std::size_t>(img.width()) * img.height());
  for (int r = 0; r < img.height(); ++r)
    for (int c = 0; c < img.width(); ++c) {
      const double v = std::clamp(img.pixels(r, c), 0.0, 1.0);
      out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
  return out;
}

inline void save_pgm(const std::string& path, const Image& img) { atomic_write(path, pgm_bytes(img)); }

}  // namespace askin
