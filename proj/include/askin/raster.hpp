// Minimal software rasterizer: barycentric-interpolated vertex colors with a
// z-buffer, used for synthetic view generation and per-vertex visibility.
#pragma once

#include <Eigen/Dense>
#include <limits>
#include <vector>

#include "askin/camera.hpp"
#include "askin/model.hpp"

namespace askin {

struct RasterResult {
  Image color;
  Eigen::MatrixXd depth;  // +inf where nothing was drawn
};

// Top-left convention: pixel (r, c) is sampled at its center (c+0.5, r+0.5).
// Faces are drawn in index order; the strictly nearer fragment wins.
inline RasterResult rasterize(const std::vector<Vec3>& vertices,
                              const std::vector<std::array<int, 3>>& faces,
                              const std::vector<double>& colors, const CameraView& view,
                              int width, int height) {
  RasterResult out;
  out.color.pixels = Eigen::MatrixXd::Zero(height, width);
  out.depth = Eigen::MatrixXd::Constant(height, width, std::numeric_limits<double>::infinity());

  std::vector<Vec3> cam(vertices.size());
  std::vector<Vec2> pix(vertices.size());
  std::vector<bool> front(vertices.size());
  for (std::size_t v = 0; v < vertices.size(); ++v) {
    cam[v] = view.to_camera(vertices[v]);
    front[v] = cam[v].z() > 1e-9;
    pix[v] = front[v] ? project_camera(cam[v], view.focal, view.principal) : Vec2::Zero();
  }

  for (const auto& f : faces) {
    if (!front[f[0]] || !front[f[1]] || !front[f[2]]) continue;
    const Vec2 a = pix[f[0]], b = pix[f[1]], c = pix[f[2]];
    const double area = cross2(b - a, c - a);
    if (area == 0.0) continue;
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min({a.x(), b.x(), c.x()}) - 0.5)));
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(std::max({a.x(), b.x(), c.x()}))));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min({a.y(), b.y(), c.y()}) - 0.5)));
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(std::max({a.y(), b.y(), c.y()}))));
    for (int r = y0; r <= y1; ++r) {
      for (int col = x0; col <= x1; ++col) {
        const Vec2 p(col + 0.5, r + 0.5);
        const double w0 = cross2(b - p, c - p) / area;
        const double w1 = cross2(c - p, a - p) / area;
        const double w2 = 1.0 - (w0 + w1);
        if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
        const double z = w0 * cam[f[0]].z() + w1 * cam[f[1]].z() + w2 * cam[f[2]].z();
        if (z < out.depth(r, col)) {
          out.depth(r, col) = z;
          out.color.pixels(r, col) =
              w0 * colors[f[0]] + w1 * colors[f[1]] + w2 * colors[f[2]];
        }
      }
    }
  }
  return out;
}

inline RasterResult rasterize(const DeformedMesh& mesh, const std::vector<double>& colors,
                              const CameraView& view, int width, int height) {
  return rasterize(mesh.vertices, mesh.base->faces, colors, view, width, height);
}

// Shades each fragment by evaluating `field` at the perspective-correct
// interpolated surface position. Synthetic views rendered this way sample
// the continuous texture exactly, instead of a screen-space interpolation
// of vertex colors.
inline RasterResult rasterize_field(const std::vector<Vec3>& vertices,
                                    const std::vector<std::array<int, 3>>& faces,
                                    const std::function<double(const Vec3&)>& field,
                                    const CameraView& view, int width, int height) {
  RasterResult out;
  out.color.pixels = Eigen::MatrixXd::Zero(height, width);
  out.depth = Eigen::MatrixXd::Constant(height, width, std::numeric_limits<double>::infinity());

  std::vector<Vec3> cam(vertices.size());
  std::vector<Vec2> pix(vertices.size());
  std::vector<bool> front(vertices.size());
  for (std::size_t v = 0; v < vertices.size(); ++v) {
    cam[v] = view.to_camera(vertices[v]);
    front[v] = cam[v].z() > 1e-9;
    pix[v] = front[v] ? project_camera(cam[v], view.focal, view.principal) : Vec2::Zero();
  }

  for (const auto& f : faces) {
    if (!front[f[0]] || !front[f[1]] || !front[f[2]]) continue;
    const Vec2 a = pix[f[0]], b = pix[f[1]], c = pix[f[2]];
    const double area = cross2(b - a, c - a);
    if (area == 0.0) continue;
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min({a.x(), b.x(), c.x()}) - 0.5)));
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(std::max({a.x(), b.x(), c.x()}))));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min({a.y(), b.y(), c.y()}) - 0.5)));
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(std::max({a.y(), b.y(), c.y()}))));
    const double iz0 = 1.0 / cam[f[0]].z(), iz1 = 1.0 / cam[f[1]].z(), iz2 = 1.0 / cam[f[2]].z();
    for (int r = y0; r <= y1; ++r) {
      for (int col = x0; col <= x1; ++col) {
        const Vec2 p(col + 0.5, r + 0.5);
        const double w0 = cross2(b - p, c - p) / area;
        const double w1 = cross2(c - p, a - p) / area;
        const double w2 = 1.0 - (w0 + w1);
        if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
        const double iz = w0 * iz0 + w1 * iz1 + w2 * iz2;
        const double z = 1.0 / iz;
        if (z < out.depth(r, col)) {
          out.depth(r, col) = z;
          const Vec3 pos = (w0 * iz0 * vertices[f[0]] + w1 * iz1 * vertices[f[1]] +
                            w2 * iz2 * vertices[f[2]]) * z;
          out.color.pixels(r, col) = field(pos);
        }
      }
    }
  }
  return out;
}

// A vertex is visible when its camera depth is at most the rasterized depth
// at its projected pixel plus a depth-relative bias (covers quantization at
// grazing angles). A pixel nothing rasterized to leaves the vertex visible.
// Off-screen and behind-camera vertices are invisible.
inline std::vector<bool> zbuffer_visibility(const std::vector<Vec3>& vertices,
                                            const std::vector<std::array<int, 3>>& faces,
                                            const CameraView& view, int resolution_w,
                                            int resolution_h, double bias = 0.02) {
  const std::vector<double> colors(vertices.size(), 0.0);
  const RasterResult raster = rasterize(vertices, faces, colors, view, resolution_w, resolution_h);
  std::vector<bool> visible(vertices.size(), false);
  for (std::size_t v = 0; v < vertices.size(); ++v) {
    const Vec3 cam = view.to_camera(vertices[v]);
    if (!(cam.z() > 1e-9)) continue;
    const Vec2 p = project_camera(cam, view.focal, view.principal);
    const int col = static_cast<int>(std::floor(p.x()));
    const int row = static_cast<int>(std::floor(p.y()));
    if (col < 0 || col >= resolution_w || row < 0 || row >= resolution_h) continue;
    const double zbuf = raster.depth(row, col);
    visible[v] = cam.z() <= zbuf + bias * cam.z();
  }
  return visible;
}

inline std::vector<bool> zbuffer_visibility(const DeformedMesh& mesh, const CameraView& view,
                                            int resolution, double bias = 0.02) {
  return zbuffer_visibility(mesh.vertices, mesh.base->faces, view, resolution, resolution, bias);
}

// Stricter variant for intensity sampling: every pixel of the vertex's
// bilinear footprint must show this surface at a depth close to the vertex,
// so samples never mix in background or occluding geometry.
inline std::vector<bool> sampling_visibility(const std::vector<Vec3>& vertices,
                                             const std::vector<std::array<int, 3>>& faces,
                                             const CameraView& view, int resolution_w,
                                             int resolution_h, double bias = 0.02) {
  const std::vector<double> colors(vertices.size(), 0.0);
  const RasterResult raster = rasterize(vertices, faces, colors, view, resolution_w, resolution_h);
  std::vector<bool> visible(vertices.size(), false);
  for (std::size_t v = 0; v < vertices.size(); ++v) {
    const Vec3 cam = view.to_camera(vertices[v]);
    if (!(cam.z() > 1e-9)) continue;
    const Vec2 p = project_camera(cam, view.focal, view.principal);
    const int c0 = static_cast<int>(std::floor(p.x() - 0.5));
    const int r0 = static_cast<int>(std::floor(p.y() - 0.5));
    if (c0 < 0 || c0 + 1 >= resolution_w || r0 < 0 || r0 + 1 >= resolution_h) continue;
    bool ok = true;
    for (int dr = 0; dr < 2 && ok; ++dr)
      for (int dc = 0; dc < 2; ++dc) {
        const double zbuf = raster.depth(r0 + dr, c0 + dc);
        if (!std::isfinite(zbuf) || std::abs(zbuf - cam.z()) > bias * cam.z()) {
          ok = false;
          break;
        }
      }
    visible[v] = ok;
  }
  return visible;
}

// Area-weighted vertex normals (unnormalized face normals summed).
inline std::vector<Vec3> vertex_normals(const std::vector<Vec3>& vertices,
                                        const std::vector<std::array<int, 3>>& faces) {
  std::vector<Vec3> normals(vertices.size(), Vec3::Zero());
  for (const auto& f : faces) {
    const Vec3 n = (vertices[f[1]] - vertices[f[0]]).cross(vertices[f[2]] - vertices[f[0]]);
    for (int c = 0; c < 3; ++c) normals[f[c]] += n;
  }
  for (Vec3& n : normals) {
    const double len = n.norm();
    if (len > 0.0) n /= len;
  }
  return normals;
}

}  // namespace askin
