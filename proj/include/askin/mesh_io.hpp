// OBJ / PLY ingestion and OBJ export.
//
// Template meshes must carry `vt` records and `v/vt` face entries; the uv
// chart is always ingested, never synthesized. Polygons are fan-triangulated
// on load. A vertex referenced with conflicting vt indices is split so the
// unwrap map stays one uv per vertex.
#pragma once

#include <charconv>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "askin/mesh.hpp"
#include "askin/util.hpp"

namespace askin {

namespace detail {

inline std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

// "12/34" or "12/34/56" -> (v, vt); bare "12" or "12//56" is rejected.
inline std::pair<int, int> parse_face_corner(const std::string& tok, const std::string& path) {
  const std::size_t s1 = tok.find('/');
  if (s1 == std::string::npos || s1 + 1 >= tok.size() || tok[s1 + 1] == '/')
    fail("obj: face entry '" + tok + "' in " + path +
         " lacks a texture index; template faces must use v/vt");
  const std::size_t s2 = tok.find('/', s1 + 1);
  const std::string vs = tok.substr(0, s1);
  const std::string ts = s2 == std::string::npos ? tok.substr(s1 + 1) : tok.substr(s1 + 1, s2 - s1 - 1);
  return {std::stoi(vs), std::stoi(ts)};
}

}  // namespace detail

inline Mesh load_obj_mesh(const std::string& path) {
  const std::string text = read_file(path);
  std::istringstream in(text);

  std::vector<Vec3> positions;
  std::vector<Vec2> vts;
  struct Corner {
    int v, vt;
  };
  std::vector<std::vector<Corner>> polygons;
  std::vector<std::string> vt_lines, face_lines;

  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto toks = detail::split_ws(line);
    if (toks.empty() || toks[0][0] == '#') continue;
    if (toks[0] == "v") {
      if (toks.size() < 4) fail("obj: malformed v record in " + path);
      positions.emplace_back(std::stod(toks[1]), std::stod(toks[2]), std::stod(toks[3]));
    } else if (toks[0] == "vt") {
      if (toks.size() < 3) fail("obj: malformed vt record in " + path);
      vts.emplace_back(std::stod(toks[1]), std::stod(toks[2]));
      vt_lines.push_back(line);
    } else if (toks[0] == "f") {
      if (toks.size() < 4) fail("obj: face with fewer than3 corners in " + path);
      std::vector<Corner> poly;
      for (std::size_t i = 1; i < toks.size(); ++i) {
        auto [v, vt] = detail::parse_face_corner(toks[i], path);
        // obj indices are 1-based; negatives count from the end
        const int vi = v > 0 ? v - 1 : static_cast<int>(positions.size()) + v;
        const int ti = vt > 0 ? vt - 1 : static_cast<int>(vts.size()) + vt;
        if (vi < 0 || vi >= static_cast<int>(positions.size())) fail("obj: vertex index out of range in " + path);
        if (ti < 0 || ti >= static_cast<int>(vts.size())) fail("obj: vt index out of range in " + path);
        poly.push_back({vi, ti});
      }
      polygons.push_back(std::move(poly));
      face_lines.push_back(line);
    }
  }
  if (positions.empty()) fail("obj: no vertices in " + path);
  if (vts.empty()) fail("obj: " + path + " has no vt records; the uv chart must be ingested");

  Mesh mesh;
  mesh.vertices = positions;
  mesh.uv.assign(positions.size(), Vec2(-1.0, -1.0));
  std::vector<int> assigned_vt(positions.size(), -1);
  // (vertex, vt) -> final vertex index; extra entries are seam splits
  std::map<std::pair<int, int>, int> remap;

  auto resolve = [&](int v, int vt) -> int {
    if (assigned_vt[v] < 0) {
      assigned_vt[v] = vt;
      mesh.uv[v] = vts[vt];
      return v;
    }
    if (assigned_vt[v] == vt) return v;
    const auto key = std::make_pair(v, vt);
    auto it = remap.find(key);
    if (it != remap.end()) return it->second;
    const int nv = mesh.vertex_count();
    mesh.vertices.push_back(mesh.vertices[v]);
    mesh.uv.push_back(vts[vt]);
    remap.emplace(key, nv);
    return nv;
  };

  for (const auto& poly : polygons) {
    std::vector<int> idx(poly.size());
    for (std::size_t i = 0; i < poly.size(); ++i) idx[i] = resolve(poly[i].v, poly[i].vt);
    for (std::size_t i = 1; i + 1 < idx.size(); ++i)
      mesh.faces.push_back({idx[0], idx[static_cast<int>(i)], idx[i + 1]});
  }

  mesh.source_vt_lines = std::move(vt_lines);
  mesh.source_face_lines = std::move(face_lines);
  mesh.validate();
  return mesh;
}

// Writes `vertices` in place of the template's, copying the template's vt
// and f lines verbatim. The topology is untouched by deformation, so the
// source lines stay valid.
inline std::string obj_text(const Mesh& tmpl, const std::vector<Vec3>& vertices) {
  if (vertices.size() != tmpl.vertices.size() && tmpl.source_face_lines.empty())
    fail("obj export: vertex count mismatch with template");
  std::string out;
  out.reserve(vertices.size() * 48);
  char buf[160];
  for (const auto& v : vertices) {
    std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g\n", v.x(), v.y(), v.z());
    out += buf;
  }
  if (!tmpl.source_vt_lines.empty()) {
    for (const auto& l : tmpl.source_vt_lines) (out += l) += '\n';
    for (const auto& l : tmpl.source_face_lines) (out += l) += '\n';
  } else {
    for (const auto& t : tmpl.uv) {
      std::snprintf(buf, sizeof(buf), "vt %.17g %.17g\n", t.x(), t.y());
      out += buf;
    }
    for (const auto& f : tmpl.faces) {
      std::snprintf(buf, sizeof(buf), "f %d/%d %d/%d %d/%d\n", f[0] + 1, f[0] + 1, f[1] + 1,
                    f[1] + 1, f[2] + 1, f[2] + 1);
      out += buf;
    }
  }
  return out;
}

inline void save_obj(const std::string& path, const Mesh& tmpl, const std::vector<Vec3>& vertices) {
  atomic_write(path, obj_text(tmpl, vertices));
}

// Point clouds for scans: OBJ `v` records or ascii PLY vertex elements.
inline std::vector<Vec3> load_points(const std::string& path) {
  const std::string text = read_file(path);
  std::istringstream in(text);
  std::vector<Vec3> points;
  std::string line;
  if (text.rfind("ply", 0) == 0) {
    int count = -1;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const auto toks = detail::split_ws(line);
      if (toks.size() == 3 && toks[0] == "element" && toks[1] == "vertex") count = std::stoi(toks[2]);
      if (!toks.empty() && toks[0] == "format" && toks[1] != "ascii") fail("ply: only ascii supported: " + path);
      if (!toks.empty() && toks[0] == "end_header") break;
    }
    if (count < 0) fail("ply: missing vertex element in " + path);
    for (int i = 0; i < count; ++i) {
      if (!std::getline(in, line)) fail("ply: truncated vertex list in " + path);
      const auto toks = detail::split_ws(line);
      if (toks.size() < 3) fail("ply: malformed vertex line in " + path);
      points.emplace_back(std::stod(toks[0]), std::stod(toks[1]), std::stod(toks[2]));
    }
  } else {
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const auto toks = detail::split_ws(line);
      if (toks.size() >= 4 && toks[0] == "v")
        points.emplace_back(std::stod(toks[1]), std::stod(toks[2]), std::stod(toks[3]));
    }
  }
  if (points.empty()) fail("no points in " + path);
  return points;
}

inline void save_points_obj(const std::string& path, const std::vector<Vec3>& points) {
  std::string out;
  char buf[160];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g\n", p.x(), p.y(), p.z());
    out += buf;
  }
  atomic_write(path, out);
}

}  // namespace askin
