// Triangle mesh with a per-vertex uv chart, plus the point queries the
// model needs: uv location, front-view nearest vertex and point-to-surface
// distance. Spatial indices only accelerate; results match the brute-force
// scans bit for bit.
#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "askin/geometry.hpp"
#include "askin/util.hpp"

namespace askin {

struct BarycentricHit {
  int face_index = -1;
  double alpha = 0.0, beta = 0.0, gamma = 0.0;
};

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
  std::vector<Vec2> uv;  // the unwrap map F, one entry per vertex

  // Source vt/f text kept so exports can copy them verbatim.
  std::vector<std::string> source_vt_lines;
  std::vector<std::string> source_face_lines;

  int vertex_count() const { return static_cast<int>(vertices.size()); }
  int face_count() const { return static_cast<int>(faces.size()); }

  void validate() const {
    if (uv.size() != vertices.size()) fail("mesh: uv must have exactly one entry per vertex");
    for (const auto& f : faces)
      for (int idx : f)
        if (idx < 0 || idx >= vertex_count()) fail("mesh: face index out of range");
  }

  Vec3 bbox_min() const {
    Vec3 m = Vec3::Constant(std::numeric_limits<double>::infinity());
    for (const auto& v : vertices) m = m.cwiseMin(v);
    return m;
  }
  Vec3 bbox_max() const {
    Vec3 m = Vec3::Constant(-std::numeric_limits<double>::infinity());
    for (const auto& v : vertices) m = m.cwiseMax(v);
    return m;
  }
  double bbox_diagonal() const { return (bbox_max() - bbox_min()).norm(); }

  std::uint64_t content_hash() const {
    Fnv1a h;
    h.update(static_cast<std::uint64_t>(vertices.size()));
    h.update(static_cast<std::uint64_t>(faces.size()));
    for (const auto& v : vertices) {
      h.update(v.x());
      h.update(v.y());
      h.update(v.z());
    }
    for (const auto& t : uv) {
      h.update(t.x());
      h.update(t.y());
    }
    for (const auto& f : faces)
      for (int idx : f) h.update(static_cast<std::uint64_t>(idx));
    return h.digest();
  }
};

// Uniform grid over the uv chart. Cells store candidate faces sorted by
// index, so the first containment hit is the lowest-index containing face,
// exactly as a linear scan would find.
class UvGrid {
 public:
  UvGrid() = default;
  UvGrid(const Mesh& mesh, int resolution = 64) : res_(resolution) {
    lo_ = Vec2::Constant(std::numeric_limits<double>::infinity());
    hi_ = Vec2::Constant(-std::numeric_limits<double>::infinity());
    for (const auto& t : mesh.uv) {
      lo_ = lo_.cwiseMin(t);
      hi_ = hi_.cwiseMax(t);
    }
    if (!lo_.allFinite() || !hi_.allFinite()) fail("uv chart empty");
    const Vec2 span = (hi_ - lo_).cwiseMax(1e-12);
    inv_cell_ = Vec2(res_ / span.x(), res_ / span.y());
    cells_.resize(static_cast<std::size_t>(res_) * res_);
    for (int f = 0; f < mesh.face_count(); ++f) {
      const auto& tri = mesh.faces[f];
      Vec2 flo = mesh.uv[tri[0]].cwiseMin(mesh.uv[tri[1]]).cwiseMin(mesh.uv[tri[2]]);
      Vec2 fhi = mesh.uv[tri[0]].cwiseMax(mesh.uv[tri[1]]).cwiseMax(mesh.uv[tri[2]]);
      const auto [x0, y0] = cell_of(flo);
      const auto [x1, y1] = cell_of(fhi);
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) cells_[static_cast<std::size_t>(y) * res_ + x].push_back(f);
    }
  }

  const std::vector<int>& candidates(const Vec2& p) const {
    const auto [x, y] = cell_of(p);
    return cells_[static_cast<std::size_t>(y) * res_ + x];
  }
  bool in_bounds(const Vec2& p) const {
    return p.x() >= lo_.x() && p.x() <= hi_.x() && p.y() >= lo_.y() && p.y() <= hi_.y();
  }

 private:
  std::pair<int, int> cell_of(const Vec2& p) const {
    int x = static_cast<int>((p.x() - lo_.x()) * inv_cell_.x());
    int y = static_cast<int>((p.y() - lo_.y()) * inv_cell_.y());
    return {std::clamp(x, 0, res_ - 1), std::clamp(y, 0, res_ - 1)};
  }
  int res_ = 0;
  Vec2 lo_, hi_, inv_cell_;
  std::vector<std::vector<int>> cells_;
};

// Lowest-index face containing p, boundary inclusive.
inline BarycentricHit locate_uv_brute(const Mesh& mesh, const Vec2& p) {
  for (int f = 0; f < mesh.face_count(); ++f) {
    const auto& tri = mesh.faces[f];
    if (triangle_contains(p, mesh.uv[tri[0]], mesh.uv[tri[1]], mesh.uv[tri[2]])) {
      const Bary w = barycentric(p, mesh.uv[tri[0]], mesh.uv[tri[1]], mesh.uv[tri[2]]);
      return {f, w.alpha, w.beta, w.gamma};
    }
  }
  fail("uv-out-of-chart: point (" + std::to_string(p.x()) + ", " + std::to_string(p.y()) +
       ") lies outside every uv triangle");
}

inline BarycentricHit locate_uv(const Mesh& mesh, const Vec2& p, const UvGrid& grid) {
  if (grid.in_bounds(p)) {
    for (int f : grid.candidates(p)) {
      const auto& tri = mesh.faces[f];
      if (triangle_contains(p, mesh.uv[tri[0]], mesh.uv[tri[1]], mesh.uv[tri[2]])) {
        const Bary w = barycentric(p, mesh.uv[tri[0]], mesh.uv[tri[1]], mesh.uv[tri[2]]);
        return {f, w.alpha, w.beta, w.gamma};
      }
    }
  }
  fail("uv-out-of-chart: point (" + std::to_string(p.x()) + ", " + std::to_string(p.y()) +
       ") lies outside every uv triangle");
}

inline BarycentricHit locate_uv(const Mesh& mesh, const Vec2& p) {
  return locate_uv_brute(mesh, p);
}

// Index of the vertex nearest to p3 in the xy plane (z dropped, front view).
// Strict < keeps the lowest index on ties.
inline int nearest_vertex_front(const Mesh& mesh, const Vec3& p3) {
  if (mesh.vertices.empty()) fail("nearest_vertex_front: empty mesh");
  int best = 0;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (int i = 0; i < mesh.vertex_count(); ++i) {
    const double dx = mesh.vertices[i].x() - p3.x();
    const double dy = mesh.vertices[i].y() - p3.y();
    const double d2 = dx * dx + dy * dy;
    if (d2 < best_d2) {
      best_d2 = d2;
      best = i;
    }
  }
  return best;
}

struct SurfaceHit {
  double distance = 0.0;
  int face_index = -1;
  Bary bary{};
  Vec3 point = Vec3::Zero();
};

// Median-split AABB tree over faces. Queries prune with squared box
// distance, so every surviving candidate is evaluated with the exact
// triangle routine and the winning value equals the brute-force minimum.
class MeshBvh {
 public:
  MeshBvh() = default;
  explicit MeshBvh(const Mesh& mesh) { build(mesh.vertices, mesh.faces); }
  MeshBvh(const std::vector<Vec3>& vertices, const std::vector<std::array<int, 3>>& faces) {
    build(vertices, faces);
  }

  void build(const std::vector<Vec3>& vertices, const std::vector<std::array<int, 3>>& faces) {
    vertices_ = &vertices;
    faces_ = &faces;
    nodes_.clear();
    order_.resize(faces.size());
    std::iota(order_.begin(), order_.end(), 0);
    centroids_.resize(faces.size());
    for (std::size_t f = 0; f < faces.size(); ++f)
      centroids_[f] = (vertices[faces[f][0]] + vertices[faces[f][1]] + vertices[faces[f][2]]) / 3.0;
    if (!faces.empty()) build_node(0, static_cast<int>(faces.size()));
  }

  SurfaceHit closest(const Vec3& p) const {
    if (faces_ == nullptr || faces_->empty()) fail("point_mesh_distance: mesh has no faces");
    SurfaceHit best;
    best.distance = std::numeric_limits<double>::infinity();
    double best_d2 = std::numeric_limits<double>::infinity();
    search(0, p, best, best_d2);
    best.distance = std::sqrt(best_d2);
    return best;
  }

 private:
  struct Node {
    Vec3 lo, hi;
    int left = -1, right = -1;  // children; leaf when left < 0
    int begin = 0, end = 0;     // face range in order_ for leaves
  };

  int build_node(int begin, int end) {
    Node node;
    node.lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    node.hi = -node.lo;
    for (int i = begin; i < end; ++i) {
      const auto& f = (*faces_)[order_[i]];
      for (int k = 0; k < 3; ++k) {
        node.lo = node.lo.cwiseMin((*vertices_)[f[k]]);
        node.hi = node.hi.cwiseMax((*vertices_)[f[k]]);
      }
    }
    const int index = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    if (end - begin <= 4) {
      nodes_[index].begin = begin;
      nodes_[index].end = end;
      return index;
    }
    const Vec3 extent = node.hi - node.lo;
    int axis = 0;
    if (extent.y() > extent.x()) axis = 1;
    if (extent.z() > extent[axis]) axis = 2;
    const int mid = (begin + end) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int a, int b) {
                       if (centroids_[a][axis] != centroids_[b][axis])
                         return centroids_[a][axis] < centroids_[b][axis];
                       return a < b;
                     });
    const int l = build_node(begin, mid);
    const int r = build_node(mid, end);
    nodes_[index].left = l;
    nodes_[index].right = r;
    return index;
  }

  static double box_distance2(const Node& n, const Vec3& p) {
    double d2 = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double d = std::max({n.lo[k] - p[k], 0.0, p[k] - n.hi[k]});
      d2 += d * d;
    }
    return d2;
  }

  void search(int node_index, const Vec3& p, SurfaceHit& best, double& best_d2) const {
    const Node& node = nodes_[node_index];
    if (node.left < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const int f = order_[i];
        const auto& tri = (*faces_)[f];
        const TriClosest cp =
            closest_point_triangle(p, (*vertices_)[tri[0]], (*vertices_)[tri[1]], (*vertices_)[tri[2]]);
        const double d2 = (p - cp.point).squaredNorm();
        if (d2 < best_d2) {
          best_d2 = d2;
          best.face_index = f;
          best.bary = cp.bary;
          best.point = cp.point;
        }
      }
      return;
    }
    const double dl = box_distance2(nodes_[node.left], p);
    const double dr = box_distance2(nodes_[node.right], p);
    const int first = dl <= dr ? node.left : node.right;
    const int second = dl <= dr ? node.right : node.left;
    if ((first == node.left ? dl : dr) < best_d2) search(first, p, best, best_d2);
    if ((second == node.left ? dl : dr) < best_d2) search(second, p, best, best_d2);
  }

  const std::vector<Vec3>* vertices_ = nullptr;
  const std::vector<std::array<int, 3>>* faces_ = nullptr;
  std::vector<Node> nodes_;
  std::vector<int> order_;
  std::vector<Vec3> centroids_;
};

inline SurfaceHit closest_point_brute(const Mesh& mesh, const Vec3& p) {
  if (mesh.faces.empty()) fail("point_mesh_distance: mesh has no faces");
  SurfaceHit best;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (int f = 0; f < mesh.face_count(); ++f) {
    const auto& tri = mesh.faces[f];
    const TriClosest cp =
        closest_point_triangle(p, mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]);
    const double d2 = (p - cp.point).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best.face_index = f;
      best.bary = cp.bary;
      best.point = cp.point;
    }
  }
  best.distance = std::sqrt(best_d2);
  return best;
}

struct PointMeshDistances {
  std::vector<double> per_point;
  double mean = 0.0;
};

inline PointMeshDistances point_mesh_distance(const std::vector<Vec3>& points, const Mesh& mesh) {
  if (points.empty()) fail("point_mesh_distance: empty point set");
  MeshBvh bvh(mesh);
  PointMeshDistances out;
  out.per_point.resize(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) out.per_point[i] = bvh.closest(points[i]).distance;
  double sum = 0.0;
  for (double d : out.per_point) sum += d;
  out.mean = sum / static_cast<double>(points.size());
  return out;
}

}  // namespace askin
