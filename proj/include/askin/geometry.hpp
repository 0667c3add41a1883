// Planar triangle predicates, barycentric weights and closest-point queries.
#pragma once

#include <Eigen/Core>
#include <array>
#include <cmath>

#include "askin/util.hpp"

namespace askin {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

// Point-in-triangle via the three cross products t1 = (A-p)x(B-p),
// t2 = (B-p)x(C-p), t3 = (C-p)x(A-p). Inside when all share a sign;
// any zero counts as inside so shared edges belong to both faces.
inline bool triangle_contains(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c) {
  if (cross2(b - a, c - a) == 0.0) fail("degenerate uv triangle (collinear vertices)");
  const double t1 = cross2(a - p, b - p);
  const double t2 = cross2(b - p, c - p);
  const double t3 = cross2(c - p, a - p);
  return (t1 >= 0.0 && t2 >= 0.0 && t3 >= 0.0) || (t1 <= 0.0 && t2 <= 0.0 && t3 <= 0.0);
}

struct Bary {
  double alpha, beta, gamma;
};

// alpha = [-(px-bx)(cy-by) + (py-by)(cx-bx)] / [-(ax-bx)(cy-by) + (ay-by)(cx-bx)]
// beta  = [-(px-cx)(ay-cy) + (py-cy)(ax-cx)] / [-(bx-cx)(ay-cy) + (by-cy)(ax-cx)]
// gamma = 1 - alpha - beta
// The gamma identity makes the weights sum to one exactly.
inline Bary barycentric(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c) {
  const double den_a = -(a.x() - b.x()) * (c.y() - b.y()) + (a.y() - b.y()) * (c.x() - b.x());
  const double den_b = -(b.x() - c.x()) * (a.y() - c.y()) + (b.y() - c.y()) * (a.x() - c.x());
  if (den_a == 0.0 || den_b == 0.0) fail("degenerate uv triangle (zero barycentric denominator)");
  const double alpha = (-(p.x() - b.x()) * (c.y() - b.y()) + (p.y() - b.y()) * (c.x() - b.x())) / den_a;
  const double beta = (-(p.x() - c.x()) * (a.y() - c.y()) + (p.y() - c.y()) * (a.x() - c.x())) / den_b;
  // gamma complements the rounded alpha+beta, so alpha+beta+gamma == 1 in
  // left-to-right floating point evaluation
  return {alpha, beta, 1.0 - (alpha + beta)};
}

// d(alpha,beta,gamma)/dp. The weights are affine in p, so this is constant
// over the triangle.
inline Eigen::Matrix<double, 3, 2> barycentric_jacobian(const Vec2& a, const Vec2& b, const Vec2& c) {
  const double den_a = -(a.x() - b.x()) * (c.y() - b.y()) + (a.y() - b.y()) * (c.x() - b.x());
  const double den_b = -(b.x() - c.x()) * (a.y() - c.y()) + (b.y() - c.y()) * (a.x() - c.x());
  if (den_a == 0.0 || den_b == 0.0) fail("degenerate uv triangle (zero barycentric denominator)");
  Eigen::Matrix<double, 3, 2> jac;
  jac(0, 0) = -(c.y() - b.y()) / den_a;
  jac(0, 1) = (c.x() - b.x()) / den_a;
  jac(1, 0) = -(a.y() - c.y()) / den_b;
  jac(1, 1) = (a.x() - c.x()) / den_b;
  jac(2, 0) = -jac(0, 0) - jac(1, 0);
  jac(2, 1) = -jac(0, 1) - jac(1, 1);
  return jac;
}

// Closest point on 3D triangle (a,b,c) to p, Ericson's region walk.
// Returns the point and its barycentric weights.
struct TriClosest {
  Vec3 point;
  Bary bary;
};

inline TriClosest closest_point_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return {a, {1.0, 0.0, 0.0}};

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return {b, {0.0, 1.0, 0.0}};

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double v = d1 / (d1 - d3);
    return {a + v * ab, {1.0 - v, v, 0.0}};
  }

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return {c, {0.0, 0.0, 1.0}};

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double w = d2 / (d2 - d6);
    return {a + w * ac, {1.0 - w, 0.0, w}};
  }

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return {b + w * (c - b), {0.0, 1.0 - w, w}};
  }

  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom, w = vc * denom;
  return {a + ab * v + ac * w, {1.0 - v - w, v, w}};
}

// 2D variant, used when clamping uv points back onto the chart.
struct Tri2Closest {
  Vec2 point;
  Bary bary;
  // 0 = interior, 1 = edge, 2 = vertex; drives the clamp jacobian.
  int region;
  Vec2 edge_dir;  // unit edge direction when region == 1
};

inline Tri2Closest closest_point_triangle2(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c) {
  if (triangle_contains(p, a, b, c)) return {p, barycentric(p, a, b, c), 0, Vec2::Zero()};
  double best = std::numeric_limits<double>::infinity();
  Tri2Closest out{};
  const std::array<std::pair<Vec2, Vec2>, 3> edges = {{{a, b}, {b, c}, {c, a}}};
  for (const auto& [e0, e1] : edges) {
    const Vec2 d = e1 - e0;
    const double len2 = d.squaredNorm();
    double t = len2 > 0.0 ? (p - e0).dot(d) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const Vec2 q = e0 + t * d;
    const double dist2 = (p - q).squaredNorm();
    if (dist2 < best) {
      best = dist2;
      out.point = q;
      out.region = (t == 0.0 || t == 1.0) ? 2 : 1;
      out.edge_dir = len2 > 0.0 ? Vec2(d / std::sqrt(len2)) : Vec2::Zero();
    }
  }
  out.bary = barycentric(out.point, a, b, c);
  return out;
}

}  // namespace askin
