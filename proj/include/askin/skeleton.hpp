// Bone hierarchy, bind poses and the dynamic binding that re-derives bone
// positions from their uv coordinates.
//
// Bind poses keep the initial rotation/scale block; moving a bone only
// rewrites the translation column. A bone's transform is
//   T_j = (prod over root..parent of Mtrs(tau_p)) * Mtrs(tau_j) * B_j^-1,
// with Mtrs(tau_j) = Ml2p_j * M(tau_j) and Ml2p_j = B_p^-1 B_j. With every
// tau at identity the product telescopes to the identity for any binding.
#pragma once

#include <Eigen/Dense>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "askin/mesh.hpp"

namespace askin {

struct Bone {
  std::string name;
  int parent = -1;  // -1 for the root
  Vec3 psi0 = Vec3::Zero();
  int proxy_vertex = -1;           // nearest front-view vertex to psi0
  Mat3 bind_rot_scale = Mat3::Identity();
};

struct Skeleton {
  std::vector<Bone> bones;

  int bone_count() const { return static_cast<int>(bones.size()); }

  void validate() const {
    int roots = 0;
    for (int j = 0; j < bone_count(); ++j) {
      const Bone& b = bones[j];
      if (b.parent < 0) {
        ++roots;
      } else if (b.parent >= j) {
        fail("skeleton: bone '" + b.name + "' must come after its parent");
      }
    }
    if (roots != 1) fail("skeleton: expected exactly one root, found " + std::to_string(roots));
  }

  // Assigns proxy vertices by front-view nearest lookup against the template.
  void bind_proxies(const Mesh& mesh) {
    for (Bone& b : bones) b.proxy_vertex = nearest_vertex_front(mesh, b.psi0);
  }

  std::vector<Vec2> initial_zetas(const Mesh& mesh) const {
    std::vector<Vec2> zetas(bones.size());
    for (std::size_t j = 0; j < bones.size(); ++j) {
      if (bones[j].proxy_vertex < 0) fail("skeleton: proxies not bound");
      zetas[j] = mesh.uv[bones[j].proxy_vertex];
    }
    return zetas;
  }

  std::uint64_t content_hash() const {
    Fnv1a h;
    h.update(static_cast<std::uint64_t>(bones.size()));
    for (const Bone& b : bones) {
      h.update(b.name);
      h.update(static_cast<std::uint64_t>(b.parent + 1));
      h.update(b.psi0.x());
      h.update(b.psi0.y());
      h.update(b.psi0.z());
    }
    return h.digest();
  }
};

struct BindPose {
  std::vector<Mat4> matrices;
  std::vector<Vec3> positions;
};

struct BoneTransforms {
  std::vector<Mat4> matrices;
};

inline Mat4 affine(const Mat3& m, const Vec3& t) {
  Mat4 out = Mat4::Identity();
  out.topLeftCorner<3, 3>() = m;
  out.topRightCorner<3, 1>() = t;
  return out;
}

inline Mat4 affine_inverse(const Mat4& a) {
  const Mat3 m = a.topLeftCorner<3, 3>();
  const double det = m.determinant();
  if (std::abs(det) < 1e-300) fail("singular bind pose");
  const Mat3 mi = m.inverse();
  return affine(mi, -mi * a.topRightCorner<3, 1>());
}

// B_j = [[R0_j S0_j, psi_j], [0, 1]] - only the translation column moves.
inline BindPose compute_bind_pose(const Skeleton& skeleton, const std::vector<Vec3>& psi) {
  if (psi.size() != skeleton.bones.size()) fail("compute_bind_pose: psi size mismatch");
  BindPose bind;
  bind.positions = psi;
  bind.matrices.resize(psi.size());
  for (std::size_t j = 0; j < psi.size(); ++j)
    bind.matrices[j] = affine(skeleton.bones[j].bind_rot_scale, psi[j]);
  return bind;
}

// Ml2p_j = B_p^-1 B_j; the root's parent frame is the world, so its Ml2p is
// B_root itself.
inline Mat4 local_to_parent(const Skeleton& skeleton, const BindPose& bind, int j) {
  const int p = skeleton.bones[j].parent;
  if (p < 0) return bind.matrices[j];
  return affine_inverse(bind.matrices[p]) * bind.matrices[j];
}

using Tau = Eigen::Matrix<double, 9, 1>;

inline Tau tau_identity() {
  Tau t;
  t << 0, 0, 0, 0, 0, 0, 1, 1, 1;
  return t;
}

namespace detail {
inline Mat3 rot_x(double a) {
  Mat3 r = Mat3::Identity();
  const double c = std::cos(a), s = std::sin(a);
  r(1, 1) = c; r(1, 2) = -s;
  r(2, 1) = s; r(2, 2) = c;
  return r;
}
inline Mat3 rot_y(double a) {
  Mat3 r = Mat3::Identity();
  const double c = std::cos(a), s = std::sin(a);
  r(0, 0) = c; r(0, 2) = s;
  r(2, 0) = -s; r(2, 2) = c;
  return r;
}
inline Mat3 rot_z(double a) {
  Mat3 r = Mat3::Identity();
  const double c = std::cos(a), s = std::sin(a);
  r(0, 0) = c; r(0, 1) = -s;
  r(1, 0) = s; r(1, 1) = c;
  return r;
}
inline Mat3 drot_x(double a) {
  Mat3 r = Mat3::Zero();
  const double c = std::cos(a), s = std::sin(a);
  r(1, 1) = -s; r(1, 2) = -c;
  r(2, 1) = c; r(2, 2) = -s;
  return r;
}
inline Mat3 drot_y(double a) {
  Mat3 r = Mat3::Zero();
  const double c = std::cos(a), s = std::sin(a);
  r(0, 0) = -s; r(0, 2) = c;
  r(2, 0) = -c; r(2, 2) = -s;
  return r;
}
inline Mat3 drot_z(double a) {
  Mat3 r = Mat3::Zero();
  const double c = std::cos(a), s = std::sin(a);
  r(0, 0) = -s; r(0, 1) = -c;
  r(1, 0) = c; r(1, 1) = -s;
  return r;
}
}  // namespace detail

// M(tau) = Translate(t) * Rx(rx) Ry(ry) Rz(rz) * Scale(s),
// tau = (tx,ty,tz, rx,ry,rz, sx,sy,sz).
inline Mat4 compose_trs(const Tau& tau) {
  const Mat3 r = detail::rot_x(tau[3]) * detail::rot_y(tau[4]) * detail::rot_z(tau[5]);
  Mat3 rs = r;
  rs.col(0) *= tau[6];
  rs.col(1) *= tau[7];
  rs.col(2) *= tau[8];
  return affine(rs, tau.head<3>());
}

// Partial derivatives of compose_trs with respect to each of the nine
// parameters, as full 4x4 matrices.
inline std::array<Mat4, 9> compose_trs_derivs(const Tau& tau) {
  std::array<Mat4, 9> d;
  for (auto& m : d) m = Mat4::Zero();
  d[0](0, 3) = 1.0;
  d[1](1, 3) = 1.0;
  d[2](2, 3) = 1.0;
  const Mat3 rx = detail::rot_x(tau[3]), ry = detail::rot_y(tau[4]), rz = detail::rot_z(tau[5]);
  const Vec3 s = tau.tail<3>();
  auto scaled = [&](const Mat3& m) {
    Mat3 out = m;
    out.col(0) *= s[0];
    out.col(1) *= s[1];
    out.col(2) *= s[2];
    return out;
  };
  d[3].topLeftCorner<3, 3>() = scaled(detail::drot_x(tau[3]) * ry * rz);
  d[4].topLeftCorner<3, 3>() = scaled(rx * detail::drot_y(tau[4]) * rz);
  d[5].topLeftCorner<3, 3>() = scaled(rx * ry * detail::drot_z(tau[5]));
  const Mat3 r = rx * ry * rz;
  d[6].topLeftCorner<3, 3>().col(0) = r.col(0);
  d[7].topLeftCorner<3, 3>().col(1) = r.col(1);
  d[8].topLeftCorner<3, 3>().col(2) = r.col(2);
  return d;
}

// T_j for every bone; taus indexed like bones.
inline BoneTransforms bone_transforms(const Skeleton& skeleton, const BindPose& bind,
                                      const std::vector<Tau>& taus) {
  const int n = skeleton.bone_count();
  if (static_cast<int>(taus.size()) != n || static_cast<int>(bind.matrices.size()) != n)
    fail("bone_transforms: size mismatch");
  BoneTransforms out;
  out.matrices.resize(n);
  std::vector<Mat4> local_to_world(n);
  for (int j = 0; j < n; ++j) {
    const Mat4 g = local_to_parent(skeleton, bind, j) * compose_trs(taus[j]);
    const int p = skeleton.bones[j].parent;
    local_to_world[j] = p < 0 ? g : Mat4(local_to_world[p] * g);
    out.matrices[j] = local_to_world[j] * affine_inverse(bind.matrices[j]);
  }
  return out;
}

// Where a uv query landed: the containing face, or the nearest chart point
// when the query fell outside. clamp_jac is d(effective uv)/d(query uv):
// identity inside, the tangential projector on a clamped edge, zero at a
// clamped vertex - no gradient points out of the chart.
struct UvLocation {
  Vec2 uv = Vec2::Zero();
  int face = -1;
  Bary bary{};
  bool clamped = false;
  Mat2 clamp_jac = Mat2::Identity();
};

inline UvLocation locate_or_clamp(const Mesh& mesh, const UvGrid& grid, const Vec2& p) {
  UvLocation loc;
  if (grid.in_bounds(p)) {
    for (int f : grid.candidates(p)) {
      const auto& tri = mesh.faces[f];
      if (triangle_contains(p, mesh.uv[tri[0]], mesh.uv[tri[1]], mesh.uv[tri[2]])) {
        const Bary w = barycentric(p, mesh.uv[tri[0]], mesh.uv[tri[1]], mesh.uv[tri[2]]);
        loc.uv = p;
        loc.face = f;
        loc.bary = w;
        return loc;
      }
    }
  }
  if (mesh.faces.empty()) fail("uv chart empty");
  double best = std::numeric_limits<double>::infinity();
  Tri2Closest best_cp{};
  int best_face = -1;
  for (int f = 0; f < mesh.face_count(); ++f) {
    const auto& tri = mesh.faces[f];
    const Tri2Closest cp =
        closest_point_triangle2(p, mesh.uv[tri[0]], mesh.uv[tri[1]], mesh.uv[tri[2]]);
    const double d2 = (p - cp.point).squaredNorm();
    if (d2 < best) {
      best = d2;
      best_cp = cp;
      best_face = f;
    }
  }
  loc.uv = best_cp.point;
  loc.face = best_face;
  loc.bary = best_cp.bary;
  loc.clamped = true;
  if (best_cp.region == 1)
    loc.clamp_jac = best_cp.edge_dir * best_cp.edge_dir.transpose();
  else
    loc.clamp_jac = Mat2::Zero();
  return loc;
}

// psi_j = alpha*vA + beta*vB + gamma*vC - v_t + psi0_j  at zeta_j's face.
inline Vec3 wrap_uv_to_world(const Mesh& mesh, const Bone& bone, const UvLocation& loc) {
  const auto& tri = mesh.faces[loc.face];
  const Vec3 interp = loc.bary.alpha * mesh.vertices[tri[0]] + loc.bary.beta * mesh.vertices[tri[1]] +
                      loc.bary.gamma * mesh.vertices[tri[2]];
  return interp - mesh.vertices[bone.proxy_vertex] + bone.psi0;
}

// d psi / d zeta (3x2) through the frozen face and any clamp.
inline Eigen::Matrix<double, 3, 2> wrap_jacobian(const Mesh& mesh, const UvLocation& loc) {
  const auto& tri = mesh.faces[loc.face];
  const Eigen::Matrix<double, 3, 2> bary_jac =
      barycentric_jacobian(mesh.uv[tri[0]], mesh.uv[tri[1]], mesh.uv[tri[2]]);
  Eigen::Matrix<double, 3, 3> corners;
  corners.col(0) = mesh.vertices[tri[0]];
  corners.col(1) = mesh.vertices[tri[1]];
  corners.col(2) = mesh.vertices[tri[2]];
  return corners * bary_jac * loc.clamp_jac;
}

struct DynamicBindResult {
  std::vector<Vec3> psi;
  std::vector<UvLocation> locations;
  int clamped_count = 0;
};

inline DynamicBindResult dynamic_bind(const Mesh& mesh, const Skeleton& skeleton,
                                      const std::vector<Vec2>& zetas, const UvGrid& grid) {
  if (zetas.size() != skeleton.bones.size()) fail("dynamic_bind: zeta count mismatch");
  DynamicBindResult out;
  out.psi.resize(zetas.size());
  out.locations.resize(zetas.size());
  for (std::size_t j = 0; j < zetas.size(); ++j) {
    out.locations[j] = locate_or_clamp(mesh, grid, zetas[j]);
    if (out.locations[j].clamped) ++out.clamped_count;
    out.psi[j] = wrap_uv_to_world(mesh, skeleton.bones[j], out.locations[j]);
  }
  return out;
}

inline DynamicBindResult dynamic_bind(const Mesh& mesh, const Skeleton& skeleton,
                                      const std::vector<Vec2>& zetas) {
  return dynamic_bind(mesh, skeleton, zetas, UvGrid(mesh));
}

struct RebindResult {
  BindPose bind;
  std::vector<Mat4> local_to_parent;
  DynamicBindResult binding;
};

// Algorithm: barycentric interpolation of every zeta, then the binding
// update - new bind poses and local-to-parent matrices.
inline RebindResult rebind(const Mesh& mesh, const Skeleton& skeleton, const std::vector<Vec2>& zetas,
                           const UvGrid& grid) {
  RebindResult out;
  out.binding = dynamic_bind(mesh, skeleton, zetas, grid);
  out.bind = compute_bind_pose(skeleton, out.binding.psi);
  out.local_to_parent.resize(skeleton.bones.size());
  for (int j = 0; j < skeleton.bone_count(); ++j)
    out.local_to_parent[j] = local_to_parent(skeleton, out.bind, j);
  return out;
}

inline RebindResult rebind(const Mesh& mesh, const Skeleton& skeleton, const std::vector<Vec2>& zetas) {
  return rebind(mesh, skeleton, zetas, UvGrid(mesh));
}

// --- skeleton file io ------------------------------------------------------

inline Skeleton skeleton_from_json(const nlohmann::json& doc, const std::string& origin) {
  if (!doc.contains("bones") || !doc["bones"].is_array()) fail("skeleton: missing bones array in " + origin);
  Skeleton skel;
  std::vector<std::string> names;
  std::vector<nlohmann::json> parents;
  for (const auto& jb : doc["bones"]) {
    Bone b;
    b.name = jb.at("name").get<std::string>();
    const auto& p = jb.at("psi0");
    b.psi0 = Vec3(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>());
    names.push_back(b.name);
    parents.push_back(jb.contains("parent") ? jb["parent"] : nlohmann::json());
    skel.bones.push_back(b);
  }
  auto index_of = [&](const std::string& name) {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return static_cast<int>(i);
    fail("skeleton: unknown parent '" + name + "' in " + origin);
  };
  for (std::size_t j = 0; j < skel.bones.size(); ++j) {
    const auto& p = parents[j];
    if (p.is_null() || (p.is_string() && p.get<std::string>().empty()))
      skel.bones[j].parent = -1;
    else if (p.is_number_integer())
      skel.bones[j].parent = p.get<int>();
    else if (p.is_string())
      skel.bones[j].parent = index_of(p.get<std::string>());
    else
      fail("skeleton: parent must be a name, an index or null in " + origin);
  }
  // Cycle check before the ordering check so a cycle is named as such.
  const int n = skel.bone_count();
  for (int start = 0; start < n; ++start) {
    int steps = 0, j = start;
    while (j >= 0) {
      j = skel.bones[j].parent >= n || skel.bones[j].parent < -1 ? -1 : skel.bones[j].parent;
      if (++steps > n) {
        std::string cycle = skel.bones[start].name;
        int k = skel.bones[start].parent;
        for (int c = 0; c < n && k >= 0; ++c, k = skel.bones[k].parent) cycle += " -> " + skel.bones[k].name;
        fail("skeleton: parent cycle involving " + skel.bones[start].name + " (" + cycle + ")");
      }
    }
  }
  skel.validate();
  return skel;
}

inline Skeleton load_skeleton(const std::string& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    fail("skeleton: cannot parse " + path + ": " + e.what());
  }
  return skeleton_from_json(doc, path);
}

inline nlohmann::json skeleton_to_json(const Skeleton& skel) {
  nlohmann::json bones = nlohmann::json::array();
  for (const Bone& b : skel.bones) {
    nlohmann::json jb;
    jb["name"] = b.name;
    if (b.parent < 0)
      jb["parent"] = nullptr;
    else
      jb["parent"] = skel.bones[b.parent].name;
    jb["psi0"] = {b.psi0.x(), b.psi0.y(), b.psi0.z()};
    bones.push_back(jb);
  }
  return nlohmann::json{{"bones", bones}};
}

inline void save_skeleton(const std::string& path, const Skeleton& skel) {
  atomic_write(path, skeleton_to_json(skel).dump(2) + "\n");
}

}  // namespace askin
