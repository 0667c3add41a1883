// Procedural demo head and its skeleton.
//
// The head is the front patch of an ellipsoid, sampled on an angle grid and
// masked to an oval, with facial features added as smooth bumps along the
// surface normal. The angle parameterization keeps the near-silhouette band
// (|n_z| small) well resolved, so contour extraction has vertices to find in
// any near-frontal view. The uv chart is the affine image of the angle grid.
//
// The skeleton follows the 84-bone face hierarchy (root/head/nose/mouth/eye
// and eyebrow subtrees plus neck bones); placements are hand positioned on
// this head so that the isotropic weight initializer covers the whole chart.
#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "askin/mesh.hpp"
#include "askin/skeleton.hpp"

namespace askin {

struct DemoHead {
  Mesh mesh;
  Skeleton skeleton;
  std::vector<int> landmarks68;
  std::array<int, 7> keypoints7{};
};

// Keypoint labels, fixed order (eye corners, nose tip, mouth corners).
inline const std::array<const char*, 7>& keypoint_labels() {
  static const std::array<const char*, 7> labels = {
      "eye_outer.L", "eye_inner.L", "eye_inner.R", "eye_outer.R",
      "nose_tip",    "lip_corner.L", "lip_corner.R"};
  return labels;
}

namespace demo {

inline constexpr double kLambdaMax = 1.62;  // patch extent past the 90-degree silhouette
inline constexpr double kBetaMax = 1.15;
inline constexpr double kAxisX = 0.92;
inline constexpr double kAxisY = 1.22;
inline constexpr double kAxisZ = 0.80;

struct FeatureBump {
  double lam, beta, slam, sbeta, amp;
  bool mirrored;  // apply at +lam and -lam
};

inline const std::vector<FeatureBump>& feature_bumps() {
  static const std::vector<FeatureBump> bumps = {
      {0.00, 0.04, 0.15, 0.27, 0.105, false},   // nose ridge
      {0.00, -0.12, 0.12, 0.09, 0.075, false},  // nose tip
      {0.38, 0.48, 0.21, 0.11, 0.045, true},    // brow ridges
      {0.38, 0.26, 0.16, 0.09, -0.045, true},   // eye sockets
      {0.00, -0.46, 0.27, 0.08, 0.045, false},  // lips
      {0.00, -0.58, 0.18, 0.05, -0.020, false}, // groove under the lip
      {0.00, -0.80, 0.22, 0.14, 0.050, false},  // chin
      {0.52, -0.12, 0.23, 0.21, 0.035, true},   // cheeks
      {0.00, 0.74, 0.55, 0.28, 0.025, false},   // forehead
  };
  return bumps;
}

// Hairline cut: the patch stops at this beta, so the chart's top edge sits
// near the forehead bones.
inline constexpr double kBetaCut = 1.2;  // no cut: the full oval rim stays grazing

inline double bump_height(double lam, double beta) {
  double h = 0.0;
  for (const FeatureBump& b : feature_bumps()) {
    const double dl = (lam - b.lam) / b.slam, db = (beta - b.beta) / b.sbeta;
    h += b.amp * std::exp(-dl * dl - db * db);
    if (b.mirrored) {
      const double dl2 = (lam + b.lam) / b.slam;
      h += b.amp * std::exp(-dl2 * dl2 - db * db);
    }
  }
  return h;
}

inline Vec3 base_point(double lam, double beta) {
  return {kAxisX * std::sin(lam) * std::cos(beta), kAxisY * std::sin(beta),
          kAxisZ * std::cos(lam) * std::cos(beta)};
}

inline Vec3 base_normal(double lam, double beta) {
  const Vec3 p = base_point(lam, beta);
  Vec3 n(p.x() / (kAxisX * kAxisX), p.y() / (kAxisY * kAxisY), p.z() / (kAxisZ * kAxisZ));
  return n.normalized();
}

inline Vec3 surface_point(double lam, double beta) {
  return base_point(lam, beta) + bump_height(lam, beta) * base_normal(lam, beta);
}

inline bool inside_oval(double lam, double beta) {
  const double a = lam / kLambdaMax, b = beta / kBetaMax;
  return a * a + b * b <= 1.0 && beta <= kBetaCut;
}

struct BoneSpec {
  const char* name;
  const char* parent;  // empty for the root
  double lam, beta;
  double inset;  // pulled inward along the normal (interior bones)
};

// Index order matches the face hierarchy table; parents always precede
// children.
inline const std::vector<BoneSpec>& bone_specs() {
  static const std::vector<BoneSpec> specs = {
      {"root", "", 0.00, -0.35, 0.60},
      {"head", "root", 0.00, 0.10, 0.45},
      {"nose", "head", 0.00, 0.02, 0.0},
      {"nose_bridge", "nose", 0.00, 0.20, 0.0},
      {"nose_tip", "nose", 0.00, -0.12, 0.0},
      {"nose_mid", "nose", 0.00, -0.02, 0.0},
      {"nose_wing.L", "nose", 0.13, -0.12, 0.0},
      {"nose_wing.R", "nose", -0.13, -0.12, 0.0},
      {"nose_bottom.L", "nose", 0.09, -0.235, 0.0},
      {"nose_bottom.R", "nose", -0.09, -0.235, 0.0},
      {"nose_hole.L", "nose", 0.085, -0.175, 0.0},
      {"nose_hole.R", "nose", -0.085, -0.175, 0.0},
      {"nose_bridge_upper", "nose", 0.00, 0.31, 0.0},
      {"mouth", "head", 0.00, -0.46, 0.05},
      {"lip_corner.L", "mouth", 0.29, -0.46, 0.0},
      {"lip_upper_side.L", "mouth", 0.14, -0.41, 0.0},
      {"lip_upper_mid", "mouth", 0.00, -0.395, 0.0},
      {"lip_lower_mid", "mouth", 0.00, -0.525, 0.0},
      {"lip_lower_side.L", "mouth", 0.14, -0.51, 0.0},
      {"lip_corner.R", "mouth", -0.29, -0.46, 0.0},
      {"lip_upper_side.R", "mouth", -0.14, -0.41, 0.0},
      {"lip_lower_side.R", "mouth", -0.14, -0.51, 0.0},
      {"ear.L", "head", 1.49, -0.02, 0.0},
      {"eye.L", "head", 0.36, 0.26, 0.0},
      {"eye_inner_upper.L", "eye.L", 0.26, 0.315, 0.0},
      {"eye_outer_upper.L", "eye.L", 0.46, 0.315, 0.0},
      {"eye_outer_corner.L", "eye.L", 0.54, 0.26, 0.0},
      {"eye_inner_lower.L", "eye.L", 0.26, 0.205, 0.0},
      {"eye_outer_lower.L", "eye.L", 0.46, 0.205, 0.0},
      {"eye_inner_corner.L", "eye.L", 0.19, 0.26, 0.0},
      {"eye_hole.L", "eye.L", 0.36, 0.335, 0.0},
      {"eyelid_outer.L", "eye.L", 0.46, 0.375, 0.0},
      {"eyelid_middle.L", "eye.L", 0.36, 0.39, 0.0},
      {"eyelid_inner.L", "eye.L", 0.26, 0.375, 0.0},
      {"eyebrow.L", "head", 0.38, 0.51, 0.0},
      {"eyebrow_inner.L", "eyebrow.L", 0.16, 0.49, 0.0},
      {"eyebrow_outer.L", "eyebrow.L", 0.62, 0.49, 0.0},
      {"eyebrow_mid.L", "eyebrow.L", 0.38, 0.625, 0.0},
      {"forehead", "head", 0.00, 0.95, 0.0},
      {"apple_outer.L", "head", 0.50, 0.05, 0.0},
      {"apple_lower.L", "head", 0.36, -0.20, 0.0},
      {"apple_inner.L", "head", 0.16, 0.05, 0.0},
      {"apple_center.L", "head", 0.33, -0.02, 0.0},
      {"eyebrow_center", "head", 0.00, 0.50, 0.0},
      {"chin", "head", 0.00, -0.80, 0.0},
      {"chin_side.L", "head", 0.26, -0.73, 0.0},
      {"jaw.L", "head", 0.80, -0.45, 0.0},
      {"jaw_corner.L", "head", 1.22, -0.58, 0.0},
      {"temple.L", "head", 1.25, 0.52, 0.0},
      {"ear.R", "head", -1.49, -0.02, 0.0},
      {"eye.R", "head", -0.36, 0.26, 0.0},
      {"eye_inner_upper.R", "eye.R", -0.26, 0.315, 0.0},
      {"eye_outer_upper.R", "eye.R", -0.46, 0.315, 0.0},
      {"eye_outer_corner.R", "eye.R", -0.54, 0.26, 0.0},
      {"eye_inner_lower.R", "eye.R", -0.26, 0.205, 0.0},
      {"eye_outer_lower.R", "eye.R", -0.46, 0.205, 0.0},
      {"eye_inner_corner.R", "eye.R", -0.19, 0.26, 0.0},
      {"eye_hole.R", "eye.R", -0.36, 0.335, 0.0},
      {"eyelid_outer.R", "eye.R", -0.46, 0.375, 0.0},
      {"eyelid_middle.R", "eye.R", -0.36, 0.39, 0.0},
      {"eyelid_inner.R", "eye.R", -0.26, 0.375, 0.0},
      {"eyebrow.R", "head", -0.38, 0.51, 0.0},
      {"eyebrow_inner.R", "eyebrow.R", -0.16, 0.49, 0.0},
      {"eyebrow_outer.R", "eyebrow.R", -0.62, 0.49, 0.0},
      {"eyebrow_mid.R", "eyebrow.R", -0.38, 0.625, 0.0},
      {"apple_outer.R", "head", -0.50, 0.05, 0.0},
      {"apple_lower.R", "head", -0.36, -0.20, 0.0},
      {"apple_inner.R", "head", -0.16, 0.05, 0.0},
      {"apple_center.R", "head", -0.33, -0.02, 0.0},
      {"chin_side.R", "head", -0.26, -0.73, 0.0},
      {"jaw.R", "head", -0.80, -0.45, 0.0},
      {"jaw_corner.R", "head", -1.22, -0.58, 0.0},
      {"temple.R", "head", -1.25, 0.52, 0.0},
      {"cheek.L", "head", 0.92, 0.12, 0.0},
      {"cheek.R", "head", -0.92, 0.12, 0.0},
      {"chin_low", "head", 0.00, -0.99, 0.0},
      {"chin_side_low.L", "head", 0.33, -0.94, 0.0},
      {"chin_side_low.R", "head", -0.33, -0.94, 0.0},
      {"eyebrow_center_up", "head", 0.00, 0.70, 0.0},
      {"forehead.L", "head", 0.58, 0.90, 0.0},
      {"forehead.R", "head", -0.58, 0.90, 0.0},
      {"neck_front", "root", 0.00, -1.08, 0.0},
      {"neck_side.L", "root", 0.64, -0.96, 0.0},
      {"neck_side.R", "root", -0.64, -0.96, 0.0},
  };
  return specs;
}

// (lam, beta) anchors for the 68 landmark annotation, jaw arc first, then
// brows, nose, eyes and mouth.
inline std::vector<Vec2> landmark_anchors() {
  std::vector<Vec2> a;
  // 17 jaw points, left side down around the chin and up to the right
  for (int i = 0; i < 17; ++i) {
    const double t = i / 16.0;
    const double lam = 0.95 * std::cos(t * 3.14159265358979);
    const double beta = -0.30 - 0.62 * std::sin(t * 3.14159265358979);
    a.emplace_back(lam, beta);
  }
  // 5 + 5 brows
  for (int i = 0; i < 5; ++i) a.emplace_back(0.18 + 0.095 * i, 0.44 + (i == 2 ? 0.05 : 0.02 * i));
  for (int i = 0; i < 5; ++i) a.emplace_back(-0.18 - 0.095 * i, 0.44 + (i == 2 ? 0.05 : 0.02 * i));
  // 4 nose bridge + 5 nose base
  for (int i = 0; i < 4; ++i) a.emplace_back(0.0, 0.26 - 0.12 * i);
  a.emplace_back(0.10, -0.175);
  a.emplace_back(0.05, -0.195);
  a.emplace_back(0.0, -0.205);
  a.emplace_back(-0.05, -0.195);
  a.emplace_back(-0.10, -0.175);
  // 6 + 6 eyes
  const double ec = 0.26;
  for (double side : {1.0, -1.0}) {
    a.emplace_back(side * 0.19, ec);
    a.emplace_back(side * 0.29, ec + 0.055);
    a.emplace_back(side * 0.42, ec + 0.055);
    a.emplace_back(side * 0.54, ec);
    a.emplace_back(side * 0.42, ec - 0.05);
    a.emplace_back(side * 0.29, ec - 0.05);
  }
  // 12 outer mouth + 8 inner mouth
  const double mc = -0.46;
  a.emplace_back(0.29, mc);
  a.emplace_back(0.17, mc + 0.05);
  a.emplace_back(0.07, mc + 0.07);
  a.emplace_back(0.0, mc + 0.065);
  a.emplace_back(-0.07, mc + 0.07);
  a.emplace_back(-0.17, mc + 0.05);
  a.emplace_back(-0.29, mc);
  a.emplace_back(-0.17, mc - 0.06);
  a.emplace_back(-0.07, mc - 0.075);
  a.emplace_back(0.0, mc - 0.075);
  a.emplace_back(0.07, mc - 0.075);
  a.emplace_back(0.17, mc - 0.06);
  a.emplace_back(0.20, mc + 0.015);
  a.emplace_back(0.07, mc + 0.03);
  a.emplace_back(0.0, mc + 0.03);
  a.emplace_back(-0.07, mc + 0.03);
  a.emplace_back(-0.20, mc + 0.015);
  a.emplace_back(-0.07, mc - 0.03);
  a.emplace_back(0.0, mc - 0.03);
  a.emplace_back(0.07, mc - 0.03);
  return a;
}

}  // namespace demo

// Builds the demo head at the given angular grid resolution. Vertices lie on
// the oval-masked patch; uv is the normalized angle grid.
inline DemoHead make_demo_head(int n_lambda = 64, int n_beta = 56) {
  using namespace demo;
  DemoHead head;
  Mesh& mesh = head.mesh;

  std::vector<std::vector<int>> index(n_lambda, std::vector<int>(n_beta, -1));
  std::vector<Vec2> angles;
  for (int i = 0; i < n_lambda; ++i) {
    const double lam = -kLambdaMax + 2.0 * kLambdaMax * i / (n_lambda - 1);
    for (int j = 0; j < n_beta; ++j) {
      const double beta = -kBetaMax + 2.0 * kBetaMax * j / (n_beta - 1);
      if (!inside_oval(lam, beta)) continue;
      index[i][j] = mesh.vertex_count();
      mesh.vertices.push_back(surface_point(lam, beta));
      mesh.uv.emplace_back((lam + kLambdaMax) / (2.0 * kLambdaMax),
                           (beta + kBetaMax) / (2.0 * kBetaMax));
      angles.emplace_back(lam, beta);
    }
  }
  for (int i = 0; i + 1 < n_lambda; ++i) {
    for (int j = 0; j + 1 < n_beta; ++j) {
      const int v00 = index[i][j], v10 = index[i + 1][j];
      const int v11 = index[i + 1][j + 1], v01 = index[i][j + 1];
      if (v00 < 0 || v10 < 0 || v11 < 0 || v01 < 0) continue;
      mesh.faces.push_back({v00, v10, v11});
      mesh.faces.push_back({v00, v11, v01});
    }
  }
  mesh.validate();

  auto nearest_to_angles = [&](double lam, double beta) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < angles.size(); ++v) {
      const double d = (angles[v] - Vec2(lam, beta)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(v);
      }
    }
    return best;
  };

  Skeleton& skel = head.skeleton;
  for (const BoneSpec& spec : bone_specs()) {
    Bone b;
    b.name = spec.name;
    b.parent = -1;
    if (spec.parent[0] != '\0') {
      for (int k = 0; k < skel.bone_count(); ++k)
        if (skel.bones[k].name == spec.parent) b.parent = k;
      if (b.parent < 0) fail("demo skeleton: parent not yet defined: " + std::string(spec.parent));
    }
    b.psi0 = surface_point(spec.lam, spec.beta) - spec.inset * base_normal(spec.lam, spec.beta);
    skel.bones.push_back(b);
  }
  skel.validate();
  skel.bind_proxies(mesh);

  const auto anchors = landmark_anchors();
  head.landmarks68.reserve(anchors.size());
  for (const Vec2& a : anchors) head.landmarks68.push_back(nearest_to_angles(a.x(), a.y()));

  head.keypoints7 = {nearest_to_angles(0.54, 0.26),  nearest_to_angles(0.19, 0.26),
                     nearest_to_angles(-0.19, 0.26), nearest_to_angles(-0.54, 0.26),
                     nearest_to_angles(0.0, -0.12),  nearest_to_angles(0.29, -0.46),
                     nearest_to_angles(-0.29, -0.46)};
  return head;
}

// Smooth nonconstant per-vertex intensity for synthetic photometric tests.
// Frequencies sit a little above the patch scale of the uv-space correlation
// window, so 3x3 patches carry real variance, while staying resolvable by
// the template triangles.
inline std::function<double(const Vec3&)> texture_field(std::uint64_t seed) {
  Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
  const double p1 = rng.uniform(0.0, 6.28), p2 = rng.uniform(0.0, 6.28), p3 = rng.uniform(0.0, 6.28);
  const double p4 = rng.uniform(0.0, 6.28);
  return [=](const Vec3& p) {
    double c = 0.52;
    c += 0.10 * std::sin(5.3 * p.x() + p1) * std::cos(4.1 * p.y() - 0.55);
    c += 0.16 * std::sin(17.5 * p.x() + 6.2 * p.y() + p2);
    c += 0.14 * std::cos(7.9 * p.x() - 18.3 * p.y() + 5.1 * p.z() + p3);
    c += 0.10 * std::sin(13.1 * (p.x() + p.y()) - 9.7 * p.z() + p4);
    return std::clamp(c, 0.06, 0.96);
  };
}

inline std::vector<double> procedural_texture(const Mesh& mesh, std::uint64_t seed) {
  const auto field = texture_field(seed);
  std::vector<double> tex(mesh.vertices.size());
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) tex[v] = field(mesh.vertices[v]);
  return tex;
}

}  // namespace askin
