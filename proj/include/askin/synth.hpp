// Seeded synthetic test data: ground-truth parameter draws, surface-sampled
// scans with keypoints, and rendered multi-view cases with exact landmarks,
// contours and poses. Everything is deterministic in the seed.
#pragma once

#include <vector>

#include "askin/demo_assets.hpp"
#include "askin/multiview.hpp"
#include "askin/registration.hpp"

namespace askin {

// Per-group jitter bounds for a ground-truth draw, as fractions the
// magnitude scales. Translations stay within 0.05 * bbox diagonal and
// rotations within 0.2 rad at any magnitude <= 1.
struct DrawProfile {
  double zeta = 0.012;
  double mu = 0.006;
  double logit = 0.2;
  double chol_diag = 0.12;
  double chol_off = 0.004;
  Vec3 translation_bbox = Vec3(0.018, 0.018, 0.018);  // times bbox diagonal, per axis
  double rotation = 0.12;
  double scale = 0.02;

  // Deformations for the multi-view protocol: reachable by Adam at lr 1e-4
  // in 500 steps (about 0.05 per coordinate) and dominated by depth changes,
  // the component multi-view photometric consistency actually observes.
  static DrawProfile gentle() {
    DrawProfile p;
    p.zeta = 0.002;
    p.mu = 0.001;
    p.logit = 0.04;
    p.chol_diag = 0.03;
    p.chol_off = 0.001;
    p.translation_bbox = Vec3(0.002, 0.002, 0.016);
    p.rotation = 0.015;
    p.scale = 0.006;
    return p;
  }
};

// Bounded random parameter draw around the neutral model. A draw that leaves
// some vertex uncovered is retried with half the magnitude, at most ten
// times.
inline AsmParams draw_bounded_params(const Mesh& mesh, const Skeleton& skeleton, int K,
                                     std::uint64_t seed, double magnitude = 1.0,
                                     const DrawProfile& profile = {}) {
  const double bbox = mesh.bbox_diagonal();
  for (int attempt = 0; attempt < 10; ++attempt) {
    Rng rng(seed * 1000003 + attempt);
    const double mag = magnitude * std::pow(0.5, attempt);
    AsmParams p = AsmParams::neutral(mesh, skeleton, K);
    for (int j = 0; j < p.bone_count(); ++j) {
      p.gmm[j].zeta += mag * profile.zeta * Vec2(rng.uniform(-1, 1), rng.uniform(-1, 1));
      for (int k = 0; k < K; ++k) {
        p.gmm[j].mu[k] += mag * profile.mu * Vec2(rng.uniform(-1, 1), rng.uniform(-1, 1));
        p.gmm[j].log_pi[k] += mag * profile.logit * rng.uniform(-1, 1);
        p.gmm[j].chol[k][0] += mag * profile.chol_diag * rng.uniform(-1, 1);
        p.gmm[j].chol[k][1] += mag * profile.chol_off * rng.uniform(-1, 1);
        p.gmm[j].chol[k][2] += mag * profile.chol_diag * rng.uniform(-1, 1);
      }
      p.tau[j].head<3>() += mag * bbox *
                            Vec3(profile.translation_bbox.x() * rng.uniform(-1, 1),
                                 profile.translation_bbox.y() * rng.uniform(-1, 1),
                                 profile.translation_bbox.z() * rng.uniform(-1, 1));
      p.tau[j].segment<3>(3) +=
          mag * profile.rotation * Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
      p.tau[j].tail<3>() +=
          mag * profile.scale * Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    }
    try {
      (void)normalized_weights(mesh, p.gmm);
      return p;
    } catch (const Error&) {
      // retry at reduced magnitude
    }
  }
  fail("draw_bounded_params: could not draw a covered configuration in 10 attempts");
}

struct SynthScanCase {
  AsmParams gt_params;
  RigidPose gt_pose;  // model space -> scan space
  Scan scan;
  std::vector<Vec3> gt_vertices;  // deformed template, model space
};

inline SynthScanCase synth_scan_case(const DemoHead& head, int K, std::uint64_t seed,
                                     double magnitude = 1.0, int n_points = 1200) {
  SynthScanCase out;
  out.gt_params = draw_bounded_params(head.mesh, head.skeleton, K, seed, magnitude);
  Rng rng(seed ^ 0x5bf0fe3ull);
  out.gt_pose.rotation = euler_xyz_to_matrix(
      Vec3(rng.uniform(-0.25, 0.25), rng.uniform(-0.25, 0.25), rng.uniform(-0.25, 0.25)));
  out.gt_pose.translation =
      Vec3(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
  out.gt_pose.scale = magnitude == 0.0 ? 1.0 : rng.uniform(0.85, 1.2);
  if (magnitude == 0.0) {
    out.gt_pose.rotation = Mat3::Identity();
    out.gt_pose.translation = Vec3::Zero();
  }

  const DeformedMesh deformed = asm_forward(head.mesh, head.skeleton, out.gt_params);
  out.gt_vertices = deformed.vertices;
  out.scan.points.reserve(n_points);
  for (int i = 0; i < n_points; ++i) {
    const auto& tri = head.mesh.faces[rng.uniform_int(0, head.mesh.face_count() - 1)];
    double a = rng.uniform(), b = rng.uniform();
    if (a + b > 1.0) {
      a = 1.0 - a;
      b = 1.0 - b;
    }
    const Vec3 p = deformed.vertices[tri[0]] + a * (deformed.vertices[tri[1]] - deformed.vertices[tri[0]]) +
                   b * (deformed.vertices[tri[2]] - deformed.vertices[tri[0]]);
    out.scan.points.push_back(out.gt_pose.apply(p));
  }
  for (int k = 0; k < 7; ++k)
    out.scan.keypoints7[k] = out.gt_pose.apply(deformed.vertices[head.keypoints7[k]]);
  return out;
}

struct SynthViewsCase {
  AsmParams gt_params;
  std::vector<CameraView> views;  // rendered images, exact landmarks/contours, true poses
  std::vector<double> texture;    // per-vertex intensity on the template
  std::vector<Vec3> gt_vertices;
};

// Cameras on a horizontal arc around the deformed head, all aimed at its
// centroid. Landmarks are exact projections of the annotated vertices;
// contours come from the same extraction the energies use.
inline SynthViewsCase synth_views_case(const DemoHead& head, int K, std::uint64_t seed,
                                       double magnitude, int n_views, int image_res,
                                       double theta_deg = 10.0, double zbuffer_bias = 0.02,
                                       double yaw_span = 0.6) {
  if (n_views < 2) fail("synth_views_case: need at least 2 views");
  SynthViewsCase out;
  out.gt_params =
      draw_bounded_params(head.mesh, head.skeleton, K, seed, magnitude, DrawProfile::gentle());
  const auto field = texture_field(seed);
  out.texture = procedural_texture(head.mesh, seed);
  const DeformedMesh deformed = asm_forward(head.mesh, head.skeleton, out.gt_params);
  out.gt_vertices = deformed.vertices;

  Vec3 center = Vec3::Zero();
  for (const Vec3& v : deformed.vertices) center += v;
  center /= static_cast<double>(deformed.vertices.size());

  Rng rng(seed ^ 0xc0ffee11ull);
  const double radius = 3.4;
  for (int n = 0; n < n_views; ++n) {
    CameraView view;
    const double yaw = n_views == 1 ? 0.0 : yaw_span * (-0.5 + static_cast<double>(n) / (n_views - 1));
    const double elev = 0.08 * ((n % 3) - 1);
    const Vec3 eye = center + radius * Vec3(std::sin(yaw) * std::cos(elev), std::sin(elev),
                                            std::cos(yaw) * std::cos(elev));
    look_at(view, eye, center);
    view.focal = 1.05 * image_res;
    view.principal = Vec2(image_res / 2.0, image_res / 2.0);

    // shade fragments from the continuous texture field so that sampling
    // the image at a projected vertex recovers the vertex's texture value
    // up to bilinear error
    const RasterResult raster =
        rasterize_field(deformed.vertices, head.mesh.faces, field, view, image_res, image_res);
    view.image = raster.color;

    for (int lm : head.landmarks68) view.landmarks68.push_back(project(deformed.vertices[lm], view));
    // face contour: the boundary of the rendered face region, standing in
    // for a segmentation network's outline (dense and closed)
    for (int r = 0; r < image_res; ++r)
      for (int c = 0; c < image_res; ++c) {
        if (!std::isfinite(raster.depth(r, c))) continue;
        const bool border =
            r == 0 || r + 1 == image_res || c == 0 || c + 1 == image_res ||
            !std::isfinite(raster.depth(r - 1, c)) || !std::isfinite(raster.depth(r + 1, c)) ||
            !std::isfinite(raster.depth(r, c - 1)) || !std::isfinite(raster.depth(r, c + 1));
        if (border) view.contour.emplace_back(c + 0.5, r + 0.5);
      }
    if (view.contour.empty()) fail("synth_views_case: empty face boundary");
    out.views.push_back(std::move(view));
  }
  (void)rng;
  return out;
}

}  // namespace askin
