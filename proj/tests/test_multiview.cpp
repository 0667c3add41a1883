#include <gtest/gtest.h>

#include "askin/multiview.hpp"
#include "askin/synth.hpp"

#include "gradcheck.hpp"
#include "helpers.hpp"

using namespace askin;
using askin::testing::demo_head;

namespace {

UvIntensityMap full_map(const Eigen::MatrixXd& vals) {
  UvIntensityMap m;
  m.intensity = vals;
  m.mask.setOnes(vals.rows(), vals.cols());
  return m;
}

Eigen::MatrixXd random_grid(int n, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd g(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) g(r, c) = rng.uniform(0.0, 1.0);
  return g;
}

// naive per-patch reference
double lncc_naive(const UvIntensityMap& a, const UvIntensityMap& b) {
  const int res = static_cast<int>(a.intensity.rows());
  double sum = 0.0;
  int count = 0;
  for (int r = 1; r + 1 < res; ++r)
    for (int c = 1; c + 1 < res; ++c) {
      bool ok = true;
      std::vector<double> pa, pb;
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          if (!a.mask(r + dr, c + dc) || !b.mask(r + dr, c + dc)) ok = false;
          pa.push_back(a.intensity(r + dr, c + dc));
          pb.push_back(b.intensity(r + dr, c + dc));
        }
      if (!ok) continue;
      double ma = 0, mb = 0;
      for (int i = 0; i < 9; ++i) {
        ma += pa[i];
        mb += pb[i];
      }
      ma /= 9;
      mb /= 9;
      double cov = 0, va = 0, vb = 0;
      for (int i = 0; i < 9; ++i) {
        cov += (pa[i] - ma) * (pb[i] - mb);
        va += (pa[i] - ma) * (pa[i] - ma);
        vb += (pb[i] - mb) * (pb[i] - mb);
      }
      ++count;
      if (va > 1e-30 && vb > 1e-30) sum += cov / std::sqrt(va * vb);
    }
  return count ? sum / count : 0.0;
}

struct MvFixture {
  const DemoHead& head;
  SynthViewsCase synth;
  AsmContext ctx;
  MvConfig cfg;
  MvProblem prob;
  Eigen::VectorXd x0;

  explicit MvFixture(int n_views = 3, std::uint64_t seed = 11, double mag = 0.8, int res = 80,
                     int uv_res = 64)
      : head(demo_head()),
        synth(synth_views_case(head, 2, seed, mag, n_views, res)),
        ctx(head.mesh, head.skeleton, 1),
        cfg(make_cfg(uv_res)),
        prob(ctx, synth.views, head.landmarks68, cfg) {
    prob.set_K(2);
    const AsmParams neutral = AsmParams::neutral(head.mesh, head.skeleton, 2);
    x0.resize(prob.layout.total_dims());
    x0.head(prob.layout.model_dims()) = neutral.pack();
    for (int n = 0; n < n_views; ++n)
      x0.segment<6>(prob.layout.pose_offset() + 6 * n) = cam_pose_to_vector(synth.views[n]);
  }

  static MvConfig make_cfg(int uv_res) {
    MvConfig cfg;
    cfg.uv_resolution = uv_res;
    return cfg;
  }
};

}  // namespace

TEST(Chamfer, IdenticalSetsZero) {
  std::vector<Vec2> a = {{0, 0}, {1, 2}, {3, 1}};
  EXPECT_EQ(chamfer(a, a), 0.0);
}

TEST(Chamfer, SinglePairDistance) {
  EXPECT_NEAR(chamfer({Vec2(0, 0)}, {Vec2(1, 0)}), 1.0, 1e-15);
}

TEST(Chamfer, MatchesBruteForceAndIsSymmetric) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Vec2> a, b;
    for (int i = 0; i < rng.uniform_int(1, 40); ++i)
      a.emplace_back(rng.uniform(-2, 2), rng.uniform(-2, 2));
    for (int i = 0; i < rng.uniform_int(1, 40); ++i)
      b.emplace_back(rng.uniform(-2, 2), rng.uniform(-2, 2));
    // independent accumulation order
    double sa = 0;
    for (const auto& p : a) {
      double best = 1e300;
      for (const auto& q : b) best = std::min(best, (p - q).squaredNorm());
      sa += best;
    }
    double sb = 0;
    for (const auto& q : b) {
      double best = 1e300;
      for (const auto& p : a) best = std::min(best, (p - q).squaredNorm());
      sb += best;
    }
    const double oracle = 0.5 * (sa / a.size() + sb / b.size());
    EXPECT_NEAR(chamfer(a, b), oracle, 1e-12);
    EXPECT_NEAR(chamfer(a, b), chamfer(b, a), 1e-12);
  }
}

TEST(Chamfer, EmptySetThrows) {
  EXPECT_THROW(chamfer({}, {Vec2(0, 0)}), Error);
}

TEST(ModelContour, SphereSilhouetteBand) {
  // front view of a sphere: selected vertices sit near the great circle
  // perpendicular to the view axis
  Mesh sphere;
  const int nlat = 32, nlon = 64;
  for (int i = 0; i <= nlat; ++i) {
    const double phi = 3.14159265358979 * i / nlat;
    for (int j = 0; j <= nlon; ++j) {
      const double theta = 2.0 * 3.14159265358979 * j / nlon;
      sphere.vertices.emplace_back(std::sin(phi) * std::sin(theta), std::cos(phi),
                                   std::sin(phi) * std::cos(theta));
      sphere.uv.emplace_back(static_cast<double>(j) / nlon, static_cast<double>(i) / nlat);
    }
  }
  auto at = [nlon](int i, int j) { return i * (nlon + 1) + j; };
  for (int i = 0; i < nlat; ++i)
    for (int j = 0; j < nlon; ++j) {
      sphere.faces.push_back({at(i, j), at(i + 1, j), at(i + 1, j + 1)});
      sphere.faces.push_back({at(i, j), at(i + 1, j + 1), at(i, j + 1)});
    }
  CameraView v;
  v.image.pixels = Eigen::MatrixXd::Zero(256, 256);
  look_at(v, Vec3(0, 0, 6), Vec3(0, 0, 0));
  v.focal = 600;
  v.principal = Vec2(128, 128);
  const std::vector<bool> all_visible(sphere.vertices.size(), true);
  const ModelContour contour =
      extract_model_contour(sphere.vertices, sphere.faces, v, 10.0, all_visible);
  EXPECT_GT(contour.vertices.size(), 20u);
  for (int idx : contour.vertices) {
    // |n_z(camera)| < sin(10 deg) means within 10 degrees of the silhouette
    // great circle z = 0 for an origin-centered sphere viewed along z
    EXPECT_LT(std::abs(sphere.vertices[idx].z()), std::sin(10.0 * 3.14159265 / 180.0) + 1e-6);
  }
}

TEST(ModelContour, FlatPlaneHasNoSilhouette) {
  Mesh plane;
  plane.vertices = {Vec3(-1, -1, 5), Vec3(1, -1, 5), Vec3(1, 1, 5), Vec3(-1, 1, 5)};
  plane.uv = {Vec2(0, 0), Vec2(1, 0), Vec2(1, 1), Vec2(0, 1)};
  plane.faces = {{0, 1, 2}, {0, 2, 3}};
  CameraView v;
  v.image.pixels = Eigen::MatrixXd::Zero(64, 64);
  v.focal = 100;
  v.principal = Vec2(32, 32);
  const std::vector<bool> all_visible(4, true);
  EXPECT_THROW(extract_model_contour(plane.vertices, plane.faces, v, 10.0, all_visible), Error);
  try {
    extract_model_contour(plane.vertices, plane.faces, v, 10.0, all_visible);
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("no-silhouette"), std::string::npos);
  }
}

TEST(ModelContour, NinetyDegreesSelectsAllVisible) {
  const DemoHead& head = demo_head();
  CameraView v;
  v.image.pixels = Eigen::MatrixXd::Zero(96, 96);
  look_at(v, Vec3(0, 0, 3.4), Vec3(0, 0, 0.2));
  v.focal = 96;
  v.principal = Vec2(48, 48);
  const auto vis =
      zbuffer_visibility(head.mesh.vertices, head.mesh.faces, v, 96, 96);
  const ModelContour contour =
      extract_model_contour(head.mesh.vertices, head.mesh.faces, v, 90.0, vis);
  std::size_t visible_count = 0;
  for (bool b : vis) visible_count += b;
  EXPECT_EQ(contour.vertices.size(), visible_count);
}

TEST(Lncc, SelfCorrelationIsOne) {
  const UvIntensityMap a = full_map(random_grid(24, 5));
  EXPECT_NEAR(lncc(a, a), 1.0, 1e-9);
}

TEST(Lncc, NegatedIsMinusOne) {
  const UvIntensityMap a = full_map(random_grid(24, 7));
  UvIntensityMap b = a;
  b.intensity = Eigen::MatrixXd::Ones(24, 24) - a.intensity;
  EXPECT_NEAR(lncc(a, b), -1.0, 1e-9);
}

TEST(Lncc, MatchesNaiveReference) {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    UvIntensityMap a = full_map(random_grid(20, 100 + trial));
    UvIntensityMap b = full_map(random_grid(20, 200 + trial));
    // random masking
    for (int r = 0; r < 20; ++r)
      for (int c = 0; c < 20; ++c) {
        if (rng.uniform() < 0.1) a.mask(r, c) = 0;
        if (rng.uniform() < 0.1) b.mask(r, c) = 0;
      }
    EXPECT_NEAR(lncc(a, b), lncc_naive(a, b), 1e-9);
  }
}

TEST(Lncc, ZeroVarianceContributesZero) {
  UvIntensityMap a = full_map(Eigen::MatrixXd::Constant(10, 10, 0.5));
  UvIntensityMap b = full_map(random_grid(10, 3));
  EXPECT_EQ(lncc(a, b), 0.0);
}

TEST(Lncc, NoOverlapThrows) {
  UvIntensityMap a = full_map(random_grid(10, 3));
  UvIntensityMap b = a;
  b.mask.setZero(10, 10);
  try {
    lncc(a, b);
    FAIL() << "expected no-overlap";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("no-overlap"), std::string::npos);
  }
}

TEST(Lncc, BackwardMatchesFiniteDifferences) {
  Rng rng(21);
  UvIntensityMap a = full_map(random_grid(12, 31));
  UvIntensityMap b = full_map(random_grid(12, 32));
  for (int r = 0; r < 12; ++r)
    for (int c = 0; c < 12; ++c)
      if (rng.uniform() < 0.08) a.mask(r, c) = 0;
  const auto w = detail::lncc_windows(a, b);
  Eigen::MatrixXd abar = Eigen::MatrixXd::Zero(12, 12), bbar = Eigen::MatrixXd::Zero(12, 12);
  lncc_backward(a, b, w, 1.0, abar, bbar);
  const double h = 1e-6;
  for (int trial = 0; trial < 60; ++trial) {
    const int r = rng.uniform_int(0, 11), c = rng.uniform_int(0, 11);
    if (!a.mask(r, c) || !b.mask(r, c)) continue;
    UvIntensityMap ap = a, am = a;
    ap.intensity(r, c) += h;
    am.intensity(r, c) -= h;
    const double fd_a = (lncc(ap, b) - lncc(am, b)) / (2 * h);
    EXPECT_NEAR(abar(r, c), fd_a, 1e-5 * std::max(1.0, std::abs(fd_a)));
    UvIntensityMap bp = b, bm = b;
    bp.intensity(r, c) += h;
    bm.intensity(r, c) -= h;
    const double fd_b = (lncc(a, bp) - lncc(a, bm)) / (2 * h);
    EXPECT_NEAR(bbar(r, c), fd_b, 1e-5 * std::max(1.0, std::abs(fd_b)));
  }
}

TEST(Unwrap, ConstantImageFillsUnmaskedTexels) {
  const DemoHead& head = demo_head();
  CameraView v;
  v.image.pixels = Eigen::MatrixXd::Constant(96, 96, 0.42);
  look_at(v, Vec3(0, 0, 3.4), Vec3(0, 0, 0.2));
  v.focal = 96;
  v.principal = Vec2(48, 48);
  DeformedMesh d;
  d.base = &head.mesh;
  d.vertices = head.mesh.vertices;
  const UvIntensityMap map = unwrap_intensities(d, v, 48);
  int unmasked = 0;
  for (int r = 0; r < 48; ++r)
    for (int c = 0; c < 48; ++c)
      if (map.mask(r, c)) {
        ++unmasked;
        EXPECT_NEAR(map.intensity(r, c), 0.42, 1e-12);
      }
  EXPECT_GT(unmasked, 500);
}

TEST(Unwrap, PixelCenterSamplesExactly) {
  Image img;
  img.pixels = random_grid(8, 77);
  // sample positions at pixel centers reproduce the stored values
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c)
      EXPECT_EQ(bilinear_sample(img, Vec2(c + 0.5, r + 0.5)), img.pixels(r, c));
}

TEST(Unwrap, LinearRampReproduced) {
  // planar mesh, ramp image: the uv map reproduces the ramp up to bilinear
  // interpolation error
  Mesh plane;
  const int n = 16;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      plane.vertices.emplace_back(-1.0 + 2.0 * j / (n - 1), -1.0 + 2.0 * i / (n - 1), 5.0);
      plane.uv.emplace_back(static_cast<double>(j) / (n - 1), static_cast<double>(i) / (n - 1));
    }
  auto at = [n](int i, int j) { return i * n + j; };
  for (int i = 0; i + 1 < n; ++i)
    for (int j = 0; j + 1 < n; ++j) {
      plane.faces.push_back({at(i, j), at(i, j + 1), at(i + 1, j + 1)});
      plane.faces.push_back({at(i, j), at(i + 1, j + 1), at(i + 1, j)});
    }
  CameraView v;
  const int res = 64;
  v.image.pixels.resize(res, res);
  for (int r = 0; r < res; ++r)
    for (int c = 0; c < res; ++c) v.image.pixels(r, c) = static_cast<double>(c) / (res - 1);
  v.focal = 100;
  v.principal = Vec2(res / 2.0, res / 2.0);
  DeformedMesh d;
  d.base = &plane;
  d.vertices = plane.vertices;
  const UvIntensityMap map = unwrap_intensities(d, v, 32);
  // analytic: pixel x of uv (u, v*) is principal + f * (-1 + 2u) / 5
  for (int r = 0; r < 32; ++r)
    for (int c = 0; c < 32; ++c) {
      if (!map.mask(r, c)) continue;
      const double u = (c + 0.5) / 32.0;
      const double px = 32.0 + 100.0 * (-1.0 + 2.0 * u) / 5.0;
      const double expect = std::clamp((px - 0.5) / (res - 1), 0.0, 1.0);
      EXPECT_NEAR(map.intensity(r, c), expect, 1.0 / 255.0);
    }
}

TEST(LandmarkEnergyOp, ExactProjectionsGiveZero) {
  MvFixture fx(3, 31, 0.7);
  // ground truth params and true poses: landmarks were emitted as exact
  // projections, so the energy is numerically zero
  Eigen::VectorXd x_gt = fx.x0;
  x_gt.head(fx.prob.layout.model_dims()) = fx.synth.gt_params.pack();
  const MvFrozen frozen = fx.prob.freeze(x_gt);
  const LandmarkEnergy lmk(fx.prob, frozen);
  EXPECT_NEAR(lmk.value(x_gt), 0.0, 1e-18);
}

TEST(LandmarkEnergyOp, SingleOffsetLandmark) {
  MvFixture fx(2, 33, 0.0);
  Eigen::VectorXd x_gt = fx.x0;
  x_gt.head(fx.prob.layout.model_dims()) = fx.synth.gt_params.pack();
  // displace one landmark in one view by (3, 4): squared norm 25, averaged
  // over views and landmarks
  auto views = fx.synth.views;
  views[0].landmarks68[10] += Vec2(3, 4);
  MvProblem prob(fx.ctx, views, fx.head.landmarks68, fx.cfg);
  prob.set_K(2);
  const MvFrozen frozen = prob.freeze(x_gt);
  const LandmarkEnergy lmk(prob, frozen);
  EXPECT_NEAR(lmk.value(x_gt), 25.0 / (2.0 * 68.0), 1e-9);
}

TEST(LandmarkEnergyOp, MatchesPerTermSummationOracle) {
  MvFixture fx(3, 35, 0.6);
  const MvFrozen frozen = fx.prob.freeze(fx.x0);
  const LandmarkEnergy lmk(fx.prob, frozen);
  const double fast = lmk.value(fx.x0);
  // direct oracle over the spec formula
  const AsmParams params = fx.prob.params_of(fx.x0);
  const DeformedMesh d = asm_forward(fx.head.mesh, fx.head.skeleton, params);
  double sum = 0.0;
  for (std::size_t n = 0; n < fx.synth.views.size(); ++n)
    for (std::size_t k = 0; k < fx.head.landmarks68.size(); ++k) {
      const Vec2 p = project(d.vertices[fx.head.landmarks68[k]], fx.synth.views[n]);
      sum += (fx.synth.views[n].landmarks68[k] - p).squaredNorm();
    }
  EXPECT_NEAR(fast, sum / (fx.synth.views.size() * 68.0), 1e-9);
}

TEST(PhotometricEnergyOp, IdenticalViewsGiveZero) {
  // identical views render identical uv maps, so every pairwise lncc is 1
  MvFixture fx(2, 41, 0.5);
  Eigen::VectorXd x_gt = fx.x0;
  x_gt.head(fx.prob.layout.model_dims()) = fx.synth.gt_params.pack();
  std::vector<CameraView> views = {fx.synth.views[0], fx.synth.views[0], fx.synth.views[0]};
  MvProblem prob(fx.ctx, views, fx.head.landmarks68, fx.cfg);
  prob.set_K(2);
  Eigen::VectorXd x(prob.layout.total_dims());
  x.head(prob.layout.model_dims()) = x_gt.head(prob.layout.model_dims());
  for (int n = 0; n < 3; ++n)
    x.segment<6>(prob.layout.pose_offset() + 6 * n) = cam_pose_to_vector(views[n]);
  const MvFrozen frozen = prob.freeze(x);
  const PhotometricEnergy pc(prob, frozen);
  EXPECT_NEAR(pc.value(x), 0.0, 1e-12);

  // at ground truth with distinct views the energy stays a small raster
  // noise floor
  const MvFrozen frozen_gt = fx.prob.freeze(x_gt);
  const PhotometricEnergy pc_gt(fx.prob, frozen_gt);
  const double e = pc_gt.value(x_gt);
  EXPECT_GE(e, 0.0);
  EXPECT_LT(e, 0.3);
}

TEST(PhotometricEnergyOp, InvertedPairGivesTwo) {
  MvFixture fx(2, 43, 0.0, 96, 48);
  Eigen::VectorXd x_gt = fx.x0;
  x_gt.head(fx.prob.layout.model_dims()) = fx.synth.gt_params.pack();
  auto views = fx.synth.views;
  views[1] = views[0];  // identical view, then invert its image
  views[1].image.pixels = Eigen::MatrixXd::Ones(views[0].image.height(), views[0].image.width()) -
                          views[0].image.pixels;
  MvProblem prob(fx.ctx, views, fx.head.landmarks68, fx.cfg);
  prob.set_K(2);
  Eigen::VectorXd x(prob.layout.total_dims());
  x.head(prob.layout.model_dims()) = x_gt.head(prob.layout.model_dims());
  for (int n = 0; n < 2; ++n)
    x.segment<6>(prob.layout.pose_offset() + 6 * n) = cam_pose_to_vector(views[n]);
  const MvFrozen frozen = prob.freeze(x);
  const PhotometricEnergy pc(prob, frozen);
  EXPECT_NEAR(pc.value(x), 2.0, 0.02);
}

TEST(PhotometricEnergyOp, ThreeViewPairAverageOracle) {
  MvFixture fx(3, 45, 0.5, 80, 48);
  const MvFrozen frozen = fx.prob.freeze(fx.x0);
  const PhotometricEnergy pc(fx.prob, frozen);
  const double fast = pc.value(fx.x0);
  // oracle: build the three uv maps directly and average the pairs
  const MvEvalState st = detail::mv_forward(fx.prob, frozen, fx.x0, true);
  double sum = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j) sum += 1.0 - lncc(st.maps[i], st.maps[j]);
  EXPECT_NEAR(fast, sum * 2.0 / 6.0, 1e-12);
}

TEST(TotalEnergyOp, WeightedSumAndDefaults) {
  const MvConfig cfg;
  EXPECT_EQ(cfg.lambda1, 0.001);
  EXPECT_EQ(cfg.lambda2, 0.4);
  EXPECT_EQ(cfg.lambda3, 100.0);
  EXPECT_EQ(cfg.lambda4, 1.0);
  EXPECT_EQ(cfg.theta_deg, 10.0);
  EXPECT_EQ(cfg.lr, 1e-4);
  EXPECT_EQ(cfg.iterations, 500);
  // unit component energies combine to 101.401
  EXPECT_NEAR(cfg.lambda1 * 1 + cfg.lambda2 * 1 + cfg.lambda3 * 1 + cfg.lambda4 * 1, 101.401, 1e-12);

  MvFixture fx(2, 47, 0.5, 72, 40);
  const MvFrozen frozen = fx.prob.freeze(fx.x0);
  const AsmParams init = fx.prob.params_of(fx.x0);
  const TotalEnergy total(fx.prob, frozen, init);
  const LandmarkEnergy lmk(fx.prob, frozen);
  const EdgeEnergy edge(fx.prob, frozen);
  const PhotometricEnergy pc(fx.prob, frozen);
  const RegEnergy reg(init, fx.cfg.reg, fx.prob.layout.pose_dims);
  const double direct = fx.cfg.lambda1 * lmk.value(fx.x0) + fx.cfg.lambda2 * edge.value(fx.x0) +
                        fx.cfg.lambda3 * pc.value(fx.x0) + fx.cfg.lambda4 * reg.value(fx.x0);
  EXPECT_NEAR(total.value(fx.x0), direct, 1e-10);

  // fused gradient equals the weighted sum of term gradients
  Eigen::VectorXd g_total = Eigen::VectorXd::Zero(fx.x0.size());
  total.value_and_grad(fx.x0, g_total);
  Eigen::VectorXd g_sum = Eigen::VectorXd::Zero(fx.x0.size());
  Eigen::VectorXd part = Eigen::VectorXd::Zero(fx.x0.size());
  lmk.value_and_grad(fx.x0, part);
  g_sum += fx.cfg.lambda1 * part;
  part.setZero();
  edge.value_and_grad(fx.x0, part);
  g_sum += fx.cfg.lambda2 * part;
  part.setZero();
  pc.value_and_grad(fx.x0, part);
  g_sum += fx.cfg.lambda3 * part;
  part.setZero();
  reg.value_and_grad(fx.x0, part);
  g_sum += fx.cfg.lambda4 * part;
  EXPECT_LT((g_total - g_sum).cwiseAbs().maxCoeff(),
            1e-9 * std::max(1.0, g_sum.cwiseAbs().maxCoeff()));
}

TEST(MvGradients, AllTermsMatchFiniteDifferences) {
  MvFixture fx(3, 49, 0.6, 72, 40);
  // evaluate at a perturbed point so every term is active
  Eigen::VectorXd x = fx.x0;
  Rng rng(51);
  for (Eigen::Index i = 0; i < fx.prob.layout.model_dims(); ++i) x[i] += rng.uniform(-0.004, 0.004);
  for (int i = fx.prob.layout.pose_offset(); i < x.size(); ++i) x[i] += rng.uniform(-0.002, 0.002);
  const MvFrozen frozen = fx.prob.freeze(x);
  const AsmParams init = fx.prob.params_of(fx.x0);

  const LandmarkEnergy lmk(fx.prob, frozen);
  const EdgeEnergy edge(fx.prob, frozen);
  const PhotometricEnergy pc(fx.prob, frozen);
  const TotalEnergy total(fx.prob, frozen, init);
  const std::vector<const Objective*> objectives = {&lmk, &edge, &pc, &total};

  const ParamLayout& lay = fx.prob.layout;
  for (const Objective* obj : objectives) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(x.size());
    obj->value_and_grad(x, grad);
    auto f = [&](const Eigen::VectorXd& p) { return obj->value(p); };
    askin::testing::GradCheck check;
    const double gscale = grad.cwiseAbs().maxCoeff();
    std::vector<int> coords;
    for (ParamGroup g : {ParamGroup::Zeta, ParamGroup::PiLogits, ParamGroup::Mu,
                         ParamGroup::SigmaChol, ParamGroup::Tau})
      for (int rep = 0; rep < 2; ++rep) {
        const int j = rng.uniform_int(0, 83);
        coords.push_back(lay.offset(j, g) + rng.uniform_int(0, lay.group_size(g) - 1));
      }
    for (int rep = 0; rep < 6; ++rep)
      coords.push_back(lay.pose_offset() + rng.uniform_int(0, lay.pose_dims - 1));
    for (int c : coords) askin::testing::check_coordinate(f, x, grad, c, gscale, check);
    EXPECT_EQ(check.failed, 0) << obj->name() << " worst rel " << check.worst_rel << " at "
                               << check.worst_coord;
    EXPECT_GE(check.checked, 8) << obj->name();
  }
}

TEST(MvInvariance, RigidTransformAbsorbedByPoses) {
  MvFixture fx(3, 53, 0.6, 72, 40);
  Eigen::VectorXd x = fx.x0;
  const MvFrozen frozen = fx.prob.freeze(x);
  const LandmarkEnergy lmk(fx.prob, frozen);
  const EdgeEnergy edge(fx.prob, frozen);
  const PhotometricEnergy pc(fx.prob, frozen);
  const double lmk0 = lmk.value(x), edge0 = edge.value(x), pc0 = pc.value(x);

  // apply a rigid transform to the mesh via the root tau and absorb it in
  // every camera pose: R' = R Q^T, t' = t - R Q^T b
  const Mat3 q = euler_xyz_to_matrix(Vec3(0.07, -0.05, 0.09));
  const Vec3 b2(0.11, -0.07, 0.13);
  // root bone rotation: rotate about the root's bind position requires
  // translation compensation; simplest rigid motion: translate only
  Eigen::VectorXd x2 = x;
  const ParamLayout& lay = fx.prob.layout;
  (void)q;
  x2.segment<3>(lay.offset(0, ParamGroup::Tau)) += b2;  // root translation
  for (int n = 0; n < 3; ++n) {
    auto pose = x2.segment<6>(lay.pose_offset() + 6 * n);
    const Mat3 r = euler_xyz_to_matrix(pose.segment<3>(3));
    pose.segment<3>(0) -= r * b2;  // t' = t - R b
  }
  // the frozen sets must be re-derived for the moved configuration; both
  // configurations describe the same geometry, so the sets coincide
  const MvFrozen frozen2 = fx.prob.freeze(x2);
  const LandmarkEnergy lmk2(fx.prob, frozen2);
  const EdgeEnergy edge2(fx.prob, frozen2);
  const PhotometricEnergy pc2(fx.prob, frozen2);
  EXPECT_NEAR(lmk2.value(x2), lmk0, 1e-9 * std::max(1.0, lmk0));
  EXPECT_NEAR(edge2.value(x2), edge0, 1e-9 * std::max(1.0, edge0));
  EXPECT_NEAR(pc2.value(x2), pc0, 1e-9 * std::max(1.0, pc0));
}
