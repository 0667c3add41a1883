#include <gtest/gtest.h>

#include "askin/demo_assets.hpp"

#include "helpers.hpp"
#include "askin/gmm.hpp"

using namespace askin;

namespace {

GmmBoneParams random_bone_params(Rng& rng, int K, const Vec2& zeta) {
  GmmBoneParams p;
  p.zeta = zeta;
  p.log_pi = Eigen::VectorXd::NullaryExpr(K, [&](Eigen::Index) { return rng.uniform(-1, 1); });
  for (int k = 0; k < K; ++k) {
    p.mu.emplace_back(rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05));
    p.chol.emplace_back(rng.uniform(-3.3, -2.6), rng.uniform(-0.02, 0.02), rng.uniform(-3.3, -2.6));
  }
  return p;
}

}  // namespace

TEST(Gaussian2d, StandardNormalAtMean) {
  EXPECT_NEAR(gaussian2d(Vec2(0, 0), Vec2(0, 0), Mat2::Identity()), 0.15915494309189535, 1e-12);
}

TEST(Gaussian2d, OneUnitFromMean) {
  // e^{-1/2} / (2 pi)
  EXPECT_NEAR(gaussian2d(Vec2(1, 0), Vec2(0, 0), Mat2::Identity()), 0.09653235263005391, 1e-12);
}

TEST(Gaussian2d, DeterminantScaling) {
  const Mat2 sigma = 4.0 * Mat2::Identity();
  EXPECT_NEAR(gaussian2d(Vec2(0.3, -0.1), Vec2(0.3, -0.1), sigma), 1.0 / (8.0 * kTwoPi / 2.0), 1e-12);
  EXPECT_NEAR(gaussian2d(Vec2(0, 0), Vec2(0, 0), sigma), 1.0 / (4.0 * kTwoPi), 1e-12);
}

TEST(Gaussian2d, CholParameterizationMatchesDense) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Vector3d chol(rng.uniform(-2, 1), rng.uniform(-1, 1), rng.uniform(-2, 1));
    GmmBoneParams p;
    p.chol = {chol};
    const Mat2 sigma = p.realized_sigma(0);
    const Vec2 u(rng.uniform(-2, 2), rng.uniform(-2, 2));
    const Vec2 mean(rng.uniform(-1, 1), rng.uniform(-1, 1));
    EXPECT_NEAR(detail::gauss_chol(u, mean, chol), gaussian2d(u, mean, sigma),
                1e-12 * std::max(1.0, gaussian2d(u, mean, sigma)));
  }
}

TEST(GaussCholDerivs, MatchFiniteDifferences) {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Vector3d chol(rng.uniform(-2, 0.5), rng.uniform(-0.8, 0.8), rng.uniform(-2, 0.5));
    const Vec2 u(rng.uniform(-1, 1), rng.uniform(-1, 1));
    const Vec2 mean(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
    const auto g = detail::gauss_chol_derivs(u, mean, chol);
    const double h = 1e-6;
    for (int d = 0; d < 2; ++d) {
      Vec2 dm = Vec2::Zero();
      dm[d] = h;
      const double fd =
          (detail::gauss_chol(u, mean + dm, chol) - detail::gauss_chol(u, mean - dm, chol)) / (2 * h);
      EXPECT_NEAR(g.d_mean[d], fd, 1e-5 * std::max(1.0, std::abs(fd)));
    }
    for (int c = 0; c < 3; ++c) {
      Eigen::Vector3d cp = chol, cm = chol;
      cp[c] += h;
      cm[c] -= h;
      const double fd = (detail::gauss_chol(u, mean, cp) - detail::gauss_chol(u, mean, cm)) / (2 * h);
      const double an = c == 0 ? g.d_a : (c == 1 ? g.d_b : g.d_c);
      EXPECT_NEAR(an, fd, 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(BoneWeight, SingleComponentReducesToGaussian) {
  const DemoHead& head = askin::testing::demo_head();
  GmmBoneParams p;
  const int vt = head.skeleton.bones[4].proxy_vertex;
  p.zeta = head.mesh.uv[vt];
  p.log_pi = Eigen::VectorXd::Zero(1);
  p.mu = {Vec2::Zero()};
  p.chol = {Eigen::Vector3d(0, 0, 0)};  // identity covariance
  EXPECT_NEAR(bone_weight(head.mesh, p, vt), 1.0 / kTwoPi, 1e-12);
}

TEST(BoneWeight, MixtureLinearity) {
  const DemoHead& head = askin::testing::demo_head();
  GmmBoneParams one;
  one.zeta = Vec2(0.4, 0.5);
  one.log_pi = Eigen::VectorXd::Zero(1);
  one.mu = {Vec2(0.01, -0.02)};
  one.chol = {Eigen::Vector3d(-2.5, 0.01, -2.4)};
  GmmBoneParams two;  // two identical components, same realized mixture
  two.zeta = one.zeta;
  two.log_pi = Eigen::VectorXd::Constant(2, 0.7);
  two.mu = {one.mu[0], one.mu[0]};
  two.chol = {one.chol[0], one.chol[0]};
  for (int v = 0; v < head.mesh.vertex_count(); v += 97)
    EXPECT_NEAR(bone_weight(head.mesh, one, v), bone_weight(head.mesh, two, v), 1e-15);
}

TEST(BoneWeight, MatchesTermByTermSum) {
  const DemoHead& head = askin::testing::demo_head();
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const GmmBoneParams p = random_bone_params(rng, 3, Vec2(rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)));
    const int v = rng.uniform_int(0, head.mesh.vertex_count() - 1);
    const Eigen::VectorXd pi = p.realized_pi();
    double expect = 0.0;
    for (int k = 0; k < 3; ++k)
      expect += pi[k] * gaussian2d(head.mesh.uv[v], Vec2(p.mu[k] + p.zeta), p.realized_sigma(k));
    EXPECT_NEAR(bone_weight(head.mesh, p, v), expect, 1e-12 * std::max(1.0, expect));
  }
}

TEST(NormalizedWeights, SingleBoneIsOne) {
  const DemoHead& head = askin::testing::demo_head();
  GmmBoneParams p;
  p.zeta = Vec2(0.5, 0.5);
  p.log_pi = Eigen::VectorXd::Zero(1);
  p.mu = {Vec2::Zero()};
  p.chol = {Eigen::Vector3d(-0.5, 0, -0.5)};  // wide enough to cover the chart
  const WeightField f = normalized_weights(head.mesh, {p});
  EXPECT_NEAR((f.weights.array() - 1.0).abs().maxCoeff(), 0.0, 1e-15);
}

TEST(NormalizedWeights, TwoIdenticalBonesSplitEvenly) {
  const DemoHead& head = askin::testing::demo_head();
  GmmBoneParams p;
  p.zeta = Vec2(0.5, 0.5);
  p.log_pi = Eigen::VectorXd::Zero(2);
  p.mu = {Vec2::Zero(), Vec2(0.02, 0.0)};
  p.chol = {Eigen::Vector3d(-0.5, 0, -0.5), Eigen::Vector3d(-0.7, 0.1, -0.6)};
  const WeightField f = normalized_weights(head.mesh, {p, p});
  EXPECT_NEAR((f.weights.array() - 0.5).abs().maxCoeff(), 0.0, 1e-12);
}

TEST(NormalizedWeights, RowStochasticAndMatchesRatioOracle) {
  const DemoHead& head = askin::testing::demo_head();
  Rng rng(21);
  std::vector<GmmBoneParams> params;
  for (int j = 0; j < 5; ++j)
    params.push_back(random_bone_params(rng, 2, Vec2(0.25 + 0.12 * j, rng.uniform(0.3, 0.7))));
  // widen so five bones cover the whole chart
  for (auto& p : params)
    for (auto& c : p.chol) c = Eigen::Vector3d(-1.2, 0.0, -1.2);
  const WeightField f = normalized_weights(head.mesh, params);
  for (int v = 0; v < head.mesh.vertex_count(); v += 13) {
    EXPECT_NEAR(f.weights.row(v).sum(), 1.0, 1e-6);
    EXPECT_GE(f.weights.row(v).minCoeff(), 0.0);
    double denom = 0.0;
    for (const auto& p : params) denom += bone_weight(head.mesh, p, v);
    for (int j = 0; j < 5; ++j)
      EXPECT_NEAR(f.weights(v, j), bone_weight(head.mesh, params[j], v) / denom, 1e-12);
  }
}

TEST(NormalizedWeights, UncoveredVertexNamesTheVertex) {
  const DemoHead& head = askin::testing::demo_head();
  GmmBoneParams p;
  p.zeta = Vec2(0.5, 0.5);
  p.log_pi = Eigen::VectorXd::Zero(1);
  p.mu = {Vec2::Zero()};
  p.chol = {Eigen::Vector3d(-5.5, 0, -5.5)};  // tiny footprint, leaves the rim uncovered
  try {
    normalized_weights(head.mesh, {p});
    FAIL() << "expected uncovered-vertex";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("uncovered-vertex"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("vertex"), std::string::npos);
  }
}

TEST(NormalizedWeights, InvariantToCommonDensityRescale) {
  // multiplying every bone's density by a common positive constant, here via
  // a uniform logit shift before the softmax, leaves the field unchanged
  const DemoHead& head = askin::testing::demo_head();
  Rng rng(33);
  std::vector<GmmBoneParams> params, shifted;
  for (int j = 0; j < 4; ++j) {
    GmmBoneParams p = random_bone_params(rng, 2, Vec2(0.3 + 0.13 * j, 0.5));
    for (auto& c : p.chol) c = Eigen::Vector3d(-1.0, 0.05, -1.1);
    params.push_back(p);
    p.log_pi.array() += 0.9;  // softmax is shift invariant, densities identical
    shifted.push_back(p);
  }
  const WeightField a = normalized_weights(head.mesh, params);
  const WeightField b = normalized_weights(head.mesh, shifted);
  EXPECT_LT((a.weights - b.weights).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(BoneWeight, UvShiftCovariance) {
  // The density depends only on F(v) - zeta - mu. Dyadic coordinates and
  // shifts keep every addition exact, so the invariance is bitwise.
  Rng rng(37);
  for (int trial = 0; trial < 100; ++trial) {
    auto dyadic = [&] { return rng.uniform_int(-512, 512) / 1024.0; };
    GmmBoneParams p;
    p.zeta = Vec2(dyadic(), dyadic());
    p.log_pi = Eigen::VectorXd::NullaryExpr(2, [&](Eigen::Index) { return rng.uniform(-1, 1); });
    p.mu = {Vec2(dyadic(), dyadic()), Vec2(dyadic(), dyadic())};
    p.chol = {Eigen::Vector3d(rng.uniform(-2, 0), rng.uniform(-1, 1), rng.uniform(-2, 0)),
              Eigen::Vector3d(rng.uniform(-2, 0), rng.uniform(-1, 1), rng.uniform(-2, 0))};
    const Vec2 u(dyadic(), dyadic());
    const Vec2 delta(dyadic(), dyadic());
    const Eigen::VectorXd pi = p.realized_pi();
    auto eval_at = [&](const Vec2& point, const GmmBoneParams& q) {
      double w = 0.0;
      for (int k = 0; k < q.K(); ++k)
        w += pi[k] * detail::gauss_chol(point, Vec2(q.mu[k] + q.zeta), q.chol[k]);
      return w;
    };
    GmmBoneParams q = p;
    q.zeta += delta;
    EXPECT_EQ(eval_at(Vec2(u + delta), q), eval_at(u, p));
  }
}

TEST(Realization, AlwaysSatisfiesConstraints) {
  Rng rng(43);
  for (int trial = 0; trial < 500; ++trial) {
    GmmBoneParams p = random_bone_params(rng, 3, Vec2(0, 0));
    for (auto& c : p.chol)
      c = Eigen::Vector3d(rng.uniform(-4, 3), rng.uniform(-5, 5), rng.uniform(-4, 3));
    p.log_pi = Eigen::VectorXd::NullaryExpr(3, [&](Eigen::Index) { return rng.uniform(-20, 20); });
    const Eigen::VectorXd pi = p.realized_pi();
    EXPECT_NEAR(pi.sum(), 1.0, 1e-12);
    EXPECT_GT(pi.minCoeff(), 0.0);
    for (int k = 0; k < 3; ++k) {
      const Mat2 sigma = p.realized_sigma(k);
      EXPECT_GT(sigma.determinant(), 0.0);
      EXPECT_GT(sigma(0, 0), 0.0);
      EXPECT_EQ(sigma(0, 1), sigma(1, 0));
    }
  }
}

TEST(InitIsotropic, CoversDefaultSkeletonAndChart) {
  const DemoHead& head = askin::testing::demo_head();
  for (int K : {1, 2, 5}) {
    const auto params = init_isotropic(head.mesh, head.skeleton, K);
    ASSERT_EQ(static_cast<int>(params.size()), 84);
    const WeightField f = normalized_weights(head.mesh, params);  // must not throw
    for (int v = 0; v < head.mesh.vertex_count(); ++v) EXPECT_NEAR(f.weights.row(v).sum(), 1.0, 1e-6);
  }
}

TEST(InitIsotropic, OwnProxyGetsMaximalUnnormalizedWeight) {
  const DemoHead& head = askin::testing::demo_head();
  const auto params = init_isotropic(head.mesh, head.skeleton, 2);
  for (int j = 0; j < head.skeleton.bone_count(); ++j) {
    const int vt = head.skeleton.bones[j].proxy_vertex;
    const double own = bone_weight(head.mesh, params[j], vt);
    for (int i = 0; i < head.skeleton.bone_count(); ++i)
      EXPECT_LE(bone_weight(head.mesh, params[i], vt), own + 1e-15)
          << "bone " << i << " beats bone " << j << " at its own proxy";
  }
}

TEST(InitIsotropic, MixtureCollapseAcrossK) {
  const DemoHead& head = askin::testing::demo_head();
  const auto k1 = init_isotropic(head.mesh, head.skeleton, 1);
  const auto k3 = init_isotropic(head.mesh, head.skeleton, 3);
  const WeightField f1 = normalized_weights(head.mesh, k1);
  const WeightField f3 = normalized_weights(head.mesh, k3);
  EXPECT_LT((f1.weights - f3.weights).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(InitIsotropic, FewBonesFallBackSigma) {
  const DemoHead& head = askin::testing::demo_head();
  Skeleton one;
  one.bones.push_back({"root", -1, Vec3(0, 0, 1), 0, Mat3::Identity()});
  one.bind_proxies(head.mesh);
  const auto params = init_isotropic(head.mesh, one, 2);
  EXPECT_NEAR(params[0].chol[0][0], std::log(0.1), 1e-12);
}
