// Weighted expectation-maximization for fitting one bone's 2D mixture to a
// target per-vertex weight map, for ingesting painted or auto-generated
// skinning weights as gmm parameters.
#pragma once

#include <Eigen/Dense>
#include <vector>

#include "askin/gmm.hpp"

namespace askin {

struct GmmFitResult {
  GmmBoneParams params;
  double fit_score = 0.0;  // cosine similarity between target and realized field
  bool converged = false;
  int iterations = 0;
};

namespace detail {

inline GmmBoneParams pack_mixture(const Vec2& zeta, const Eigen::VectorXd& pi,
                                  const std::vector<Vec2>& means, const std::vector<Mat2>& covs) {
  GmmBoneParams p;
  p.zeta = zeta;
  const int K = static_cast<int>(pi.size());
  p.log_pi = pi.array().max(1e-12).log();
  p.mu.resize(K);
  p.chol.resize(K);
  for (int k = 0; k < K; ++k) {
    p.mu[k] = means[k] - zeta;
    // lower Cholesky with log diagonals
    const double l11 = std::sqrt(covs[k](0, 0));
    const double l21 = covs[k](1, 0) / l11;
    const double l22 = std::sqrt(std::max(covs[k](1, 1) - l21 * l21, 1e-12));
    p.chol[k] = Eigen::Vector3d(std::log(l11), l21, std::log(l22));
  }
  return p;
}

}  // namespace detail

// Maximizes the weighted mixture likelihood of the vertex uv samples, each
// weighted by its target skinning weight. The bone's uv position (zeta) is
// taken as the weighted mean; component means are stored relative to it.
inline GmmFitResult fit_gmm_to_weightmap(const Mesh& mesh, const Eigen::VectorXd& target, int K,
                                         int max_iters = 200, double tol = 1e-9) {
  if (target.size() != mesh.vertex_count()) fail("fit_gmm: target size must match vertex count");
  if (K < 1) fail("fit_gmm: K must be >= 1");
  if (target.minCoeff() < 0.0) fail("fit_gmm: target weights must be nonnegative");
  const double total = target.sum();
  if (!(total > 0.0)) fail("fit_gmm: target weights are all zero");

  const int n = mesh.vertex_count();
  Eigen::VectorXd r = target / total;

  // weighted mean and covariance seed the components along the principal axis
  Vec2 mean = Vec2::Zero();
  for (int i = 0; i < n; ++i) mean += r[i] * mesh.uv[i];
  Mat2 cov = Mat2::Zero();
  for (int i = 0; i < n; ++i) {
    const Vec2 d = mesh.uv[i] - mean;
    cov += r[i] * (d * d.transpose());
  }
  cov += 1e-10 * Mat2::Identity();

  Eigen::SelfAdjointEigenSolver<Mat2> eig(cov);
  const Vec2 axis = eig.eigenvectors().col(1);
  const double spread = std::sqrt(std::max(eig.eigenvalues()[1], 1e-12));

  Eigen::VectorXd pi = Eigen::VectorXd::Constant(K, 1.0 / K);
  std::vector<Vec2> means(K);
  std::vector<Mat2> covs(K, cov / std::max(1, K / 2 + 1));
  for (int k = 0; k < K; ++k) {
    const double offset = K == 1 ? 0.0 : spread * (2.0 * k / (K - 1) - 1.0);
    means[k] = mean + offset * axis;
  }

  Eigen::MatrixXd resp(n, K);
  double prev_ll = -std::numeric_limits<double>::infinity();
  GmmFitResult out;
  for (int iter = 0; iter < max_iters; ++iter) {
    ++out.iterations;
    // E step
    double ll = 0.0;
    for (int i = 0; i < n; ++i) {
      double row_sum = 0.0;
      for (int k = 0; k < K; ++k) {
        const double d = pi[k] * gaussian2d(mesh.uv[i], means[k], covs[k]);
        resp(i, k) = d;
        row_sum += d;
      }
      if (row_sum <= 0.0) {
        resp.row(i).setConstant(1.0 / K);
        row_sum = 1.0;
      } else {
        resp.row(i) /= row_sum;
      }
      ll += r[i] * std::log(std::max(row_sum, 1e-300));
    }
    // M step with sample weights r
    for (int k = 0; k < K; ++k) {
      double nk = 0.0;
      Vec2 mk = Vec2::Zero();
      for (int i = 0; i < n; ++i) {
        const double w = r[i] * resp(i, k);
        nk += w;
        mk += w * mesh.uv[i];
      }
      if (nk < 1e-12) continue;  // starved component keeps its parameters
      mk /= nk;
      Mat2 ck = Mat2::Zero();
      for (int i = 0; i < n; ++i) {
        const double w = r[i] * resp(i, k);
        const Vec2 d = mesh.uv[i] - mk;
        ck += w * (d * d.transpose());
      }
      ck = ck / nk + 1e-10 * Mat2::Identity();
      pi[k] = nk;
      means[k] = mk;
      covs[k] = ck;
    }
    pi /= pi.sum();
    if (std::abs(ll - prev_ll) < tol * std::max(1.0, std::abs(ll))) {
      out.converged = true;
      break;
    }
    prev_ll = ll;
  }

  Vec2 zeta = Vec2::Zero();
  for (int k = 0; k < K; ++k) zeta += pi[k] * means[k];
  out.params = detail::pack_mixture(zeta, pi, means, covs);

  // cosine similarity between the realized field and the target
  Eigen::VectorXd realized(n);
  for (int i = 0; i < n; ++i) realized[i] = bone_weight(mesh, out.params, i);
  const double denom = realized.norm() * target.norm();
  out.fit_score = denom > 0.0 ? realized.dot(target) / denom : 0.0;
  return out;
}

}  // namespace askin
