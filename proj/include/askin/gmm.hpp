// Per-bone skinning weight fields: a K-component 2D Gaussian mixture in uv
// space around each bone's uv position, normalized across bones so every
// vertex's weights sum to one.
//
// Mixture weights are stored as logits (softmax keeps them positive and
// summing to one) and covariances as Cholesky factors with log diagonals
// (always symmetric positive definite), so any unconstrained parameter
// vector realizes a valid mixture.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "askin/mesh.hpp"
#include "askin/skeleton.hpp"

namespace askin {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;
// Vertices whose total density across bones falls below this are treated as
// uncovered and the configuration is rejected.
inline constexpr double kCoverageEpsilon = 1e-8;

struct GmmBoneParams {
  Vec2 zeta = Vec2::Zero();
  Eigen::VectorXd log_pi;              // K logits
  std::vector<Vec2> mu;                // K offsets from zeta
  std::vector<Eigen::Vector3d> chol;   // K x (log l11, l21, log l22)

  int K() const { return static_cast<int>(log_pi.size()); }

  Eigen::VectorXd realized_pi() const {
    const double m = log_pi.maxCoeff();
    Eigen::VectorXd e = (log_pi.array() - m).exp();
    return e / e.sum();
  }
  Mat2 realized_sigma(int k) const {
    Mat2 l = Mat2::Zero();
    l(0, 0) = std::exp(chol[k][0]);
    l(1, 0) = chol[k][1];
    l(1, 1) = std::exp(chol[k][2]);
    return l * l.transpose();
  }
};

// Standard bivariate normal density.
inline double gaussian2d(const Vec2& u, const Vec2& mean, const Mat2& sigma) {
  const double det = sigma.determinant();
  if (!(det > 0.0) || !(sigma(0, 0) > 0.0)) fail("gaussian2d: sigma not positive definite");
  const Vec2 d = u - mean;
  const double quad = d.dot(sigma.inverse() * d);
  return std::exp(-0.5 * quad) / (kTwoPi * std::sqrt(det));
}

namespace detail {

// Density straight from the Cholesky parameterization:
//   l11 = e^a, l21 = b, l22 = e^c, y = L^-1 (u - mean)
//   N = exp(-|y|^2 / 2) / (2 pi l11 l22)
// Returns the density; optionally the partials wrt (mean, a, b, c).
struct GaussDerivs {
  double density;
  Vec2 d_mean;     // dN/d mean (equals -dN/du)
  double d_a, d_b, d_c;
};

inline double gauss_chol(const Vec2& u, const Vec2& mean, const Eigen::Vector3d& chol) {
  const double l11 = std::exp(chol[0]), l21 = chol[1], l22 = std::exp(chol[2]);
  const double d0 = u.x() - mean.x(), d1 = u.y() - mean.y();
  const double y0 = d0 / l11;
  const double y1 = (d1 - l21 * y0) / l22;
  return std::exp(-0.5 * (y0 * y0 + y1 * y1)) / (kTwoPi * l11 * l22);
}

inline GaussDerivs gauss_chol_derivs(const Vec2& u, const Vec2& mean, const Eigen::Vector3d& chol) {
  const double l11 = std::exp(chol[0]), l21 = chol[1], l22 = std::exp(chol[2]);
  const double d0 = u.x() - mean.x(), d1 = u.y() - mean.y();
  const double y0 = d0 / l11;
  const double y1 = (d1 - l21 * y0) / l22;
  const double n = std::exp(-0.5 * (y0 * y0 + y1 * y1)) / (kTwoPi * l11 * l22);
  GaussDerivs g;
  g.density = n;
  // dlnN/du = -L^-T y; dlnN/dmean is its negation
  const double z1 = y1 / l22;
  const double z0 = (y0 - l21 * z1) / l11;
  g.d_mean = n * Vec2(z0, z1);
  g.d_a = n * (y0 * y0 - y1 * l21 * y0 / l22 - 1.0);
  g.d_b = n * (y0 * y1 / l22);
  g.d_c = n * (y1 * y1 - 1.0);
  return g;
}

}  // namespace detail

// Unnormalized weight of `bone` at vertex i: sum_k pi_k N(F(v_i) | mu_k + zeta, Sigma_k).
inline double bone_weight(const Mesh& mesh, const GmmBoneParams& params, int vertex) {
  if (vertex < 0 || vertex >= mesh.vertex_count()) fail("bone_weight: vertex index out of range");
  const Vec2 u = mesh.uv[vertex];
  const Eigen::VectorXd pi = params.realized_pi();
  double w = 0.0;
  for (int k = 0; k < params.K(); ++k)
    w += pi[k] * detail::gauss_chol(u, Vec2(params.mu[k] + params.zeta), params.chol[k]);
  return w;
}

struct WeightField {
  Eigen::MatrixXd weights;  // vertex_count x bone_count, rows sum to 1
};

// Row-normalized field over all bones. A vertex left effectively uncovered
// (total density below kCoverageEpsilon) rejects the configuration instead
// of amplifying noise.
inline WeightField normalized_weights(const Mesh& mesh, const std::vector<GmmBoneParams>& all_params,
                                      int threads = 1) {
  if (all_params.empty()) fail("normalized_weights: need at least one bone");
  const int nv = mesh.vertex_count();
  const int nb = static_cast<int>(all_params.size());
  WeightField field;
  field.weights.resize(nv, nb);
  std::vector<Eigen::VectorXd> pis(nb);
  for (int j = 0; j < nb; ++j) pis[j] = all_params[j].realized_pi();
  parallel_for(static_cast<std::size_t>(nv), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t v = begin; v < end; ++v) {
      const Vec2 u = mesh.uv[v];
      for (int j = 0; j < nb; ++j) {
        const GmmBoneParams& p = all_params[j];
        double w = 0.0;
        for (int k = 0; k < p.K(); ++k)
          w += pis[j][k] * detail::gauss_chol(u, Vec2(p.mu[k] + p.zeta), p.chol[k]);
        field.weights(static_cast<int>(v), j) = w;
      }
    }
  });
  for (int v = 0; v < nv; ++v) {
    const double denom = field.weights.row(v).sum();
    if (!(denom > kCoverageEpsilon))
      fail("uncovered-vertex: vertex " + std::to_string(v) +
           " has total skinning density " + std::to_string(denom));
    field.weights.row(v) /= denom;
  }
  return field;
}

// Default initializer: each bone gets K identical isotropic components at
// its own uv position. The shared radius is half the median nearest-neighbor
// distance between bone uv positions, which keeps every bone's own proxy as
// its strongest site while covering the chart between bones.
inline std::vector<GmmBoneParams> init_isotropic(const Mesh& mesh, const Skeleton& skeleton, int K) {
  if (K < 1) fail("init_isotropic: K must be >= 1");
  const std::vector<Vec2> zetas = skeleton.initial_zetas(mesh);
  const int nb = static_cast<int>(zetas.size());
  double sigma = 0.1;  // chart units, used when fewer than 2 bones
  if (nb >= 2) {
    std::vector<double> nn(nb, std::numeric_limits<double>::infinity());
    for (int i = 0; i < nb; ++i)
      for (int j = 0; j < nb; ++j)
        if (i != j) nn[i] = std::min(nn[i], (zetas[i] - zetas[j]).norm());
    std::vector<double> sorted = nn;
    std::nth_element(sorted.begin(), sorted.begin() + nb / 2, sorted.end());
    const double median = sorted[nb / 2];
    sigma = 0.5 * median;
    if (!(sigma > 0.0)) sigma = 0.1;
  }
  std::vector<GmmBoneParams> out(nb);
  for (int j = 0; j < nb; ++j) {
    GmmBoneParams& p = out[j];
    p.zeta = zetas[j];
    p.log_pi = Eigen::VectorXd::Zero(K);
    p.mu.assign(K, Vec2::Zero());
    p.chol.assign(K, Eigen::Vector3d(std::log(sigma), 0.0, std::log(sigma)));
  }
  return out;
}

}  // namespace askin
