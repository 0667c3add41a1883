// The full forward map: parameters -> deformed mesh.
//
// Pipeline per evaluation: (1) wrap each bone's uv position into 3D,
// (2) rebuild bind poses and local-to-parent matrices, (3) evaluate the
// normalized gmm weight field, (4) compose per-bone transforms, (5) blend
// vertices. Everything is cached so a scalar loss can be pulled back through
// the whole chain with hand-derived adjoints; asm_backward maps d(loss)/
// d(vertices) to d(loss)/d(all parameters).
//
// Discrete choices (the uv face each zeta lands in, clamp state) are frozen
// per gradient evaluation via FrozenBinding; within a face the wrap is
// affine, so the frozen piece is the exact local derivative.
#pragma once

#include <Eigen/Dense>
#include <vector>

#include "askin/params.hpp"

namespace askin {

struct DeformedMesh {
  std::vector<Vec3> vertices;
  const Mesh* base = nullptr;  // faces and uv are shared with the template

  Mesh as_mesh() const {
    Mesh m = *base;
    m.vertices = vertices;
    return m;
  }
};

struct EvalStats {
  int clamped_zetas = 0;  // zetas that left the chart and were pulled back
};

struct AsmContext {
  const Mesh* mesh = nullptr;
  const Skeleton* skeleton = nullptr;
  UvGrid grid;
  int threads = 1;

  AsmContext(const Mesh& m, const Skeleton& s, int thread_count = 1)
      : mesh(&m), skeleton(&s), grid(m), threads(thread_count) {}
};

// Per-bone uv locations captured at a base point. Re-evaluations keep the
// face and clamp geometry fixed and let the barycentric weights float, which
// is the piecewise-affine branch the gradient differentiates.
struct FrozenBinding {
  std::vector<UvLocation> locations;
};

struct AsmEval {
  AsmParams params;
  std::vector<UvLocation> locations;
  std::vector<Vec3> psi;
  BindPose bind;
  std::vector<Mat4> l2p, mtau, gmat, l2w, binv, t;
  std::vector<Eigen::VectorXd> pis;    // realized mixture weights per bone
  Eigen::MatrixXd unnorm;              // V x J densities
  Eigen::VectorXd denom;               // V row sums
  Eigen::MatrixXd weights;             // V x J, rows sum to 1
  std::vector<Vec3> deformed;
};

inline FrozenBinding freeze_binding(const AsmEval& eval) { return {eval.locations}; }

inline AsmEval asm_eval(const AsmContext& ctx, const AsmParams& params,
                        const FrozenBinding* frozen = nullptr, EvalStats* stats = nullptr) {
  const Mesh& mesh = *ctx.mesh;
  const Skeleton& skel = *ctx.skeleton;
  const int nb = skel.bone_count();
  const int nv = mesh.vertex_count();
  if (params.bone_count() != nb) fail("asm_eval: params sized for a different skeleton");

  AsmEval ev;
  ev.params = params;
  ev.locations.resize(nb);
  ev.psi.resize(nb);

  for (int j = 0; j < nb; ++j) {
    const Vec2 zeta = params.gmm[j].zeta;
    if (frozen) {
      UvLocation loc = frozen->locations[j];
      const Vec2 eff = loc.uv + loc.clamp_jac * (zeta - loc.uv);
      const auto& tri = mesh.faces[loc.face];
      loc.bary = barycentric(eff, mesh.uv[tri[0]], mesh.uv[tri[1]], mesh.uv[tri[2]]);
      ev.locations[j] = loc;
    } else {
      ev.locations[j] = locate_or_clamp(mesh, ctx.grid, zeta);
    }
    if (ev.locations[j].clamped && stats) ++stats->clamped_zetas;
    ev.psi[j] = wrap_uv_to_world(mesh, skel.bones[j], ev.locations[j]);
  }

  ev.bind = compute_bind_pose(skel, ev.psi);
  ev.l2p.resize(nb);
  ev.mtau.resize(nb);
  ev.gmat.resize(nb);
  ev.l2w.resize(nb);
  ev.binv.resize(nb);
  ev.t.resize(nb);
  for (int j = 0; j < nb; ++j) {
    ev.l2p[j] = local_to_parent(skel, ev.bind, j);
    ev.mtau[j] = compose_trs(params.tau[j]);
    ev.gmat[j] = ev.l2p[j] * ev.mtau[j];
    const int p = skel.bones[j].parent;
    ev.l2w[j] = p < 0 ? ev.gmat[j] : Mat4(ev.l2w[p] * ev.gmat[j]);
    ev.binv[j] = affine_inverse(ev.bind.matrices[j]);
    ev.t[j] = ev.l2w[j] * ev.binv[j];
  }

  ev.pis.resize(nb);
  for (int j = 0; j < nb; ++j) ev.pis[j] = params.gmm[j].realized_pi();
  ev.unnorm.resize(nv, nb);
  parallel_for(static_cast<std::size_t>(nv), ctx.threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t v = begin; v < end; ++v) {
      const Vec2 u = mesh.uv[v];
      for (int j = 0; j < nb; ++j) {
        const GmmBoneParams& g = params.gmm[j];
        double w = 0.0;
        for (int k = 0; k < params.K; ++k)
          w += ev.pis[j][k] * detail::gauss_chol(u, Vec2(g.mu[k] + g.zeta), g.chol[k]);
        ev.unnorm(static_cast<Eigen::Index>(v), j) = w;
      }
    }
  });
  ev.denom = ev.unnorm.rowwise().sum();
  for (int v = 0; v < nv; ++v)
    if (!(ev.denom[v] > kCoverageEpsilon))
      fail("uncovered-vertex: vertex " + std::to_string(v) + " has total skinning density " +
           std::to_string(ev.denom[v]));
  ev.weights = ev.unnorm.array().colwise() / ev.denom.array();

  ev.deformed.resize(nv);
  parallel_for(static_cast<std::size_t>(nv), ctx.threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t v = begin; v < end; ++v) {
      const Vec3& p = mesh.vertices[v];
      Vec3 out = Vec3::Zero();
      for (int j = 0; j < nb; ++j) {
        const double w = ev.weights(static_cast<Eigen::Index>(v), j);
        out += w * (ev.t[j].topLeftCorner<3, 3>() * p + ev.t[j].topRightCorner<3, 1>());
      }
      ev.deformed[v] = out;
    }
  });
  return ev;
}

// Pulls d(loss)/d(deformed vertices) back to the flat model parameter
// vector (layout of AsmParams::pack). Adds into grad.
inline void asm_backward(const AsmContext& ctx, const AsmEval& ev, const Eigen::MatrixXd& vbar,
                         Eigen::VectorXd& grad) {
  const Mesh& mesh = *ctx.mesh;
  const Skeleton& skel = *ctx.skeleton;
  const int nb = skel.bone_count();
  const int nv = mesh.vertex_count();
  const int K = ev.params.K;
  const ParamLayout lay = ev.params.layout();
  if (grad.size() < lay.model_dims()) fail("asm_backward: gradient vector too short");

  // Blend: v' = sum_j w_vj (A_j v + b_j).
  std::vector<Mat4> tbar(nb, Mat4::Zero());
  Eigen::MatrixXd wbar(nv, nb);
  parallel_for(static_cast<std::size_t>(nb), ctx.threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t j = begin; j < end; ++j) {
      const Mat3 a = ev.t[j].topLeftCorner<3, 3>();
      const Vec3 b = ev.t[j].topRightCorner<3, 1>();
      Mat3 abar = Mat3::Zero();
      Vec3 bbar = Vec3::Zero();
      for (int v = 0; v < nv; ++v) {
        const Vec3 g = vbar.row(v).transpose();
        const Vec3& p = mesh.vertices[v];
        const double w = ev.weights(v, static_cast<Eigen::Index>(j));
        wbar(v, static_cast<Eigen::Index>(j)) = g.dot(a * p + b);
        abar += (w * g) * p.transpose();
        bbar += w * g;
      }
      tbar[j].topLeftCorner<3, 3>() = abar;
      tbar[j].topRightCorner<3, 1>() = bbar;
    }
  });

  // Normalization: w = U / D with D the row sum.
  Eigen::VectorXd srow(nv);
  for (int v = 0; v < nv; ++v) srow[v] = wbar.row(v).dot(ev.weights.row(v));
  Eigen::MatrixXd ubar(nv, nb);
  for (int v = 0; v < nv; ++v)
    ubar.row(v) = (wbar.row(v).array() - srow[v]) / ev.denom[v];

  // Mixture parameters; zeta also collects the weight-field term here.
  parallel_for(static_cast<std::size_t>(nb), ctx.threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t j = begin; j < end; ++j) {
      const GmmBoneParams& g = ev.params.gmm[j];
      Eigen::VectorXd pibar = Eigen::VectorXd::Zero(K);
      Vec2 zetabar = Vec2::Zero();
      std::vector<Vec2> mubar(K, Vec2::Zero());
      std::vector<Eigen::Vector3d> cholbar(K, Eigen::Vector3d::Zero());
      for (int v = 0; v < nv; ++v) {
        const double c = ubar(v, static_cast<Eigen::Index>(j));
        if (c == 0.0) continue;
        const Vec2 u = mesh.uv[v];
        for (int k = 0; k < K; ++k) {
          const auto d = detail::gauss_chol_derivs(u, Vec2(g.mu[k] + g.zeta), g.chol[k]);
          pibar[k] += c * d.density;
          const Vec2 mean_term = c * ev.pis[j][k] * d.d_mean;
          mubar[k] += mean_term;
          zetabar += mean_term;
          cholbar[k] += c * ev.pis[j][k] * Eigen::Vector3d(d.d_a, d.d_b, d.d_c);
        }
      }
      // softmax pullback: dL/dlogit = pi .* (pibar - <pi, pibar>)
      const double dot = ev.pis[j].dot(pibar);
      const Eigen::VectorXd logitbar = ev.pis[j].array() * (pibar.array() - dot);
      const int jz = static_cast<int>(j);
      grad.segment(lay.offset(jz, ParamGroup::Zeta), 2) += zetabar;
      grad.segment(lay.offset(jz, ParamGroup::PiLogits), K) += logitbar;
      for (int k = 0; k < K; ++k) {
        grad.segment(lay.offset(jz, ParamGroup::Mu) + 2 * k, 2) += mubar[k];
        grad.segment(lay.offset(jz, ParamGroup::SigmaChol) + 3 * k, 3) += cholbar[k];
      }
    }
  });

  // Transform chain, children before parents.
  std::vector<Mat4> lbar(nb, Mat4::Zero());
  std::vector<Mat4> bbar(nb, Mat4::Zero());
  std::vector<Mat4> binvbar(nb, Mat4::Zero());
  for (int j = nb - 1; j >= 0; --j) {
    lbar[j] += tbar[j] * ev.binv[j].transpose();
    binvbar[j] += ev.l2w[j].transpose() * tbar[j];
    const int p = skel.bones[j].parent;
    Mat4 gbar;
    if (p >= 0) {
      lbar[p] += lbar[j] * ev.gmat[j].transpose();
      gbar = ev.l2w[p].transpose() * lbar[j];
    } else {
      gbar = lbar[j];
    }
    const Mat4 mbar = ev.l2p[j].transpose() * gbar;
    const Mat4 l2pbar = gbar * ev.mtau[j].transpose();
    const auto dm = compose_trs_derivs(ev.params.tau[j]);
    const int toff = lay.offset(j, ParamGroup::Tau);
    for (int i = 0; i < 9; ++i) grad[toff + i] += mbar.cwiseProduct(dm[i]).sum();
    if (p >= 0) {
      binvbar[p] += l2pbar * ev.bind.matrices[j].transpose();
      bbar[j] += affine_inverse(ev.bind.matrices[p]).transpose() * l2pbar;
    } else {
      bbar[j] += l2pbar;  // the root's l2p is its own bind pose
    }
  }

  // Bind matrices depend on psi only through the translation column:
  // B = [M0 | psi], B^-1 = [M0^-1 | -M0^-1 psi].
  for (int j = 0; j < nb; ++j) {
    const Mat3 m0i = skel.bones[j].bind_rot_scale.inverse();
    Vec3 psibar = bbar[j].topRightCorner<3, 1>();
    psibar -= m0i.transpose() * binvbar[j].topRightCorner<3, 1>();
    const Vec2 zetabar = wrap_jacobian(mesh, ev.locations[j]).transpose() * psibar;
    grad.segment(lay.offset(j, ParamGroup::Zeta), 2) += zetabar;
  }
}

inline DeformedMesh lbs_blend(const WeightField& weights, const BoneTransforms& transforms,
                              const Mesh& mesh) {
  const int nv = mesh.vertex_count();
  const int nb = static_cast<int>(transforms.matrices.size());
  if (weights.weights.rows() != nv || weights.weights.cols() != nb) fail("lbs_blend: size mismatch");
  DeformedMesh out;
  out.base = &mesh;
  out.vertices.resize(nv);
  for (int v = 0; v < nv; ++v) {
    Vec3 acc = Vec3::Zero();
    for (int j = 0; j < nb; ++j) {
      const Mat4& t = transforms.matrices[j];
      acc += weights.weights(v, j) * (t.topLeftCorner<3, 3>() * mesh.vertices[v] + t.topRightCorner<3, 1>());
    }
    out.vertices[v] = acc;
  }
  return out;
}

inline DeformedMesh asm_forward(const AsmContext& ctx, const AsmParams& params,
                                EvalStats* stats = nullptr) {
  AsmEval ev = asm_eval(ctx, params, nullptr, stats);
  DeformedMesh out;
  out.base = ctx.mesh;
  out.vertices = std::move(ev.deformed);
  return out;
}

inline DeformedMesh asm_forward(const Mesh& mesh, const Skeleton& skeleton, const AsmParams& params,
                                EvalStats* stats = nullptr) {
  AsmContext ctx(mesh, skeleton);
  return asm_forward(ctx, params, stats);
}

}  // namespace askin
