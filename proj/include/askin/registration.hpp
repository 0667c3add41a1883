// Scan fitting: seven-keypoint rigid initialization, joint refinement of the
// rigid pose and all model parameters against point-to-surface distance with
// shape priors, and the cropped normalized-mean-error metric.
#pragma once

#include <Eigen/Dense>
#include <array>
#include <optional>
#include <vector>

#include "askin/adam.hpp"
#include "askin/autodiff.hpp"
#include "askin/model.hpp"
#include "askin/procrustes.hpp"

namespace askin {

struct Scan {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;  // optional, may be empty
  std::array<Vec3, 7> keypoints7{};

  void validate() const {
    if (points.size() < 7) fail("scan: need at least 7 points");
    for (const Vec3& k : keypoints7)
      if (!k.allFinite()) fail("scan: keypoints must be finite");
  }
};

struct RegConfig {
  double lambda1 = 1.0;   // |tau|^2
  double lambda2 = 0.1;   // |zeta - zeta_init|^2 (or |zeta|^2, see below)
  double lambda3 = 0.1;   // |pi - pi'|^2 on realized mixture weights
  double lambda4 = 0.1;   // |mu - mu'|^2
  double lambda5 = 0.1;   // |Sigma - Sigma'|^2 in Cholesky parameters
  double lr = 1e-3;
  int iterations = 300;
  double crop_radius = 95.0;  // scan units
  // Literal reading of the zeta prior (toward the uv origin) instead of the
  // deviation-from-initialization form.
  bool zeta_prior_absolute = false;
};

// Which parameter groups a fit may move. The static variant pins bone
// positions and skinning weights; the dynamic-binding variant frees zeta.
enum class FitMode { Full, StaticSkinning, DynamicBindingOnly };

namespace detail {

inline bool group_active(FitMode mode, ParamGroup g) {
  switch (mode) {
    case FitMode::Full:
      return true;
    case FitMode::StaticSkinning:
      return g == ParamGroup::Tau || g == ParamGroup::Pose;
    case FitMode::DynamicBindingOnly:
      return g == ParamGroup::Tau || g == ParamGroup::Pose || g == ParamGroup::Zeta;
  }
  return true;
}

inline Eigen::VectorXd group_mask(const ParamLayout& lay, FitMode mode) {
  Eigen::VectorXd mask = Eigen::VectorXd::Zero(lay.total_dims());
  for (int j = 0; j < lay.bones; ++j)
    for (ParamGroup g : {ParamGroup::Zeta, ParamGroup::PiLogits, ParamGroup::Mu,
                         ParamGroup::SigmaChol, ParamGroup::Tau})
      if (group_active(mode, g))
        mask.segment(lay.offset(j, g), lay.group_size(g)).setOnes();
  if (group_active(mode, ParamGroup::Pose))
    mask.segment(lay.pose_offset(), lay.pose_dims).setOnes();
  return mask;
}

}  // namespace detail

// E_reg: lambda1 |tau|^2 + lambda2 |zeta - zeta'|^2 + lambda3 |pi - pi'|^2
//      + lambda4 |mu - mu'|^2 + lambda5 |Sigma - Sigma'|^2.
// tau is penalized as deviation from the identity transform; pi in realized
// (post-softmax) space; Sigma in Cholesky parameter space.
class RegEnergy : public Objective {
 public:
  RegEnergy(const AsmParams& init, RegConfig cfg, int pose_dims = 0)
      : cfg_(cfg), J_(init.bone_count()), K_(init.K), lay_(init.layout(pose_dims)) {
    init_x_ = init.pack();
    init_pi_.resize(J_);
    for (int j = 0; j < J_; ++j) init_pi_[j] = init.gmm[j].realized_pi();
  }

  const char* name() const override { return "reg-energy"; }

  double value(const Eigen::VectorXd& x) const override {
    Eigen::VectorXd scratch;
    return eval(x, nullptr, scratch);
  }

  double value_and_grad(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const override {
    return eval(x, &grad, grad);
  }

 private:
  double eval(const Eigen::VectorXd& x, Eigen::VectorXd* want_grad, Eigen::VectorXd& grad) const {
    const Tau tau0 = tau_identity();
    double e = 0.0;
    for (int j = 0; j < J_; ++j) {
      const int toff = lay_.offset(j, ParamGroup::Tau);
      for (int i = 0; i < 9; ++i) {
        const double d = x[toff + i] - tau0[i];
        e += cfg_.lambda1 * d * d;
        if (want_grad) grad[toff + i] += 2.0 * cfg_.lambda1 * d;
      }
      const int zoff = lay_.offset(j, ParamGroup::Zeta);
      for (int i = 0; i < 2; ++i) {
        const double ref = cfg_.zeta_prior_absolute ? 0.0 : init_x_[zoff + i];
        const double d = x[zoff + i] - ref;
        e += cfg_.lambda2 * d * d;
        if (want_grad) grad[zoff + i] += 2.0 * cfg_.lambda2 * d;
      }
      // pi in realized space, pulled back through the softmax
      const int poff = lay_.offset(j, ParamGroup::PiLogits);
      Eigen::VectorXd logits = x.segment(poff, K_);
      const double m = logits.maxCoeff();
      Eigen::VectorXd pi = (logits.array() - m).exp();
      pi /= pi.sum();
      Eigen::VectorXd pibar = Eigen::VectorXd::Zero(K_);
      for (int k = 0; k < K_; ++k) {
        const double d = pi[k] - init_pi_[j][k];
        e += cfg_.lambda3 * d * d;
        pibar[k] = 2.0 * cfg_.lambda3 * d;
      }
      if (want_grad) {
        const double dot = pi.dot(pibar);
        grad.segment(poff, K_) += (pi.array() * (pibar.array() - dot)).matrix();
      }
      for (ParamGroup g : {ParamGroup::Mu, ParamGroup::SigmaChol}) {
        const double lambda = g == ParamGroup::Mu ? cfg_.lambda4 : cfg_.lambda5;
        const int off = lay_.offset(j, g);
        for (int i = 0; i < lay_.group_size(g); ++i) {
          const double d = x[off + i] - init_x_[off + i];
          e += lambda * d * d;
          if (want_grad) grad[off + i] += 2.0 * lambda * d;
        }
      }
    }
    return e;
  }

  RegConfig cfg_;
  int J_, K_;
  ParamLayout lay_;
  Eigen::VectorXd init_x_;
  std::vector<Eigen::VectorXd> init_pi_;
};

// Mean unsigned distance from the scan points to the posed deformed mesh,
// with the nearest face per point frozen at construction. Within a frozen
// face the closest point refloats, so the piece stays smooth.
class PointMeshEnergy : public Objective {
 public:
  PointMeshEnergy(const AsmContext& ctx, const std::vector<Vec3>& scan_points,
                  const Eigen::VectorXd& x0)
      : ctx_(&ctx), points_(&scan_points) {
    const auto [params, pose] = split(x0);
    AsmEval ev = asm_eval(*ctx_, params);
    frozen_ = freeze_binding(ev);
    const PoseMap map(pose);
    std::vector<Vec3> world(ev.deformed.size());
    for (std::size_t v = 0; v < world.size(); ++v) world[v] = map.forward(ev.deformed[v]);
    MeshBvh bvh(world, ctx_->mesh->faces);
    faces_.resize(scan_points.size());
    for (std::size_t i = 0; i < scan_points.size(); ++i) faces_[i] = bvh.closest(scan_points[i]).face_index;
  }

  const char* name() const override { return "point-to-mesh"; }

  double value(const Eigen::VectorXd& x) const override {
    const auto [params, pose] = split(x);
    const AsmEval ev = asm_eval(*ctx_, params, &frozen_);
    const PoseMap map(pose);
    double sum = 0.0;
    for (std::size_t i = 0; i < points_->size(); ++i) {
      const auto& tri = ctx_->mesh->faces[faces_[i]];
      const TriClosest cp = closest_point_triangle(
          (*points_)[i], map.forward(ev.deformed[tri[0]]), map.forward(ev.deformed[tri[1]]),
          map.forward(ev.deformed[tri[2]]));
      sum += ((*points_)[i] - cp.point).norm();
    }
    return sum / static_cast<double>(points_->size());
  }

  double value_and_grad(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const override {
    const auto [params, pose] = split(x);
    const AsmEval ev = asm_eval(*ctx_, params, &frozen_);
    const PoseMap map(pose);
    const int nv = ctx_->mesh->vertex_count();
    std::vector<Vec3> world(nv);
    for (int v = 0; v < nv; ++v) world[v] = map.forward(ev.deformed[v]);

    Eigen::MatrixXd vbar_world = Eigen::MatrixXd::Zero(nv, 3);
    const double inv_n = 1.0 / static_cast<double>(points_->size());
    double sum = 0.0;
    for (std::size_t i = 0; i < points_->size(); ++i) {
      const auto& tri = ctx_->mesh->faces[faces_[i]];
      const TriClosest cp =
          closest_point_triangle((*points_)[i], world[tri[0]], world[tri[1]], world[tri[2]]);
      const Vec3 diff = (*points_)[i] - cp.point;
      const double d = diff.norm();
      sum += d;
      if (d < 1e-12) continue;  // on the surface: zero subgradient
      const Vec3 dir = diff / d;  // dd/dcp = -dir; dcp/dcorner = bary (envelope)
      const double b[3] = {cp.bary.alpha, cp.bary.beta, cp.bary.gamma};
      for (int c = 0; c < 3; ++c) vbar_world.row(tri[c]) -= inv_n * b[c] * dir.transpose();
    }

    // pose pullback, then the model chain
    Eigen::MatrixXd vbar_model = Eigen::MatrixXd::Zero(nv, 3);
    auto pose_grad = grad.segment(grad.size() - kPoseDims, kPoseDims);
    for (int v = 0; v < nv; ++v) {
      const Vec3 g = vbar_world.row(v).transpose();
      if (g.isZero(0.0)) continue;
      Vec3 pbar = Vec3::Zero();
      map.backward(ev.deformed[v], g, pbar, pose_grad);
      vbar_model.row(v) = pbar.transpose();
    }
    asm_backward(*ctx_, ev, vbar_model, grad);
    return sum * inv_n;
  }

 private:
  std::pair<AsmParams, Eigen::VectorXd> split(const Eigen::VectorXd& x) const {
    const int J = ctx_->skeleton->bone_count();
    const int K = (static_cast<int>((x.size() - kPoseDims) / J) - 11) / 6;
    return {AsmParams::unpack(x, J, K), x.tail(kPoseDims)};
  }

  const AsmContext* ctx_;
  const std::vector<Vec3>* points_;
  FrozenBinding frozen_;
  std::vector<int> faces_;
};

struct FitResult {
  AsmParams params;
  RigidPose pose;
  std::vector<double> history;
  double final_loss = 0.0;
  double final_mean_distance = 0.0;
  int clamped_zeta_events = 0;
};

struct ModelAnnotations {
  std::array<int, 7> keypoints7{};
  std::vector<int> landmarks68;
};

// Rigid initialization from the 7 keypoint pairs, then a joint Adam loop
// over pose and model parameters minimizing point-to-mesh distance plus the
// shape prior. Returns the best iterate seen.
inline FitResult fit_scan(const Mesh& mesh, const Skeleton& skeleton, const Scan& scan,
                          const RegConfig& cfg, const AsmParams& init,
                          const ModelAnnotations& annotations, FitMode mode = FitMode::Full,
                          int threads = 1) {
  scan.validate();
  AsmContext ctx(mesh, skeleton, threads);

  const DeformedMesh init_mesh = asm_forward(ctx, init);
  std::vector<Vec3> model_kp, scan_kp;
  for (int i = 0; i < 7; ++i) {
    model_kp.push_back(init_mesh.vertices[annotations.keypoints7[i]]);
    scan_kp.push_back(scan.keypoints7[i]);
  }
  const RigidPose pose0 = rigid_init(model_kp, scan_kp);

  const ParamLayout lay = init.layout(kPoseDims);
  Eigen::VectorXd x(lay.total_dims());
  x.head(lay.model_dims()) = init.pack();
  x.tail(kPoseDims) = pose_to_vector(pose0);

  const Eigen::VectorXd mask = detail::group_mask(lay, mode);
  const RegEnergy reg(init, cfg, kPoseDims);
  AdamState adam(x.size());
  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;

  FitResult out;
  out.history.reserve(cfg.iterations + 1);
  Eigen::VectorXd best_x = x;
  double best_loss = std::numeric_limits<double>::infinity();
  EvalStats stats;

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const PointMeshEnergy data(ctx, scan.points, x);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(x.size());
    double loss = data.value_and_grad(x, grad);
    loss += reg.value_and_grad(x, grad);
    if (!std::isfinite(loss) || !grad.allFinite())
      fail("fit_scan: non-finite loss or gradient at iteration " + std::to_string(iter));
    out.history.push_back(loss);
    if (loss < best_loss) {
      best_loss = loss;
      best_x = x;
    }
    grad.array() *= mask.array();
    adam_step(adam, grad, x, adam_cfg);
    { // count clamp events on the fresh iterate
      EvalStats step_stats;
      try {
        (void)asm_eval(ctx, AsmParams::unpack(x, init.bone_count(), init.K), nullptr, &step_stats);
      } catch (const Error&) {
        // rejected configurations roll back to the best iterate
        x = best_x;
      }
      stats.clamped_zetas += step_stats.clamped_zetas;
    }
  }
  {
    const PointMeshEnergy data(ctx, scan.points, x);
    const double loss = data.value(x) + reg.value(x);
    out.history.push_back(loss);
    if (loss < best_loss) {
      best_loss = loss;
      best_x = x;
    }
  }

  out.params = AsmParams::unpack(best_x, init.bone_count(), init.K);
  out.pose = pose_from_vector(best_x.tail(kPoseDims));
  out.final_loss = best_loss;
  out.clamped_zeta_events = stats.clamped_zetas;

  const AsmEval ev = asm_eval(ctx, out.params);
  std::vector<Vec3> world(ev.deformed.size());
  for (std::size_t v = 0; v < world.size(); ++v) world[v] = out.pose.apply(ev.deformed[v]);
  MeshBvh bvh(world, mesh.faces);
  double sum = 0.0;
  for (const Vec3& p : scan.points) sum += bvh.closest(p).distance;
  out.final_mean_distance = sum / static_cast<double>(scan.points.size());
  return out;
}

// Mean unsigned scan-to-mesh distance over scan points within crop_radius of
// the fitted nose tip, in scan units. The fitted mesh is posed into scan
// space first.
inline double nme(const DeformedMesh& fitted, const Scan& scan, const RigidPose& pose,
                  double crop_radius, int nose_tip_vertex) {
  std::vector<Vec3> world(fitted.vertices.size());
  for (std::size_t v = 0; v < world.size(); ++v) world[v] = pose.apply(fitted.vertices[v]);
  const Vec3 nose = world[nose_tip_vertex];
  std::vector<Vec3> cropped;
  for (const Vec3& p : scan.points)
    if ((p - nose).norm() <= crop_radius) cropped.push_back(p);
  if (cropped.empty()) fail("nme: no scan points within the crop radius");
  MeshBvh bvh(world, fitted.base->faces);
  double sum = 0.0;
  for (const Vec3& p : cropped) sum += bvh.closest(p).distance;
  return sum / static_cast<double>(cropped.size());
}

}  // namespace askin
