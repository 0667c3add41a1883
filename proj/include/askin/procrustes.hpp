// Closed-form similarity alignment between corresponding point sets and the
// Euler-angle pose parameterization the solvers refine.
#pragma once

#include <Eigen/Dense>
#include <vector>

#include "askin/skeleton.hpp"

namespace askin {

struct RigidPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double scale = 1.0;

  Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }

  void validate() const {
    if (!(scale > 0.0)) fail("rigid pose: scale must be positive");
    if ((rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9 ||
        rotation.determinant() < 0.0)
      fail("rigid pose: rotation must be orthonormal with determinant +1");
  }
};

// Least-squares similarity transform: minimizes sum_i |s R m_i + t - q_i|^2
// over rotation, translation and positive scale.
inline RigidPose rigid_init(const std::vector<Vec3>& model_points,
                            const std::vector<Vec3>& scan_points) {
  const std::size_t n = model_points.size();
  if (n < 3 || scan_points.size() != n) fail("rigid_init: need matching point sets of size >= 3");
  Vec3 mc = Vec3::Zero(), qc = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    mc += model_points[i];
    qc += scan_points[i];
  }
  mc /= static_cast<double>(n);
  qc /= static_cast<double>(n);

  Mat3 cov = Mat3::Zero();
  double var_m = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 x = model_points[i] - mc;
    const Vec3 y = scan_points[i] - qc;
    cov += y * x.transpose();
    var_m += x.squaredNorm();
  }
  cov /= static_cast<double>(n);
  var_m /= static_cast<double>(n);
  if (var_m < 1e-18) fail("rigid_init: model keypoints are coincident");

  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 d = svd.singularValues();
  if (d[1] < 1e-12 * std::max(1.0, d[0])) fail("rigid_init: keypoints are collinear");
  Mat3 s = Mat3::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) s(2, 2) = -1.0;

  RigidPose pose;
  pose.rotation = svd.matrixU() * s * svd.matrixV().transpose();
  pose.scale = (d[0] + d[1] + s(2, 2) * d[2]) / var_m;
  if (!(pose.scale > 0.0)) fail("rigid_init: non-positive scale solution");
  pose.translation = qc - pose.scale * (pose.rotation * mc);
  return pose;
}

// R = Rx(a) Ry(b) Rz(c); inverse of the compose_trs rotation convention.
inline Vec3 euler_xyz_from_matrix(const Mat3& r) {
  const double b = std::asin(std::clamp(r(0, 2), -1.0, 1.0));
  double a, c;
  if (std::abs(r(0, 2)) < 1.0 - 1e-12) {
    a = std::atan2(-r(1, 2), r(2, 2));
    c = std::atan2(-r(0, 1), r(0, 0));
  } else {  // gimbal: fold the z rotation into x
    a = std::atan2(r(2, 1), r(1, 1));
    c = 0.0;
  }
  return {a, b, c};
}

inline Mat3 euler_xyz_to_matrix(const Vec3& e) {
  return detail::rot_x(e[0]) * detail::rot_y(e[1]) * detail::rot_z(e[2]);
}

// Pose block layout used by the solvers: [t(3), euler(3), log_scale].
inline constexpr int kPoseDims = 7;

inline Eigen::VectorXd pose_to_vector(const RigidPose& pose) {
  Eigen::VectorXd x(kPoseDims);
  x.segment<3>(0) = pose.translation;
  x.segment<3>(3) = euler_xyz_from_matrix(pose.rotation);
  x[6] = std::log(pose.scale);
  return x;
}

inline RigidPose pose_from_vector(const Eigen::VectorXd& x) {
  RigidPose pose;
  pose.translation = x.segment<3>(0);
  pose.rotation = euler_xyz_to_matrix(x.segment<3>(3));
  pose.scale = std::exp(x[6]);
  return pose;
}

// Applies the pose to `points`; the adjoint maps d(loss)/d(world points)
// back to d(loss)/d(model points) and the seven pose parameters.
struct PoseMap {
  RigidPose pose;
  Vec3 euler;
  std::array<Mat3, 3> drot;

  explicit PoseMap(const Eigen::VectorXd& x) : pose(pose_from_vector(x)), euler(x.segment<3>(3)) {
    const Mat3 rx = detail::rot_x(euler[0]), ry = detail::rot_y(euler[1]), rz = detail::rot_z(euler[2]);
    drot[0] = detail::drot_x(euler[0]) * ry * rz;
    drot[1] = rx * detail::drot_y(euler[1]) * rz;
    drot[2] = rx * ry * detail::drot_z(euler[2]);
  }

  Vec3 forward(const Vec3& p) const { return pose.apply(p); }

  // gbar: gradient wrt the world point; p: the model point it came from.
  void backward(const Vec3& p, const Vec3& gbar, Vec3& pbar, Eigen::Ref<Eigen::VectorXd> pose_grad) const {
    pbar += pose.scale * (pose.rotation.transpose() * gbar);
    pose_grad.segment<3>(0) += gbar;
    for (int i = 0; i < 3; ++i)
      pose_grad[3 + i] += pose.scale * gbar.dot(drot[i] * p);
    pose_grad[6] += gbar.dot(pose.scale * (pose.rotation * p));  // d/d log s
  }
};

}  // namespace askin
