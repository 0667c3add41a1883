// Perspective cameras: one view bundles an image, intrinsics, pose, 2D
// landmarks and a face-contour point set.
#pragma once

#include <Eigen/Dense>
#include <vector>

#include "askin/image.hpp"

namespace askin {

struct CameraView {
  Image image;
  double focal = 100.0;
  Vec2 principal = Vec2::Zero();       // (cx, cy) in pixels
  Mat3 rotation = Mat3::Identity();    // world -> camera
  Vec3 translation = Vec3::Zero();
  std::vector<Vec2> landmarks68;       // pixels
  std::vector<Vec2> contour;           // pixels

  Vec3 to_camera(const Vec3& p) const { return rotation * p + translation; }

  void validate() const {
    if (image.empty()) fail("camera view: empty image");
    if ((rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9)
      fail("camera view: rotation must be orthonormal");
    for (const Vec2& q : landmarks68)
      if (q.x() < 0 || q.y() < 0 || q.x() > image.width() || q.y() > image.height())
        fail("camera view: landmark outside the image bounds");
  }
};

// p = (cx + f x/z, cy + f y/z) for camera-space (x, y, z), z > 0.
inline Vec2 project_camera(const Vec3& pc, double focal, const Vec2& principal) {
  if (!(pc.z() > 0.0)) fail("behind-camera: point has non-positive depth");
  return {principal.x() + focal * pc.x() / pc.z(), principal.y() + focal * pc.y() / pc.z()};
}

inline Vec2 project(const Vec3& p, const CameraView& view) {
  return project_camera(view.to_camera(p), view.focal, view.principal);
}

// d(pixel)/d(camera point), 2x3.
inline Eigen::Matrix<double, 2, 3> project_jacobian(const Vec3& pc, double focal) {
  Eigen::Matrix<double, 2, 3> j;
  const double iz = 1.0 / pc.z();
  j << focal * iz, 0.0, -focal * pc.x() * iz * iz,
       0.0, focal * iz, -focal * pc.y() * iz * iz;
  return j;
}

// Camera on an orbit looking at `target`; y-down image convention, so the
// world up vector maps to negative image y.
inline void look_at(CameraView& view, const Vec3& eye, const Vec3& target, const Vec3& up = Vec3(0, 1, 0)) {
  const Vec3 forward = (target - eye).normalized();
  const Vec3 right = forward.cross(up).normalized();
  const Vec3 down = forward.cross(right);  // completes the right-handed y-down frame
  view.rotation.row(0) = right.transpose();
  view.rotation.row(1) = down.transpose();
  view.rotation.row(2) = forward.transpose();
  view.translation = -(view.rotation * eye);
}

}  // namespace askin
