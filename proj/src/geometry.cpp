#include "rstab/geometry.hpp"

#include <cmath>

#include "rstab/error.hpp"

namespace rstab {

namespace {

bool finite(SubPixel x) { return std::isfinite(x.u) && std::isfinite(x.v); }

}  // namespace

void Intrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy)) {
    throw ContractViolation("intrinsics: focal lengths must be positive and finite");
  }
  if (width < 1 || height < 1) throw ContractViolation("intrinsics: image size must be positive");
  if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
    throw ContractViolation("intrinsics: principal point outside the image");
  }
}

Eigen::Matrix3d Intrinsics::matrix() const {
  Eigen::Matrix3d m;
  m << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return m;
}

Pose::Pose(const Eigen::Quaterniond& rotation, const Eigen::Vector3d& translation)
    : rotation_(rotation), translation_(translation) {
  const double n = rotation.norm();
  if (!std::isfinite(n) || n < 1e-12 || !translation.allFinite()) {
    throw ContractViolation("pose: rotation must be a finite non-zero quaternion and translation finite");
  }
  // Already-unit input is kept as is so text round trips stay bit-exact.
  if (std::abs(n - 1.0) > 1e-12) rotation_.coeffs() /= n;
}

Pose Pose::from_matrix(const Eigen::Matrix4d& m) {
  const Eigen::Matrix3d r = m.topLeftCorner<3, 3>();
  return {Eigen::Quaterniond(r), m.topRightCorner<3, 1>()};
}

Pose Pose::inverse() const {
  Pose out;
  out.rotation_ = rotation_.conjugate();
  out.translation_ = -(out.rotation_ * translation_);
  return out;
}

Pose Pose::operator*(const Pose& rhs) const {
  Pose out;
  out.rotation_ = rotation_ * rhs.rotation_;
  out.rotation_.normalize();
  out.translation_ = rotation_ * rhs.translation_ + translation_;
  return out;
}

Eigen::Matrix4d Pose::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation_.toRotationMatrix();
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

CameraTransfer::CameraTransfer(const Pose& src_pose, const Pose& dst_pose, const Intrinsics& k) : k_(k) {
  // X_dst = R_dst^T (R_src X_src + t_src - t_dst)
  const Eigen::Matrix3d r_src = src_pose.rotation().toRotationMatrix();
  const Eigen::Matrix3d r_dst_t = dst_pose.rotation().toRotationMatrix().transpose();
  rotation_ = r_dst_t * r_src;
  translation_ = r_dst_t * (src_pose.translation() - dst_pose.translation());
}

Eigen::Vector3d CameraTransfer::ray(SubPixel x) const {
  return {(x.u - k_.cx) / k_.fx, (x.v - k_.cy) / k_.fy, 1.0};
}

Projection CameraTransfer::from_ray(const Eigen::Vector3d& ray, double depth) const {
  const Eigen::Vector3d p = rotation_ * (ray * depth) + translation_;
  Projection out;
  out.depth = p.z();
  if (!(p.z() > 0.0)) return out;
  out.pixel = {k_.fx * p.x() / p.z() + k_.cx, k_.fy * p.y() / p.z() + k_.cy};
  out.valid = true;
  return out;
}

Projection CameraTransfer::operator()(SubPixel x, double depth) const { return from_ray(ray(x), depth); }

Projection project(SubPixel x, double depth, const Pose& src_pose, const Pose& dst_pose,
                   const Intrinsics& k) {
  if (!finite(x) || !std::isfinite(depth)) throw ContractViolation("project: non-finite input");
  if (!(depth > 0.0)) throw ContractViolation("project: depth must be positive");
  return CameraTransfer(src_pose, dst_pose, k)(x, depth);
}

Eigen::Vector3d unproject(SubPixel x, double depth, const Pose& pose, const Intrinsics& k) {
  if (!finite(x) || !std::isfinite(depth)) throw ContractViolation("unproject: non-finite input");
  if (!(depth > 0.0)) throw ContractViolation("unproject: depth must be positive");
  const Eigen::Vector3d cam((x.u - k.cx) / k.fx * depth, (x.v - k.cy) / k.fy * depth, depth);
  return pose.apply(cam);
}

Pose relative(const Pose& src, const Pose& dst) { return dst * src.inverse(); }

}  // namespace rstab
