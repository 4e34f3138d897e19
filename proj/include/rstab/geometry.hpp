#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace rstab {

// Axis convention used everywhere: the camera looks down +z, image u grows to
// the right and v grows downward; pixel (row y, column x) has its center at
// (u, v) = (x, y).

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  // Throws ContractViolation unless fx, fy > 0 and the principal point lies in the image.
  void validate() const;
  Eigen::Matrix3d matrix() const;

  friend bool operator==(const Intrinsics&, const Intrinsics&) = default;
};

// Continuous pixel coordinates. In-bounds validity travels separately.
struct SubPixel {
  double u = 0.0;
  double v = 0.0;

  friend bool operator==(const SubPixel&, const SubPixel&) = default;
};

// Rigid camera-to-world transform: X_world = R * X_cam + t, where t is the
// camera center. The world-to-camera map (the P of the projection chain
// x_t = K P_t P~^-1 d K^-1 x~) is inverse().
class Pose {
 public:
  Pose() = default;
  // Normalizes the quaternion; throws ContractViolation on non-finite or zero input.
  Pose(const Eigen::Quaterniond& rotation, const Eigen::Vector3d& translation);

  static Pose identity() { return {}; }
  static Pose from_matrix(const Eigen::Matrix4d& m);

  const Eigen::Quaterniond& rotation() const { return rotation_; }
  const Eigen::Vector3d& translation() const { return translation_; }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation_ * p + translation_; }
  Pose inverse() const;
  // (a * b).apply(p) == a.apply(b.apply(p))
  Pose operator*(const Pose& rhs) const;
  Eigen::Matrix4d matrix() const;

 private:
  Eigen::Quaterniond rotation_ = Eigen::Quaterniond::Identity();
  Eigen::Vector3d translation_ = Eigen::Vector3d::Zero();
};

struct Projection {
  SubPixel pixel;
  double depth = 0.0;  // z in the destination camera
  bool valid = false;  // false when the point is at or behind the destination camera
};

// Lifts x at `depth` in the source camera and projects into the destination camera.
Projection project(SubPixel x, double depth, const Pose& src_pose, const Pose& dst_pose,
                   const Intrinsics& k);

// World point seen at pixel x with camera-frame depth `depth`.
Eigen::Vector3d unproject(SubPixel x, double depth, const Pose& pose, const Intrinsics& k);

// dst * src^-1. Satisfies relative(a, a) == identity and
// relative(a, c) == relative(b, c) * relative(a, b).
Pose relative(const Pose& src, const Pose& dst);

// Precomputed source-camera -> destination-camera transform for repeated projection.
class CameraTransfer {
 public:
  CameraTransfer(const Pose& src_pose, const Pose& dst_pose, const Intrinsics& k);

  Projection operator()(SubPixel x, double depth) const;
  // Same as operator() with the source ray direction K^-1 [u v 1]^T precomputed.
  Projection from_ray(const Eigen::Vector3d& ray, double depth) const;
  Eigen::Vector3d ray(SubPixel x) const;

 private:
  Eigen::Matrix3d rotation_;
  Eigen::Vector3d translation_;
  Intrinsics k_;
};

}  // namespace rstab
