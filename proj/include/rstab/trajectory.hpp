#pragma once

#include <vector>

#include "rstab/geometry.hpp"

namespace rstab {

struct PoseSequence {
  std::vector<Pose> poses;
  std::vector<int> timestamps;  // strictly increasing frame indices, 1-based in files

  std::size_t size() const { return poses.size(); }
  // Throws ContractViolation on empty input, length mismatch, or non-increasing timestamps.
  void validate() const;

  static PoseSequence from_poses(std::vector<Pose> poses);
};

// Truncated Gaussian weights for offsets -radius..radius, summing to 1.
// radius = min((window - 1) / 2, floor(3 * sigma)).
std::vector<double> gaussian_kernel(int window, double sigma);

// Gaussian smoothing of a camera path. Translations are convolved with the
// kernel; rotations are the kernel-weighted quaternion mean after sign
// alignment to the window's center quaternion, renormalized. Sequence ends use
// reflect padding (index -k maps to k). window == 1 returns the input unchanged.
PoseSequence smooth_trajectory(const PoseSequence& seq, int window, double sigma);

// Sum of squared translation second differences plus squared second
// differences of the per-step relative rotation vectors.
double jerk_energy(const PoseSequence& seq);

// Rotation vector (axis * angle, angle in [0, pi]) of a unit quaternion.
Eigen::Vector3d rotation_log(const Eigen::Quaterniond& q);

}  // namespace rstab
