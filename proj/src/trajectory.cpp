#include "rstab/trajectory.hpp"

#include <algorithm>
#include <cmath>

#include "rstab/error.hpp"

namespace rstab {

namespace {

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

void PoseSequence::validate() const {
  if (poses.empty()) throw ContractViolation("pose sequence is empty");
  if (poses.size() != timestamps.size()) throw ContractViolation("pose sequence: timestamp count mismatch");
  for (std::size_t i = 1; i < timestamps.size(); ++i) {
    if (timestamps[i] <= timestamps[i - 1]) {
      throw ContractViolation("pose sequence: timestamps must be strictly increasing");
    }
  }
}

PoseSequence PoseSequence::from_poses(std::vector<Pose> poses) {
  PoseSequence seq;
  seq.timestamps.resize(poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) seq.timestamps[i] = static_cast<int>(i) + 1;
  seq.poses = std::move(poses);
  return seq;
}

std::vector<double> gaussian_kernel(int window, double sigma) {
  if (window < 1 || window % 2 == 0) throw ContractViolation("smoothing window must be odd and >= 1");
  if (window == 1) return {1.0};
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw ContractViolation("smoothing sigma must be positive when window > 1");
  }
  const int radius = std::min((window - 1) / 2, static_cast<int>(std::floor(3.0 * sigma)));
  std::vector<double> w(2 * radius + 1);
  double sum = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    w[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
    sum += w[k + radius];
  }
  for (double& x : w) x /= sum;
  return w;
}

PoseSequence smooth_trajectory(const PoseSequence& seq, int window, double sigma) {
  seq.validate();
  const std::vector<double> kernel = gaussian_kernel(window, sigma);
  if (kernel.size() == 1) return seq;

  const int n = static_cast<int>(seq.size());
  const int radius = static_cast<int>(kernel.size() / 2);
  PoseSequence out;
  out.timestamps = seq.timestamps;
  out.poses.reserve(seq.size());
  for (int i = 0; i < n; ++i) {
    const Eigen::Quaterniond& center = seq.poses[i].rotation();
    Eigen::Vector3d t = Eigen::Vector3d::Zero();
    Eigen::Vector4d q = Eigen::Vector4d::Zero();
    for (int k = -radius; k <= radius; ++k) {
      const Pose& p = seq.poses[reflect_index(i + k, n)];
      const double w = kernel[k + radius];
      t += w * p.translation();
      Eigen::Vector4d c = p.rotation().coeffs();
      if (c.dot(center.coeffs()) < 0.0) c = -c;
      q += w * c;
    }
    Eigen::Quaterniond mean;
    mean.coeffs() = q;
    out.poses.emplace_back(mean, t);
  }
  return out;
}

Eigen::Vector3d rotation_log(const Eigen::Quaterniond& q_in) {
  Eigen::Quaterniond q = q_in.normalized();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const double s = q.vec().norm();
  if (s < 1e-12) return 2.0 * q.vec();
  const double angle = 2.0 * std::atan2(s, q.w());
  return q.vec() / s * angle;
}

double jerk_energy(const PoseSequence& seq) {
  seq.validate();
  const std::size_t n = seq.size();
  if (n < 3) throw ContractViolation("jerk_energy needs at least 3 poses");
  double energy = 0.0;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const Eigen::Vector3d d2 = seq.poses[i + 1].translation() - 2.0 * seq.poses[i].translation() +
                               seq.poses[i - 1].translation();
    energy += d2.squaredNorm();
  }
  std::vector<Eigen::Vector3d> steps(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    steps[i] = rotation_log(seq.poses[i].rotation().conjugate() * seq.poses[i + 1].rotation());
  }
  for (std::size_t i = 1; i < steps.size(); ++i) energy += (steps[i] - steps[i - 1]).squaredNorm();
  return energy;
}

}  // namespace rstab
