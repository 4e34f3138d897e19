#pragma once

#include <optional>
#include <vector>

#include <Eigen/Core>

#include "rstab/geometry.hpp"
#include "rstab/grid.hpp"

namespace rstab {

// Mean over frames of the valid-pixel fraction.
double cropping_ratio(const std::vector<Mask>& masks);

// 10 log10(1 / MSE) for images in [0,1], capped at 99 dB.
double psnr(const Image& a, const Image& b);
inline constexpr double kPsnrCap = 99.0;

struct Correspondences {
  std::vector<Eigen::Vector2d> src;
  std::vector<Eigen::Vector2d> dst;
};

// Hartley-normalized DLT; nullopt for fewer than four points or a
// rank-deficient configuration. The result is scaled so H(2,2) = 1 when possible.
std::optional<Eigen::Matrix3d> fit_homography(const Correspondences& c);

// s2 / s1 of the top-left 2x2 block of H / H(2,2).
double anisotropy(const Eigen::Matrix3d& h);

struct DistortionResult {
  double value = 1.0;                // minimum over scored frames
  std::vector<double> frame_scores;  // NaN for skipped frames
  int skipped = 0;
};

// Throws ComputeError when every frame is degenerate.
DistortionResult distortion_value(const std::vector<Correspondences>& frames);

// Input-to-output correspondences for one frame: a regular grid of input
// pixels lifted with their depth and projected into the output camera.
Correspondences depth_correspondences(const DepthMap& depth, const Pose& input_pose, const Pose& output_pose,
                                      const Intrinsics& k, int step = 4);

// Feature trajectories, each a list of 2D positions over consecutive frames.
struct TrackSet {
  std::vector<std::vector<Eigen::Vector2d>> tracks;
  static constexpr int kMinLength = 32;
  void validate() const;
};

// Static world points seen on a grid of the reference frame, projected into every pose.
TrackSet tracks_from_depth(const DepthMap& reference_depth, const Pose& reference_pose,
                           const std::vector<Pose>& poses, const Intrinsics& k, int step = 8);

// Fallback tracks built from pose profiles: (tx, ty), (tz, rx), (ry, rz) with
// rotations as rotation vectors relative to the first pose.
TrackSet tracks_from_poses(const std::vector<Pose>& poses);

struct StabilityBand {
  int low_first = 2;  // 1-based bin of the lowest non-DC frequency
  int low_last = 6;
};

// Mean over tracks and axes of low-band energy / energy in bins 2..floor(N/2).
// Bin b holds DFT frequency k = b - 1. Motionless axes score 1.
double stability_score(const TrackSet& tracks, StabilityBand band = {});

}  // namespace rstab
