#pragma once

#include <vector>

#include "rstab/geometry.hpp"
#include "rstab/grid.hpp"

namespace rstab {

struct WarpedSample {
  SubPixel pixel;
  double depth = 0.0;
};

struct WarpedDepth {
  Grid<double> depth;   // meaningful only where weight > 0
  Grid<double> weight;  // accumulated splat mass
};

struct TemporalWeights {
  std::vector<int> frames;  // members of the window
  std::vector<double> weights;
  double lambda = 0.0;
  int center = 0;
};

struct RayRangeMap {
  Grid<double> near;
  Grid<double> far;
  Mask valid;  // 1 where at least one frame contributed directly
};

struct RayRangeOptions {
  double s_min = 0.0;             // absolute spread floor, meters
  double s_min_relative = 0.02;   // spread floor as a fraction of the mean depth
  double epsilon = 1e-3;          // smallest admissible near bound
  int max_fill_passes = 16;
};

// Lifts every source pixel at its depth and projects it into the target
// camera. Points at or behind the target camera are dropped; points landing
// outside the image are kept (splat discards them).
std::vector<WarpedSample> forward_warp_depth(const DepthMap& depth, const Pose& pose_src, const Pose& pose_target,
                                             const Intrinsics& k);

// Bilinear forward splat onto an h x w grid. With soft_zbuffer each sample's
// mass is additionally scaled by exp(-softness * (depth / mean_depth - 1)) so
// nearer surfaces dominate conflicts.
WarpedDepth splat(const std::vector<WarpedSample>& samples, int height, int width, bool soft_zbuffer = false,
                  double softness = 20.0);

// Normalized weights over window members. Default exp(-lambda |t - T|);
// literal_form uses exp(lambda (t - T)).
TemporalWeights temporal_weights(const std::vector<int>& window, int center, double lambda,
                                 bool literal_form = false);

// Throws ComputeError when no frame contributes anywhere.
RayRangeMap aggregate_ray_range(const std::vector<WarpedDepth>& warped, const TemporalWeights& tw,
                                const RayRangeOptions& options = {});

}  // namespace rstab
