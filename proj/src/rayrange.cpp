#include "rstab/rayrange.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rstab/error.hpp"

namespace rstab {

std::vector<WarpedSample> forward_warp_depth(const DepthMap& depth, const Pose& pose_src, const Pose& pose_target,
                                             const Intrinsics& k) {
  const CameraTransfer transfer(pose_src, pose_target, k);
  std::vector<WarpedSample> out;
  out.reserve(depth.pixel_count());
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      const double d = depth(y, x);
      if (!(d > 0.0)) throw ContractViolation("forward_warp_depth: depth must be positive");
      const Projection p = transfer({static_cast<double>(x), static_cast<double>(y)}, d);
      if (p.valid) out.push_back({p.pixel, p.depth});
    }
  }
  return out;
}

WarpedDepth splat(const std::vector<WarpedSample>& samples, int height, int width, bool soft_zbuffer,
                  double softness) {
  WarpedDepth out{Grid<double>(height, width, 1), Grid<double>(height, width, 1)};
  double mean_depth = 1.0;
  if (soft_zbuffer && !samples.empty()) {
    double acc = 0.0;
    for (const WarpedSample& s : samples) acc += s.depth;
    mean_depth = acc / static_cast<double>(samples.size());
  }
  for (const WarpedSample& s : samples) {
    if (!std::isfinite(s.pixel.u) || !std::isfinite(s.pixel.v)) continue;
    const double fu = std::floor(s.pixel.u);
    const double fv = std::floor(s.pixel.v);
    if (fu < -1.0 || fv < -1.0 || fu > width || fv > height) continue;
    const int x0 = static_cast<int>(fu);
    const int y0 = static_cast<int>(fv);
    const double du = s.pixel.u - fu;
    const double dv = s.pixel.v - fv;
    const double scale = soft_zbuffer ? std::exp(-softness * (s.depth / mean_depth - 1.0)) : 1.0;
    for (int j = 0; j < 2; ++j) {
      for (int i = 0; i < 2; ++i) {
        const int x = x0 + i;
        const int y = y0 + j;
        if (!out.weight.contains(y, x)) continue;
        const double wd = (i ? du : 1.0 - du) * (j ? dv : 1.0 - dv) * scale;
        if (wd <= 0.0) continue;
        out.weight(y, x) += wd;
        out.depth(y, x) += wd * s.depth;
      }
    }
  }
  for (std::size_t i = 0; i < out.weight.pixel_count(); ++i) {
    const double w = out.weight.data()[i];
    out.depth.data()[i] = w > 0.0 ? out.depth.data()[i] / w : 0.0;
  }
  return out;
}

TemporalWeights temporal_weights(const std::vector<int>& window, int center, double lambda, bool literal_form) {
  if (window.empty()) throw ContractViolation("temporal_weights: empty window");
  TemporalWeights tw;
  tw.frames = window;
  tw.lambda = lambda;
  tw.center = center;
  tw.weights.resize(window.size());
  // Exponents are shifted by their maximum so large lambda cannot overflow.
  std::vector<double> e(window.size());
  for (std::size_t i = 0; i < window.size(); ++i) {
    const double dt = window[i] - center;
    e[i] = literal_form ? lambda * dt : -lambda * std::abs(dt);
  }
  const double top = *std::max_element(e.begin(), e.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) sum += tw.weights[i] = std::exp(e[i] - top);
  for (double& w : tw.weights) w /= sum;
  return tw;
}

RayRangeMap aggregate_ray_range(const std::vector<WarpedDepth>& warped, const TemporalWeights& tw,
                                const RayRangeOptions& options) {
  if (warped.empty() || warped.size() != tw.weights.size()) {
    throw ContractViolation("aggregate_ray_range: need one warped depth map per temporal weight");
  }
  const int h = warped.front().depth.height();
  const int w = warped.front().depth.width();
  for (const WarpedDepth& wd : warped) {
    if (wd.depth.height() != h || wd.depth.width() != w || !wd.weight.same_extent(wd.depth)) {
      throw ContractViolation("aggregate_ray_range: warped maps differ in size");
    }
  }
  RayRangeMap out{Grid<double>(h, w, 1), Grid<double>(h, w, 1), Mask(h, w, 1)};
  double global_min = std::numeric_limits<double>::infinity();
  double global_max = -std::numeric_limits<double>::infinity();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double wsum = 0.0, mean = 0.0;
      for (std::size_t t = 0; t < warped.size(); ++t) {
        if (warped[t].weight(y, x) > 0.0) {
          wsum += tw.weights[t];
          mean += tw.weights[t] * warped[t].depth(y, x);
        }
      }
      if (!(wsum > 0.0)) continue;
      mean /= wsum;
      double var = 0.0;
      for (std::size_t t = 0; t < warped.size(); ++t) {
        if (warped[t].weight(y, x) > 0.0) {
          const double d = warped[t].depth(y, x);
          var += tw.weights[t] * (d - mean) * (d - mean);
          global_min = std::min(global_min, d);
          global_max = std::max(global_max, d);
        }
      }
      const double spread = std::max({std::sqrt(var / wsum), options.s_min, options.s_min_relative * mean});
      out.near(y, x) = std::max(options.epsilon, mean - spread);
      out.far(y, x) = std::max(out.near(y, x), mean + spread);
      out.valid(y, x) = 1;
    }
  }
  if (!std::isfinite(global_min)) throw ComputeError("aggregate_ray_range: no frame contributes to any pixel");

  // Grow the filled region one ring at a time from averaged valid neighbors.
  Mask filled = out.valid;
  for (int pass = 0; pass < options.max_fill_passes; ++pass) {
    Mask next = filled;
    bool changed = false;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (filled(y, x)) continue;
        double n = 0.0, lo = 0.0, hi = 0.0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (filled.contains(y + dy, x + dx) && filled(y + dy, x + dx)) {
              lo += out.near(y + dy, x + dx);
              hi += out.far(y + dy, x + dx);
              n += 1.0;
            }
          }
        }
        if (n > 0.0) {
          out.near(y, x) = lo / n;
          out.far(y, x) = hi / n;
          next(y, x) = 1;
          changed = true;
        }
      }
    }
    filled = std::move(next);
    if (!changed) break;
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!filled(y, x)) {
        out.near(y, x) = std::max(options.epsilon, global_min);
        out.far(y, x) = std::max(out.near(y, x), global_max);
      }
    }
  }
  return out;
}

}  // namespace rstab
