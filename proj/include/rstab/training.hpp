#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "rstab/dataset.hpp"
#include "rstab/density.hpp"
#include "rstab/renderer.hpp"

namespace rstab {

struct TrainConfig {
  double learning_rate = 5e-4;
  int iterations = 5000;
  int batch_rays = 64;
  AdamConfig adam;
  double decay_rate = 0.5;  // learning-rate factor reached after decay_steps iterations
  int decay_steps = 5000;
  int rays_per_frame = 128;
  int samples_per_ray = 32;
  int window = 31;  // wider than rendering: depth only shows through parallax
  int hidden = 64;
  double lambda = 0.5;
  double gamma = 1.0;
  int log_every = 100;
  std::uint64_t seed = 7;
  int threads = 0;

  void validate() const;
};

struct LossPoint {
  int iteration = 0;
  double loss = 0.0;  // mean batch loss over the preceding log interval
};

struct TrainResult {
  DensityHead head;
  double initial_loss = 0.0;  // whole pool, before the first update
  double final_loss = 0.0;    // whole pool, after the last update
  double final_window_loss = 0.0;  // mean batch loss over the last log interval
  std::vector<LossPoint> curve;
  int rays = 0;
};

// Loss of one ray, (1/3) |C - target|^2 on the un-normalized composite C,
// and its gradient with respect to each density. Training on C rather than
// C / W rewards opaque rays, which the renderer's normalization relies on.
double ray_loss(const double* sigma, const double* colors, int count, const double* target, double* grad_sigma);

// Training rays: for every frame with at least one neighbor, pixels drawn at
// random are rendered at that frame's own pose from its neighbors only (the
// frame itself is held out) with even depth sampling and geometric color
// gathering. The held-out pixel color is the target.
struct RayPool {
  Eigen::MatrixXd inputs;   // 2C x (rays * samples)
  Eigen::Matrix3Xd colors;  // 3 x (rays * samples)
  std::vector<std::uint8_t> empty;
  Eigen::Matrix3Xd targets;  // 3 x rays
  int samples = 0;
  int rays() const { return static_cast<int>(targets.cols()); }
};

RayPool build_ray_pool(const Dataset& dataset, const TrainConfig& config);

// Mean ray loss over the pool.
double pool_loss(const DensityHead& head, const RayPool& pool);

// init, when given, must match the handcrafted channel count and config.hidden.
TrainResult train_density(const Dataset& dataset, const TrainConfig& config, const DensityHead* init = nullptr,
                          const std::function<void(const LossPoint&)>& progress = {});
TrainResult train_density(const RayPool& pool, const TrainConfig& config, const DensityHead* init = nullptr,
                          const std::function<void(const LossPoint&)>& progress = {});

}  // namespace rstab
