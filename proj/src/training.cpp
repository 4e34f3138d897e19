#include "rstab/training.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "rstab/error.hpp"
#include "rstab/parallel.hpp"

namespace rstab {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ContractViolation("train config: learning rate must be >= 0");
  }
  if (iterations < 0) throw ContractViolation("train config: iterations must be >= 0");
  if (batch_rays < 1) throw ContractViolation("train config: batch size must be >= 1");
  if (!(decay_rate > 0.0) || decay_steps < 1) throw ContractViolation("train config: invalid decay schedule");
  if (rays_per_frame < 1 || samples_per_ray < 1 || window < 2 || hidden < 1 || log_every < 1) {
    throw ContractViolation("train config: pool sizes must be positive and the window must hold a neighbor");
  }
}

double ray_loss(const double* sigma, const double* colors, int count, const double* target, double* grad_sigma) {
  std::vector<double> w(count), a(count);
  double c[3];
  composite(sigma, colors, count, c, w.data(), a.data());
  double g[3];
  double loss = 0.0;
  for (int j = 0; j < 3; ++j) {
    const double r = c[j] - target[j];
    loss += r * r;
    g[j] = 2.0 * r / 3.0;
  }
  // d w_i / d sigma_k is A_{k+1} for i = k and -w_i for i > k, so
  // dC/dsigma_k = A_{k+1} c_k - sum_{i>k} w_i c_i.
  double tail[3] = {0.0, 0.0, 0.0};
  for (int k = count - 1; k >= 0; --k) {
    const double a_next = a[k] * std::exp(-sigma[k]);
    double grad = 0.0;
    for (int j = 0; j < 3; ++j) grad += g[j] * (a_next * colors[3 * k + j] - tail[j]);
    grad_sigma[k] = grad;
    for (int j = 0; j < 3; ++j) tail[j] += w[k] * colors[3 * k + j];
  }
  return loss / 3.0;
}

RayPool build_ray_pool(const Dataset& dataset, const TrainConfig& config) {
  config.validate();
  dataset.validate();
  const int n = static_cast<int>(dataset.frames.size());
  if (n < 2) throw ContractViolation("training needs at least two frames");
  const int h = dataset.height();
  const int w = dataset.width();
  const AnalyticDensity placeholder(kHandcraftedChannels);
  RenderConfig rc;
  rc.window = config.window;
  rc.lambda = config.lambda;
  rc.gamma = config.gamma;
  rc.adaptive_range = false;
  rc.even_samples = config.samples_per_ray;
  rc.color_correction = false;
  rc.threads = config.threads;
  const StabilizedRenderer renderer(dataset, placeholder, rc);

  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<int> pick_y(0, h - 1), pick_x(0, w - 1);
  std::vector<std::vector<std::pair<int, int>>> pixels(n);
  for (int t = 0; t < n; ++t) {
    for (int r = 0; r < config.rays_per_frame; ++r) pixels[t].emplace_back(pick_y(rng), pick_x(rng));
  }

  const int s = config.samples_per_ray;
  const int channels = renderer.channels();
  const Eigen::Index rays = static_cast<Eigen::Index>(n) * config.rays_per_frame;
  RayPool pool;
  pool.samples = s;
  pool.inputs.resize(2 * channels, rays * s);
  pool.colors.resize(3, rays * s);
  pool.empty.assign(rays * s, 0);
  pool.targets.resize(3, rays);
  std::vector<std::uint8_t> keep(rays, 0);
  parallel_for(n, resolve_threads(config.threads), [&](int t) {
    WindowSpec window = make_window(t, config.window, n, s);
    window.members.erase(std::find(window.members.begin(), window.members.end(), t));
    const RenderContext ctx = renderer.prepare(dataset.frames[t].pose, window, false);
    RaySamples rs{Eigen::MatrixXd(2 * channels, s), Eigen::Matrix3Xd(3, s), {}};
    for (int r = 0; r < config.rays_per_frame; ++r) {
      const auto [y, x] = pixels[t][r];
      const Eigen::Index ray = static_cast<Eigen::Index>(t) * config.rays_per_frame + r;
      ctx.gather({static_cast<double>(x), static_cast<double>(y)}, ctx.depths_at(y, x), rs);
      pool.inputs.middleCols(ray * s, s) = rs.inputs;
      pool.colors.middleCols(ray * s, s) = rs.colors;
      std::copy(rs.empty.begin(), rs.empty.end(), pool.empty.begin() + ray * s);
      for (int c = 0; c < 3; ++c) pool.targets(c, ray) = dataset.frames[t].image(y, x, c);
      keep[ray] = std::count(rs.empty.begin(), rs.empty.end(), std::uint8_t{1}) < s ? 1 : 0;
    }
  });
  // Rays no neighbor sees carry no signal about density; drop them.
  Eigen::Index kept = 0;
  for (Eigen::Index r = 0; r < rays; ++r) {
    if (!keep[r]) continue;
    if (kept != r) {
      pool.inputs.middleCols(kept * s, s) = pool.inputs.middleCols(r * s, s).eval();
      pool.colors.middleCols(kept * s, s) = pool.colors.middleCols(r * s, s).eval();
      std::copy_n(pool.empty.begin() + r * s, s, pool.empty.begin() + kept * s);
      pool.targets.col(kept) = pool.targets.col(r).eval();
    }
    ++kept;
  }
  if (kept == 0) throw ComputeError("training: no pixel is visible from any neighboring frame");
  pool.inputs.conservativeResize(Eigen::NoChange, kept * s);
  pool.colors.conservativeResize(Eigen::NoChange, kept * s);
  pool.empty.resize(kept * s);
  pool.targets.conservativeResize(Eigen::NoChange, kept);
  return pool;
}

namespace {

double batch_loss(const DensityHead& head, const RayPool& pool, const std::vector<int>& rays, Eigen::VectorXd* grad) {
  const int s = pool.samples;
  const Eigen::Index cols = static_cast<Eigen::Index>(rays.size()) * s;
  Eigen::MatrixXd inputs(pool.inputs.rows(), cols);
  for (std::size_t i = 0; i < rays.size(); ++i) {
    inputs.middleCols(static_cast<Eigen::Index>(i) * s, s) = pool.inputs.middleCols(static_cast<Eigen::Index>(rays[i]) * s, s);
  }
  DensityHead::Cache cache;
  Eigen::VectorXd sigma = head.forward(inputs, grad ? &cache : nullptr);
  Eigen::VectorXd upstream = Eigen::VectorXd::Zero(cols);
  double loss = 0.0;
  std::vector<double> g(s);
  for (std::size_t i = 0; i < rays.size(); ++i) {
    const Eigen::Index base = static_cast<Eigen::Index>(rays[i]) * s;
    const Eigen::Index col = static_cast<Eigen::Index>(i) * s;
    for (int k = 0; k < s; ++k) {
      if (pool.empty[base + k]) sigma[col + k] = 0.0;
    }
    loss += ray_loss(sigma.data() + col, pool.colors.data() + 3 * base, s, pool.targets.col(rays[i]).data(),
                     g.data());
    for (int k = 0; k < s; ++k) {
      if (!pool.empty[base + k]) upstream[col + k] = g[k] / static_cast<double>(rays.size());
    }
  }
  if (grad) {
    grad->setZero(head.parameters().size());
    head.backward(cache, upstream, *grad);
  }
  return loss / static_cast<double>(rays.size());
}

}  // namespace

double pool_loss(const DensityHead& head, const RayPool& pool) {
  if (pool.rays() == 0) throw ContractViolation("pool_loss: empty pool");
  double total = 0.0;
  const int chunk = 512;
  for (int start = 0; start < pool.rays(); start += chunk) {
    std::vector<int> rays;
    for (int r = start; r < std::min(pool.rays(), start + chunk); ++r) rays.push_back(r);
    total += batch_loss(head, pool, rays, nullptr) * static_cast<double>(rays.size());
  }
  return total / pool.rays();
}

TrainResult train_density(const RayPool& pool, const TrainConfig& config, const DensityHead* init,
                          const std::function<void(const LossPoint&)>& progress) {
  config.validate();
  const int channels = static_cast<int>(pool.inputs.rows() / 2);
  TrainResult result{init ? *init : DensityHead::initialized(channels, config.hidden, config.seed ^ 0xd1b54a32d192ed03ull),
                     0.0, 0.0, 0.0, {}, pool.rays()};
  if (result.head.channels() != channels) throw ContractViolation("train: head channel count does not match the pool");
  snap_to_float(result.head);
  result.initial_loss = pool_loss(result.head, pool);
  if (!std::isfinite(result.initial_loss)) throw ComputeError("train: initial loss is not finite");
  result.curve.push_back({0, result.initial_loss});
  if (progress) progress(result.curve.back());

  Adam adam(result.head.parameters().size(), config.adam);
  std::mt19937_64 rng(config.seed + 1);
  std::uniform_int_distribution<int> pick(0, pool.rays() - 1);
  std::vector<int> batch(config.batch_rays);
  Eigen::VectorXd grad;
  double window_sum = 0.0;
  int window_count = 0;
  result.final_window_loss = result.initial_loss;
  for (int it = 1; it <= config.iterations; ++it) {
    for (int& r : batch) r = pick(rng);
    const double loss = batch_loss(result.head, pool, batch, &grad);
    if (!std::isfinite(loss) || !grad.allFinite()) {
      throw ComputeError("train: loss diverged at iteration " + std::to_string(it));
    }
    const double lr =
        config.learning_rate * std::pow(config.decay_rate, static_cast<double>(it - 1) / config.decay_steps);
    adam.step(result.head.parameters(), grad, lr);
    window_sum += loss;
    ++window_count;
    if (it % config.log_every == 0 || it == config.iterations) {
      result.final_window_loss = window_sum / window_count;
      result.curve.push_back({it, result.final_window_loss});
      if (progress) progress(result.curve.back());
      window_sum = 0.0;
      window_count = 0;
    }
  }
  snap_to_float(result.head);
  result.final_loss = pool_loss(result.head, pool);
  if (!std::isfinite(result.final_loss)) throw ComputeError("train: final loss is not finite");
  return result;
}

TrainResult train_density(const Dataset& dataset, const TrainConfig& config, const DensityHead* init,
                          const std::function<void(const LossPoint&)>& progress) {
  return train_density(build_ray_pool(dataset, config), config, init, progress);
}

}  // namespace rstab
