#include "rstab/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rstab/error.hpp"
#include "rstab/parallel.hpp"

namespace rstab {

namespace {

constexpr int kInverseFlowIterations = 20;

bool inside(const Grid<float>& map, SubPixel p) {
  constexpr double slack = 1e-6;
  return p.u >= -slack && p.v >= -slack && p.u <= map.width() - 1 + slack && p.v <= map.height() - 1 + slack;
}

// One step of the flow chain from frame s to s + dir.
bool flow_step(const Dataset& ds, int s, int dir, SubPixel p, SubPixel& next) {
  float f[2];
  if (dir > 0) {
    const auto& flow = ds.frames[s].flow_to_next;
    if (!flow || !sample_bilinear(*flow, p, f)) return false;
    next = {p.u + f[0], p.v + f[1]};
    return true;
  }
  if (const auto& back = ds.frames[s].flow_to_prev) {
    if (!sample_bilinear(*back, p, f)) return false;
    next = {p.u + f[0], p.v + f[1]};
    return true;
  }
  // Solve q + F_{s-1 -> s}(q) = p for q.
  const auto& fwd = ds.frames[s - 1].flow_to_next;
  if (!fwd) return false;
  SubPixel q = p;
  for (int it = 0; it < kInverseFlowIterations; ++it) {
    if (!sample_bilinear(*fwd, q, f)) return false;
    q = {p.u - f[0], p.v - f[1]};
  }
  next = q;
  return true;
}

}  // namespace

void RenderConfig::validate() const {
  if (window < 1) throw ContractViolation("render config: window must be >= 1");
  if (samples < 1 || even_samples < 1) throw ContractViolation("render config: sample counts must be >= 1");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ContractViolation("render config: gamma must be >= 0");
  if (!std::isfinite(lambda)) throw ContractViolation("render config: lambda must be finite");
  if (!(weight_epsilon >= 0.0) || weight_epsilon >= 1.0) {
    throw ContractViolation("render config: weight epsilon must be in [0, 1)");
  }
  if (!(range.s_min >= 0.0) || !(range.s_min_relative >= 0.0) || !(range.epsilon > 0.0)) {
    throw ContractViolation("render config: range floors must be >= 0");
  }
}

WindowSpec make_window(int center, int size, int frame_count, int samples) {
  if (size < 1 || samples < 1) throw ContractViolation("make_window: size and samples must be >= 1");
  if (center < 0 || center >= frame_count) throw ContractViolation("make_window: center outside the sequence");
  WindowSpec w;
  w.center = center;
  w.samples = samples;
  const int lo = std::max(0, center - (size - 1) / 2);
  const int hi = std::min(frame_count - 1, center + size / 2);
  for (int t = lo; t <= hi; ++t) w.members.push_back(t);
  return w;
}

std::vector<double> sample_depths(double near, double far, int count) {
  if (!(near > 0.0) || !(far >= near) || count < 1) {
    throw ContractViolation("sample_depths: need 0 < near <= far and count >= 1");
  }
  if (count == 1) return {0.5 * (near + far)};
  std::vector<double> d(count);
  for (int i = 0; i < count; ++i) d[i] = near + (far - near) * i / (count - 1);
  d.back() = far;
  return d;
}

void flow_chain(const Dataset& dataset, SubPixel xT, int T, int lo, int hi, SubPixel* positions,
                std::uint8_t* valid) {
  if (lo > T || hi < T || lo < 0 || hi >= static_cast<int>(dataset.frames.size())) {
    throw ContractViolation("flow_chain: range must contain T and lie inside the sequence");
  }
  std::fill(valid, valid + (hi - lo + 1), std::uint8_t{0});
  positions[T - lo] = xT;
  valid[T - lo] = inside(dataset.frames[T].image, xT) ? 1 : 0;
  for (int s = T; s < hi && valid[s - lo]; ++s) {
    valid[s + 1 - lo] = flow_step(dataset, s, +1, positions[s - lo], positions[s + 1 - lo]) ? 1 : 0;
  }
  for (int s = T; s > lo && valid[s - lo]; --s) {
    valid[s - 1 - lo] = flow_step(dataset, s, -1, positions[s - lo], positions[s - 1 - lo]) ? 1 : 0;
  }
}

FlowPoint flow_correct(const Dataset& dataset, SubPixel xT, int T, int t) {
  const int lo = std::min(T, t);
  const int hi = std::max(T, t);
  std::vector<SubPixel> pos(hi - lo + 1);
  std::vector<std::uint8_t> ok(hi - lo + 1);
  flow_chain(dataset, xT, T, lo, hi, pos.data(), ok.data());
  return {pos[t - lo], ok[t - lo] != 0};
}

bool blend_color(const float* colors, const float* features, const std::uint8_t* valid, const double* temporal,
                 int views, int channels, double gamma, double* color, double* weights) {
  color[0] = color[1] = color[2] = 0.0;
  if (weights) std::fill(weights, weights + views, 0.0);
  int n = 0;
  std::vector<double> mean(channels, 0.0);
  for (int v = 0; v < views; ++v) {
    if (!valid[v]) continue;
    ++n;
    for (int c = 0; c < channels; ++c) mean[c] += features[v * channels + c];
  }
  if (n == 0) return false;
  for (double& m : mean) m /= n;
  double total = 0.0;
  std::vector<double> w(views, 0.0);
  for (int v = 0; v < views; ++v) {
    if (!valid[v]) continue;
    double dist = 0.0;
    for (int c = 0; c < channels; ++c) {
      const double d = features[v * channels + c] - mean[c];
      dist += d * d;
    }
    w[v] = temporal[v] * std::exp(-gamma * dist);
    total += w[v];
  }
  if (!(total > 0.0)) {
    // Every participating view underflowed; fall back to temporal weights alone.
    for (int v = 0; v < views; ++v) {
      w[v] = valid[v] ? temporal[v] : 0.0;
      total += w[v];
    }
    if (!(total > 0.0)) {
      for (int v = 0; v < views; ++v) w[v] = valid[v] ? 1.0 : 0.0;
      total = n;
    }
  }
  for (int v = 0; v < views; ++v) {
    if (!valid[v]) continue;
    const double a = w[v] / total;
    if (weights) weights[v] = a;
    for (int c = 0; c < 3; ++c) color[c] += a * colors[v * 3 + c];
  }
  return true;
}

BlendResult blend_color(const std::vector<Eigen::Vector3f>& colors, const std::vector<std::vector<float>>& features,
                        const std::vector<bool>& valid, const std::vector<double>& temporal, double gamma) {
  const std::size_t views = colors.size();
  if (features.size() != views || valid.size() != views || temporal.size() != views) {
    throw ContractViolation("blend_color: per-view inputs differ in length");
  }
  const int channels = views ? static_cast<int>(features.front().size()) : 0;
  std::vector<float> packed_colors, packed_features;
  std::vector<std::uint8_t> flags;
  for (std::size_t v = 0; v < views; ++v) {
    if (static_cast<int>(features[v].size()) != channels) {
      throw ContractViolation("blend_color: views differ in channel count");
    }
    packed_colors.insert(packed_colors.end(), colors[v].data(), colors[v].data() + 3);
    packed_features.insert(packed_features.end(), features[v].begin(), features[v].end());
    flags.push_back(valid[v] ? 1 : 0);
  }
  BlendResult r;
  r.weights.assign(views, 0.0);
  r.empty = !blend_color(packed_colors.data(), packed_features.data(), flags.data(), temporal.data(),
                         static_cast<int>(views), channels, gamma, r.color.data(), r.weights.data());
  return r;
}

double composite(const double* sigma, const double* colors, int count, double* color, double* weights,
                 double* transmittance) {
  color[0] = color[1] = color[2] = 0.0;
  double optical = 0.0;
  double total = 0.0;
  for (int i = 0; i < count; ++i) {
    if (!(sigma[i] >= 0.0)) throw ContractViolation("composite: densities must be >= 0");
    const double a = std::exp(-optical);
    const double w = a * -std::expm1(-sigma[i]);
    if (transmittance) transmittance[i] = a;
    if (weights) weights[i] = w;
    for (int c = 0; c < 3; ++c) color[c] += w * colors[3 * i + c];
    total += w;
    optical += sigma[i];
  }
  return total;
}

CompositeResult composite(const std::vector<double>& sigma, const std::vector<Eigen::Vector3d>& colors) {
  if (sigma.size() != colors.size()) throw ContractViolation("composite: sigma and colors differ in length");
  CompositeResult r;
  const int n = static_cast<int>(sigma.size());
  std::vector<double> packed(3 * sigma.size());
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) packed[3 * i + c] = colors[i][c];
  }
  r.weights.resize(n);
  r.transmittance.resize(n);
  r.weight = composite(sigma.data(), packed.data(), n, r.color.data(), r.weights.data(), r.transmittance.data());
  return r;
}

std::vector<double> RenderContext::depths_at(int y, int x) const {
  const RenderConfig& cfg = renderer_->config_;
  if (ranges_) return sample_depths(ranges_->near(y, x), ranges_->far(y, x), window_.samples);
  return sample_depths(renderer_->global_near_, renderer_->global_far_, cfg.even_samples);
}

void RenderContext::gather(SubPixel x, const std::vector<double>& depths, RaySamples& out,
                           Eigen::Index column) const {
  const StabilizedRenderer& r = *renderer_;
  const Dataset& ds = *r.dataset_;
  const int channels = r.channels_;
  const int views = static_cast<int>(window_.members.size());
  const int n = static_cast<int>(depths.size());
  if (out.inputs.rows() != 2 * channels || out.inputs.cols() < column + n) {
    throw ContractViolation("RenderContext::gather: output batch too small");
  }
  if (static_cast<Eigen::Index>(out.empty.size()) < column + n) out.empty.resize(column + n);

  const int lo = window_.members.front();
  const int hi = window_.members.back();
  const int center = window_.center;
  const int span_lo = std::min(lo, center);
  const int span_hi = std::max(hi, center);
  std::vector<float> feats(static_cast<std::size_t>(views) * channels);
  std::vector<float> cols(static_cast<std::size_t>(views) * 3);
  std::vector<std::uint8_t> ok(views);
  std::vector<SubPixel> chain(span_hi - span_lo + 1);
  std::vector<std::uint8_t> chain_ok(span_hi - span_lo + 1);
  const Eigen::Vector3d ray = to_member_.front().ray(x);

  for (int s = 0; s < n; ++s) {
    const double d = depths[s];
    bool have_chain = false;
    if (color_correction_) {
      const Projection pc = to_center_->from_ray(ray, d);
      if (pc.valid) {
        flow_chain(ds, pc.pixel, center, span_lo, span_hi, chain.data(), chain_ok.data());
        have_chain = true;
      }
    }
    for (int v = 0; v < views; ++v) {
      const int t = window_.members[v];
      const Projection p = to_member_[v].from_ray(ray, d);
      float* f = feats.data() + static_cast<std::size_t>(v) * channels;
      float* c = cols.data() + static_cast<std::size_t>(v) * 3;
      if (!p.valid || !sample_bilinear(r.features_[t], p.pixel, f)) {
        ok[v] = 0;
        continue;
      }
      SubPixel at = p.pixel;
      if (have_chain && chain_ok[t - span_lo]) at = chain[t - span_lo];
      ok[v] = sample_bilinear(ds.frames[t].image, at, c) ? 1 : 0;
    }
    double* in = out.inputs.col(column + s).data();
    const int used = aggregate_views(feats.data(), ok.data(), views, channels, in);
    double color[3];
    blend_color(cols.data(), feats.data(), ok.data(), temporal_.weights.data(), views, channels,
                r.config_.gamma, color);
    for (int c = 0; c < 3; ++c) out.colors(c, column + s) = color[c];
    out.empty[column + s] = used == 0 ? 1 : 0;
  }
}

StabilizedRenderer::StabilizedRenderer(const Dataset& dataset, const DensityModel& model, RenderConfig config,
                                       const FeatureExtractor* extractor)
    : dataset_(&dataset), model_(&model), config_(std::move(config)) {
  config_.validate();
  dataset.validate();
  const HandcraftedExtractor fallback;
  const FeatureExtractor& fx = extractor ? *extractor : fallback;
  channels_ = fx.channels();
  if (model.channels() != channels_) {
    throw ContractViolation("density model expects " + std::to_string(model.channels()) +
                            " feature channels but the extractor produces " + std::to_string(channels_));
  }
  features_.reserve(dataset.frames.size());
  for (const FrameBundle& f : dataset.frames) features_.push_back(fx.extract(f.image));
  global_near_ = std::numeric_limits<double>::infinity();
  global_far_ = 0.0;
  for (const FrameBundle& f : dataset.frames) {
    for (float d : f.depth.data()) {
      global_near_ = std::min(global_near_, static_cast<double>(d));
      global_far_ = std::max(global_far_, static_cast<double>(d));
    }
  }
}

RayRangeMap StabilizedRenderer::ray_ranges(const Pose& target, const WindowSpec& window) const {
  const Dataset& ds = *dataset_;
  std::vector<WarpedDepth> warped;
  warped.reserve(window.members.size());
  for (int t : window.members) {
    const auto samples = forward_warp_depth(ds.frames[t].depth, ds.frames[t].pose, target, ds.intrinsics);
    warped.push_back(splat(samples, ds.height(), ds.width(), config_.soft_zbuffer));
  }
  const TemporalWeights tw = temporal_weights(window.members, window.center, config_.lambda, config_.literal_weights);
  return aggregate_ray_range(warped, tw, config_.range);
}

RenderContext StabilizedRenderer::prepare(const Pose& target, const WindowSpec& window,
                                          std::optional<bool> color_correction) const {
  if (window.members.empty()) throw ContractViolation("prepare: empty window");
  const int n = static_cast<int>(dataset_->frames.size());
  if (window.center < 0 || window.center >= n || window.members.front() < 0 || window.members.back() >= n ||
      !std::is_sorted(window.members.begin(), window.members.end())) {
    throw ContractViolation("prepare: window members outside the sequence");
  }
  RenderContext ctx;
  ctx.renderer_ = this;
  ctx.target_ = target;
  ctx.window_ = window;
  ctx.color_correction_ = color_correction.value_or(config_.color_correction);
  ctx.temporal_ = temporal_weights(window.members, window.center, config_.lambda, config_.literal_weights);
  for (int t : window.members) ctx.to_member_.emplace_back(target, dataset_->frames[t].pose, dataset_->intrinsics);
  ctx.to_center_.emplace(target, dataset_->frames[window.center].pose, dataset_->intrinsics);
  if (config_.adaptive_range) ctx.ranges_ = ray_ranges(target, window);
  return ctx;
}

PixelResult StabilizedRenderer::render_pixel(const RenderContext& context, int y, int x) const {
  const std::vector<double> depths = context.depths_at(y, x);
  const int n = static_cast<int>(depths.size());
  RaySamples rs{Eigen::MatrixXd(2 * channels_, n), Eigen::Matrix3Xd(3, n), {}};
  context.gather({static_cast<double>(x), static_cast<double>(y)}, depths, rs);
  Eigen::VectorXd sigma;
  model_->evaluate(rs.inputs, sigma);
  for (int i = 0; i < n; ++i) {
    if (rs.empty[i]) sigma[i] = 0.0;
  }
  PixelResult out;
  Eigen::Vector3d color;
  out.weight = composite(sigma.data(), rs.colors.data(), n, color.data());
  if (out.weight > config_.weight_epsilon) {
    out.color = (color / out.weight).cwiseMax(0.0).cwiseMin(1.0);
    out.valid = true;
  }
  return out;
}

RenderedFrame StabilizedRenderer::render_frame(const RenderContext& context) const {
  const int h = dataset_->height();
  const int w = dataset_->width();
  RenderedFrame out{Image(h, w, 3), Grid<double>(h, w, 1), Mask(h, w, 1)};
  parallel_for(h, resolve_threads(config_.threads), [&](int y) {
    std::vector<std::vector<double>> depths(w);
    Eigen::Index total = 0;
    for (int x = 0; x < w; ++x) {
      depths[x] = context.depths_at(y, x);
      total += static_cast<Eigen::Index>(depths[x].size());
    }
    RaySamples rs{Eigen::MatrixXd(2 * channels_, total), Eigen::Matrix3Xd(3, total), {}};
    Eigen::Index col = 0;
    for (int x = 0; x < w; ++x) {
      context.gather({static_cast<double>(x), static_cast<double>(y)}, depths[x], rs, col);
      col += static_cast<Eigen::Index>(depths[x].size());
    }
    Eigen::VectorXd sigma;
    model_->evaluate(rs.inputs, sigma);
    col = 0;
    for (int x = 0; x < w; ++x) {
      const int n = static_cast<int>(depths[x].size());
      for (int i = 0; i < n; ++i) {
        if (rs.empty[col + i]) sigma[col + i] = 0.0;
      }
      double color[3];
      const double wsum = composite(sigma.data() + col, rs.colors.data() + 3 * col, n, color);
      out.weight(y, x) = wsum;
      if (wsum > config_.weight_epsilon) {
        for (int c = 0; c < 3; ++c) out.image(y, x, c) = static_cast<float>(std::clamp(color[c] / wsum, 0.0, 1.0));
        out.valid(y, x) = 1;
      } else {
        for (int c = 0; c < 3; ++c) out.image(y, x, c) = 0.5f;
      }
      col += n;
    }
  });
  return out;
}

RenderedFrame StabilizedRenderer::render_frame(const Pose& target, int center) const {
  if (config_.blend_only) return render_blend_only(target, center);
  const WindowSpec window =
      make_window(center, config_.window, static_cast<int>(dataset_->frames.size()), config_.samples);
  return render_frame(prepare(target, window));
}

RenderedFrame StabilizedRenderer::render_blend_only(const Pose& target, int center) const {
  const Dataset& ds = *dataset_;
  const int h = ds.height();
  const int w = ds.width();
  const WindowSpec window = make_window(center, config_.window, static_cast<int>(ds.frames.size()), 1);
  Grid<double> sum(h, w, 3);
  Grid<double> count(h, w, 1);
  for (int t : window.members) {
    const FrameBundle& f = ds.frames[t];
    const CameraTransfer transfer(f.pose, target, ds.intrinsics);
    Grid<double> acc(h, w, 3);
    Grid<double> mass(h, w, 1);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const Projection p = transfer({static_cast<double>(x), static_cast<double>(y)}, f.depth(y, x));
        if (!p.valid) continue;
        const double fu = std::floor(p.pixel.u);
        const double fv = std::floor(p.pixel.v);
        if (fu < -1.0 || fv < -1.0 || fu > w || fv > h) continue;
        const double du = p.pixel.u - fu;
        const double dv = p.pixel.v - fv;
        for (int j = 0; j < 2; ++j) {
          for (int i = 0; i < 2; ++i) {
            const int xx = static_cast<int>(fu) + i;
            const int yy = static_cast<int>(fv) + j;
            if (!mass.contains(yy, xx)) continue;
            const double wd = (i ? du : 1.0 - du) * (j ? dv : 1.0 - dv);
            mass(yy, xx) += wd;
            for (int c = 0; c < 3; ++c) acc(yy, xx, c) += wd * f.image(y, x, c);
          }
        }
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (mass(y, x) <= config_.weight_epsilon) continue;
        for (int c = 0; c < 3; ++c) sum(y, x, c) += acc(y, x, c) / mass(y, x);
        count(y, x) += 1.0;
      }
    }
  }
  RenderedFrame out{Image(h, w, 3, 0.5f), Grid<double>(h, w, 1), Mask(h, w, 1)};
  const double members = static_cast<double>(window.members.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (count(y, x) == 0.0) continue;
      for (int c = 0; c < 3; ++c) {
        out.image(y, x, c) = static_cast<float>(std::clamp(sum(y, x, c) / count(y, x), 0.0, 1.0));
      }
      out.weight(y, x) = count(y, x) / members;
      out.valid(y, x) = 1;
    }
  }
  return out;
}

}  // namespace rstab
