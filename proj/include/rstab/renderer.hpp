#pragma once

#include <optional>
#include <vector>

#include <Eigen/Core>

#include "rstab/dataset.hpp"
#include "rstab/density.hpp"
#include "rstab/features.hpp"
#include "rstab/rayrange.hpp"

namespace rstab {

struct RenderConfig {
  int window = 13;
  int samples = 3;              // L, depths per ray inside the adaptive range
  double lambda = 0.5;
  bool literal_weights = false;  // exp(lambda (t - T)) instead of exp(-lambda |t - T|)
  double gamma = 1.0;           // feature-affinity sharpness of the color blend
  double weight_epsilon = 1e-3;  // minimum accumulated weight for a valid pixel
  RayRangeOptions range;
  bool soft_zbuffer = false;
  bool adaptive_range = true;  // false: even sampling over the global depth range
  int even_samples = 128;
  bool color_correction = true;
  bool blend_only = false;
  int threads = 0;  // 0 resolves through resolve_threads

  void validate() const;
};

// Frame indices here are 0-based positions in the dataset.
struct WindowSpec {
  int center = 0;
  std::vector<int> members;  // ascending
  int samples = 3;
};

// Members T - size/2 .. T + size/2 intersected with [0, frame_count).
WindowSpec make_window(int center, int size, int frame_count, int samples);

// Endpoint-inclusive uniform grid; a single sample sits at the midpoint.
std::vector<double> sample_depths(double near, double far, int count);

struct FlowPoint {
  SubPixel pixel;
  bool valid = false;
};

// Follows consecutive-frame flows from frame T to frame t with bilinear
// resampling. Backward steps use flow_to_prev when present, otherwise they
// invert the previous frame's forward flow by fixed-point iteration.
FlowPoint flow_correct(const Dataset& dataset, SubPixel xT, int T, int t);

// Fills positions[t - lo] for every t in [lo, hi] (which must contain T).
void flow_chain(const Dataset& dataset, SubPixel xT, int T, int lo, int hi, SubPixel* positions,
                std::uint8_t* valid);

// Convex color blend over participating views: w_t ~ temporal_t *
// exp(-gamma |f_t - mean f|^2), the mean taken over participating views.
// Returns false (outputs zeroed) when no view participates.
bool blend_color(const float* colors, const float* features, const std::uint8_t* valid, const double* temporal,
                 int views, int channels, double gamma, double* color, double* weights = nullptr);

struct BlendResult {
  Eigen::Vector3d color = Eigen::Vector3d::Zero();
  std::vector<double> weights;
  bool empty = true;
};
BlendResult blend_color(const std::vector<Eigen::Vector3f>& colors, const std::vector<std::vector<float>>& features,
                        const std::vector<bool>& valid, const std::vector<double>& temporal, double gamma);

// Front-to-back alpha compositing with w_i = A_i (1 - exp(-sigma_i)),
// A_i = exp(-sum_{j<i} sigma_j). Returns the total weight W; color is the
// un-normalized sum of w_i c_i. weights and transmittance are optional outputs.
double composite(const double* sigma, const double* colors, int count, double* color, double* weights = nullptr,
                 double* transmittance = nullptr);

struct CompositeResult {
  Eigen::Vector3d color = Eigen::Vector3d::Zero();
  double weight = 0.0;
  std::vector<double> weights;
  std::vector<double> transmittance;
};
CompositeResult composite(const std::vector<double>& sigma, const std::vector<Eigen::Vector3d>& colors);

struct PixelResult {
  Eigen::Vector3d color = Eigen::Vector3d::Constant(0.5);
  double weight = 0.0;
  bool valid = false;
};

struct RenderedFrame {
  Image image;
  Grid<double> weight;
  Mask valid;
};

// Per-ray samples ready for the density model: one aggregated 2C input column
// and one blended color per depth; empty samples have no participating view.
struct RaySamples {
  Eigen::MatrixXd inputs;
  Eigen::Matrix3Xd colors;
  std::vector<std::uint8_t> empty;
};

class StabilizedRenderer;

// Everything shared by the rays of one target view.
class RenderContext {
 public:
  const WindowSpec& window() const { return window_; }
  const TemporalWeights& temporal() const { return temporal_; }
  const std::optional<RayRangeMap>& ranges() const { return ranges_; }
  const Pose& target() const { return target_; }

  // Depths to sample along the ray of pixel (y, x) under the configured strategy.
  std::vector<double> depths_at(int y, int x) const;
  // Gathers features and colors for every depth along the ray through x.
  void gather(SubPixel x, const std::vector<double>& depths, RaySamples& out, Eigen::Index column = 0) const;

 private:
  friend class StabilizedRenderer;
  RenderContext() = default;

  const StabilizedRenderer* renderer_ = nullptr;
  Pose target_;
  WindowSpec window_;
  TemporalWeights temporal_;
  std::vector<CameraTransfer> to_member_;
  std::optional<CameraTransfer> to_center_;
  std::optional<RayRangeMap> ranges_;
  bool color_correction_ = true;
};

class StabilizedRenderer {
 public:
  // Feature maps are computed here with the given extractor (handcrafted when null).
  StabilizedRenderer(const Dataset& dataset, const DensityModel& model, RenderConfig config,
                     const FeatureExtractor* extractor = nullptr);

  const Dataset& dataset() const { return *dataset_; }
  const RenderConfig& config() const { return config_; }
  const std::vector<FeatureMap>& features() const { return features_; }
  int channels() const { return channels_; }
  double global_near() const { return global_near_; }
  double global_far() const { return global_far_; }

  // Builds the adaptive range map for a target view over its window.
  RayRangeMap ray_ranges(const Pose& target, const WindowSpec& window) const;

  // color_correction overrides the configured flag (training gathers geometrically).
  RenderContext prepare(const Pose& target, const WindowSpec& window,
                        std::optional<bool> color_correction = std::nullopt) const;

  PixelResult render_pixel(const RenderContext& context, int y, int x) const;
  RenderedFrame render_frame(const Pose& target, int center) const;
  RenderedFrame render_frame(const RenderContext& context) const;

  // Average of the window's frames forward-splatted into the target view.
  RenderedFrame render_blend_only(const Pose& target, int center) const;

 private:
  friend class RenderContext;

  const Dataset* dataset_;
  const DensityModel* model_;
  RenderConfig config_;
  std::vector<FeatureMap> features_;
  int channels_ = 0;
  double global_near_ = 0.0;
  double global_far_ = 0.0;
};

}  // namespace rstab
