#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace rstab {

// Per-sample density from aggregated multi-view statistics. Inputs are packed
// column-wise: one column of length 2C per sample.
class DensityModel {
 public:
  virtual ~DensityModel() = default;
  virtual int channels() const = 0;
  virtual std::string name() const = 0;
  virtual void evaluate(const Eigen::MatrixXd& inputs, Eigen::VectorXd& sigma) const = 0;
};

// Writes [mean, population variance] over the valid views into out (length
// 2C) and returns the number of valid views. With no valid views out is zeroed
// and the caller must treat the sample as empty (sigma = 0).
int aggregate_views(const float* features, const std::uint8_t* valid, int views, int channels, double* out);
Eigen::VectorXd aggregate_views(const std::vector<std::vector<float>>& features, const std::vector<bool>& valid);

// 2C -> hidden -> hidden -> 1 perceptron, ELU hidden activations and a
// softplus output. Parameters live in one flat vector in the order
// W1, b1, W2, b2, W3, b3 with column-major weight matrices.
class DensityHead final : public DensityModel {
 public:
  struct Cache {
    Eigen::MatrixXd input, z1, a1, z2, a2;
    Eigen::RowVectorXd z3;
  };

  DensityHead(int channels, int hidden = 64);
  // Scaled-uniform initialization, deterministic in seed.
  static DensityHead initialized(int channels, int hidden, std::uint64_t seed);

  int channels() const override { return channels_; }
  int hidden() const { return hidden_; }
  int input_size() const { return 2 * channels_; }
  std::string name() const override { return "mlp"; }

  Eigen::VectorXd& parameters() { return params_; }
  const Eigen::VectorXd& parameters() const { return params_; }

  double forward(const Eigen::VectorXd& input) const;
  void evaluate(const Eigen::MatrixXd& inputs, Eigen::VectorXd& sigma) const override;
  Eigen::VectorXd forward(const Eigen::MatrixXd& inputs, Cache* cache) const;

  // Reverse mode for a cached batch: grad_params += J^T upstream; if
  // grad_inputs is non-null it receives d(sum upstream * sigma)/d(inputs).
  void backward(const Cache& cache, const Eigen::VectorXd& upstream, Eigen::VectorXd& grad_params,
                Eigen::MatrixXd* grad_inputs = nullptr) const;

  friend bool operator==(const DensityHead& a, const DensityHead& b) {
    return a.channels_ == b.channels_ && a.hidden_ == b.hidden_ && a.params_ == b.params_;
  }

 private:
  struct Views;
  Views views() const;

  int channels_;
  int hidden_;
  Eigen::VectorXd params_;
};

// Training-free fallback: sigma = scale * exp(-rate * mean(variance channels)).
class AnalyticDensity final : public DensityModel {
 public:
  explicit AnalyticDensity(int channels, double scale = 5.0, double rate = 10.0)
      : channels_(channels), scale_(scale), rate_(rate) {}
  int channels() const override { return channels_; }
  std::string name() const override { return "analytic"; }
  void evaluate(const Eigen::MatrixXd& inputs, Eigen::VectorXd& sigma) const override;

 private:
  int channels_;
  double scale_;
  double rate_;
};

// 16-byte header ("RSTD", u32 version, u32 C, u32 hidden) then float32
// little-endian parameters. Parameters are rounded to float on save.
std::vector<unsigned char> serialize_head(const DensityHead& head);
DensityHead deserialize_head(const std::vector<unsigned char>& bytes, const std::string& origin = "<memory>");
void save_head(const DensityHead& head, const std::filesystem::path& path);
DensityHead load_head(const std::filesystem::path& path);
// Rounds every parameter through float so a save/load round trip is exact.
void snap_to_float(DensityHead& head);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam(Eigen::Index size, AdamConfig config = {});
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double learning_rate);
  long steps() const { return t_; }

 private:
  AdamConfig config_;
  Eigen::VectorXd m_, v_;
  long t_ = 0;
};

struct GradcheckReport {
  int trials = 0;
  int checked = 0;              // scalar derivatives compared
  double max_relative_error = 0.0;
};

// Central differences (step h) on seeded random heads, inputs and upstream
// weights. Relative error is |a - n| / max(|a| + |n|, floor).
GradcheckReport gradcheck_head(int trials, std::uint64_t seed, int channels = 11, int hidden = 64, double h = 1e-4,
                               int params_per_trial = 96, double floor = 1e-6);

}  // namespace rstab
