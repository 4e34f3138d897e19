#include "rstab/density.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <random>

#include "rstab/error.hpp"
#include "rstab/formats.hpp"

namespace rstab {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using ConstMatMap = Eigen::Map<const MatrixXd>;
using ConstVecMap = Eigen::Map<const VectorXd>;

constexpr char kMagic[4] = {'R', 'S', 'T', 'D'};
constexpr std::uint32_t kHeadVersion = 1;

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }
double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}
double elu(double z) { return z > 0.0 ? z : std::expm1(z); }
double elu_grad(double z) { return z > 0.0 ? 1.0 : std::exp(z); }

struct Offsets {
  Eigen::Index w1, b1, w2, b2, w3, b3, total;
};

Offsets offsets(int in, int hidden) {
  Offsets o{};
  o.w1 = 0;
  o.b1 = o.w1 + static_cast<Eigen::Index>(hidden) * in;
  o.w2 = o.b1 + hidden;
  o.b2 = o.w2 + static_cast<Eigen::Index>(hidden) * hidden;
  o.w3 = o.b2 + hidden;
  o.b3 = o.w3 + hidden;
  o.total = o.b3 + 1;
  return o;
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

}  // namespace

int aggregate_views(const float* features, const std::uint8_t* valid, int views, int channels, double* out) {
  std::fill(out, out + 2 * channels, 0.0);
  // Values are summed in sorted order so the statistics do not depend on the
  // order in which views are listed.
  thread_local std::vector<double> column;
  column.clear();
  int n = 0;
  for (int v = 0; v < views; ++v) n += valid[v] ? 1 : 0;
  if (n == 0) return 0;
  for (int c = 0; c < channels; ++c) {
    column.clear();
    for (int v = 0; v < views; ++v) {
      if (valid[v]) column.push_back(features[static_cast<std::ptrdiff_t>(v) * channels + c]);
    }
    std::sort(column.begin(), column.end());
    double sum = 0.0;
    for (double x : column) sum += x;
    const double mean = sum / n;
    double sq = 0.0;
    for (double x : column) sq += (x - mean) * (x - mean);
    out[c] = mean;
    out[channels + c] = sq / n;
  }
  return n;
}

VectorXd aggregate_views(const std::vector<std::vector<float>>& features, const std::vector<bool>& valid) {
  if (features.size() != valid.size()) throw ContractViolation("aggregate_views: features and validity differ");
  const int channels = features.empty() ? 0 : static_cast<int>(features.front().size());
  std::vector<float> packed;
  std::vector<std::uint8_t> flags;
  for (std::size_t v = 0; v < features.size(); ++v) {
    if (static_cast<int>(features[v].size()) != channels) {
      throw ContractViolation("aggregate_views: views differ in channel count");
    }
    packed.insert(packed.end(), features[v].begin(), features[v].end());
    flags.push_back(valid[v] ? 1 : 0);
  }
  VectorXd out(2 * channels);
  aggregate_views(packed.data(), flags.data(), static_cast<int>(features.size()), channels, out.data());
  return out;
}

struct DensityHead::Views {
  ConstMatMap w1;
  ConstVecMap b1;
  ConstMatMap w2;
  ConstVecMap b2;
  ConstMatMap w3;
  double b3;
};

DensityHead::DensityHead(int channels, int hidden) : channels_(channels), hidden_(hidden) {
  if (channels < 1 || hidden < 1) throw ContractViolation("DensityHead: channels and hidden width must be >= 1");
  params_ = VectorXd::Zero(offsets(2 * channels, hidden).total);
}

DensityHead DensityHead::initialized(int channels, int hidden, std::uint64_t seed) {
  DensityHead head(channels, hidden);
  const int in = 2 * channels;
  const Offsets o = offsets(in, hidden);
  std::mt19937_64 rng(seed);
  auto fill = [&](Eigen::Index begin, Eigen::Index count, int fan_in) {
    const double bound = std::sqrt(3.0 / fan_in);
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index i = 0; i < count; ++i) head.params_[begin + i] = static_cast<float>(u(rng));
  };
  fill(o.w1, o.b1 - o.w1, in);
  fill(o.w2, o.b2 - o.w2, hidden);
  fill(o.w3, o.b3 - o.w3, hidden);
  return head;
}

DensityHead::Views DensityHead::views() const {
  const int in = input_size();
  const Offsets o = offsets(in, hidden_);
  const double* p = params_.data();
  return Views{ConstMatMap(p + o.w1, hidden_, in), ConstVecMap(p + o.b1, hidden_),
               ConstMatMap(p + o.w2, hidden_, hidden_), ConstVecMap(p + o.b2, hidden_),
               ConstMatMap(p + o.w3, 1, hidden_), p[o.b3]};
}

VectorXd DensityHead::forward(const MatrixXd& inputs, Cache* cache) const {
  if (inputs.rows() != input_size()) throw ContractViolation("DensityHead: input size mismatch");
  const Views v = views();
  MatrixXd z1 = (v.w1 * inputs).colwise() + v.b1;
  MatrixXd a1 = z1.unaryExpr(&elu);
  MatrixXd z2 = (v.w2 * a1).colwise() + v.b2;
  MatrixXd a2 = z2.unaryExpr(&elu);
  Eigen::RowVectorXd z3 = (v.w3 * a2).array() + v.b3;
  VectorXd sigma = z3.transpose().unaryExpr(&softplus);
  if (cache) {
    cache->input = inputs;
    cache->z1 = std::move(z1);
    cache->a1 = std::move(a1);
    cache->z2 = std::move(z2);
    cache->a2 = std::move(a2);
    cache->z3 = std::move(z3);
  }
  return sigma;
}

double DensityHead::forward(const VectorXd& input) const { return forward(MatrixXd(input), nullptr)[0]; }

void DensityHead::evaluate(const MatrixXd& inputs, VectorXd& sigma) const { sigma = forward(inputs, nullptr); }

void DensityHead::backward(const Cache& cache, const VectorXd& upstream, VectorXd& grad_params,
                           MatrixXd* grad_inputs) const {
  const Eigen::Index n = cache.input.cols();
  if (upstream.size() != n) throw ContractViolation("DensityHead::backward: upstream size mismatch");
  if (grad_params.size() != params_.size()) grad_params = VectorXd::Zero(params_.size());
  const Views v = views();
  const Offsets o = offsets(input_size(), hidden_);
  double* g = grad_params.data();

  const Eigen::RowVectorXd d3 = upstream.transpose().array() * cache.z3.unaryExpr(&sigmoid).array();
  Eigen::Map<MatrixXd>(g + o.w3, 1, hidden_) += d3 * cache.a2.transpose();
  g[o.b3] += d3.sum();
  const MatrixXd d2 = (v.w3.transpose() * d3).array() * cache.z2.unaryExpr(&elu_grad).array();
  Eigen::Map<MatrixXd>(g + o.w2, hidden_, hidden_) += d2 * cache.a1.transpose();
  Eigen::Map<VectorXd>(g + o.b2, hidden_) += d2.rowwise().sum();
  const MatrixXd d1 = (v.w2.transpose() * d2).array() * cache.z1.unaryExpr(&elu_grad).array();
  Eigen::Map<MatrixXd>(g + o.w1, hidden_, input_size()) += d1 * cache.input.transpose();
  Eigen::Map<VectorXd>(g + o.b1, hidden_) += d1.rowwise().sum();
  if (grad_inputs) *grad_inputs = v.w1.transpose() * d1;
}

void AnalyticDensity::evaluate(const MatrixXd& inputs, VectorXd& sigma) const {
  if (inputs.rows() != 2 * channels_) throw ContractViolation("AnalyticDensity: input size mismatch");
  sigma.resize(inputs.cols());
  for (Eigen::Index i = 0; i < inputs.cols(); ++i) {
    sigma[i] = scale_ * std::exp(-rate_ * inputs.col(i).tail(channels_).mean());
  }
}

void snap_to_float(DensityHead& head) {
  for (double& p : head.parameters()) p = static_cast<double>(static_cast<float>(p));
}

std::vector<unsigned char> serialize_head(const DensityHead& head) {
  std::vector<unsigned char> out(kMagic, kMagic + 4);
  put_u32(out, kHeadVersion);
  put_u32(out, static_cast<std::uint32_t>(head.channels()));
  put_u32(out, static_cast<std::uint32_t>(head.hidden()));
  for (double p : head.parameters()) {
    const float f = static_cast<float>(p);
    if (!std::isfinite(f)) throw ComputeError("serialize_head: non-finite parameter");
    put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

DensityHead deserialize_head(const std::vector<unsigned char>& bytes, const std::string& origin) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw IoError("\"" + origin + "\" is not a density head file (bad magic)");
  }
  const std::uint32_t version = get_u32(bytes.data() + 4);
  const std::uint32_t channels = get_u32(bytes.data() + 8);
  const std::uint32_t hidden = get_u32(bytes.data() + 12);
  if (version != kHeadVersion) {
    throw IoError("\"" + origin + "\" has unsupported head version " + std::to_string(version));
  }
  if (channels < 1 || channels > 4096 || hidden < 1 || hidden > 4096) {
    throw IoError("\"" + origin + "\" has implausible head dimensions");
  }
  DensityHead head(static_cast<int>(channels), static_cast<int>(hidden));
  const std::size_t expected = 16 + 4 * static_cast<std::size_t>(head.parameters().size());
  if (bytes.size() != expected) {
    throw IoError("\"" + origin + "\" has " + std::to_string(bytes.size()) + " bytes, expected " +
                  std::to_string(expected));
  }
  for (Eigen::Index i = 0; i < head.parameters().size(); ++i) {
    const float f = std::bit_cast<float>(get_u32(bytes.data() + 16 + 4 * i));
    if (!std::isfinite(f)) throw IoError("\"" + origin + "\" contains a non-finite parameter");
    head.parameters()[i] = f;
  }
  return head;
}

void save_head(const DensityHead& head, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_head(head));
}

DensityHead load_head(const std::filesystem::path& path) {
  return deserialize_head(read_file_bytes(path), path.string());
}

Adam::Adam(Eigen::Index size, AdamConfig config)
    : config_(config), m_(VectorXd::Zero(size)), v_(VectorXd::Zero(size)) {}

void Adam::step(VectorXd& params, const VectorXd& grad, double learning_rate) {
  if (params.size() != m_.size() || grad.size() != m_.size()) throw ContractViolation("Adam: size mismatch");
  ++t_;
  m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * grad;
  v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  params.array() -= learning_rate * (m_.array() / c1) / ((v_.array() / c2).sqrt() + config_.epsilon);
}

GradcheckReport gradcheck_head(int trials, std::uint64_t seed, int channels, int hidden, double h,
                               int params_per_trial, double floor) {
  GradcheckReport report;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int batch = 3;
  auto rel = [floor](double a, double n) { return std::abs(a - n) / std::max(std::abs(a) + std::abs(n), floor); };
  for (int trial = 0; trial < trials; ++trial) {
    DensityHead head = DensityHead::initialized(channels, hidden, rng());
    // Non-zero biases so ELU is exercised on both sides of the kink.
    for (double& p : head.parameters()) p += 0.05 * normal(rng);
    MatrixXd x(head.input_size(), batch);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
    VectorXd up(batch);
    for (Eigen::Index i = 0; i < batch; ++i) up[i] = normal(rng);

    DensityHead::Cache cache;
    head.forward(x, &cache);
    VectorXd grad = VectorXd::Zero(head.parameters().size());
    MatrixXd grad_x;
    head.backward(cache, up, grad, &grad_x);
    auto loss = [&](const DensityHead& hd, const MatrixXd& in) { return up.dot(hd.forward(in, nullptr)); };

    std::uniform_int_distribution<Eigen::Index> pick(0, head.parameters().size() - 1);
    for (int k = 0; k < params_per_trial; ++k) {
      const Eigen::Index i = pick(rng);
      const double saved = head.parameters()[i];
      head.parameters()[i] = saved + h;
      const double fp = loss(head, x);
      head.parameters()[i] = saved - h;
      const double fm = loss(head, x);
      head.parameters()[i] = saved;
      report.max_relative_error = std::max(report.max_relative_error, rel(grad[i], (fp - fm) / (2.0 * h)));
      ++report.checked;
    }
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double saved = x.data()[i];
      x.data()[i] = saved + h;
      const double fp = loss(head, x);
      x.data()[i] = saved - h;
      const double fm = loss(head, x);
      x.data()[i] = saved;
      report.max_relative_error = std::max(report.max_relative_error, rel(grad_x.data()[i], (fp - fm) / (2.0 * h)));
      ++report.checked;
    }
    ++report.trials;
  }
  return report;
}

}  // namespace rstab
