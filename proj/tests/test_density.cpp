#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "rstab/density.hpp"
#include "rstab/error.hpp"
#include "rstab/features.hpp"
#include "rstab/training.hpp"
#include "support.hpp"

using namespace rstab;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

std::vector<std::vector<float>> random_views(std::mt19937_64& rng, int views, int channels) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::vector<std::vector<float>> out(views, std::vector<float>(channels));
  for (auto& v : out) {
    for (float& x : v) x = n(rng);
  }
  return out;
}

double sigma_of(const DensityModel& model, const VectorXd& input) {
  VectorXd s;
  model.evaluate(input, s);
  return s[0];
}

// Tiny pool where opaque first samples reproduce the target exactly.
RayPool toy_pool(int rays, int samples, int channels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RayPool pool;
  pool.samples = samples;
  pool.inputs = MatrixXd::Zero(2 * channels, rays * samples);
  pool.colors = Eigen::Matrix3Xd::Zero(3, rays * samples);
  pool.empty.assign(rays * samples, 0);
  pool.targets = Eigen::Matrix3Xd::Zero(3, rays);
  for (int r = 0; r < rays; ++r) {
    const int hit = r % samples;
    for (int k = 0; k < samples; ++k) {
      const int col = r * samples + k;
      for (int c = 0; c < channels; ++c) {
        pool.inputs(c, col) = u(rng);
        pool.inputs(channels + c, col) = k == hit ? 0.0 : 0.2 + u(rng);
      }
      for (int j = 0; j < 3; ++j) pool.colors(j, col) = u(rng);
    }
    pool.targets.col(r) = pool.colors.col(r * samples + hit);
  }
  return pool;
}

}  // namespace

TEST_CASE("aggregate views: identical and mirrored views") {
  const std::vector<float> f = {0.5f, -1.0f, 2.0f};
  const VectorXd same = aggregate_views({f, f, f}, {true, true, true});
  for (int c = 0; c < 3; ++c) {
    CHECK(same[c] == doctest::Approx(f[c]));
    CHECK(same[3 + c] == 0.0);
  }
  const std::vector<float> g = {-0.5f, 1.0f, -2.0f};
  const VectorXd mirrored = aggregate_views({f, g}, {true, true});
  for (int c = 0; c < 3; ++c) {
    CHECK(mirrored[c] == 0.0);
    CHECK(mirrored[3 + c] == doctest::Approx(f[c] * f[c]));
  }
}

TEST_CASE("aggregate views with no valid view is the zero sentinel") {
  double out[4] = {9, 9, 9, 9};
  const float features[4] = {1, 2, 3, 4};
  const std::uint8_t valid[2] = {0, 0};
  CHECK(aggregate_views(features, valid, 2, 2, out) == 0);
  for (double v : out) CHECK(v == 0.0);
}

TEST_CASE("density path ignores view order and invalid views exactly") {
  std::mt19937_64 rng(17);
  const DensityHead head = DensityHead::initialized(kHandcraftedChannels, 64, 3);
  const AnalyticDensity analytic(kHandcraftedChannels);
  for (int trial = 0; trial < 200; ++trial) {
    const int views = 2 + trial % 12;
    auto feats = random_views(rng, views, kHandcraftedChannels);
    std::vector<bool> valid(views, true);
    const VectorXd base = aggregate_views(feats, valid);
    const double s_head = sigma_of(head, base);
    const double s_analytic = sigma_of(analytic, base);

    std::vector<int> order(views);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<float>> shuffled;
    for (int i : order) shuffled.push_back(feats[i]);
    const VectorXd permuted = aggregate_views(shuffled, valid);
    CHECK(permuted == base);
    CHECK(sigma_of(head, permuted) == s_head);
    CHECK(sigma_of(analytic, permuted) == s_analytic);

    // an extra view flagged invalid, with arbitrary contents, changes nothing
    auto padded = feats;
    padded.insert(padded.begin() + trial % views, random_views(rng, 1, kHandcraftedChannels)[0]);
    std::vector<bool> padded_valid(views + 1, true);
    padded_valid[trial % views] = false;
    CHECK(aggregate_views(padded, padded_valid) == base);
  }
}

TEST_CASE("zero weights leave softplus of the output bias") {
  DensityHead head(2, 3);
  head.parameters()(head.parameters().size() - 1) = 0.7;
  CHECK(head.forward(VectorXd::Constant(4, 3.0)) == doctest::Approx(std::log1p(std::exp(0.7))).epsilon(1e-15));
}

TEST_CASE("forward matches a straight-line evaluation") {
  // Parameters p_i = 0.1 ((7 i mod 13) - 6) for a 2-channel, 3-wide head;
  // the reference value was evaluated independently in plain scalar code.
  DensityHead head(2, 3);
  REQUIRE(head.parameters().size() == 31);
  for (Eigen::Index i = 0; i < 31; ++i) head.parameters()[i] = 0.1 * (static_cast<int>((i * 7) % 13) - 6);
  VectorXd x(4);
  x << 0.3, -0.2, 0.5, 0.1;
  CHECK(head.forward(x) == doctest::Approx(0.5144031167278243).epsilon(1e-14));
}

TEST_CASE("density is nonnegative and finite for extreme inputs") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 50.0);
  const DensityHead head = DensityHead::initialized(kHandcraftedChannels, 64, 9);
  MatrixXd x(2 * kHandcraftedChannels, 500);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
  VectorXd s;
  head.evaluate(x, s);
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    CHECK(s[i] >= 0.0);
    CHECK(std::isfinite(s[i]));
  }
}

TEST_CASE("backward") {
  const DensityHead head = DensityHead::initialized(3, 8, 2);
  MatrixXd x = MatrixXd::Random(6, 4);
  DensityHead::Cache cache;
  head.forward(x, &cache);

  SUBCASE("zero upstream gives zero gradients") {
    VectorXd g = VectorXd::Zero(head.parameters().size());
    MatrixXd gx;
    head.backward(cache, VectorXd::Zero(4), g, &gx);
    CHECK(g.cwiseAbs().maxCoeff() == 0.0);
    CHECK(gx.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("softplus saturates for very negative pre-activations") {
    DensityHead shut = head;
    shut.parameters()(shut.parameters().size() - 1) = -60.0;
    DensityHead::Cache c;
    shut.forward(x, &c);
    VectorXd g = VectorXd::Zero(shut.parameters().size());
    shut.backward(c, VectorXd::Ones(4), g);
    CHECK(g.cwiseAbs().maxCoeff() < 1e-20);
  }
  SUBCASE("gradients accumulate") {
    VectorXd once = VectorXd::Zero(head.parameters().size());
    head.backward(cache, VectorXd::Ones(4), once);
    VectorXd twice = once;
    head.backward(cache, VectorXd::Ones(4), twice);
    CHECK((twice - 2.0 * once).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("gradcheck on small heads") {
  const GradcheckReport r = gradcheck_head(10, 5, 3, 8);
  CHECK(r.trials == 10);
  CHECK(r.checked == 10 * (96 + 6 * 3));
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("head serialization") {
  DensityHead head = DensityHead::initialized(kHandcraftedChannels, 64, 12);
  for (double& p : head.parameters()) p += 1e-9;  // not float-representable
  const std::vector<unsigned char> bytes = serialize_head(head);
  REQUIRE(bytes.size() == 16 + 4 * static_cast<std::size_t>(head.parameters().size()));
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "RSTD");
  CHECK(bytes[4] == 1);
  CHECK(bytes[8] == kHandcraftedChannels);
  CHECK(bytes[12] == 64);

  DensityHead snapped = head;
  snap_to_float(snapped);
  CHECK(deserialize_head(bytes) == snapped);
  CHECK(serialize_head(deserialize_head(bytes)) == bytes);

  rstab::test::TempDir dir("head");
  save_head(snapped, dir / "h.bin");
  CHECK(load_head(dir / "h.bin") == snapped);

  std::vector<unsigned char> bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(deserialize_head(bad), IoError);
  bad = bytes;
  bad.pop_back();
  CHECK_THROWS_AS(deserialize_head(bad), IoError);
  CHECK_THROWS_AS(load_head(dir / "missing.bin"), IoError);
}

TEST_CASE("initialization is deterministic and exactly float") {
  const DensityHead a = DensityHead::initialized(kHandcraftedChannels, 64, 7);
  CHECK(a == DensityHead::initialized(kHandcraftedChannels, 64, 7));
  CHECK_FALSE(a == DensityHead::initialized(kHandcraftedChannels, 64, 8));
  for (double p : a.parameters()) CHECK(static_cast<double>(static_cast<float>(p)) == p);
}

TEST_CASE("adam moves against the gradient") {
  Adam adam(3);
  VectorXd p = VectorXd::Zero(3);
  VectorXd g(3);
  g << 1.0, -2.0, 0.0;
  adam.step(p, g, 0.1);
  CHECK(p[0] == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(0.1).epsilon(1e-6));
  CHECK(p[2] == 0.0);
  CHECK(adam.steps() == 1);
}

TEST_CASE("ray loss gradient matches finite differences") {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.0, 1.0), s(0.0, 3.0);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + trial % 16;
    std::vector<double> sigma(n), colors(3 * n), grad(n);
    for (double& x : sigma) x = s(rng);
    for (double& x : colors) x = u(rng);
    const double target[3] = {u(rng), u(rng), u(rng)};
    ray_loss(sigma.data(), colors.data(), n, target, grad.data());
    for (int k = 0; k < n; ++k) {
      const double h = 1e-6;
      std::vector<double> up = sigma, down = sigma;
      up[k] += h;
      down[k] -= h;
      std::vector<double> scratch(n);
      const double numeric = (ray_loss(up.data(), colors.data(), n, target, scratch.data()) -
                              ray_loss(down.data(), colors.data(), n, target, scratch.data())) /
                             (2 * h);
      // central differences at h = 1e-6 carry about 1e-10 of rounding noise
      worst = std::max(worst, std::abs(numeric - grad[k]) / (1e-8 + 1e-6 * std::abs(numeric)));
    }
  }
  CHECK(worst < 1.0);
}

TEST_CASE("training with a zero learning rate leaves the head alone") {
  const RayPool pool = toy_pool(40, 6, 3, 1);
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.iterations = 50;
  cfg.hidden = 8;
  const TrainResult r = train_density(pool, cfg);
  TrainConfig none = cfg;
  none.iterations = 0;
  CHECK(r.head == train_density(pool, none).head);
  CHECK(r.final_loss == r.initial_loss);
}

TEST_CASE("training lowers the loss on a learnable pool") {
  const RayPool pool = toy_pool(200, 8, 3, 2);
  TrainConfig cfg;
  cfg.learning_rate = 3e-3;
  cfg.iterations = 600;
  cfg.hidden = 16;
  cfg.batch_rays = 32;
  std::vector<LossPoint> seen;
  const TrainResult r = train_density(pool, cfg, nullptr, [&](const LossPoint& p) { seen.push_back(p); });
  CHECK(r.final_loss < 0.5 * r.initial_loss);
  CHECK(r.curve.size() == 7);
  CHECK(seen.size() == r.curve.size());
  CHECK(r.curve.front().iteration == 0);
  CHECK(r.curve.back().iteration == 600);
  CHECK(pool_loss(r.head, pool) == r.final_loss);
  // same seed, same head
  CHECK(train_density(pool, cfg).head == r.head);
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.batch_rays = 0;
  CHECK_THROWS_AS(cfg.validate(), ContractViolation);
  cfg = TrainConfig{};
  cfg.learning_rate = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ContractViolation);
}
