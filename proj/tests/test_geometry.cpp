#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "rstab/error.hpp"
#include "rstab/geometry.hpp"
#include "support.hpp"

using namespace rstab;
using rstab::test::random_pose;

namespace {

Intrinsics k100() {
  Intrinsics k;
  k.fx = k.fy = 100.0;
  k.cx = 32.0;
  k.cy = 24.0;
  k.width = 64;
  k.height = 48;
  return k;
}

// Homogeneous 4x4 chain, written out without the Pose helpers.
Eigen::Vector3d matrix_chain(SubPixel x, double depth, const Eigen::Matrix4d& src_c2w, const Eigen::Matrix4d& dst_c2w,
                             const Intrinsics& k) {
  Eigen::Vector4d cam((x.u - k.cx) / k.fx * depth, (x.v - k.cy) / k.fy * depth, depth, 1.0);
  Eigen::Vector4d dst = dst_c2w.inverse() * src_c2w * cam;
  return {k.fx * dst.x() / dst.z() + k.cx, k.fy * dst.y() / dst.z() + k.cy, dst.z()};
}

}  // namespace

TEST_CASE("project onto the same pose is the identity") {
  const Pose p(Eigen::Quaterniond(0.9, 0.1, -0.2, 0.3), Eigen::Vector3d(1, 2, 3));
  const Projection r = project({10.5, 20.0}, 3.0, p, p, k100());
  CHECK(r.valid);
  CHECK(r.pixel.u == doctest::Approx(10.5).epsilon(1e-12));
  CHECK(r.pixel.v == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(r.depth == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("baseline along camera x shifts u by -f b / d") {
  const Pose dst(Eigen::Quaterniond::Identity(), Eigen::Vector3d(0.1, 0, 0));
  const Projection r = project({20.0, 15.0}, 2.0, Pose::identity(), dst, k100());
  CHECK(r.valid);
  CHECK(r.pixel.u - 20.0 == doctest::Approx(-5.0).epsilon(1e-12));
  CHECK(r.pixel.v == doctest::Approx(15.0).epsilon(1e-12));
}

TEST_CASE("points behind the destination camera are invalid") {
  const Pose dst(Eigen::Quaterniond::Identity(), Eigen::Vector3d(0, 0, 5));
  CHECK_FALSE(project({32, 24}, 2.0, Pose::identity(), dst, k100()).valid);
}

TEST_CASE("project and unproject reject bad input") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(project({nan, 0}, 1.0, Pose::identity(), Pose::identity(), k100()), ContractViolation);
  CHECK_THROWS_AS(project({1, 1}, 0.0, Pose::identity(), Pose::identity(), k100()), ContractViolation);
  CHECK_THROWS_AS(unproject({1, 1}, -1.0, Pose::identity(), k100()), ContractViolation);
  CHECK_THROWS_AS(Pose(Eigen::Quaterniond(0, 0, 0, 0), Eigen::Vector3d::Zero()), ContractViolation);
}

TEST_CASE("unproject follows the axis convention") {
  Intrinsics k;
  k.fx = k.fy = 1.0;
  k.cx = k.cy = 0.0;
  k.width = k.height = 8;
  const Eigen::Vector3d p = unproject({2, 3}, 4.0, Pose::identity(), k);
  CHECK(p.x() == doctest::Approx(8.0));
  CHECK(p.y() == doctest::Approx(12.0));
  CHECK(p.z() == doctest::Approx(4.0));

  const Intrinsics k2 = k100();
  const Eigen::Vector3d axis = unproject({k2.cx, k2.cy}, 7.0, Pose::identity(), k2);
  CHECK((axis - Eigen::Vector3d(0, 0, 7)).norm() < 1e-12);
}

TEST_CASE("relative poses") {
  std::mt19937_64 rng(11);
  const Pose a = random_pose(rng);
  const Pose ident = relative(a, a);
  CHECK((ident.matrix() - Eigen::Matrix4d::Identity()).norm() < 1e-12);

  const Eigen::Vector3d t(0.3, -1.0, 2.0);
  const Pose shifted = relative(Pose::identity(), Pose(Eigen::Quaterniond::Identity(), t));
  CHECK((shifted.apply(Eigen::Vector3d::Zero()) - t).norm() < 1e-12);

  for (int i = 0; i < 100; ++i) {
    const Pose s = random_pose(rng);
    const Pose d = random_pose(rng);
    const Eigen::Matrix4d oracle = d.matrix() * s.matrix().inverse();
    CHECK((relative(s, d).matrix() - oracle).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("project matches the homogeneous matrix chain") {
  std::mt19937_64 rng(5);
  const Intrinsics k = k100();
  std::uniform_real_distribution<double> u(0.0, 63.0), d(0.5, 10.0);
  int compared = 0;
  for (int i = 0; i < 1000; ++i) {
    const Pose s = random_pose(rng, 0.2);
    const Pose t = random_pose(rng, 0.2);
    const SubPixel x{u(rng), u(rng)};
    const double depth = d(rng);
    const Projection r = project(x, depth, s, t, k);
    const Eigen::Vector3d o = matrix_chain(x, depth, s.matrix(), t.matrix(), k);
    if (o.z() <= 1e-3) {
      CHECK_FALSE(r.valid == (o.z() <= 0.0));
      continue;
    }
    REQUIRE(r.valid);
    ++compared;
    CHECK(std::abs(r.depth - o.z()) <= 1e-9 * std::abs(o.z()));
    CHECK(std::abs(r.pixel.u - o.x()) < 1e-6 * std::max(1.0, std::abs(o.x())));
    CHECK(std::abs(r.pixel.v - o.y()) < 1e-6 * std::max(1.0, std::abs(o.y())));
  }
  CHECK(compared > 300);
}

TEST_CASE("projecting there and back returns the pixel") {
  std::mt19937_64 rng(21);
  const Intrinsics k = k100();
  std::uniform_real_distribution<double> u(0.0, 63.0), v(0.0, 47.0), d(0.5, 20.0);
  double worst = 0.0;
  int round_trips = 0;
  for (int i = 0; i < 10000; ++i) {
    const Pose cam = random_pose(rng, 0.5);
    const Pose other = cam * rstab::test::small_pose(rng, 0.3, 0.2);
    const SubPixel x{u(rng), v(rng)};
    const double depth = d(rng);
    const Projection there = project(x, depth, cam, other, k);
    if (!there.valid) continue;
    const Projection back = project(there.pixel, there.depth, other, cam, k);
    REQUIRE(back.valid);
    ++round_trips;
    worst = std::max({worst, std::abs(back.pixel.u - x.u), std::abs(back.pixel.v - x.v)});
    CHECK((unproject(there.pixel, there.depth, other, k) - unproject(x, depth, cam, k)).norm() < 1e-9 * depth);
  }
  CHECK(round_trips > 9000);
  CHECK(worst < 1e-6);
}

TEST_CASE("project is invariant to a global change of world frame") {
  std::mt19937_64 rng(8);
  const Intrinsics k = k100();
  std::uniform_real_distribution<double> u(0.0, 63.0), d(1.0, 8.0);
  for (int i = 0; i < 1000; ++i) {
    const Pose s = random_pose(rng, 0.2);
    const Pose t = random_pose(rng, 0.2);
    const Pose g = random_pose(rng, 5.0);
    const SubPixel x{u(rng), u(rng)};
    const double depth = d(rng);
    const Projection a = project(x, depth, s, t, k);
    const Projection b = project(x, depth, g * s, g * t, k);
    REQUIRE(a.valid == b.valid);
    if (!a.valid) continue;
    CHECK(std::abs(a.pixel.u - b.pixel.u) < 1e-6);
    CHECK(std::abs(a.pixel.v - b.pixel.v) < 1e-6);
  }
}

TEST_CASE("CameraTransfer agrees with project") {
  std::mt19937_64 rng(9);
  const Intrinsics k = k100();
  const Pose s = random_pose(rng, 0.3);
  const Pose t = random_pose(rng, 0.3);
  const CameraTransfer transfer(s, t, k);
  for (int i = 0; i < 200; ++i) {
    const SubPixel x{i * 0.3, 47.0 - i * 0.2};
    const double depth = 0.5 + 0.05 * i;
    const Projection a = project(x, depth, s, t, k);
    const Projection b = transfer(x, depth);
    REQUIRE(a.valid == b.valid);
    CHECK(std::abs(a.pixel.u - b.pixel.u) < 1e-9);
    CHECK(std::abs(a.pixel.v - b.pixel.v) < 1e-9);
    CHECK(std::abs(a.depth - b.depth) < 1e-12);
  }
}

TEST_CASE("pose composition and inverse") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    const Pose a = random_pose(rng);
    const Pose b = random_pose(rng);
    const Eigen::Vector3d p(0.1 * i, -0.3, 2.0);
    CHECK(((a * b).apply(p) - a.apply(b.apply(p))).norm() < 1e-12);
    CHECK((a.inverse().apply(a.apply(p)) - p).norm() < 1e-12);
    CHECK((Pose::from_matrix(a.matrix()).matrix() - a.matrix()).norm() < 1e-12);
  }
}

TEST_CASE("intrinsics validation") {
  Intrinsics k = k100();
  CHECK_NOTHROW(k.validate());
  k.fx = 0.0;
  CHECK_THROWS_AS(k.validate(), ContractViolation);
  k = k100();
  k.cx = 200.0;
  CHECK_THROWS_AS(k.validate(), ContractViolation);
}
