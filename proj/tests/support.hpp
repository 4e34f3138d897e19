#pragma once

#include <Eigen/Geometry>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "rstab/geometry.hpp"

namespace rstab::test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("rstab_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Pose random_pose(std::mt19937_64& rng, double spread = 1.0) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  return Pose(q, Eigen::Vector3d(n(rng), n(rng), n(rng)) * spread);
}

inline Pose small_pose(std::mt19937_64& rng, double angle, double shift) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const Eigen::Vector3d axis = Eigen::Vector3d(u(rng), u(rng), u(rng)).normalized();
  return Pose(Eigen::Quaterniond(Eigen::AngleAxisd(angle * u(rng), axis)),
              Eigen::Vector3d(u(rng), u(rng), u(rng)) * shift);
}

inline Intrinsics test_intrinsics(int size = 64, double focal = 60.0) {
  Intrinsics k;
  k.fx = k.fy = focal;
  k.cx = k.cy = (size - 1) / 2.0;
  k.width = k.height = size;
  return k;
}

}  // namespace rstab::test
