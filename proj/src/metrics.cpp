#include "rstab/metrics.hpp"

#include <cmath>
#include <complex>
#include <cstdio>
#include <limits>
#include <numbers>

#include <Eigen/SVD>

#include "rstab/error.hpp"
#include "rstab/trajectory.hpp"

namespace rstab {

namespace {

// Similarity taking the points to zero centroid and mean distance sqrt(2).
std::optional<Eigen::Matrix3d> normalizer(const std::vector<Eigen::Vector2d>& pts) {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  double dist = 0.0;
  for (const auto& p : pts) dist += (p - mean).norm();
  dist /= static_cast<double>(pts.size());
  if (!(dist > 1e-12)) return std::nullopt;
  const double s = std::sqrt(2.0) / dist;
  Eigen::Matrix3d t;
  t << s, 0, -s * mean.x(), 0, s, -s * mean.y(), 0, 0, 1;
  return t;
}

}  // namespace

double cropping_ratio(const std::vector<Mask>& masks) {
  if (masks.empty()) throw ContractViolation("cropping_ratio: empty sequence");
  double total = 0.0;
  for (const Mask& m : masks) {
    if (m.pixel_count() == 0) throw ContractViolation("cropping_ratio: empty mask");
    std::size_t valid = 0;
    for (std::uint8_t v : m.data()) valid += v ? 1 : 0;
    total += static_cast<double>(valid) / static_cast<double>(m.pixel_count());
  }
  return total / static_cast<double>(masks.size());
}

double psnr(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw ContractViolation("psnr: images differ in shape");
  if (a.data().empty()) throw ContractViolation("psnr: empty images");
  double se = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    const double d = static_cast<double>(a.data()[i]) - b.data()[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.data().size());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

std::optional<Eigen::Matrix3d> fit_homography(const Correspondences& c) {
  if (c.src.size() != c.dst.size()) throw ContractViolation("fit_homography: point lists differ in length");
  const std::size_t n = c.src.size();
  if (n < 4) return std::nullopt;
  const auto ts = normalizer(c.src);
  const auto td = normalizer(c.dst);
  if (!ts || !td) return std::nullopt;
  Eigen::MatrixXd a(2 * n, 9);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d p = *ts * c.src[i].homogeneous();
    const Eigen::Vector3d q = *td * c.dst[i].homogeneous();
    const Eigen::Index r = 2 * static_cast<Eigen::Index>(i);
    a.row(r) << 0, 0, 0, -p.x(), -p.y(), -1, q.y() * p.x(), q.y() * p.y(), q.y();
    a.row(r + 1) << p.x(), p.y(), 1, 0, 0, 0, -q.x() * p.x(), -q.x() * p.y(), -q.x();
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd sv = svd.singularValues();
  // A second (near) null direction means the points do not pin down H.
  if (sv.size() < 9 || !(sv[7] > 1e-9 * sv[0])) return std::nullopt;
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8];
  Eigen::Matrix3d out = td->inverse() * hn * *ts;
  if (std::abs(out(2, 2)) > 1e-12) out /= out(2, 2);
  if (!out.allFinite()) return std::nullopt;
  return out;
}

double anisotropy(const Eigen::Matrix3d& h) {
  if (!(std::abs(h(2, 2)) > 1e-12)) throw ComputeError("anisotropy: homography has H(2,2) = 0");
  const Eigen::Matrix2d a = h.topLeftCorner<2, 2>() / h(2, 2);
  const Eigen::Vector2d s = Eigen::JacobiSVD<Eigen::Matrix2d>(a).singularValues();
  if (!(s[0] > 0.0)) throw ComputeError("anisotropy: singular affine block");
  return s[1] / s[0];
}

DistortionResult distortion_value(const std::vector<Correspondences>& frames) {
  DistortionResult r;
  r.value = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto h = fit_homography(frames[i]);
    double score = std::numeric_limits<double>::quiet_NaN();
    if (h && std::abs((*h)(2, 2)) > 1e-12) {
      try {
        score = anisotropy(*h);
      } catch (const ComputeError&) {
        score = std::numeric_limits<double>::quiet_NaN();
      }
    }
    if (std::isnan(score)) {
      ++r.skipped;
      std::fprintf(stderr, "warning: distortion skips frame %zu (degenerate correspondences)\n", i);
    } else {
      r.value = std::min(r.value, score);
    }
    r.frame_scores.push_back(score);
  }
  if (frames.empty() || r.skipped == static_cast<int>(frames.size())) {
    throw ComputeError("distortion_value: no frame has a usable homography");
  }
  return r;
}

Correspondences depth_correspondences(const DepthMap& depth, const Pose& input_pose, const Pose& output_pose,
                                      const Intrinsics& k, int step) {
  if (step < 1) throw ContractViolation("depth_correspondences: step must be >= 1");
  const CameraTransfer transfer(input_pose, output_pose, k);
  Correspondences c;
  for (int y = step / 2; y < depth.height(); y += step) {
    for (int x = step / 2; x < depth.width(); x += step) {
      const Projection p = transfer({static_cast<double>(x), static_cast<double>(y)}, depth(y, x));
      if (!p.valid) continue;
      c.src.emplace_back(x, y);
      c.dst.emplace_back(p.pixel.u, p.pixel.v);
    }
  }
  return c;
}

void TrackSet::validate() const {
  if (tracks.empty()) throw ContractViolation("TrackSet: no tracks");
  for (const auto& t : tracks) {
    if (static_cast<int>(t.size()) < kMinLength) {
      throw ContractViolation("TrackSet: tracks must span at least " + std::to_string(kMinLength) + " frames");
    }
  }
}

TrackSet tracks_from_depth(const DepthMap& reference_depth, const Pose& reference_pose,
                           const std::vector<Pose>& poses, const Intrinsics& k, int step) {
  if (step < 1) throw ContractViolation("tracks_from_depth: step must be >= 1");
  TrackSet set;
  for (int y = step / 2; y < reference_depth.height(); y += step) {
    for (int x = step / 2; x < reference_depth.width(); x += step) {
      const Eigen::Vector3d world =
          unproject({static_cast<double>(x), static_cast<double>(y)}, reference_depth(y, x), reference_pose, k);
      std::vector<Eigen::Vector2d> track;
      bool visible = true;
      for (const Pose& p : poses) {
        const Eigen::Vector3d cam = p.inverse().apply(world);
        if (!(cam.z() > 1e-9)) {
          visible = false;
          break;
        }
        track.emplace_back(k.fx * cam.x() / cam.z() + k.cx, k.fy * cam.y() / cam.z() + k.cy);
      }
      if (visible) set.tracks.push_back(std::move(track));
    }
  }
  return set;
}

TrackSet tracks_from_poses(const std::vector<Pose>& poses) {
  TrackSet set;
  if (poses.empty()) return set;
  set.tracks.resize(3);
  const Eigen::Quaterniond q0 = poses.front().rotation();
  for (const Pose& p : poses) {
    const Eigen::Vector3d r = rotation_log(q0.conjugate() * p.rotation());
    const Eigen::Vector3d t = p.translation();
    set.tracks[0].emplace_back(t.x(), t.y());
    set.tracks[1].emplace_back(t.z(), r.x());
    set.tracks[2].emplace_back(r.y(), r.z());
  }
  return set;
}

double stability_score(const TrackSet& tracks, StabilityBand band) {
  tracks.validate();
  if (band.low_first < 2 || band.low_last < band.low_first) {
    throw ContractViolation("stability_score: invalid frequency band");
  }
  double sum = 0.0;
  int count = 0;
  for (const auto& track : tracks.tracks) {
    const int n = static_cast<int>(track.size());
    const int last = n / 2;
    for (int axis = 0; axis < 2; ++axis) {
      double mean = 0.0;
      for (const auto& p : track) mean += p[axis];
      mean /= n;
      double low = 0.0, all = 0.0;
      for (int bin = 2; bin <= last; ++bin) {
        const int k = bin - 1;
        std::complex<double> x(0.0, 0.0);
        for (int i = 0; i < n; ++i) {
          const double phase = -2.0 * std::numbers::pi * k * i / n;
          x += (track[i][axis] - mean) * std::complex<double>(std::cos(phase), std::sin(phase));
        }
        const double e = std::norm(x);
        all += e;
        if (bin >= band.low_first && bin <= band.low_last) low += e;
      }
      sum += all > 1e-18 ? low / all : 1.0;
      ++count;
    }
  }
  return sum / count;
}

}  // namespace rstab
