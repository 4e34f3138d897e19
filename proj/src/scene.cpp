#include "rstab/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "json.hpp"
#include "rstab/dataset.hpp"
#include "rstab/error.hpp"
#include "rstab/trajectory.hpp"

namespace rstab {

namespace {

using nlohmann::json;

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

double unit_hash(std::uint64_t h) { return static_cast<double>(mix64(h) >> 11) * 0x1.0p-53; }

double lattice_value(std::int64_t ix, std::int64_t iy, std::int64_t iz, std::uint64_t seed) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ static_cast<std::uint64_t>(ix));
  h = mix64(h ^ static_cast<std::uint64_t>(iy));
  return unit_hash(h ^ static_cast<std::uint64_t>(iz));
}

double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

double value_noise(const Eigen::Vector3d& p, std::uint64_t seed) {
  const Eigen::Vector3d f = p.array().floor();
  const auto ix = static_cast<std::int64_t>(f.x());
  const auto iy = static_cast<std::int64_t>(f.y());
  const auto iz = static_cast<std::int64_t>(f.z());
  const double fx = fade(p.x() - f.x());
  const double fy = fade(p.y() - f.y());
  const double fz = fade(p.z() - f.z());
  double acc = 0.0;
  for (int dz = 0; dz < 2; ++dz) {
    for (int dy = 0; dy < 2; ++dy) {
      for (int dx = 0; dx < 2; ++dx) {
        const double w = (dx ? fx : 1.0 - fx) * (dy ? fy : 1.0 - fy) * (dz ? fz : 1.0 - fz);
        acc += w * lattice_value(ix + dx, iy + dy, iz + dz, seed);
      }
    }
  }
  return acc;
}

struct TextureParams {
  Eigen::Vector3d c0, c1;
  double scale;
  double period;
  std::uint64_t noise_seed;
};

TextureParams texture_params(std::uint64_t scene_seed, int id) {
  const std::uint64_t base = mix64(scene_seed * 0x100000001b3ull + static_cast<std::uint64_t>(id) + 1);
  TextureParams t;
  for (int c = 0; c < 3; ++c) {
    t.c0[c] = 0.08 + 0.32 * unit_hash(base + 11 + c);
    t.c1[c] = 0.60 + 0.32 * unit_hash(base + 23 + c);
    if (unit_hash(base + 17 + c) < 0.5) std::swap(t.c0[c], t.c1[c]);
  }
  t.scale = 0.38 + 0.12 * unit_hash(base + 31);
  t.period = 0.6 + 0.3 * unit_hash(base + 37);
  t.noise_seed = mix64(base + 41);
  return t;
}

Eigen::Vector3f solid_texture(std::uint64_t scene_seed, int id, const Eigen::Vector3d& p) {
  const TextureParams t = texture_params(scene_seed, id);
  const double raw = 0.65 * value_noise(p / t.scale, t.noise_seed) +
                     0.35 * value_noise(p * (2.0 / t.scale) + Eigen::Vector3d(17.3, 5.1, 9.7), t.noise_seed + 1);
  // Stretch the noise, which clusters around 0.5, toward the full [c0, c1] span.
  const double e = std::clamp((raw - 0.2) / 0.6, 0.0, 1.0);
  const double n = e * e * (3.0 - 2.0 * e);
  const double pi = std::numbers::pi;
  const double check =
      std::tanh(2.0 * std::sin(pi * (p.x() + p.y()) / t.period) * std::sin(pi * (p.y() + p.z()) / t.period));
  const Eigen::Vector3d c = (t.c0 + (t.c1 - t.c0) * n) * (0.75 + 0.25 * check);
  return c.cwiseMax(0.0).cwiseMin(1.0).cast<float>();
}

float quantize8(float v) { return static_cast<float>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)) / 255.0f; }

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

std::vector<double> blur(const std::vector<double>& x, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  const std::vector<double> k = gaussian_kernel(2 * radius + 1, sigma);
  const int n = static_cast<int>(x.size());
  std::vector<double> out(x.size(), 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = -radius; j <= radius; ++j) out[i] += k[j + radius] * x[reflect_index(i + j, n)];
  }
  return out;
}

// Band-passed noise in [-1, 1]: lightly smoothed white noise minus its heavily smoothed version.
std::vector<double> shake_sequence(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> white(n);
  for (double& v : white) v = normal(rng);
  const std::vector<double> light = blur(white, 1.0);
  const std::vector<double> heavy = blur(light, 4.0);
  std::vector<double> out(n);
  double peak = 0.0;
  for (int i = 0; i < n; ++i) {
    out[i] = light[i] - heavy[i];
    peak = std::max(peak, std::abs(out[i]));
  }
  if (peak > 0.0) {
    for (double& v : out) v /= peak;
  }
  return out;
}

json vec_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

Eigen::Vector3d vec_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ContractViolation("scene json: expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

Pose MovingQuad::pose_at(int frame) const {
  const Eigen::Vector3d normal = half_u.cross(half_v).normalized();
  const Eigen::Quaterniond spin_q(Eigen::AngleAxisd(spin * frame, normal));
  return {spin_q, center + velocity * frame};
}

Intrinsics SceneSpec::intrinsics() const {
  Intrinsics k;
  k.fx = focal;
  k.fy = focal;
  k.cx = 0.5 * (width - 1);
  k.cy = 0.5 * (height - 1);
  k.width = width;
  k.height = height;
  return k;
}

int SceneSpec::moving_object_count() const {
  return static_cast<int>(std::count_if(objects.begin(), objects.end(), [](const MovingQuad& q) { return q.moving(); }));
}

void SceneSpec::validate() const {
  if (planes.empty()) throw ContractViolation("scene: at least one static plane is required");
  if (frames < 1) throw ContractViolation("scene: frame count must be >= 1");
  if (width < 2 || height < 2) throw ContractViolation("scene: resolution must be at least 2x2");
  if (!(focal > 0.0)) throw ContractViolation("scene: focal length must be positive");
  if (supersample < 1 || supersample > 16) throw ContractViolation("scene: supersample must be in [1, 16]");
  if (!(trajectory.jitter_rotation_deg >= 0.0) || !(trajectory.jitter_translation >= 0.0) ||
      trajectory.jitter_taper < 0) {
    throw ContractViolation("scene: jitter amplitudes must be >= 0");
  }
  intrinsics().validate();
  const Pose cam0 = base_path(*this).front();
  // A plane through the first camera center is seen edge-on: every view ray
  // that meets it runs inside it.
  for (std::size_t i = 0; i < planes.size(); ++i) {
    const double n = planes[i].normal.norm();
    if (!(n > 1e-12) || !planes[i].point.allFinite()) throw ContractViolation("scene: plane normal must be non-zero");
    if (std::abs(planes[i].normal.dot(cam0.translation() - planes[i].point)) / n < 1e-9) {
      throw ContractViolation("scene: plane " + std::to_string(i) + " is degenerate (parallel to every view ray)");
    }
  }
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const MovingQuad& q = objects[i];
    if (q.half_u.cross(q.half_v).norm() < 1e-12) {
      throw ContractViolation("scene: object " + std::to_string(i) + " has degenerate extents");
    }
    if (std::abs(q.half_u.normalized().dot(q.half_v.normalized())) > 1e-9) {
      throw ContractViolation("scene: object " + std::to_string(i) + " extents must be perpendicular");
    }
  }
}

Preset parse_preset(std::string_view name) {
  if (name == "static") return Preset::kStatic;
  if (name == "dynamic") return Preset::kDynamic;
  if (name == "parallax") return Preset::kParallax;
  throw ContractViolation("unknown preset '" + std::string(name) + "' (expected static, dynamic or parallax)");
}

std::string_view preset_name(Preset preset) {
  switch (preset) {
    case Preset::kStatic: return "static";
    case Preset::kDynamic: return "dynamic";
    case Preset::kParallax: return "parallax";
  }
  return "static";
}

SceneSpec make_preset(Preset preset, std::uint64_t seed, int frames, int size) {
  SceneSpec s;
  s.seed = seed;
  s.frames = frames;
  s.width = size;
  s.height = size;
  s.focal = 60.0 * size / 64.0;
  s.supersample = 3;
  // A room corner: back wall, floor and right wall meet along creases, so depth is continuous.
  s.planes = {
      {Eigen::Vector3d(0.0, 0.0, 6.0), Eigen::Vector3d(0.0, 0.0, -1.0), 0},
      {Eigen::Vector3d(0.0, 1.5, 0.0), Eigen::Vector3d(0.0, -1.0, 0.0), 1},
      {Eigen::Vector3d(2.4, 0.0, 0.0), Eigen::Vector3d(-1.0, 0.0, 0.0), 2},
  };
  // The camera backs away from the wall, so later frames see a superset of
  // earlier views and every stabilized pixel has a source.
  s.trajectory.start = Eigen::Vector3d(-0.45, 0.0, 1.5);
  s.trajectory.velocity = Eigen::Vector3d(0.03, 0.0, -0.1);
  s.trajectory.jitter_rotation_deg = 1.0;
  s.trajectory.jitter_translation = 0.06;
  s.trajectory.jitter_taper = 6;
  if (preset == Preset::kDynamic) {
    MovingQuad q;
    q.center = Eigen::Vector3d(-0.9, 0.1, 3.2);
    q.half_u = Eigen::Vector3d(0.45, 0.0, 0.0);
    q.half_v = Eigen::Vector3d(0.0, 0.45, 0.0);
    q.texture = 3;
    q.velocity = Eigen::Vector3d(0.06, 0.01, 0.0);
    q.spin = 0.01;
    s.objects.push_back(q);
  } else if (preset == Preset::kParallax) {
    MovingQuad a;
    a.center = Eigen::Vector3d(-0.8, 0.2, 2.6);
    a.half_u = Eigen::Vector3d(0.25, 0.0, 0.0);
    a.half_v = Eigen::Vector3d(0.0, 1.0, 0.0);
    a.texture = 4;
    MovingQuad b;
    b.center = Eigen::Vector3d(0.9, -0.2, 3.6);
    b.half_u = Eigen::Vector3d(0.3, 0.0, 0.0);
    b.half_v = Eigen::Vector3d(0.0, 0.6, 0.0);
    b.texture = 5;
    s.objects = {a, b};
  }
  return s;
}

std::string scene_to_json(const SceneSpec& spec) {
  json j;
  j["seed"] = spec.seed;
  j["frames"] = spec.frames;
  j["width"] = spec.width;
  j["height"] = spec.height;
  j["focal"] = spec.focal;
  j["supersample"] = spec.supersample;
  j["planes"] = json::array();
  for (const StaticPlane& p : spec.planes) {
    j["planes"].push_back({{"point", vec_json(p.point)}, {"normal", vec_json(p.normal)}, {"texture", p.texture}});
  }
  j["objects"] = json::array();
  for (const MovingQuad& q : spec.objects) {
    j["objects"].push_back({{"center", vec_json(q.center)},
                            {"half_u", vec_json(q.half_u)},
                            {"half_v", vec_json(q.half_v)},
                            {"texture", q.texture},
                            {"velocity", vec_json(q.velocity)},
                            {"spin", q.spin}});
  }
  const TrajectorySpec& t = spec.trajectory;
  j["trajectory"] = {{"start", vec_json(t.start)},
                     {"velocity", vec_json(t.velocity)},
                     {"yaw_rate", t.yaw_rate},
                     {"jitter_rotation_deg", t.jitter_rotation_deg},
                     {"jitter_translation", t.jitter_translation},
                     {"jitter_taper", t.jitter_taper}};
  return j.dump(2);
}

SceneSpec scene_from_json(std::string_view text) {
  SceneSpec s;
  try {
    const json j = json::parse(text);
    s.seed = j.value("seed", s.seed);
    s.frames = j.value("frames", s.frames);
    s.width = j.value("width", s.width);
    s.height = j.value("height", s.height);
    s.focal = j.value("focal", s.focal);
    s.supersample = j.value("supersample", s.supersample);
    for (const json& p : j.at("planes")) {
      s.planes.push_back({vec_from(p.at("point")), vec_from(p.at("normal")), p.value("texture", 0)});
    }
    if (j.contains("objects")) {
      for (const json& o : j.at("objects")) {
        MovingQuad q;
        q.center = vec_from(o.at("center"));
        q.half_u = vec_from(o.at("half_u"));
        q.half_v = vec_from(o.at("half_v"));
        q.texture = o.value("texture", 0);
        if (o.contains("velocity")) q.velocity = vec_from(o.at("velocity"));
        q.spin = o.value("spin", 0.0);
        s.objects.push_back(q);
      }
    }
    if (j.contains("trajectory")) {
      const json& t = j.at("trajectory");
      if (t.contains("start")) s.trajectory.start = vec_from(t.at("start"));
      if (t.contains("velocity")) s.trajectory.velocity = vec_from(t.at("velocity"));
      s.trajectory.yaw_rate = t.value("yaw_rate", 0.0);
      s.trajectory.jitter_rotation_deg = t.value("jitter_rotation_deg", 0.0);
      s.trajectory.jitter_translation = t.value("jitter_translation", 0.0);
      s.trajectory.jitter_taper = t.value("jitter_taper", 0);
    }
  } catch (const json::exception& e) {
    throw ContractViolation(std::string("scene json: ") + e.what());
  }
  return s;
}

std::vector<Pose> base_path(const SceneSpec& spec) {
  std::vector<Pose> out;
  out.reserve(spec.frames);
  for (int t = 0; t < spec.frames; ++t) {
    const Eigen::Quaterniond r(Eigen::AngleAxisd(spec.trajectory.yaw_rate * t, Eigen::Vector3d::UnitY()));
    out.emplace_back(r, spec.trajectory.start + spec.trajectory.velocity * t);
  }
  return out;
}

std::vector<Pose> camera_path(const SceneSpec& spec) {
  const std::vector<Pose> base = base_path(spec);
  std::mt19937_64 rng(mix64(spec.seed ^ 0x5eedull));
  std::vector<std::vector<double>> shake(6);
  for (auto& s : shake) s = shake_sequence(rng, spec.frames);
  const double rot_amp = spec.trajectory.jitter_rotation_deg * std::numbers::pi / 180.0;
  const double trans_amp = spec.trajectory.jitter_translation;
  std::vector<Pose> out;
  out.reserve(base.size());
  const int taper = spec.trajectory.jitter_taper;
  for (int t = 0; t < spec.frames; ++t) {
    const double envelope =
        taper > 0 ? std::min(1.0, static_cast<double>(std::min(t, spec.frames - 1 - t)) / taper) : 1.0;
    const Eigen::Vector3d rv = envelope * Eigen::Vector3d(shake[0][t], shake[1][t], shake[2][t]);
    const Eigen::Vector3d tv = envelope * Eigen::Vector3d(shake[3][t], shake[4][t], shake[5][t]);
    Eigen::Quaterniond jr = Eigen::Quaterniond::Identity();
    if (rv.norm() * rot_amp > 0.0) jr = Eigen::Quaterniond(Eigen::AngleAxisd(rv.norm() * rot_amp, rv.normalized()));
    out.emplace_back(base[t].rotation() * jr, base[t].translation() + trans_amp * tv);
  }
  return out;
}

SurfaceHit cast_ray(const SceneSpec& spec, const Pose& camera, SubPixel x, int frame) {
  const Intrinsics k = spec.intrinsics();
  const Eigen::Vector3d origin = camera.translation();
  const Eigen::Vector3d dir = camera.rotation() * Eigen::Vector3d((x.u - k.cx) / k.fx, (x.v - k.cy) / k.fy, 1.0);
  SurfaceHit best;
  auto consider = [&](double s, int surface) {
    if (s > 1e-9 && (!best.hit || s < best.depth)) {
      best.hit = true;
      best.depth = s;
      best.surface = surface;
    }
  };
  for (std::size_t i = 0; i < spec.planes.size(); ++i) {
    const StaticPlane& p = spec.planes[i];
    const double denom = p.normal.dot(dir);
    if (std::abs(denom) < 1e-12) continue;
    consider(p.normal.dot(p.point - origin) / denom, static_cast<int>(i));
  }
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    const MovingQuad& q = spec.objects[i];
    const Pose obj = q.pose_at(frame);
    const Eigen::Vector3d u = obj.rotation() * q.half_u;
    const Eigen::Vector3d v = obj.rotation() * q.half_v;
    const Eigen::Vector3d n = u.cross(v);
    const double denom = n.dot(dir);
    if (std::abs(denom) < 1e-12) continue;
    const double s = n.dot(obj.translation() - origin) / denom;
    const Eigen::Vector3d rel = origin + s * dir - obj.translation();
    if (std::abs(rel.dot(u)) <= u.squaredNorm() && std::abs(rel.dot(v)) <= v.squaredNorm()) {
      consider(s, static_cast<int>(spec.planes.size() + i));
    }
  }
  if (best.hit) best.world = origin + best.depth * dir;
  return best;
}

Eigen::Vector3f surface_color(const SceneSpec& spec, const SurfaceHit& hit, int frame) {
  const int n_planes = static_cast<int>(spec.planes.size());
  if (hit.surface < n_planes) return solid_texture(spec.seed, spec.planes[hit.surface].texture, hit.world);
  const MovingQuad& q = spec.objects[hit.surface - n_planes];
  const Eigen::Vector3d local = q.pose_at(frame).inverse().apply(hit.world);
  return solid_texture(spec.seed, q.texture, local);
}

Image render_ground_truth(const SceneSpec& spec, const Pose& pose, int frame) {
  const int ss = std::max(spec.supersample, 1);
  Image img(spec.height, spec.width, 3);
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      Eigen::Vector3f acc = Eigen::Vector3f::Zero();
      for (int sy = 0; sy < ss; ++sy) {
        for (int sx = 0; sx < ss; ++sx) {
          const SubPixel p{x + (sx + 0.5) / ss - 0.5, y + (sy + 0.5) / ss - 0.5};
          const SurfaceHit hit = cast_ray(spec, pose, p, frame);
          if (!hit.hit) {
            throw ContractViolation("scene does not cover the view at frame " + std::to_string(frame));
          }
          acc += surface_color(spec, hit, frame);
        }
      }
      acc /= static_cast<float>(ss * ss);
      for (int c = 0; c < 3; ++c) img(y, x, c) = quantize8(acc[c]);
    }
  }
  return img;
}

DepthMap render_depth(const SceneSpec& spec, const Pose& pose, int frame) {
  DepthMap depth(spec.height, spec.width, 1);
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const SurfaceHit hit = cast_ray(spec, pose, {static_cast<double>(x), static_cast<double>(y)}, frame);
      if (!hit.hit) throw ContractViolation("scene does not cover the view at frame " + std::to_string(frame));
      depth(y, x) = static_cast<float>(hit.depth);
    }
  }
  return depth;
}

FlowResult gt_flow(const SceneSpec& spec, int t1, int t2) {
  if (t1 < 0 || t2 < 0 || t1 >= spec.frames || t2 >= spec.frames) {
    throw ContractViolation("gt_flow: frame index out of range");
  }
  FlowResult out{FlowField(spec.height, spec.width, 2), Mask(spec.height, spec.width, 1)};
  if (t1 == t2) return out;
  const std::vector<Pose> poses = camera_path(spec);
  const Intrinsics k = spec.intrinsics();
  const Pose cam2_inv = poses[t2].inverse();
  const int n_planes = static_cast<int>(spec.planes.size());
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const SurfaceHit hit = cast_ray(spec, poses[t1], {static_cast<double>(x), static_cast<double>(y)}, t1);
      if (!hit.hit) throw ContractViolation("scene does not cover the view at frame " + std::to_string(t1));
      Eigen::Vector3d world = hit.world;
      if (hit.surface >= n_planes) {
        const MovingQuad& q = spec.objects[hit.surface - n_planes];
        world = q.pose_at(t2).apply(q.pose_at(t1).inverse().apply(world));
      }
      const Eigen::Vector3d cam = cam2_inv.apply(world);
      if (!(cam.z() > 0.0)) {
        out.occluded(y, x) = 1;
        continue;
      }
      const SubPixel p{k.fx * cam.x() / cam.z() + k.cx, k.fy * cam.y() / cam.z() + k.cy};
      out.flow(y, x, 0) = static_cast<float>(p.u - x);
      out.flow(y, x, 1) = static_cast<float>(p.v - y);
      const bool inside = p.u >= 0.0 && p.v >= 0.0 && p.u <= spec.width - 1 && p.v <= spec.height - 1;
      if (!inside) {
        out.occluded(y, x) = 1;
        continue;
      }
      const SurfaceHit seen = cast_ray(spec, poses[t2], p, t2);
      if (!seen.hit || seen.depth < cam.z() * (1.0 - 1e-6)) out.occluded(y, x) = 1;
    }
  }
  return out;
}

Dataset synth_scene(const SceneSpec& spec) {
  spec.validate();
  const std::vector<Pose> poses = camera_path(spec);
  Dataset ds;
  ds.intrinsics = spec.intrinsics();
  ds.seed = spec.seed;
  ds.scene = spec;
  ds.frames.resize(spec.frames);
  for (int t = 0; t < spec.frames; ++t) {
    FrameBundle& f = ds.frames[t];
    f.pose = poses[t];
    f.timestamp = t + 1;
    f.image = render_ground_truth(spec, poses[t], t);
    f.depth = render_depth(spec, poses[t], t);
    if (t + 1 < spec.frames) f.flow_to_next = gt_flow(spec, t, t + 1).flow;
    if (t > 0) f.flow_to_prev = gt_flow(spec, t, t - 1).flow;
  }
  return ds;
}

}  // namespace rstab
