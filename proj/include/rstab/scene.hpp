#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "rstab/geometry.hpp"
#include "rstab/grid.hpp"

namespace rstab {

struct Dataset;

// Infinite textured plane. Textures are solid (evaluated at the 3D world
// point), so adjoining planes meet without a color seam.
struct StaticPlane {
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  int texture = 0;
};

// Textured rectangle moving rigidly; zero velocity and spin make it a static occluder.
// Its texture is evaluated in object-local coordinates so it travels with the object.
struct MovingQuad {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();  // at frame 0
  Eigen::Vector3d half_u = Eigen::Vector3d::UnitX();
  Eigen::Vector3d half_v = Eigen::Vector3d::UnitY();
  int texture = 0;
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();  // meters per frame
  double spin = 0.0;                                   // radians per frame about the quad normal

  bool moving() const { return velocity.squaredNorm() > 0.0 || spin != 0.0; }
  // Object-to-world transform at a frame index.
  Pose pose_at(int frame) const;
};

struct TrajectorySpec {
  Eigen::Vector3d start = Eigen::Vector3d::Zero();     // camera center at frame 0
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();  // base path drift per frame
  double yaw_rate = 0.0;                               // base path rotation, radians per frame
  double jitter_rotation_deg = 0.0;                    // peak per-axis rotation shake
  double jitter_translation = 0.0;                     // peak per-axis translation shake, meters
  int jitter_taper = 0;  // shake ramps in and out linearly over this many frames at each end
};

struct SceneSpec {
  std::vector<StaticPlane> planes;
  std::vector<MovingQuad> objects;
  TrajectorySpec trajectory;
  std::uint64_t seed = 7;
  int frames = 30;
  int width = 64;
  int height = 64;
  double focal = 60.0;
  int supersample = 3;  // per-axis sub-rays per pixel for the color image

  Intrinsics intrinsics() const;
  int moving_object_count() const;
  // Throws ContractViolation; a plane through the first camera center is
  // rejected as degenerate (seen edge-on).
  void validate() const;
};

enum class Preset { kStatic, kDynamic, kParallax };

Preset parse_preset(std::string_view name);
std::string_view preset_name(Preset preset);
SceneSpec make_preset(Preset preset, std::uint64_t seed, int frames = 30, int size = 64);

std::string scene_to_json(const SceneSpec& spec);
SceneSpec scene_from_json(std::string_view text);

// Smooth base path and the jittered input path (deterministic in spec.seed).
std::vector<Pose> base_path(const SceneSpec& spec);
std::vector<Pose> camera_path(const SceneSpec& spec);

struct SurfaceHit {
  bool hit = false;
  double depth = 0.0;    // camera z of the hit
  int surface = -1;      // planes first, then objects
  Eigen::Vector3d world = Eigen::Vector3d::Zero();
};

SurfaceHit cast_ray(const SceneSpec& spec, const Pose& camera, SubPixel x, int frame);
Eigen::Vector3f surface_color(const SceneSpec& spec, const SurfaceHit& hit, int frame);

// Analytic render at any pose; dynamic objects are placed at `frame`.
// Colors are quantized to 8-bit steps exactly as synthesized frames are.
Image render_ground_truth(const SceneSpec& spec, const Pose& pose, int frame);
DepthMap render_depth(const SceneSpec& spec, const Pose& pose, int frame);

struct FlowResult {
  FlowField flow;  // geometric correspondence, kept even where occluded
  Mask occluded;   // 1 where the corresponding point is hidden, behind, or outside frame t2
};

// Exact displacement from frame t1 pixels to frame t2 (0-based frame indices).
FlowResult gt_flow(const SceneSpec& spec, int t1, int t2);

// Full dataset: images, depth, forward and backward flow, jittered poses.
Dataset synth_scene(const SceneSpec& spec);

}  // namespace rstab
