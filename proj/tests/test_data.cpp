#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "rstab/dataset.hpp"
#include "rstab/error.hpp"
#include "rstab/formats.hpp"
#include "rstab/scene.hpp"
#include "support.hpp"

using namespace rstab;
using rstab::test::TempDir;

namespace {

void write_bytes(const std::filesystem::path& p, const std::string& header, const std::vector<unsigned char>& body) {
  std::ofstream out(p, std::ios::binary);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(body.data()), static_cast<std::streamsize>(body.size()));
}

// Little-endian IEEE-754 encodings: 1.0f, 2.0f, 0.5f, 4.0f, -3.0f, 0.25f, 8.0f, -1.5f.
const std::vector<unsigned char> kOne = {0x00, 0x00, 0x80, 0x3f};
const std::vector<unsigned char> kTwo = {0x00, 0x00, 0x00, 0x40};
const std::vector<unsigned char> kHalf = {0x00, 0x00, 0x00, 0x3f};
const std::vector<unsigned char> kFour = {0x00, 0x00, 0x80, 0x40};
const std::vector<unsigned char> kMinusThree = {0x00, 0x00, 0x40, 0xc0};
const std::vector<unsigned char> kQuarter = {0x00, 0x00, 0x80, 0x3e};
const std::vector<unsigned char> kEight = {0x00, 0x00, 0x00, 0x41};
const std::vector<unsigned char> kMinusOneHalf = {0x00, 0x00, 0xc0, 0xbf};

std::vector<unsigned char> concat(std::initializer_list<std::vector<unsigned char>> parts) {
  std::vector<unsigned char> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

SceneSpec flat_wall(int frames = 4) {
  SceneSpec s;
  s.planes = {{Eigen::Vector3d(0, 0, 5), Eigen::Vector3d(0, 0, -1), 0}};
  s.frames = frames;
  s.width = s.height = 24;
  s.focal = 22.0;
  s.supersample = 1;
  return s;
}

bool same_bits(const Pose& a, const Pose& b) {
  return a.rotation().coeffs() == b.rotation().coeffs() && a.translation() == b.translation();
}

}  // namespace

TEST_CASE("hand-encoded 2x2 PFM, little-endian, rows bottom to top") {
  TempDir dir("pfm");
  write_bytes(dir / "a.pfm", "Pf\n2 2\n-1.0\n", concat({kHalf, kFour, kOne, kTwo}));
  const DepthMap d = read_pfm(dir / "a.pfm");
  REQUIRE(d.height() == 2);
  REQUIRE(d.width() == 2);
  CHECK(d(0, 0) == 1.0f);
  CHECK(d(0, 1) == 2.0f);
  CHECK(d(1, 0) == 0.5f);
  CHECK(d(1, 1) == 4.0f);

  write_pfm(d, dir / "b.pfm");
  CHECK(read_file_bytes(dir / "b.pfm") == read_file_bytes(dir / "a.pfm"));
}

TEST_CASE("big-endian PFM is accepted") {
  TempDir dir("pfm_be");
  auto be = [](std::vector<unsigned char> v) { return std::vector<unsigned char>(v.rbegin(), v.rend()); };
  write_bytes(dir / "a.pfm", "Pf\n2 2\n1.0\n", concat({be(kHalf), be(kFour), be(kOne), be(kTwo)}));
  const DepthMap d = read_pfm(dir / "a.pfm");
  CHECK(d(0, 0) == 1.0f);
  CHECK(d(1, 1) == 4.0f);
}

TEST_CASE("hand-encoded 2x2 .flo") {
  TempDir dir("flo");
  const std::vector<unsigned char> two = {0x02, 0x00, 0x00, 0x00};
  write_bytes(dir / "a.flo", "PIEH",
              concat({two, two, kOne, kTwo, kHalf, kFour, kMinusThree, kQuarter, kEight, kMinusOneHalf}));
  const FlowField f = read_flo(dir / "a.flo");
  REQUIRE(f.height() == 2);
  REQUIRE(f.width() == 2);
  CHECK(f(0, 0, 0) == 1.0f);
  CHECK(f(0, 0, 1) == 2.0f);
  CHECK(f(0, 1, 0) == 0.5f);
  CHECK(f(0, 1, 1) == 4.0f);
  CHECK(f(1, 0, 0) == -3.0f);
  CHECK(f(1, 0, 1) == 0.25f);
  CHECK(f(1, 1, 0) == 8.0f);
  CHECK(f(1, 1, 1) == -1.5f);

  write_flo(f, dir / "b.flo");
  CHECK(read_file_bytes(dir / "b.flo") == read_file_bytes(dir / "a.flo"));
}

TEST_CASE("malformed files raise IoError naming the file") {
  TempDir dir("bad");
  write_bytes(dir / "wrong.flo", "PIEX", std::vector<unsigned char>(12 + 32, 0));
  try {
    read_flo(dir / "wrong.flo");
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("wrong.flo") != std::string::npos);
  }
  write_bytes(dir / "short.pfm", "Pf\n2 2\n-1.0\n", kOne);
  CHECK_THROWS_AS(read_pfm(dir / "short.pfm"), IoError);
  write_bytes(dir / "color.pfm", "PF\n1 1\n-1.0\n", concat({kOne, kOne, kOne}));
  CHECK_THROWS_AS(read_pfm(dir / "color.pfm"), IoError);
  CHECK_THROWS_AS(read_image(dir / "missing.png"), IoError);
  std::ofstream(dir / "poses.txt") << "1 1 0 0 0 0 0\n";
  CHECK_THROWS_AS(read_poses(dir / "poses.txt"), IoError);
}

TEST_CASE("random float fields round-trip bit-exactly") {
  TempDir dir("fields");
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(-100.0f, 100.0f);
  DepthMap d(7, 5);
  FlowField f(7, 5, 2);
  for (float& v : d.data()) v = std::abs(u(rng)) + 1e-3f;
  for (float& v : f.data()) v = u(rng);
  write_pfm(d, dir / "d.pfm");
  write_flo(f, dir / "f.flo");
  CHECK(read_pfm(dir / "d.pfm") == d);
  CHECK(read_flo(dir / "f.flo") == f);
}

TEST_CASE("8-bit images round-trip through PNG") {
  TempDir dir("png");
  Image img(5, 9, 3);
  int i = 0;
  for (float& v : img.data()) v = static_cast<float>((i++ * 37) % 256) / 255.0f;
  write_png(img, dir / "a.png");
  CHECK(read_image(dir / "a.png") == img);

  Mask m(5, 9);
  m(2, 3) = 1;
  write_mask_png(m, dir / "m.png");
  CHECK(read_mask_png(dir / "m.png") == m);
}

TEST_CASE("binary PPM is read") {
  TempDir dir("ppm");
  write_bytes(dir / "a.ppm", "P6\n# note\n2 1\n255\n", {255, 0, 51, 0, 255, 102});
  const Image img = read_image(dir / "a.ppm");
  CHECK(img(0, 0, 0) == 1.0f);
  CHECK(img(0, 0, 2) == 51.0f / 255.0f);
  CHECK(img(0, 1, 1) == 1.0f);
}

TEST_CASE("pose and intrinsics files round-trip exactly") {
  TempDir dir("poses");
  std::mt19937_64 rng(42);
  std::vector<Pose> poses;
  for (int i = 0; i < 50; ++i) poses.push_back(rstab::test::random_pose(rng, 10.0));
  PoseSequence seq = PoseSequence::from_poses(poses);
  seq.timestamps.back() = 99;
  write_poses(seq, dir / "p.txt");
  const PoseSequence back = read_poses(dir / "p.txt");
  REQUIRE(back.size() == seq.size());
  CHECK(back.timestamps == seq.timestamps);
  for (std::size_t i = 0; i < seq.size(); ++i) CHECK(same_bits(back.poses[i], seq.poses[i]));

  Intrinsics k = rstab::test::test_intrinsics(64, 61.25);
  k.cy = 30.1;
  write_intrinsics(k, dir / "k.txt");
  CHECK(read_intrinsics(dir / "k.txt") == k);
}

TEST_CASE("fronto-parallel wall has constant depth") {
  const SceneSpec s = flat_wall();
  const DepthMap d = render_depth(s, Pose::identity(), 0);
  for (float v : d.data()) CHECK(v == 5.0f);
  const FlowResult self = gt_flow(synth_scene(s).scene.value(), 2, 2);
  for (float v : self.flow.data()) CHECK(v == 0.0f);
}

TEST_CASE("synthesis is deterministic in the seed") {
  SceneSpec s = make_preset(Preset::kDynamic, 7, 6, 24);
  const Dataset a = synth_scene(s);
  const Dataset b = synth_scene(s);
  for (std::size_t t = 0; t < a.frames.size(); ++t) {
    CHECK(a.frames[t].image == b.frames[t].image);
    CHECK(a.frames[t].depth == b.frames[t].depth);
    CHECK(same_bits(a.frames[t].pose, b.frames[t].pose));
  }
  s.seed = 8;
  CHECK_FALSE(synth_scene(s).frames[3].image == a.frames[3].image);
}

TEST_CASE("ground-truth render at an input pose equals the frame") {
  const SceneSpec s = make_preset(Preset::kParallax, 3, 5, 32);
  const Dataset ds = synth_scene(s);
  for (int t = 0; t < 5; ++t) CHECK(render_ground_truth(s, ds.frames[t].pose, t) == ds.frames[t].image);
}

TEST_CASE("render between poses matches the closed-form plane intersection") {
  SceneSpec s = flat_wall();
  s.trajectory.velocity = Eigen::Vector3d(0.1, 0.0, 0.05);
  const std::vector<Pose> path = camera_path(s);
  const Pose mid(path[1].rotation().slerp(0.5, path[2].rotation()),
                 0.5 * (path[1].translation() + path[2].translation()));
  const Image img = render_ground_truth(s, mid, 1);
  const Intrinsics k = s.intrinsics();
  for (int y = 0; y < s.height; y += 5) {
    for (int x = 0; x < s.width; x += 5) {
      const Eigen::Vector3d dir = mid.rotation() * Eigen::Vector3d((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
      const double lambda = (5.0 - mid.translation().z()) / dir.z();
      SurfaceHit hit;
      hit.hit = true;
      hit.surface = 0;
      hit.world = mid.translation() + lambda * dir;
      hit.depth = lambda;
      const Eigen::Vector3f c = surface_color(s, hit, 1);
      for (int ch = 0; ch < 3; ++ch) {
        const float q = std::round(std::clamp(c[ch], 0.0f, 1.0f) * 255.0f) / 255.0f;
        CHECK(img(y, x, ch) == doctest::Approx(q).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("moving objects are drawn at their per-frame position") {
  const SceneSpec s = make_preset(Preset::kDynamic, 7, 10, 64);
  const std::vector<Pose> path = camera_path(s);
  const Intrinsics k = s.intrinsics();
  const MovingQuad& q = s.objects[0];
  for (int t : {0, 5, 9}) {
    const Eigen::Vector3d c = path[t].inverse().apply(q.pose_at(t).apply(Eigen::Vector3d::Zero()));
    const SubPixel px{k.fx * c.x() / c.z() + k.cx, k.fy * c.y() / c.z() + k.cy};
    const SurfaceHit hit = cast_ray(s, path[t], px, t);
    CHECK(hit.surface == static_cast<int>(s.planes.size()));
    CHECK((hit.world - q.pose_at(t).translation()).norm() < 1e-9);
  }
}

TEST_CASE("static pixels: depth, flow and poses agree") {
  const SceneSpec s = make_preset(Preset::kStatic, 7, 4, 32);
  const Dataset ds = synth_scene(s);
  const Intrinsics k = ds.intrinsics;
  double worst = 0.0;
  for (int t = 0; t + 1 < 4; ++t) {
    const FlowField& f = *ds.frames[t].flow_to_next;
    for (int y = 0; y < 32; ++y) {
      for (int x = 0; x < 32; ++x) {
        const SubPixel px{static_cast<double>(x), static_cast<double>(y)};
        const Projection p = project(px, ds.frames[t].depth(y, x), ds.frames[t].pose, ds.frames[t + 1].pose, k);
        REQUIRE(p.valid);
        worst = std::max({worst, std::abs(p.pixel.u - (x + f(y, x, 0))), std::abs(p.pixel.v - (y + f(y, x, 1)))});
      }
    }
  }
  // float storage of depth and flow bounds the agreement
  CHECK(worst < 1e-6);
}

TEST_CASE("dynamic pixels break the epipolar relation") {
  const SceneSpec s = make_preset(Preset::kDynamic, 7, 3, 64);
  const Dataset ds = synth_scene(s);
  const Intrinsics k = ds.intrinsics;
  const std::vector<Pose> path = camera_path(s);
  const FlowField& f = *ds.frames[0].flow_to_next;
  const MovingQuad& q = s.objects[0];
  const int n_planes = static_cast<int>(s.planes.size());
  int dynamic = 0;
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      const SurfaceHit hit = cast_ray(s, path[0], {double(x), double(y)}, 0);
      if (hit.surface < n_planes) continue;
      ++dynamic;
      // image-space motion of the object alone, seen from the second camera
      const Eigen::Vector3d moved = path[1].inverse().apply(q.pose_at(1).apply(q.pose_at(0).inverse().apply(hit.world)));
      const Eigen::Vector3d still = path[1].inverse().apply(hit.world);
      const double object_motion = std::hypot(k.fx * (moved.x() / moved.z() - still.x() / still.z()),
                                              k.fy * (moved.y() / moved.z() - still.y() / still.z()));
      const Projection p = project({double(x), double(y)}, ds.frames[0].depth(y, x), path[0], path[1], k);
      const double miss = std::hypot(p.pixel.u - (x + f(y, x, 0)), p.pixel.v - (y + f(y, x, 1)));
      CHECK(miss >= object_motion - 1e-4);
      CHECK(object_motion > 0.5);
    }
  }
  CHECK(dynamic > 50);
}

TEST_CASE("scene validation") {
  SceneSpec s = flat_wall();
  s.planes[0].normal = Eigen::Vector3d(1, 0, 0);  // contains every view ray of the first camera
  s.planes[0].point = Eigen::Vector3d(0, 0, 0);
  CHECK_THROWS_AS(s.validate(), ContractViolation);
  s = flat_wall();
  s.planes.clear();
  CHECK_THROWS_AS(s.validate(), ContractViolation);
  s = flat_wall();
  s.trajectory.jitter_translation = -1.0;
  CHECK_THROWS_AS(s.validate(), ContractViolation);
  CHECK_THROWS_AS(parse_preset("windy"), ContractViolation);
}

TEST_CASE("scene JSON round-trips") {
  const SceneSpec s = make_preset(Preset::kParallax, 19, 12, 40);
  const SceneSpec back = scene_from_json(scene_to_json(s));
  CHECK(scene_to_json(back) == scene_to_json(s));
  CHECK(back.moving_object_count() == 0);
  CHECK(make_preset(Preset::kDynamic, 1).moving_object_count() == 1);
}

TEST_CASE("dataset directory round-trips") {
  TempDir dir("dataset");
  const Dataset ds = synth_scene(make_preset(Preset::kDynamic, 5, 4, 16));
  save_dataset(ds, dir.path());
  const Dataset back = load_dataset(dir.path());
  REQUIRE(back.frames.size() == ds.frames.size());
  CHECK(back.intrinsics == ds.intrinsics);
  CHECK(back.seed == ds.seed);
  REQUIRE(back.scene.has_value());
  CHECK(scene_to_json(*back.scene) == scene_to_json(*ds.scene));
  for (std::size_t t = 0; t < ds.frames.size(); ++t) {
    const FrameBundle& a = ds.frames[t];
    const FrameBundle& b = back.frames[t];
    CHECK(a.image == b.image);
    CHECK(a.depth == b.depth);
    CHECK(a.flow_to_next == b.flow_to_next);
    CHECK(a.flow_to_prev == b.flow_to_prev);
    CHECK(same_bits(a.pose, b.pose));
    CHECK(a.timestamp == b.timestamp);
  }
}

TEST_CASE("dataset validation") {
  Dataset ds = synth_scene(flat_wall(3));
  CHECK_NOTHROW(ds.validate());
  Dataset bad = ds;
  bad.frames[1].depth(0, 0) = 0.0f;
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
  bad = ds;
  bad.frames[0].flow_to_next.reset();
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
  bad = ds;
  bad.frames[2].image(1, 1, 1) = 1.5f;
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
}
