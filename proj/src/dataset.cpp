#include "rstab/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <string>

#include "json.hpp"
#include "rstab/error.hpp"
#include "rstab/formats.hpp"

namespace rstab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kFormat = "rstab-dataset";
constexpr int kVersion = 1;

std::string numbered(const char* prefix, int t, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s%04d%s", prefix, t, ext);
  return buf;
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory \"" + dir.string() + "\": " + ec.message());
}

}  // namespace

PoseSequence Dataset::trajectory() const {
  PoseSequence seq;
  for (const FrameBundle& f : frames) {
    seq.poses.push_back(f.pose);
    seq.timestamps.push_back(f.timestamp);
  }
  return seq;
}

void Dataset::validate() const {
  intrinsics.validate();
  if (frames.empty()) throw ContractViolation("dataset: no frames");
  const int h = height();
  const int w = width();
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const FrameBundle& f = frames[i];
    const std::string where = "dataset frame " + std::to_string(i) + ": ";
    if (f.image.height() != h || f.image.width() != w || f.image.channels() != 3) {
      throw ContractViolation(where + "image shape does not match intrinsics");
    }
    if (f.depth.height() != h || f.depth.width() != w || f.depth.channels() != 1) {
      throw ContractViolation(where + "depth shape does not match intrinsics");
    }
    for (float v : f.image.data()) {
      if (!(v >= 0.0f && v <= 1.0f)) throw ContractViolation(where + "color outside [0,1]");
    }
    for (float d : f.depth.data()) {
      if (!(d > 0.0f) || !std::isfinite(d)) throw ContractViolation(where + "depth must be positive and finite");
    }
    for (const auto* flow : {&f.flow_to_next, &f.flow_to_prev}) {
      if (flow->has_value() && ((*flow)->height() != h || (*flow)->width() != w || (*flow)->channels() != 2)) {
        throw ContractViolation(where + "flow shape does not match intrinsics");
      }
    }
    if (i + 1 < frames.size() && !f.flow_to_next) throw ContractViolation(where + "missing flow to next frame");
  }
  trajectory().validate();
}

void save_dataset(const Dataset& dataset, const fs::path& dir) {
  dataset.validate();
  make_dirs(dir / "frames");
  make_dirs(dir / "depth");
  make_dirs(dir / "flow");

  json manifest;
  manifest["format"] = kFormat;
  manifest["version"] = kVersion;
  manifest["frames"] = static_cast<int>(dataset.frames.size());
  manifest["width"] = dataset.width();
  manifest["height"] = dataset.height();
  manifest["seed"] = dataset.seed;
  manifest["intrinsics"] = "intrinsics.txt";
  manifest["poses"] = "poses.txt";
  json images = json::array(), depths = json::array(), next = json::array(), prev = json::array();
  for (std::size_t i = 0; i < dataset.frames.size(); ++i) {
    const FrameBundle& f = dataset.frames[i];
    const int t = static_cast<int>(i) + 1;
    const std::string img = "frames/" + numbered("", t, ".png");
    const std::string dep = "depth/" + numbered("", t, ".pfm");
    write_png(f.image, dir / img);
    write_pfm(f.depth, dir / dep);
    images.push_back(img);
    depths.push_back(dep);
    if (f.flow_to_next) {
      const std::string p = "flow/" + numbered("next_", t, ".flo");
      write_flo(*f.flow_to_next, dir / p);
      next.push_back(p);
    } else {
      next.push_back(nullptr);
    }
    if (f.flow_to_prev) {
      const std::string p = "flow/" + numbered("prev_", t, ".flo");
      write_flo(*f.flow_to_prev, dir / p);
      prev.push_back(p);
    } else {
      prev.push_back(nullptr);
    }
  }
  manifest["images"] = images;
  manifest["depth"] = depths;
  manifest["flow_to_next"] = next;
  manifest["flow_to_prev"] = prev;
  if (dataset.scene) {
    manifest["moving_objects"] = dataset.scene->moving_object_count();
    manifest["scene"] = json::parse(scene_to_json(*dataset.scene));
  } else {
    manifest["moving_objects"] = nullptr;
  }

  write_intrinsics(dataset.intrinsics, dir / "intrinsics.txt");
  write_poses(dataset.trajectory(), dir / "poses.txt");
  const std::string text = manifest.dump(2) + "\n";
  write_file_bytes(dir / "manifest.json", std::vector<unsigned char>(text.begin(), text.end()));
}

Dataset load_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  const std::vector<unsigned char> bytes = read_file_bytes(manifest_path);
  json manifest;
  try {
    manifest = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw IoError("malformed manifest \"" + manifest_path.string() + "\": " + e.what());
  }
  Dataset ds;
  try {
    if (manifest.value("format", std::string()) != kFormat) {
      throw IoError("\"" + manifest_path.string() + "\" is not an rstab dataset manifest");
    }
    const int n = manifest.at("frames").get<int>();
    ds.seed = manifest.value("seed", std::uint64_t{0});
    ds.intrinsics = read_intrinsics(dir / manifest.value("intrinsics", std::string("intrinsics.txt")));
    if (ds.intrinsics.width != manifest.at("width").get<int>() ||
        ds.intrinsics.height != manifest.at("height").get<int>()) {
      throw IoError("manifest \"" + manifest_path.string() + "\" resolution disagrees with intrinsics");
    }
    const PoseSequence poses = read_poses(dir / manifest.value("poses", std::string("poses.txt")));
    const json& images = manifest.at("images");
    const json& depths = manifest.at("depth");
    const json& next = manifest.at("flow_to_next");
    const json empty = json::array();
    const json& prev = manifest.contains("flow_to_prev") ? manifest.at("flow_to_prev") : empty;
    if (n < 1 || poses.size() != static_cast<std::size_t>(n) || images.size() != static_cast<std::size_t>(n) ||
        depths.size() != static_cast<std::size_t>(n) || next.size() != static_cast<std::size_t>(n)) {
      throw IoError("manifest \"" + manifest_path.string() + "\" frame lists disagree with frame count " +
                    std::to_string(n));
    }
    ds.frames.resize(n);
    for (int i = 0; i < n; ++i) {
      FrameBundle& f = ds.frames[i];
      f.image = read_image(dir / images[i].get<std::string>());
      f.depth = read_pfm(dir / depths[i].get<std::string>());
      if (!next[i].is_null()) f.flow_to_next = read_flo(dir / next[i].get<std::string>());
      if (static_cast<std::size_t>(i) < prev.size() && !prev[i].is_null()) {
        f.flow_to_prev = read_flo(dir / prev[i].get<std::string>());
      }
      f.pose = poses.poses[i];
      f.timestamp = poses.timestamps[i];
    }
    if (manifest.contains("scene") && manifest.at("scene").is_object()) {
      ds.scene = scene_from_json(manifest.at("scene").dump());
    }
  } catch (const json::exception& e) {
    throw IoError("malformed manifest \"" + manifest_path.string() + "\": " + e.what());
  }
  try {
    ds.validate();
  } catch (const ContractViolation& e) {
    throw IoError("dataset \"" + dir.string() + "\" is inconsistent: " + e.what());
  }
  return ds;
}

}  // namespace rstab
