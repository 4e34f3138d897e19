#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "rstab/geometry.hpp"
#include "rstab/grid.hpp"
#include "rstab/scene.hpp"
#include "rstab/trajectory.hpp"

namespace rstab {

struct FrameBundle {
  Image image;                            // H x W x 3 in [0,1]
  DepthMap depth;                         // H x W, positive meters
  std::optional<FlowField> flow_to_next;  // F_{t -> t+1}; absent on the last frame
  std::optional<FlowField> flow_to_prev;  // F_{t -> t-1}; optional, absent on the first frame
  Pose pose;
  int timestamp = 1;
};

struct Dataset {
  Intrinsics intrinsics;
  std::vector<FrameBundle> frames;
  std::uint64_t seed = 0;
  std::optional<SceneSpec> scene;  // present for synthetic datasets

  int height() const { return intrinsics.height; }
  int width() const { return intrinsics.width; }
  PoseSequence trajectory() const;
  // Throws ContractViolation on shape mismatches, non-positive depth, or colors outside [0,1].
  void validate() const;
};

// Directory layout: manifest.json, intrinsics.txt, poses.txt, frames/NNNN.png,
// depth/NNNN.pfm, flow/next_NNNN.flo, flow/prev_NNNN.flo.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace rstab
