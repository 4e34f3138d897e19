#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rstab/dataset.hpp"
#include "rstab/density.hpp"
#include "rstab/renderer.hpp"

namespace rstab {

struct StabilizeConfig {
  RenderConfig render;
  int smooth_window = 13;
  double smooth_sigma = 2.0;  // 0 keeps the input path
  std::uint64_t seed = 7;
  std::string head = "analytic";  // echoed into the report

  void validate() const;
};

struct FrameReport {
  int index = 0;  // 0-based
  double mean_weight = 0.0;
  double min_weight = 0.0;
  double valid_fraction = 0.0;
  double psnr_input = 0.0;
  std::optional<double> psnr_truth;  // against an analytic render at the output pose
};

struct StabilizeReport {
  std::vector<FrameReport> frames;
  double cropping = 0.0;
  double mean_psnr_input = 0.0;
  std::optional<double> mean_psnr_truth;
  std::optional<double> stability_input;  // present when the clip is long enough
  std::optional<double> stability_output;
  std::optional<double> distortion;
  double seconds = 0.0;
};

struct StabilizeResult {
  std::vector<RenderedFrame> frames;
  PoseSequence poses;  // smoothed target path
  StabilizeReport report;
};

// Smooths the path, renders every frame at its smoothed pose and scores the result.
StabilizeResult stabilize(const Dataset& dataset, const DensityModel& model, const StabilizeConfig& config,
                          const std::function<void(int, int)>& progress = {});

// Input-vs-output metrics shared by the stabilize report and the eval command.
struct PathMetrics {
  std::optional<double> stability_input;
  std::optional<double> stability_output;
  std::optional<double> distortion;
};
PathMetrics path_metrics(const Dataset& dataset, const std::vector<Pose>& output_poses);

std::string report_json(const StabilizeReport& report, const StabilizeConfig& config);
std::string report_text(const StabilizeReport& report, const StabilizeConfig& config);

// frames/NNNN.png, masks/NNNN.png, poses.txt, report.json, report.txt
void save_stabilized(const StabilizeResult& result, const StabilizeConfig& config,
                     const std::filesystem::path& dir);

}  // namespace rstab
