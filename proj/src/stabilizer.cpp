#include "rstab/stabilizer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"
#include "rstab/error.hpp"
#include "rstab/formats.hpp"
#include "rstab/metrics.hpp"
#include "rstab/scene.hpp"

namespace rstab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json config_json(const StabilizeConfig& c) {
  const RenderConfig& r = c.render;
  return {{"window", r.window},
          {"samples", r.samples},
          {"lambda", r.lambda},
          {"literal_weights", r.literal_weights},
          {"gamma", r.gamma},
          {"weight_epsilon", r.weight_epsilon},
          {"smin", r.range.s_min},
          {"smin_relative", r.range.s_min_relative},
          {"soft_zbuffer", r.soft_zbuffer},
          {"adaptive_range", r.adaptive_range},
          {"even_samples", r.even_samples},
          {"color_correction", r.color_correction},
          {"blend_only", r.blend_only},
          {"smooth_window", c.smooth_window},
          {"smooth_sigma", c.smooth_sigma},
          {"head", c.head},
          {"seed", c.seed}};
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

void StabilizeConfig::validate() const {
  render.validate();
  if (smooth_window < 1 || smooth_window % 2 == 0) throw ContractViolation("smoothing window must be odd and >= 1");
  if (!(smooth_sigma >= 0.0) || !std::isfinite(smooth_sigma)) {
    throw ContractViolation("smoothing sigma must be >= 0");
  }
}

PathMetrics path_metrics(const Dataset& dataset, const std::vector<Pose>& output_poses) {
  if (output_poses.size() != dataset.frames.size()) {
    throw ContractViolation("path_metrics: output path length differs from the input");
  }
  PathMetrics m;
  std::vector<Pose> input_poses;
  for (const FrameBundle& f : dataset.frames) input_poses.push_back(f.pose);
  if (static_cast<int>(input_poses.size()) >= TrackSet::kMinLength) {
    const FrameBundle& ref = dataset.frames.front();
    TrackSet in = tracks_from_depth(ref.depth, ref.pose, input_poses, dataset.intrinsics);
    TrackSet out = tracks_from_depth(ref.depth, ref.pose, output_poses, dataset.intrinsics);
    if (in.tracks.empty() || out.tracks.empty()) {
      in = tracks_from_poses(input_poses);
      out = tracks_from_poses(output_poses);
    }
    m.stability_input = stability_score(in);
    m.stability_output = stability_score(out);
  }
  std::vector<Correspondences> corr;
  for (std::size_t t = 0; t < dataset.frames.size(); ++t) {
    corr.push_back(depth_correspondences(dataset.frames[t].depth, input_poses[t], output_poses[t],
                                         dataset.intrinsics));
  }
  m.distortion = distortion_value(corr).value;
  return m;
}

StabilizeResult stabilize(const Dataset& dataset, const DensityModel& model, const StabilizeConfig& config,
                          const std::function<void(int, int)>& progress) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  StabilizeResult result;
  const PoseSequence input = dataset.trajectory();
  result.poses = config.smooth_sigma > 0.0 ? smooth_trajectory(input, config.smooth_window, config.smooth_sigma)
                                           : smooth_trajectory(input, 1, 0.0);
  const StabilizedRenderer renderer(dataset, model, config.render);
  const int n = static_cast<int>(dataset.frames.size());
  StabilizeReport& rep = result.report;
  std::vector<Mask> masks;
  double psnr_in_sum = 0.0, psnr_gt_sum = 0.0;
  for (int t = 0; t < n; ++t) {
    RenderedFrame frame;
    try {
      frame = renderer.render_frame(result.poses.poses[t], t);
    } catch (const ComputeError& e) {
      throw ComputeError("frame " + std::to_string(t + 1) + ": " + e.what());
    }
    FrameReport fr;
    fr.index = t;
    double wsum = 0.0;
    fr.min_weight = frame.weight.data().empty() ? 0.0 : frame.weight.data()[0];
    for (double w : frame.weight.data()) {
      wsum += w;
      fr.min_weight = std::min(fr.min_weight, w);
    }
    fr.mean_weight = wsum / static_cast<double>(frame.weight.pixel_count());
    fr.valid_fraction = cropping_ratio({frame.valid});
    fr.psnr_input = psnr(frame.image, dataset.frames[t].image);
    psnr_in_sum += fr.psnr_input;
    if (dataset.scene) {
      fr.psnr_truth = psnr(frame.image, render_ground_truth(*dataset.scene, result.poses.poses[t], t));
      psnr_gt_sum += *fr.psnr_truth;
    }
    masks.push_back(frame.valid);
    rep.frames.push_back(fr);
    result.frames.push_back(std::move(frame));
    if (progress) progress(t + 1, n);
  }
  rep.cropping = cropping_ratio(masks);
  rep.mean_psnr_input = psnr_in_sum / n;
  if (dataset.scene) rep.mean_psnr_truth = psnr_gt_sum / n;
  const PathMetrics m = path_metrics(dataset, result.poses.poses);
  rep.stability_input = m.stability_input;
  rep.stability_output = m.stability_output;
  rep.distortion = m.distortion;
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

std::string report_json(const StabilizeReport& report, const StabilizeConfig& config) {
  json j;
  j["config"] = config_json(config);
  j["cropping_ratio"] = report.cropping;
  j["mean_psnr_input"] = report.mean_psnr_input;
  j["mean_psnr_truth"] = optional_number(report.mean_psnr_truth);
  j["stability_input"] = optional_number(report.stability_input);
  j["stability_output"] = optional_number(report.stability_output);
  j["distortion"] = optional_number(report.distortion);
  j["frames"] = json::array();
  for (const FrameReport& f : report.frames) {
    j["frames"].push_back({{"frame", f.index + 1},
                           {"mean_weight", f.mean_weight},
                           {"min_weight", f.min_weight},
                           {"valid_fraction", f.valid_fraction},
                           {"psnr_input", f.psnr_input},
                           {"psnr_truth", optional_number(f.psnr_truth)}});
  }
  return j.dump(2) + "\n";
}

std::string report_text(const StabilizeReport& report, const StabilizeConfig& config) {
  std::ostringstream out;
  char line[160];
  out << "config " << config_json(config).dump() << "\n\n";
  std::snprintf(line, sizeof(line), "%-6s %11s %11s %8s %10s %10s\n", "frame", "mean_W", "min_W", "valid",
                "psnr_in", "psnr_gt");
  out << line;
  for (const FrameReport& f : report.frames) {
    char gt[32] = "-";
    if (f.psnr_truth) std::snprintf(gt, sizeof(gt), "%.3f", *f.psnr_truth);
    std::snprintf(line, sizeof(line), "%-6d %11.6f %11.6f %8.4f %10.3f %10s\n", f.index + 1, f.mean_weight,
                  f.min_weight, f.valid_fraction, f.psnr_input, gt);
    out << line;
  }
  auto opt = [](const std::optional<double>& v) {
    char buf[32] = "n/a";
    if (v) std::snprintf(buf, sizeof(buf), "%.6f", *v);
    return std::string(buf);
  };
  out << "\n";
  std::snprintf(line, sizeof(line), "%-18s %.6f\n", "cropping_ratio", report.cropping);
  out << line;
  std::snprintf(line, sizeof(line), "%-18s %.3f\n", "mean_psnr_input", report.mean_psnr_input);
  out << line;
  out << "mean_psnr_truth    " << opt(report.mean_psnr_truth) << "\n";
  out << "stability_input    " << opt(report.stability_input) << "\n";
  out << "stability_output   " << opt(report.stability_output) << "\n";
  out << "distortion         " << opt(report.distortion) << "\n";
  return out.str();
}

void save_stabilized(const StabilizeResult& result, const StabilizeConfig& config, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "frames", ec);
  if (!ec) fs::create_directories(dir / "masks", ec);
  if (ec) throw IoError("cannot create directory \"" + dir.string() + "\": " + ec.message());
  for (std::size_t i = 0; i < result.frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%04zu.png", i + 1);
    write_png(result.frames[i].image, dir / "frames" / name);
    write_mask_png(result.frames[i].valid, dir / "masks" / name);
  }
  write_poses(result.poses, dir / "poses.txt");
  const std::string js = report_json(result.report, config);
  const std::string txt = report_text(result.report, config);
  write_file_bytes(dir / "report.json", {js.begin(), js.end()});
  write_file_bytes(dir / "report.txt", {txt.begin(), txt.end()});
}

}  // namespace rstab
