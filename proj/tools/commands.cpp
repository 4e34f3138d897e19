#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <memory>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "rstab/error.hpp"
#include "rstab/formats.hpp"
#include "rstab/metrics.hpp"
#include "rstab/scene.hpp"

namespace rstab::cli {

namespace fs = std::filesystem;

namespace {

std::string read_text(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  return {bytes.begin(), bytes.end()};
}

}  // namespace

void cmd_synth(const SynthOptions& options, std::ostream& out) {
  if (options.out_dir.empty()) throw ContractViolation("synth: an output directory is required");
  SceneSpec spec;
  if (!options.spec_path.empty()) {
    spec = scene_from_json(read_text(options.spec_path));
    if (options.seed_given) spec.seed = options.seed;
  } else {
    spec = make_preset(parse_preset(options.preset), options.seed, options.frames, options.size);
  }
  const Dataset ds = synth_scene(spec);
  save_dataset(ds, options.out_dir);
  out << "wrote " << ds.frames.size() << " frames (" << ds.width() << "x" << ds.height() << ", seed " << spec.seed
      << ", moving objects " << spec.moving_object_count() << ") to " << options.out_dir << "\n";
}

void cmd_train(const TrainOptions& options, std::ostream& out) {
  if (options.out_head.empty()) throw ContractViolation("train: an output head path is required");
  const Dataset ds = load_dataset(options.dataset_dir);
  const RayPool pool = build_ray_pool(ds, options.config);
  out << "ray pool: " << pool.rays() << " rays x " << pool.samples << " samples\n";
  const TrainResult result = train_density(pool, options.config, nullptr, [&](const LossPoint& p) {
    out << "iter " << std::setw(6) << p.iteration << "  loss " << std::scientific << std::setprecision(4) << p.loss
        << std::defaultfloat << "\n";
  });
  save_head(result.head, options.out_head);
  out << std::scientific << std::setprecision(4) << "initial pool loss " << result.initial_loss
      << "\nfinal pool loss   " << result.final_loss << "\nfinal window loss " << result.final_window_loss
      << std::defaultfloat << "\nwrote " << options.out_head << "\n";
}

void cmd_stabilize(const StabilizeOptions& options, std::ostream& out, std::ostream& err) {
  if (options.out_dir.empty()) throw ContractViolation("stabilize: an output directory is required");
  const Dataset ds = load_dataset(options.dataset_dir);
  StabilizeConfig config = options.config;
  std::unique_ptr<DensityModel> model;
  if (options.head != "analytic" && !options.head.empty()) {
    if (fs::exists(options.head)) {
      auto head = std::make_unique<DensityHead>(load_head(options.head));
      model = std::move(head);
      config.head = fs::path(options.head).filename().string();
    } else {
      err << "warning: head file \"" << options.head << "\" not found; using the analytic density\n";
    }
  }
  if (!model) {
    model = std::make_unique<AnalyticDensity>(kHandcraftedChannels);
    config.head = "analytic";
  }
  const StabilizeResult result = stabilize(ds, *model, config);
  save_stabilized(result, config, options.out_dir);
  out << report_text(result.report, config);
  char line[96];
  std::snprintf(line, sizeof(line), "rendered %zu frames in %.1f s\n", result.frames.size(), result.report.seconds);
  out << line;
}

void cmd_eval(const EvalOptions& options, std::ostream& out) {
  const Dataset ds = load_dataset(options.input_dir);
  const fs::path dir = options.output_dir;
  const PoseSequence poses = read_poses(dir / "poses.txt");
  if (poses.size() != ds.frames.size()) {
    throw IoError("\"" + (dir / "poses.txt").string() + "\" has " + std::to_string(poses.size()) +
                  " poses but the input has " + std::to_string(ds.frames.size()) + " frames");
  }
  std::vector<Mask> masks;
  std::optional<double> psnr_mean;
  double psnr_sum = 0.0;
  bool have_frames = true;
  for (std::size_t t = 0; t < ds.frames.size(); ++t) {
    char name[32];
    std::snprintf(name, sizeof(name), "%04zu.png", t + 1);
    const fs::path mask_path = dir / "masks" / name;
    masks.push_back(fs::exists(mask_path) ? read_mask_png(mask_path) : Mask(ds.height(), ds.width(), 1, 1));
    const fs::path frame_path = dir / "frames" / name;
    if (have_frames && fs::exists(frame_path)) {
      psnr_sum += psnr(read_image(frame_path), ds.frames[t].image);
    } else {
      have_frames = false;
    }
  }
  if (have_frames) psnr_mean = psnr_sum / static_cast<double>(ds.frames.size());
  const PathMetrics m = path_metrics(ds, poses.poses);
  const double cropping = cropping_ratio(masks);

  auto fmt = [](const std::optional<double>& v) {
    char buf[32] = "n/a";
    if (v) std::snprintf(buf, sizeof(buf), "%.6f", *v);
    return std::string(buf);
  };
  out << "cropping_ratio     " << fmt(cropping) << "\n"
      << "distortion         " << fmt(m.distortion) << "\n"
      << "stability_input    " << fmt(m.stability_input) << "\n"
      << "stability_output   " << fmt(m.stability_output) << "\n"
      << "mean_psnr_input    " << fmt(psnr_mean) << "\n";
  if (!options.json_path.empty()) {
    auto num = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    const nlohmann::json j = {{"cropping_ratio", cropping},
                              {"distortion", num(m.distortion)},
                              {"stability_input", num(m.stability_input)},
                              {"stability_output", num(m.stability_output)},
                              {"mean_psnr_input", num(psnr_mean)}};
    const std::string text = j.dump(2) + "\n";
    write_file_bytes(options.json_path, {text.begin(), text.end()});
  }
}

bool cmd_gradcheck(const GradcheckOptions& options, std::ostream& out) {
  const GradcheckReport r = gradcheck_head(options.trials, options.seed);
  const bool pass = r.max_relative_error < options.tolerance;
  out << "gradcheck: " << r.trials << " trials, " << r.checked << " derivatives, max relative error "
      << std::scientific << std::setprecision(3) << r.max_relative_error << std::defaultfloat
      << (pass ? " (pass)" : " (FAIL)") << "\n";
  return pass;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"rstab: sliding-window volume-rendering video stabilizer"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: RSTAB_THREADS or hardware)")->check(
      CLI::NonNegativeNumber);

  SynthOptions synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic shaky-video dataset");
  s->add_option("out", synth.out_dir, "Output dataset directory")->required();
  s->add_option("--spec", synth.spec_path, "Scene description (JSON)");
  s->add_option("--preset", synth.preset, "Scene preset")->check(CLI::IsMember({"static", "dynamic", "parallax"}));
  s->add_option("--seed", synth.seed, "Random seed");
  s->add_option("--frames", synth.frames, "Frame count")->check(CLI::PositiveNumber);
  s->add_option("--size", synth.size, "Square resolution in pixels")->check(CLI::Range(2, 4096));

  TrainOptions train;
  auto* t = app.add_subcommand("train", "Train the density head on a dataset");
  t->add_option("dataset", train.dataset_dir, "Dataset directory")->required();
  t->add_option("out", train.out_head, "Output head file")->required();
  t->add_option("--iterations", train.config.iterations, "Optimizer steps");
  t->add_option("--lr", train.config.learning_rate, "Base learning rate");
  t->add_option("--batch", train.config.batch_rays, "Rays per batch");
  t->add_option("--rays-per-frame", train.config.rays_per_frame, "Training rays drawn per frame");
  t->add_option("--samples", train.config.samples_per_ray, "Depth samples per training ray");
  t->add_option("--window", train.config.window, "Temporal window size");
  t->add_option("--lambda", train.config.lambda, "Temporal weight decay");
  t->add_option("--gamma", train.config.gamma, "Feature-affinity sharpness");
  t->add_option("--decay", train.config.decay_rate, "Learning-rate factor reached after --decay-steps");
  t->add_option("--decay-steps", train.config.decay_steps, "Iterations over which --decay applies");
  t->add_option("--seed", train.config.seed, "Random seed");

  StabilizeOptions stab;
  RenderConfig& rc = stab.config.render;
  bool no_arr = false, no_cc = false;
  double smin = -1.0;
  auto* st = app.add_subcommand("stabilize", "Render a stabilized version of a dataset");
  st->add_option("dataset", stab.dataset_dir, "Dataset directory")->required();
  st->add_option("out", stab.out_dir, "Output directory")->required();
  st->add_option("--window", rc.window, "Temporal window size")->check(CLI::PositiveNumber);
  st->add_option("--samples", rc.samples, "Depth samples per ray (L)")->check(CLI::PositiveNumber);
  st->add_option("--lambda", rc.lambda, "Temporal weight decay");
  st->add_flag("--literal-weights", rc.literal_weights, "Use exp(lambda (t - T)) temporal weights");
  st->add_option("--sigma-smooth", stab.config.smooth_sigma, "Path smoothing sigma in frames (0 keeps the path)");
  st->add_option("--smooth-window", stab.config.smooth_window, "Path smoothing window (odd)");
  st->add_option("--gamma", rc.gamma, "Feature-affinity sharpness");
  st->add_option("--smin", smin, "Absolute ray-range spread floor in meters (default: 2% of the mean depth)");
  st->add_option("--weight-eps", rc.weight_epsilon, "Minimum accumulated weight for a valid pixel");
  st->add_flag("--soft-zbuffer", rc.soft_zbuffer, "Depth-weighted splatting");
  st->add_flag("--no-arr", no_arr, "Even sampling over the global depth range");
  st->add_option("--even-samples", rc.even_samples, "Samples per ray with --no-arr");
  st->add_flag("--no-cc", no_cc, "Gather colors at geometric positions");
  st->add_flag("--blend-only", rc.blend_only, "Average forward-warped input frames");
  st->add_option("--head", stab.head, "Density head file, or 'analytic'");
  st->add_option("--seed", stab.config.seed, "Random seed (echoed into the report)");

  EvalOptions eval;
  auto* ev = app.add_subcommand("eval", "Score an output directory against its input dataset");
  ev->add_option("input", eval.input_dir, "Input dataset directory")->required();
  ev->add_option("output", eval.output_dir, "Stabilized output directory")->required();
  ev->add_option("--json", eval.json_path, "Also write the metrics as JSON");

  GradcheckOptions grad;
  auto* gc = app.add_subcommand("gradcheck", "Compare density-head gradients with finite differences");
  gc->add_option("--trials", grad.trials, "Seeded trials")->check(CLI::PositiveNumber);
  gc->add_option("--seed", grad.seed, "Random seed");

  app.fallthrough();

  std::vector<std::string> rest(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(rest.begin(), rest.end());
  try {
    app.parse(rest);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, e2;
    const int code = app.exit(e, o, e2);
    out << o.str();
    err << e2.str();
    return code == 0 ? kOk : kIoFailure;
  }

  try {
    if (s->parsed()) {
      synth.seed_given = s->count("--seed") > 0;
      cmd_synth(synth, out);
    } else if (t->parsed()) {
      train.config.threads = threads;
      cmd_train(train, out);
    } else if (st->parsed()) {
      rc.threads = threads;
      rc.adaptive_range = !no_arr;
      rc.color_correction = !no_cc;
      if (smin >= 0.0) {
        rc.range.s_min = smin;
        rc.range.s_min_relative = 0.0;
      }
      cmd_stabilize(stab, out, err);
    } else if (ev->parsed()) {
      cmd_eval(eval, out);
    } else if (gc->parsed()) {
      return cmd_gradcheck(grad, out) ? kOk : kComputeFailure;
    }
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIoFailure;
  } catch (const ContractViolation& e) {
    err << "error: " << e.what() << "\n";
    return kIoFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kComputeFailure;
  }
  return kOk;
}

}  // namespace rstab::cli
