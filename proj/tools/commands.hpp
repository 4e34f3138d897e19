#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "rstab/stabilizer.hpp"
#include "rstab/training.hpp"

namespace rstab::cli {

enum ExitCode : int { kOk = 0, kComputeFailure = 1, kIoFailure = 2 };

struct SynthOptions {
  std::string preset = "static";
  std::string spec_path;  // scene JSON; overrides the preset when set
  std::string out_dir;
  std::uint64_t seed = 7;
  bool seed_given = false;
  int frames = 30;
  int size = 64;
};

struct TrainOptions {
  std::string dataset_dir;
  std::string out_head;
  TrainConfig config;
};

struct StabilizeOptions {
  std::string dataset_dir;
  std::string out_dir;
  StabilizeConfig config;
  std::string head = "analytic";  // file path or "analytic"
};

struct EvalOptions {
  std::string input_dir;
  std::string output_dir;
  std::string json_path;  // optional machine-readable copy
};

struct GradcheckOptions {
  int trials = 100;
  std::uint64_t seed = 7;
  double tolerance = 1e-4;
};

// Each command throws on failure; run() maps exceptions to exit codes.
void cmd_synth(const SynthOptions& options, std::ostream& out);
void cmd_train(const TrainOptions& options, std::ostream& out);
void cmd_stabilize(const StabilizeOptions& options, std::ostream& out, std::ostream& err);
void cmd_eval(const EvalOptions& options, std::ostream& out);
// Returns true when the maximum relative error is under the tolerance.
bool cmd_gradcheck(const GradcheckOptions& options, std::ostream& out);

// Full command line (argv[0] is the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rstab::cli
