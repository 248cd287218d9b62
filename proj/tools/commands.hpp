#ifndef MULTIGAUSS_TOOLS_COMMANDS_HPP
#define MULTIGAUSS_TOOLS_COMMANDS_HPP

#include <cstdint>
#include <string>

namespace multigauss::cli {

struct SynthOptions {
  long long n = 0;
  long long d = 32;
  long long holdout = 0;
  std::uint64_t seed = 0;
  double noise_scale = 1.0;
  std::string out;
};

// Shared by train and battery.
struct TrainOptions {
  std::string train_path;
  std::string val_path;
  std::string checkpoint;
  std::string trace;
  std::string variant = "full";
  std::string hidden = "256,64";
  double dropout = 0.0;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int epochs = 30;
  int batch_size = 32;
  std::uint64_t seed = 0;
  bool no_affine = false;
  bool strict = false;
};

struct EvalOptions {
  std::string checkpoint;
  std::string data;
  std::string report_dir;
  std::string variant;  // optional consistency check against the checkpoint
  std::string tag;
  std::string scatter;  // e.g. "mos,noi"
  long long grid_sample = -1;
  std::string grid_dims = "mos,noi";
  long long grid_res = 101;
  double grid_width = 4.0;
  bool strict = false;
};

struct BatteryOptions {
  TrainOptions train;
  std::string eval_path;
  std::string report_dir;
  int runs = 10;
};

int run_synth(const SynthOptions& opts);
int run_train(const TrainOptions& opts);
int run_eval(const EvalOptions& opts);
int run_battery(const BatteryOptions& opts);

}  // namespace multigauss::cli

#endif  // MULTIGAUSS_TOOLS_COMMANDS_HPP
