// multigauss: synthesize data, train heads, evaluate and run seed batteries.

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "commands.hpp"
#include "multigauss/errors.hpp"

namespace {

using namespace multigauss::cli;

void add_train_options(CLI::App* cmd, TrainOptions& o) {
  cmd->add_option("--train", o.train_path, "Training dataset (CSV)")->required();
  cmd->add_option("--val", o.val_path, "Validation dataset; its loss is reported per epoch");
  cmd->add_option("--variant", o.variant, "Head variant: full, independent or mse")->capture_default_str();
  cmd->add_option("--hidden", o.hidden, "Hidden layer widths, comma-separated")->capture_default_str();
  cmd->add_option("--dropout", o.dropout, "Dropout rate on hidden activations")->capture_default_str();
  cmd->add_option("--lr", o.lr, "Adam learning rate")->capture_default_str();
  cmd->add_option("--beta1", o.beta1, "Adam first-moment decay")->capture_default_str();
  cmd->add_option("--beta2", o.beta2, "Adam second-moment decay")->capture_default_str();
  cmd->add_option("--epsilon", o.epsilon, "Adam epsilon")->capture_default_str();
  cmd->add_option("--epochs", o.epochs, "Training epochs")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--batch-size", o.batch_size, "Mini-batch size")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--seed", o.seed, "Seed for initialization, shuffling and dropout")->capture_default_str();
  cmd->add_flag("--no-affine", o.no_affine, "Train without the output affine map (A = I, b = 0)");
  cmd->add_flag("--strict", o.strict, "Reject labels outside [1, 5]");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Flat key=value config file → option tokens for `cmd`. Keys are long option
// names without dashes; flags take true/false. Unknown keys are errors.
std::vector<std::string> config_tokens(CLI::App* cmd, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw multigauss::IoError("cannot open config file: " + path);
  std::vector<std::string> tokens;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw multigauss::ParseError(static_cast<std::size_t>(line_no), "expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const CLI::Option* opt = cmd->get_option_no_throw("--" + key);
    if (key == "config" || key == "help" || opt == nullptr) {
      throw multigauss::InvalidConfig(path + ":" + std::to_string(line_no) + ": unknown key '" + key + "' for " +
                                      cmd->get_name());
    }
    // `--key=value` lets CLI11 parse flag values (true/false) as well.
    tokens.push_back("--" + key + "=" + value);
  }
  return tokens;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multivariate Gaussian quality-score regression: synth, train, eval, battery"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::string config_path;

  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset with known ground truth");
  synth_cmd->add_option("--n", synth.n, "Training sample count")->required()->check(CLI::PositiveNumber);
  synth_cmd->add_option("--d", synth.d, "Feature dimension")->capture_default_str()->check(CLI::PositiveNumber);
  synth_cmd->add_option("--holdout", synth.holdout, "Holdout sample count (0 = none)")->capture_default_str()->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--seed", synth.seed, "Generator seed")->capture_default_str();
  synth_cmd->add_option("--noise-scale", synth.noise_scale, "Multiplier on the default noise covariance")->capture_default_str();
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();

  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "Train a head and write a checkpoint and loss trace");
  add_train_options(train_cmd, train);
  train_cmd->add_option("--checkpoint", train.checkpoint, "Checkpoint output path")->required();
  train_cmd->add_option("--trace", train.trace, "Trace output path (default <checkpoint>.trace.txt)");

  EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint: RMSE/PCC tables and diagnostics");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint to evaluate")->required();
  eval_cmd->add_option("--data", eval.data, "Dataset (CSV)")->required();
  eval_cmd->add_option("--report-dir", eval.report_dir, "Directory for report.txt/report.json")->required();
  eval_cmd->add_option("--variant", eval.variant, "Expected variant; mismatch with the checkpoint is an error");
  eval_cmd->add_option("--tag", eval.tag, "Row label in the report (default: variant)");
  eval_cmd->add_option("--scatter", eval.scatter, "Emit scatter.csv of labels and predicted correlation, e.g. mos,noi");
  eval_cmd->add_option("--grid-sample", eval.grid_sample, "Emit grid.csv for this sample's marginal (-1 = off)")->capture_default_str();
  eval_cmd->add_option("--grid-dims", eval.grid_dims, "Dimension pair for the marginal grid")->capture_default_str();
  eval_cmd->add_option("--grid-res", eval.grid_res, "Grid points per axis")->capture_default_str()->check(CLI::Range(2, 100000));
  eval_cmd->add_option("--grid-width", eval.grid_width, "Grid half-width in marginal standard deviations")->capture_default_str();
  eval_cmd->add_flag("--strict", eval.strict, "Reject labels outside [1, 5]");

  BatteryOptions battery;
  auto* battery_cmd = app.add_subcommand("battery", "Train several seeds and report mean ± sample std");
  add_train_options(battery_cmd, battery.train);
  battery_cmd->add_option("--runs", battery.runs, "Number of seeds (run k uses seed + k)")->capture_default_str()->check(CLI::Range(2, 1000000));
  battery_cmd->add_option("--eval", battery.eval_path, "Evaluation dataset (default: --val, else --train)");
  battery_cmd->add_option("--report-dir", battery.report_dir, "Directory for battery.txt/battery.json")->required();

  for (auto* cmd : {synth_cmd, train_cmd, eval_cmd, battery_cmd}) {
    cmd->add_option("--config", config_path, "Flat key=value file; keys are option names, flags override it");
  }

  // Config values go first so that explicit flags (TakeLast) override them.
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    for (std::size_t i = 0; i < args.size(); ++i) {
      std::string path;
      if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
      if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
      if (path.empty() || args.empty()) continue;
      CLI::App* cmd = app.get_subcommand_no_throw(args[0]);
      if (cmd == nullptr) break;
      auto tokens = config_tokens(cmd, path);
      args.insert(args.begin() + 1, tokens.begin(), tokens.end());
      break;
    }
  } catch (const multigauss::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*synth_cmd) return run_synth(synth);
    if (*train_cmd) return run_train(train);
    if (*eval_cmd) return run_eval(eval);
    if (*battery_cmd) return run_battery(battery);
  } catch (const multigauss::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
