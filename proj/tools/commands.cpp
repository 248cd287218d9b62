#include "commands.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <utility>
#include <vector>

#include "multigauss/dataio.hpp"
#include "multigauss/errors.hpp"
#include "multigauss/metrics.hpp"
#include "multigauss/model.hpp"
#include "multigauss/trainer.hpp"

namespace fs = std::filesystem;

namespace multigauss::cli {

namespace {

// Decorrelates the holdout stream from the training stream of the same seed.
constexpr std::uint64_t kHoldoutSeedMix = 0x9E3779B97F4A7C15ull;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw InvalidConfig(std::string(what) + " path is required");
  if (!fs::is_regular_file(path)) throw IoError(std::string(what) + " not found: " + path);
}

void require_parent(const std::string& path, const char* what) {
  if (path.empty()) throw InvalidConfig(std::string(what) + " path is required");
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) throw IoError(std::string(what) + " directory does not exist: " + parent.string());
}

std::vector<Index> parse_widths(const std::string& text) {
  std::vector<Index> widths;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long long w = std::stoll(item, &used);
      if (used != item.size() || w <= 0) throw std::invalid_argument(item);
      widths.push_back(static_cast<Index>(w));
    } catch (const std::logic_error&) {
      throw InvalidConfig("hidden widths must be positive integers, got '" + text + "'");
    }
  }
  if (widths.empty()) throw InvalidConfig("hidden widths must be non-empty");
  return widths;
}

std::pair<Index, Index> parse_pair(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw InvalidConfig("expected a dimension pair like 'mos,noi', got '" + text + "'");
  return {dimension_index(text.substr(0, comma)), dimension_index(text.substr(comma + 1))};
}

Dataset load(const std::string& path, bool strict, const char* what) {
  auto loaded = load_dataset(path, strict);
  if (loaded.samples.empty()) throw SchemaError(std::string(what) + " has no samples: " + path);
  if (loaded.out_of_range_labels > 0) {
    std::cerr << "warning: " << path << ": " << loaded.out_of_range_labels << " label(s) outside [1, 5]\n";
  }
  return std::move(loaded.samples);
}

struct PreparedRun {
  HeadConfig head;
  TrainConfig train;
};

PreparedRun prepare(const TrainOptions& opts) {
  PreparedRun run;
  run.head.hidden_dims = parse_widths(opts.hidden);
  run.head.dropout_rate = opts.dropout;
  run.head.seed = opts.seed;
  run.train.variant = parse_variant(opts.variant);
  run.head.variant = run.train.variant;
  run.train.learning_rate = opts.lr;
  run.train.beta1 = opts.beta1;
  run.train.beta2 = opts.beta2;
  run.train.epsilon = opts.epsilon;
  run.train.epochs = opts.epochs;
  run.train.batch_size = opts.batch_size;
  run.train.seed = opts.seed;
  run.train.affine = opts.no_affine ? Affine::identity(kQualityDims) : Affine::label_scale();
  run.train.validate();
  return run;
}

}  // namespace

int run_synth(const SynthOptions& opts) {
  if (opts.n < 1) throw InvalidConfig("--n must be positive");
  if (opts.d < 1) throw InvalidConfig("--d must be positive");
  if (opts.holdout < 0) throw InvalidConfig("--holdout must be non-negative");
  if (!(opts.noise_scale > 0.0)) throw InvalidConfig("--noise-scale must be positive");
  if (opts.out.empty()) throw InvalidConfig("--out is required");
  const fs::path dir(opts.out);
  ensure_dir(dir);

  SynthSpec spec;
  spec.feature_dim = static_cast<Index>(opts.d);
  spec.sample_count = static_cast<Index>(opts.n);
  spec.weight = random_mean_weights(spec.feature_dim, opts.seed);
  spec.true_cov = opts.noise_scale * default_noise_covariance();
  spec.seed = opts.seed;
  write_dataset(dir / "train.csv", generate_synthetic(spec).samples);
  write_ground_truth(dir / "truth.txt", spec);
  if (opts.holdout > 0) {
    SynthSpec held = spec;
    held.sample_count = static_cast<Index>(opts.holdout);
    held.seed = opts.seed ^ kHoldoutSeedMix;
    write_dataset(dir / "holdout.csv", generate_synthetic(held).samples);
  }
  std::cout << "N=" << opts.n << " D=" << opts.d << " seed=" << opts.seed;
  if (opts.holdout > 0) std::cout << " holdout=" << opts.holdout;
  std::cout << '\n';
  return 0;
}

int run_train(const TrainOptions& opts) {
  require_file(opts.train_path, "training data");
  if (!opts.val_path.empty()) require_file(opts.val_path, "validation data");
  require_parent(opts.checkpoint, "checkpoint");
  const std::string trace_path = opts.trace.empty() ? opts.checkpoint + ".trace.txt" : opts.trace;
  require_parent(trace_path, "trace");
  const PreparedRun run = prepare(opts);

  const Dataset train_set = load(opts.train_path, opts.strict, "training data");
  Dataset val_set;
  if (!opts.val_path.empty()) val_set = load(opts.val_path, opts.strict, "validation data");

  const TrainResult result = train(train_set, val_set.empty() ? nullptr : &val_set, run.head, run.train);
  save_checkpoint(opts.checkpoint, {result.model, run.train.affine});
  std::ofstream trace(trace_path, std::ios::binary | std::ios::trunc);
  if (!trace) throw IoError("cannot open trace for writing: " + trace_path);
  write_trace(trace, result.trace);

  const auto& last = result.trace.epochs.back();
  std::cout << "trained " << to_string(run.train.variant) << " head, output dim " << result.model.config.output_dim()
            << ", " << result.trace.epochs.size() << " epochs, final train loss " << last.train_loss << '\n';
  return 0;
}

int run_eval(const EvalOptions& opts) {
  require_file(opts.checkpoint, "checkpoint");
  require_file(opts.data, "dataset");
  if (opts.report_dir.empty()) throw InvalidConfig("--report-dir is required");

  const Checkpoint ckpt = load_checkpoint(opts.checkpoint);
  if (!opts.variant.empty() && parse_variant(opts.variant) != ckpt.model.config.variant) {
    throw SchemaError("checkpoint holds a " + std::string(to_string(ckpt.model.config.variant)) +
                      " head but --variant " + opts.variant + " was requested");
  }
  const Dataset data = load(opts.data, opts.strict, "dataset");
  if (data.front().features.size() != ckpt.model.config.input_dim) {
    throw SchemaError("dataset feature dimension " + std::to_string(data.front().features.size()) +
                      " does not match checkpoint input " + std::to_string(ckpt.model.config.input_dim));
  }

  const fs::path dir(opts.report_dir);
  ensure_dir(dir);
  const std::string tag = opts.tag.empty() ? std::string(to_string(ckpt.model.config.variant)) : opts.tag;
  const std::vector<std::pair<std::string, EvalReport>> rows{{tag, evaluate(ckpt.model, data, ckpt.affine)}};
  std::ostringstream table;
  write_report_table(table, rows);
  write_text(dir / "report.txt", table.str());
  write_text(dir / "report.json", report_json(rows));
  std::cout << table.str();

  if (!opts.scatter.empty()) {
    const auto dims = parse_pair(opts.scatter);
    std::ostringstream out;
    write_scatter(out, emit_correlation_scatter(ckpt.model, data, ckpt.affine, dims), dims);
    write_text(dir / "scatter.csv", out.str());
  }
  if (opts.grid_sample >= 0) {
    if (opts.grid_sample >= static_cast<long long>(data.size())) throw InvalidConfig("--grid-sample is out of range");
    const auto dims = parse_pair(opts.grid_dims);
    const Prediction p = predict(ckpt.model, data[static_cast<std::size_t>(opts.grid_sample)].features, ckpt.affine);
    std::ostringstream out;
    write_grid(out, emit_marginal_grid(p.gaussian, dims, grid_around(p.gaussian, dims, opts.grid_width, opts.grid_res)), dims);
    write_text(dir / "grid.csv", out.str());
  }
  return 0;
}

int run_battery(const BatteryOptions& opts) {
  if (opts.runs < 2) throw InvalidConfig("--runs must be at least 2");
  if (opts.report_dir.empty()) throw InvalidConfig("--report-dir is required");
  const TrainOptions& t = opts.train;
  require_file(t.train_path, "training data");
  if (!t.val_path.empty()) require_file(t.val_path, "validation data");
  const std::string eval_path = !opts.eval_path.empty() ? opts.eval_path : !t.val_path.empty() ? t.val_path : t.train_path;
  require_file(eval_path, "evaluation data");
  const PreparedRun base = prepare(t);

  const Dataset train_set = load(t.train_path, t.strict, "training data");
  Dataset val_set;
  if (!t.val_path.empty()) val_set = load(t.val_path, t.strict, "validation data");
  const Dataset eval_set = load(eval_path, t.strict, "evaluation data");

  std::vector<EvalReport> reports;
  std::vector<std::pair<std::string, EvalReport>> per_run;
  for (int k = 0; k < opts.runs; ++k) {
    PreparedRun run = base;
    run.head.seed = t.seed + static_cast<std::uint64_t>(k);
    run.train.seed = run.head.seed;
    const TrainResult result = train(train_set, val_set.empty() ? nullptr : &val_set, run.head, run.train);
    reports.push_back(evaluate(result.model, eval_set, run.train.affine));
    per_run.emplace_back("seed " + std::to_string(run.head.seed), reports.back());
    std::cerr << "run " << (k + 1) << "/" << opts.runs << " done (seed " << run.head.seed << ")\n";
  }

  const fs::path dir(opts.report_dir);
  ensure_dir(dir);
  const std::string tag = std::string(to_string(base.train.variant)) + (t.no_affine ? " no-affine" : "");
  const std::vector<std::pair<std::string, AggregateReport>> rows{{tag, aggregate(reports)}};
  std::ostringstream table;
  write_aggregate_table(table, rows);
  write_text(dir / "battery.txt", table.str());
  write_text(dir / "battery.json", aggregate_json(rows));
  std::ostringstream runs_table;
  write_report_table(runs_table, per_run);
  write_text(dir / "runs.txt", runs_table.str());
  std::cout << table.str();
  return 0;
}

}  // namespace multigauss::cli
