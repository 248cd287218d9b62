#ifndef MULTIGAUSS_TRAINER_HPP
#define MULTIGAUSS_TRAINER_HPP

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "multigauss/dataio.hpp"
#include "multigauss/gaussian.hpp"
#include "multigauss/model.hpp"

namespace multigauss {

struct TrainConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int epochs = 30;
  int batch_size = 32;
  std::uint64_t seed = 0;  // shuffling and dropout
  Variant variant = Variant::full;
  Affine affine = Affine::label_scale();

  void validate() const;
};

/// First and second moment estimates, shaped like the model layers.
struct AdamState {
  std::vector<DenseLayer> m;
  std::vector<DenseLayer> v;
  std::int64_t step = 0;

  static AdamState zeros_like(const std::vector<DenseLayer>& params);
};

/// One bias-corrected Adam update of every layer. Throws NumericFailure
/// naming the parameter block when a gradient is non-finite; nothing is
/// modified in that case.
void adam_step(std::vector<DenseLayer>& params, const std::vector<DenseLayer>& grads, AdamState& state,
               const TrainConfig& config);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  std::optional<double> val_loss;
  double seconds = 0.0;
};

struct TrainTrace {
  std::vector<EpochRecord> epochs;

  /// Equality on epoch indices and losses; wall time is ignored.
  bool same_losses(const TrainTrace& other) const;
};

/// Mean per-sample loss of the configured variant, evaluated without dropout.
double mean_loss(const HeadModel& model, const Dataset& data, const Affine& map);

struct TrainResult {
  HeadModel model;
  TrainTrace trace;
};

/// Mini-batch maximum-likelihood training. The head is initialized from
/// `head` (its variant is taken from `config`), samples are reshuffled every
/// epoch, the last partial batch is kept. Deterministic for fixed inputs.
TrainResult train(const Dataset& data, const Dataset* validation, HeadConfig head, const TrainConfig& config);

/// Continues training an existing model.
TrainResult train_from(HeadModel model, const Dataset& data, const Dataset* validation, const TrainConfig& config);

/// `epoch train_loss val_loss seconds`, one line per epoch; missing validation is "-".
void write_trace(std::ostream& out, const TrainTrace& trace);

}  // namespace multigauss

#endif  // MULTIGAUSS_TRAINER_HPP
