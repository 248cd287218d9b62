#include "multigauss/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <string>

#include "multigauss/errors.hpp"
#include "multigauss/loss.hpp"

namespace multigauss {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw InvalidConfig("learning_rate must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw InvalidConfig("beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw InvalidConfig("beta2 must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw InvalidConfig("epsilon must be positive");
  if (epochs < 1) throw InvalidConfig("epochs must be >= 1");
  if (batch_size < 1) throw InvalidConfig("batch_size must be >= 1");
  if (affine.dim() != kQualityDims) throw InvalidConfig("affine map must be 5-dimensional");
}

AdamState AdamState::zeros_like(const std::vector<DenseLayer>& params) {
  AdamState state;
  for (const auto& layer : params) {
    DenseLayer zero{Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()),
                    Eigen::VectorXd::Zero(layer.bias.size())};
    state.m.push_back(zero);
    state.v.push_back(std::move(zero));
  }
  return state;
}

void adam_step(std::vector<DenseLayer>& params, const std::vector<DenseLayer>& grads, AdamState& state,
               const TrainConfig& config) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw InvalidInput("adam_step: parameter, gradient and state layer counts differ");
  }
  for (std::size_t l = 0; l < params.size(); ++l) {
    if (grads[l].weight.rows() != params[l].weight.rows() || grads[l].weight.cols() != params[l].weight.cols() ||
        grads[l].bias.size() != params[l].bias.size()) {
      throw InvalidInput("adam_step: gradient shape differs from layer " + std::to_string(l));
    }
    if (!grads[l].weight.allFinite()) throw NumericFailure("non-finite gradient in layer " + std::to_string(l) + " weight");
    if (!grads[l].bias.allFinite()) throw NumericFailure("non-finite gradient in layer " + std::to_string(l) + " bias");
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t l = 0; l < params.size(); ++l) {
    auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
      m = config.beta1 * m + (1.0 - config.beta1) * g;
      v = config.beta2 * v + (1.0 - config.beta2) * g.cwiseProduct(g);
      const auto m_hat = m.array() / correction1;
      const auto v_hat = v.array() / correction2;
      p.array() -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
    };
    update(params[l].weight, grads[l].weight, state.m[l].weight, state.v[l].weight);
    update(params[l].bias, grads[l].bias, state.m[l].bias, state.v[l].bias);
  }
}

bool TrainTrace::same_losses(const TrainTrace& other) const {
  if (epochs.size() != other.epochs.size()) return false;
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    const auto& a = epochs[i];
    const auto& b = other.epochs[i];
    if (a.epoch != b.epoch || a.train_loss != b.train_loss || a.val_loss != b.val_loss) return false;
  }
  return true;
}

double mean_loss(const HeadModel& model, const Dataset& data, const Affine& map) {
  if (data.empty()) throw InvalidInput("mean_loss: empty dataset");
  const Eigen::MatrixXd raw = forward_batch(model, feature_matrix(data));
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    total += head_loss<double>(model.config.variant, raw.col(static_cast<Index>(i)), data[i].labels, map).value;
  }
  return total / static_cast<double>(data.size());
}

TrainResult train(const Dataset& data, const Dataset* validation, HeadConfig head, const TrainConfig& config) {
  if (data.empty()) throw InvalidInput("train: empty training set");
  head.variant = config.variant;
  head.input_dim = data.front().features.size();
  return train_from(init_head(head), data, validation, config);
}

TrainResult train_from(HeadModel model, const Dataset& data, const Dataset* validation, const TrainConfig& config) {
  config.validate();
  if (data.empty()) throw InvalidInput("train: empty training set");
  if (model.config.variant != config.variant) throw InvalidConfig("model variant differs from training variant");
  const Eigen::MatrixXd features = feature_matrix(data);
  if (features.rows() != model.config.input_dim) throw SchemaError("training features do not match the model input");
  if (validation && !validation->empty() && validation->front().features.size() != model.config.input_dim) {
    throw SchemaError("validation features do not match the model input");
  }

  const Eigen::MatrixXd labels = label_matrix(data);
  const Index n_samples = features.cols();
  const Index out_dim = model.config.output_dim();
  std::mt19937_64 gen(config.seed);
  std::vector<Index> order(static_cast<std::size_t>(n_samples));
  std::iota(order.begin(), order.end(), Index{0});

  AdamState state = AdamState::zeros_like(model.layers);
  TrainTrace trace;
  ForwardCache cache;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), gen);
    double epoch_total = 0.0;
    int batch_index = 0;
    for (Index begin = 0; begin < n_samples; begin += config.batch_size, ++batch_index) {
      const Index size = std::min<Index>(config.batch_size, n_samples - begin);
      const std::vector<Index> idx(order.begin() + begin, order.begin() + begin + size);
      const Eigen::MatrixXd x = features(Eigen::all, idx);
      const Eigen::MatrixXd y = labels(Eigen::all, idx);

      const Eigen::MatrixXd raw = forward_batch(model, x, true, gen(), &cache);
      Eigen::MatrixXd d_raw(out_dim, size);
      double batch_total = 0.0;
      try {
        for (Index c = 0; c < size; ++c) {
          auto lg = head_loss<double>(config.variant, raw.col(c), y.col(c), config.affine);
          batch_total += lg.value;
          d_raw.col(c) = lg.grad.flat() / static_cast<double>(size);
        }
        if (!std::isfinite(batch_total)) throw NumericFailure("non-finite batch loss");
        auto grads = backward_batch(model, cache, d_raw);
        adam_step(model.layers, grads, state, config);
      } catch (const Error& e) {
        throw NumericFailure("training aborted at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch_index) + ": " + e.what());
      }
      epoch_total += batch_total;
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = epoch_total / static_cast<double>(n_samples);
    if (validation && !validation->empty()) record.val_loss = mean_loss(model, *validation, config.affine);
    record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    trace.epochs.push_back(record);
  }
  return {std::move(model), std::move(trace)};
}

void write_trace(std::ostream& out, const TrainTrace& trace) {
  out << "epoch train_loss val_loss seconds\n";
  char buf[128];
  for (const auto& r : trace.epochs) {
    char val[32] = "-";
    if (r.val_loss) std::snprintf(val, sizeof(val), "%.9g", *r.val_loss);
    std::snprintf(buf, sizeof(buf), "%d %.9g %s %.3f\n", r.epoch, r.train_loss, val, r.seconds);
    out << buf;
  }
}

}  // namespace multigauss
