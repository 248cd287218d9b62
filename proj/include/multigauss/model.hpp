#ifndef MULTIGAUSS_MODEL_HPP
#define MULTIGAUSS_MODEL_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "multigauss/gaussian.hpp"
#include "multigauss/variant.hpp"

namespace multigauss {

struct HeadConfig {
  Index input_dim = 0;
  std::vector<Index> hidden_dims{256, 64};
  Variant variant = Variant::full;
  double dropout_rate = 0.0;  // applied to hidden activations in training passes only
  std::uint64_t seed = 0;

  Index output_dim() const { return raw_output_dim(variant); }

  /// Throws InvalidConfig on a zero-width layer or a dropout rate outside [0, 1).
  void validate() const;

  bool operator==(const HeadConfig&) const = default;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // fan_out x fan_in
  Eigen::VectorXd bias;

  bool operator==(const DenseLayer& o) const { return weight == o.weight && bias == o.bias; }
};

/// Dense ReLU network mapping a feature vector to the raw Gaussian
/// parameterization of `config.variant`. The final layer has no activation.
struct HeadModel {
  HeadConfig config;
  std::vector<DenseLayer> layers;

  bool operator==(const HeadModel&) const = default;
};

/// Glorot-uniform weights in ±√(6/(fan_in+fan_out)), zero biases, drawn in
/// layer order (row-major within a layer) from a Mersenne Twister seeded by
/// config.seed.
HeadModel init_head(const HeadConfig& config);

/// Activations saved by forward_batch for the backward pass.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;  // input to each layer, one column per sample
  std::vector<Eigen::MatrixXd> gates;   // ReLU derivative times dropout scale, per hidden layer
};

/// Forward pass on a batch (one column per sample). When `training` is set
/// and the dropout rate is positive, inverted dropout masks are drawn from a
/// generator seeded with `dropout_seed`.
Eigen::MatrixXd forward_batch(const HeadModel& model, const Eigen::MatrixXd& inputs, bool training = false,
                              std::uint64_t dropout_seed = 0, ForwardCache* cache = nullptr);

Eigen::VectorXd forward(const HeadModel& model, const Eigen::VectorXd& x, bool training = false,
                        std::uint64_t dropout_seed = 0);

/// Parameter gradients given ∂loss/∂output for the batch in `cache`.
std::vector<DenseLayer> backward_batch(const HeadModel& model, const ForwardCache& cache,
                                       const Eigen::MatrixXd& d_output);

struct Prediction {
  Gaussian gaussian;      // label scale, after the affine map
  Eigen::VectorXd point;  // maximum-likelihood point estimate (the mean)
};

/// Raw head output → Gaussian on the label scale. For the mse variant the
/// covariance is a placeholder identity.
Prediction prediction_from_raw(Variant variant, const Eigen::VectorXd& raw, const Affine& map);

Prediction predict(const HeadModel& model, const Eigen::VectorXd& x, const Affine& map);

/// A trained head together with the affine map it was trained under.
struct Checkpoint {
  HeadModel model;
  Affine affine = Affine::label_scale();

  bool operator==(const Checkpoint&) const = default;
};

// Binary checkpoint, little-endian; see README for the byte layout.
void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace multigauss

#endif  // MULTIGAUSS_MODEL_HPP
