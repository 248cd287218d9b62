#ifndef MULTIGAUSS_DATAIO_HPP
#define MULTIGAUSS_DATAIO_HPP

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "multigauss/gaussian.hpp"

namespace multigauss {

/// Canonical label order; also the CSV column names.
inline constexpr std::array<std::string_view, kQualityDims> kDimensionNames{"mos", "noi", "col", "dis", "loud"};

/// Index of a dimension name (case-insensitive) or throws InvalidInput.
Index dimension_index(std::string_view name);

struct LabeledSample {
  Eigen::VectorXd features;
  Eigen::VectorXd labels;  // length 5, canonical order

  bool operator==(const LabeledSample& o) const { return features == o.features && labels == o.labels; }
};

using Dataset = std::vector<LabeledSample>;

struct LoadedDataset {
  Dataset samples;
  std::size_t out_of_range_labels = 0;  // labels outside [1, 5]; always 0 in strict mode
};

/// Parses the comma-separated format: header `feat_0,...,feat_{D-1},mos,noi,col,dis,loud`
/// followed by one clip per line. Strict mode rejects labels outside [1, 5].
LoadedDataset read_dataset(std::istream& in, bool strict);
LoadedDataset load_dataset(const std::filesystem::path& path, bool strict);

/// Writes with 17 significant digits so that reading back is bit-exact.
void write_dataset(std::ostream& out, const Dataset& data);
void write_dataset(const std::filesystem::path& path, const Dataset& data);

/// 17 significant digits (printf "%.17g").
std::string format_real(double value);

/// Feature matrix (D x N) and label matrix (5 x N), one column per sample.
Eigen::MatrixXd feature_matrix(const Dataset& data);
Eigen::MatrixXd label_matrix(const Dataset& data);

/// Ground truth for synthetic data: labels ~ N(3 + 1.5 tanh(W x), Λ*),
/// features ~ U(-1, 1)^D.
struct SynthSpec {
  Index feature_dim = 0;
  Index sample_count = 0;
  Eigen::MatrixXd weight;    // 5 x D
  Eigen::MatrixXd true_cov;  // 5 x 5, SPD
  std::uint64_t seed = 0;

  void validate() const;
};

/// Default Λ*: standard deviations 0.5/0.45/0.5/0.55/0.4 with the MOS-NOI pair
/// the most strongly correlated (0.6).
Eigen::MatrixXd default_noise_covariance();

/// W with entries N(0, 1/D), so Wx has per-coordinate std near 0.58.
Eigen::MatrixXd random_mean_weights(Index feature_dim, std::uint64_t seed);

Eigen::VectorXd synthetic_mean(const Eigen::MatrixXd& weight, const Eigen::VectorXd& x);

struct SyntheticSet {
  Dataset samples;
  Eigen::MatrixXd weight;
  Eigen::MatrixXd true_cov;
};

SyntheticSet generate_synthetic(const SynthSpec& spec);

/// Key-value sidecar (`key=value`, comma-separated row-major matrices).
void write_ground_truth(const std::filesystem::path& path, const SynthSpec& spec);
SynthSpec read_ground_truth(const std::filesystem::path& path);

/// Seeded shuffle, then the first round(fraction * N) samples go to the first set.
std::pair<Dataset, Dataset> split(const Dataset& data, double fraction, std::uint64_t seed);

}  // namespace multigauss

#endif  // MULTIGAUSS_DATAIO_HPP
