#ifndef MULTIGAUSS_METRICS_HPP
#define MULTIGAUSS_METRICS_HPP

#include <Eigen/Dense>

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "multigauss/dataio.hpp"
#include "multigauss/gaussian.hpp"
#include "multigauss/model.hpp"

namespace multigauss {

double rmse(const Eigen::Ref<const Eigen::VectorXd>& pred, const Eigen::Ref<const Eigen::VectorXd>& truth);

/// Pearson correlation. Throws UndefinedCorrelation when either input is
/// constant, InvalidInput on a length mismatch or fewer than two samples.
double pcc(const Eigen::Ref<const Eigen::VectorXd>& pred, const Eigen::Ref<const Eigen::VectorXd>& truth);

struct DimensionMetrics {
  std::string name;
  double rmse = 0.0;
  std::optional<double> pcc;  // missing when undefined
};

struct EvalReport {
  std::string variant;
  std::size_t sample_count = 0;
  std::array<DimensionMetrics, kQualityDims> dims;
  double mean_rmse = 0.0;
  std::optional<double> mean_pcc;  // missing if any dimension's pcc is missing
};

/// Scores point estimates (canonical MOS, NOI, COL, DIS, LOUD order).
EvalReport score_predictions(const Eigen::MatrixXd& points, const Eigen::MatrixXd& labels, std::string variant);

/// Predicts every sample and scores the point estimates against the labels.
EvalReport evaluate(const HeadModel& model, const Dataset& data, const Affine& map);

struct GridSpec {
  double lo1 = 0.0, hi1 = 0.0;
  double lo2 = 0.0, hi2 = 0.0;
  Index res1 = 2, res2 = 2;  // points per axis, endpoints included
};

/// Grid spanning ±`half_width_sd` marginal standard deviations around the
/// pair's mean.
GridSpec grid_around(const Gaussian& g, std::pair<Index, Index> dims, double half_width_sd, Index resolution);

struct GridPoint {
  double v1, v2, density;
};

/// Bivariate marginal density over `dims` evaluated on a regular grid, rows in
/// v1-major order.
std::vector<GridPoint> emit_marginal_grid(const Gaussian& g, std::pair<Index, Index> dims, const GridSpec& grid);

struct ScatterRow {
  double label_i, label_j, predicted_corr;
};

std::vector<ScatterRow> emit_correlation_scatter(const HeadModel& model, const Dataset& data, const Affine& map,
                                                 std::pair<Index, Index> dims);

void write_grid(std::ostream& out, const std::vector<GridPoint>& rows, std::pair<Index, Index> dims);
void write_scatter(std::ostream& out, const std::vector<ScatterRow>& rows, std::pair<Index, Index> dims);

/// Text table laid out like the quality tables: one row per tag, an RMSE/PCC
/// column pair per dimension, then the averages.
void write_report_table(std::ostream& out, const std::vector<std::pair<std::string, EvalReport>>& rows);
std::string report_json(const std::vector<std::pair<std::string, EvalReport>>& rows);

/// Mean and sample standard deviation (n-1) of a metric over runs.
struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t count = 0;  // runs contributing (pcc may be missing in some)
};

struct AggregateReport {
  std::string variant;
  std::size_t runs = 0;
  std::array<std::string, kQualityDims> names;
  std::array<MeanStd, kQualityDims> rmse;
  std::array<MeanStd, kQualityDims> pcc;
  MeanStd mean_rmse;
  MeanStd mean_pcc;
};

MeanStd mean_std(const std::vector<double>& values);

/// Requires at least two reports.
AggregateReport aggregate(const std::vector<EvalReport>& reports);

void write_aggregate_table(std::ostream& out, const std::vector<std::pair<std::string, AggregateReport>>& rows);
std::string aggregate_json(const std::vector<std::pair<std::string, AggregateReport>>& rows);

}  // namespace multigauss

#endif  // MULTIGAUSS_METRICS_HPP
