#include "multigauss/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "json.hpp"
#include "multigauss/errors.hpp"

namespace multigauss {

double rmse(const Eigen::Ref<const Eigen::VectorXd>& pred, const Eigen::Ref<const Eigen::VectorXd>& truth) {
  if (pred.size() != truth.size() || pred.size() == 0) throw InvalidInput("rmse: inputs must have equal nonzero length");
  return std::sqrt((pred - truth).squaredNorm() / static_cast<double>(pred.size()));
}

double pcc(const Eigen::Ref<const Eigen::VectorXd>& pred, const Eigen::Ref<const Eigen::VectorXd>& truth) {
  if (pred.size() != truth.size()) throw InvalidInput("pcc: length mismatch");
  if (pred.size() < 2) throw InvalidInput("pcc: needs at least two samples");
  const double n = static_cast<double>(pred.size());
  const Eigen::ArrayXd a = pred.array() - pred.mean();
  const Eigen::ArrayXd b = truth.array() - truth.mean();
  const double saa = a.square().sum();
  const double sbb = b.square().sum();
  // Rounding in the mean leaves ~1e-16 residue on constant input.
  auto constant = [n](double ss, const Eigen::Ref<const Eigen::VectorXd>& v) {
    return std::sqrt(ss / n) <= 1e-12 * std::max(1.0, v.cwiseAbs().maxCoeff());
  };
  if (constant(saa, pred) || constant(sbb, truth)) throw UndefinedCorrelation("pcc: constant input");
  return std::clamp((a * b).sum() / std::sqrt(saa * sbb), -1.0, 1.0);
}

EvalReport score_predictions(const Eigen::MatrixXd& points, const Eigen::MatrixXd& labels, std::string variant) {
  if (points.rows() != kQualityDims || labels.rows() != kQualityDims || points.cols() != labels.cols() ||
      points.cols() == 0) {
    throw InvalidInput("score_predictions: expected matching non-empty 5 x N matrices");
  }
  EvalReport report;
  report.variant = std::move(variant);
  report.sample_count = static_cast<std::size_t>(points.cols());
  double rmse_sum = 0.0;
  double pcc_sum = 0.0;
  bool all_pcc = true;
  for (Index k = 0; k < kQualityDims; ++k) {
    auto& d = report.dims[static_cast<std::size_t>(k)];
    d.name = std::string(kDimensionNames[static_cast<std::size_t>(k)]);
    d.rmse = rmse(points.row(k).transpose(), labels.row(k).transpose());
    rmse_sum += d.rmse;
    try {
      d.pcc = pcc(points.row(k).transpose(), labels.row(k).transpose());
      pcc_sum += *d.pcc;
    } catch (const Error&) {
      all_pcc = false;
    }
  }
  report.mean_rmse = rmse_sum / static_cast<double>(kQualityDims);
  if (all_pcc) report.mean_pcc = pcc_sum / static_cast<double>(kQualityDims);
  return report;
}

EvalReport evaluate(const HeadModel& model, const Dataset& data, const Affine& map) {
  if (data.empty()) throw InvalidInput("evaluate: empty dataset");
  const Eigen::MatrixXd raw = forward_batch(model, feature_matrix(data));
  Eigen::MatrixXd points(kQualityDims, raw.cols());
  for (Index c = 0; c < raw.cols(); ++c) points.col(c) = prediction_from_raw(model.config.variant, raw.col(c), map).point;
  return score_predictions(points, label_matrix(data), std::string(to_string(model.config.variant)));
}

namespace {

void check_pair(std::pair<Index, Index> dims, Index n) {
  if (dims.first < 0 || dims.second < 0 || dims.first >= n || dims.second >= n || dims.first == dims.second) {
    throw InvalidInput("dimension pair must be two distinct in-range indices");
  }
}

std::string dim_name(Index i) {
  return i >= 0 && i < kQualityDims ? std::string(kDimensionNames[static_cast<std::size_t>(i)]) : "dim" + std::to_string(i);
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

}  // namespace

GridSpec grid_around(const Gaussian& g, std::pair<Index, Index> dims, double half_width_sd, Index resolution) {
  check_pair(dims, g.dim());
  const double m1 = g.mean()(dims.first), m2 = g.mean()(dims.second);
  const double s1 = std::sqrt(g.cov()(dims.first, dims.first)), s2 = std::sqrt(g.cov()(dims.second, dims.second));
  return {m1 - half_width_sd * s1, m1 + half_width_sd * s1, m2 - half_width_sd * s2, m2 + half_width_sd * s2,
          resolution, resolution};
}

std::vector<GridPoint> emit_marginal_grid(const Gaussian& g, std::pair<Index, Index> dims, const GridSpec& grid) {
  check_pair(dims, g.dim());
  if (grid.res1 < 2 || grid.res2 < 2) throw InvalidInput("grid resolution must be at least 2 per axis");
  if (!(grid.hi1 > grid.lo1 && grid.hi2 > grid.lo2)) throw InvalidInput("grid bounds must be increasing");
  // marginalize needs increasing indices; swap back when emitting.
  const bool swapped = dims.first > dims.second;
  const Index lo = swapped ? dims.second : dims.first;
  const Index hi = swapped ? dims.first : dims.second;
  const Gaussian marginal = marginalize(g, {lo, hi});

  std::vector<GridPoint> rows;
  rows.reserve(static_cast<std::size_t>(grid.res1 * grid.res2));
  Eigen::Vector2d y;
  for (Index a = 0; a < grid.res1; ++a) {
    const double v1 = grid.lo1 + (grid.hi1 - grid.lo1) * static_cast<double>(a) / static_cast<double>(grid.res1 - 1);
    for (Index b = 0; b < grid.res2; ++b) {
      const double v2 = grid.lo2 + (grid.hi2 - grid.lo2) * static_cast<double>(b) / static_cast<double>(grid.res2 - 1);
      y = swapped ? Eigen::Vector2d(v2, v1) : Eigen::Vector2d(v1, v2);
      rows.push_back({v1, v2, std::exp(log_density(marginal, y))});
    }
  }
  return rows;
}

std::vector<ScatterRow> emit_correlation_scatter(const HeadModel& model, const Dataset& data, const Affine& map,
                                                 std::pair<Index, Index> dims) {
  check_pair(dims, kQualityDims);
  std::vector<ScatterRow> rows;
  if (data.empty()) return rows;
  const Eigen::MatrixXd raw = forward_batch(model, feature_matrix(data));
  rows.reserve(data.size());
  for (std::size_t s = 0; s < data.size(); ++s) {
    const Prediction p = prediction_from_raw(model.config.variant, raw.col(static_cast<Index>(s)), map);
    rows.push_back({data[s].labels(dims.first), data[s].labels(dims.second),
                    correlation(p.gaussian.cov(), dims.first, dims.second)});
  }
  return rows;
}

void write_grid(std::ostream& out, const std::vector<GridPoint>& rows, std::pair<Index, Index> dims) {
  out << dim_name(dims.first) << ',' << dim_name(dims.second) << ",density\n";
  for (const auto& r : rows) out << format_real(r.v1) << ',' << format_real(r.v2) << ',' << format_real(r.density) << '\n';
}

void write_scatter(std::ostream& out, const std::vector<ScatterRow>& rows, std::pair<Index, Index> dims) {
  out << dim_name(dims.first) << ',' << dim_name(dims.second) << ",predicted_corr\n";
  for (const auto& r : rows) {
    out << format_real(r.label_i) << ',' << format_real(r.label_j) << ',' << format_real(r.predicted_corr) << '\n';
  }
}

void write_report_table(std::ostream& out, const std::vector<std::pair<std::string, EvalReport>>& rows) {
  std::string header = "model           ";
  for (const auto& name : kDimensionNames) {
    std::string upper(name);
    for (auto& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    header += "| " + upper + std::string(16 - upper.size(), ' ');
  }
  header += "| AVG";
  out << header << '\n';
  out << std::string(16, ' ');
  for (std::size_t k = 0; k <= kQualityDims; ++k) out << "| RMSE    PCC     ";
  out << '\n';
  auto pcc_text = [](const std::optional<double>& v) { return v ? fmt("%-8.3f", *v) : std::string("n/a     "); };
  for (const auto& [tag, report] : rows) {
    char name[32];
    std::snprintf(name, sizeof(name), "%-16.16s", tag.c_str());
    out << name;
    for (const auto& d : report.dims) out << "| " << fmt("%-8.3f", d.rmse) << pcc_text(d.pcc);
    out << "| " << fmt("%-8.3f", report.mean_rmse) << pcc_text(report.mean_pcc) << '\n';
  }
}

namespace {

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

nlohmann::json mean_std_json(const MeanStd& m) {
  return {{"mean", m.mean}, {"std", m.stddev}, {"count", m.count}};
}

std::string pm(const MeanStd& m) {
  if (m.count == 0) return "n/a          ";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f±%.3f  ", m.mean, m.stddev);
  return buf;
}

}  // namespace

std::string report_json(const std::vector<std::pair<std::string, EvalReport>>& rows) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& [tag, report] : rows) {
    nlohmann::json dims = nlohmann::json::array();
    for (const auto& d : report.dims) dims.push_back({{"dimension", d.name}, {"rmse", d.rmse}, {"pcc", optional_json(d.pcc)}});
    doc.push_back({{"model", tag},
                   {"variant", report.variant},
                   {"probabilistic", report.variant != "mse"},
                   {"sample_count", report.sample_count},
                   {"dimensions", dims},
                   {"mean_rmse", report.mean_rmse},
                   {"mean_pcc", optional_json(report.mean_pcc)}});
  }
  return doc.dump(2) + "\n";
}

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd out;
  out.count = values.size();
  if (values.empty()) return out;
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

AggregateReport aggregate(const std::vector<EvalReport>& reports) {
  if (reports.size() < 2) throw InvalidInput("aggregate needs at least two runs");
  AggregateReport agg;
  agg.variant = reports.front().variant;
  agg.runs = reports.size();
  for (std::size_t k = 0; k < kQualityDims; ++k) {
    std::vector<double> r, p;
    for (const auto& rep : reports) {
      r.push_back(rep.dims[k].rmse);
      if (rep.dims[k].pcc) p.push_back(*rep.dims[k].pcc);
    }
    agg.names[k] = reports.front().dims[k].name;
    agg.rmse[k] = mean_std(r);
    agg.pcc[k] = mean_std(p);
  }
  std::vector<double> mr, mp;
  for (const auto& rep : reports) {
    mr.push_back(rep.mean_rmse);
    if (rep.mean_pcc) mp.push_back(*rep.mean_pcc);
  }
  agg.mean_rmse = mean_std(mr);
  agg.mean_pcc = mean_std(mp);
  return agg;
}

void write_aggregate_table(std::ostream& out, const std::vector<std::pair<std::string, AggregateReport>>& rows) {
  out << "model           ";
  for (const auto& name : kDimensionNames) {
    std::string upper(name);
    for (auto& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    out << "| " << upper << std::string(28 - upper.size(), ' ');
  }
  out << "| AVG\n" << std::string(16, ' ');
  for (std::size_t k = 0; k <= kQualityDims; ++k) out << "| RMSE         PCC            ";
  out << '\n';
  for (const auto& [tag, agg] : rows) {
    char name[32];
    std::snprintf(name, sizeof(name), "%-16.16s", tag.c_str());
    out << name;
    for (std::size_t k = 0; k < kQualityDims; ++k) out << "| " << pm(agg.rmse[k]) << ' ' << pm(agg.pcc[k]);
    out << "| " << pm(agg.mean_rmse) << ' ' << pm(agg.mean_pcc) << '\n';
  }
}

std::string aggregate_json(const std::vector<std::pair<std::string, AggregateReport>>& rows) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& [tag, agg] : rows) {
    nlohmann::json dims = nlohmann::json::array();
    for (std::size_t k = 0; k < kQualityDims; ++k) {
      dims.push_back({{"dimension", agg.names[k]}, {"rmse", mean_std_json(agg.rmse[k])}, {"pcc", mean_std_json(agg.pcc[k])}});
    }
    doc.push_back({{"model", tag},
                   {"variant", agg.variant},
                   {"runs", agg.runs},
                   {"dimensions", dims},
                   {"mean_rmse", mean_std_json(agg.mean_rmse)},
                   {"mean_pcc", mean_std_json(agg.mean_pcc)}});
  }
  return doc.dump(2) + "\n";
}

}  // namespace multigauss
