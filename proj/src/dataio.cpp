#include "multigauss/dataio.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "multigauss/errors.hpp"

namespace multigauss {

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

bool parse_real(std::string_view text, double& value) {
  if (text.empty()) return false;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  return ec == std::errc() && ptr == last && std::isfinite(value);
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::string join_reals(const Eigen::MatrixXd& m) {
  std::string out;
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      if (!out.empty()) out += ',';
      out += format_real(m(r, c));
    }
  }
  return out;
}

Eigen::MatrixXd parse_row_major(std::string_view text, Index rows, Index cols, const std::string& key) {
  const auto fields = split_fields(text);
  if (static_cast<Index>(fields.size()) != rows * cols) {
    throw SchemaError("ground truth '" + key + "' has " + std::to_string(fields.size()) + " values, expected " +
                      std::to_string(rows * cols));
  }
  Eigen::MatrixXd m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      if (!parse_real(fields[static_cast<std::size_t>(r * cols + c)], m(r, c))) {
        throw SchemaError("ground truth '" + key + "' holds an unparsable number");
      }
    }
  }
  return m;
}

}  // namespace

Index dimension_index(std::string_view name) {
  const std::string lower = lowercase(name);
  for (std::size_t i = 0; i < kDimensionNames.size(); ++i) {
    if (kDimensionNames[i] == lower) return static_cast<Index>(i);
  }
  throw InvalidInput("unknown quality dimension '" + std::string(name) + "'");
}

std::string format_real(double value) {
  char buf[32];
  const int len = std::snprintf(buf, sizeof(buf), "%.17g", value);
  return std::string(buf, static_cast<std::size_t>(len));
}

LoadedDataset read_dataset(std::istream& in, bool strict) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError(line_no, "missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  // Views into `line`; only valid until the first data row is read.
  const auto header = split_fields(line);
  const std::size_t column_count = header.size();
  if (header.size() < kDimensionNames.size() + 1) throw ParseError(line_no, "header needs at least one feature column");
  const std::size_t feature_dim = header.size() - kDimensionNames.size();
  for (std::size_t i = 0; i < feature_dim; ++i) {
    if (header[i] != "feat_" + std::to_string(i)) {
      throw ParseError(line_no, "expected column 'feat_" + std::to_string(i) + "', found '" + std::string(header[i]) + "'");
    }
  }
  for (std::size_t k = 0; k < kDimensionNames.size(); ++k) {
    if (lowercase(header[feature_dim + k]) != kDimensionNames[k]) {
      throw ParseError(line_no, "expected label column '" + std::string(kDimensionNames[k]) + "'");
    }
  }

  LoadedDataset result;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != column_count) {
      throw ParseError(line_no, "expected " + std::to_string(column_count) + " fields, found " +
                                    std::to_string(fields.size()));
    }
    LabeledSample sample{Eigen::VectorXd(static_cast<Index>(feature_dim)), Eigen::VectorXd(kQualityDims)};
    for (std::size_t i = 0; i < fields.size(); ++i) {
      double value = 0.0;
      if (!parse_real(fields[i], value)) {
        throw ParseError(line_no, "field " + std::to_string(i + 1) + " is not a finite number: '" +
                                      std::string(fields[i]) + "'");
      }
      if (i < feature_dim) {
        sample.features(static_cast<Index>(i)) = value;
        continue;
      }
      sample.labels(static_cast<Index>(i - feature_dim)) = value;
      if (value < 1.0 || value > 5.0) {
        if (strict) {
          throw SchemaError("line " + std::to_string(line_no) + ": label " +
                            std::string(kDimensionNames[i - feature_dim]) + " = " +
                            std::string(fields[i]) + " is outside [1, 5]");
        }
        ++result.out_of_range_labels;
      }
    }
    result.samples.push_back(std::move(sample));
  }
  return result;
}

LoadedDataset load_dataset(const std::filesystem::path& path, bool strict) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset: " + path.string());
  return read_dataset(in, strict);
}

void write_dataset(std::ostream& out, const Dataset& data) {
  if (data.empty()) throw InvalidInput("write_dataset: empty dataset");
  const Index feature_dim = data.front().features.size();
  std::string text;
  for (Index i = 0; i < feature_dim; ++i) text += "feat_" + std::to_string(i) + ",";
  for (std::size_t k = 0; k < kDimensionNames.size(); ++k) {
    text += kDimensionNames[k];
    text += k + 1 < kDimensionNames.size() ? ',' : '\n';
  }
  for (const auto& sample : data) {
    if (sample.features.size() != feature_dim || sample.labels.size() != kQualityDims) {
      throw SchemaError("write_dataset: inconsistent sample dimensions");
    }
    for (Index i = 0; i < feature_dim; ++i) text += format_real(sample.features(i)) + ",";
    for (Index k = 0; k < kQualityDims; ++k) {
      text += format_real(sample.labels(k));
      text += k + 1 < kQualityDims ? ',' : '\n';
    }
  }
  out << text;
  if (!out) throw IoError("failed writing dataset");
}

void write_dataset(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open dataset for writing: " + path.string());
  write_dataset(out, data);
}

Eigen::MatrixXd feature_matrix(const Dataset& data) {
  if (data.empty()) return {};
  Eigen::MatrixXd m(data.front().features.size(), static_cast<Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].features.size() != m.rows()) throw SchemaError("inconsistent feature dimension in dataset");
    m.col(static_cast<Index>(i)) = data[i].features;
  }
  return m;
}

Eigen::MatrixXd label_matrix(const Dataset& data) {
  Eigen::MatrixXd m(kQualityDims, static_cast<Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].labels.size() != kQualityDims) throw SchemaError("label vector must have length 5");
    m.col(static_cast<Index>(i)) = data[i].labels;
  }
  return m;
}

void SynthSpec::validate() const {
  if (feature_dim <= 0) throw InvalidInput("synthetic feature dimension must be positive");
  if (sample_count < 1) throw InvalidInput("synthetic sample count must be positive");
  if (weight.rows() != kQualityDims || weight.cols() != feature_dim) throw InvalidInput("synthetic W must be 5 x D");
  if (true_cov.rows() != kQualityDims || true_cov.cols() != kQualityDims) throw InvalidInput("Λ* must be 5 x 5");
  try {
    Gaussian(Eigen::VectorXd::Zero(kQualityDims), true_cov);
  } catch (const InvalidInput& e) {
    throw InvalidInput(std::string("Λ* is not a valid covariance: ") + e.what());
  }
}

Eigen::MatrixXd default_noise_covariance() {
  Eigen::VectorXd sd(kQualityDims);
  sd << 0.5, 0.45, 0.5, 0.55, 0.4;
  Eigen::MatrixXd corr(kQualityDims, kQualityDims);
  // clang-format off
  corr << 1.0,  0.6,  0.4,  0.45, 0.3,
          0.6,  1.0,  0.2,  0.15, 0.1,
          0.4,  0.2,  1.0,  0.25, 0.2,
          0.45, 0.15, 0.25, 1.0,  0.1,
          0.3,  0.1,  0.2,  0.1,  1.0;
  // clang-format on
  return sd.asDiagonal() * corr * sd.asDiagonal();
}

Eigen::MatrixXd random_mean_weights(Index feature_dim, std::uint64_t seed) {
  if (feature_dim <= 0) throw InvalidInput("feature dimension must be positive");
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(feature_dim)));
  Eigen::MatrixXd w(kQualityDims, feature_dim);
  for (Index r = 0; r < w.rows(); ++r) {
    for (Index c = 0; c < w.cols(); ++c) w(r, c) = normal(gen);
  }
  return w;
}

Eigen::VectorXd synthetic_mean(const Eigen::MatrixXd& weight, const Eigen::VectorXd& x) {
  return (3.0 + 1.5 * (weight * x).array().tanh()).matrix();
}

SyntheticSet generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 gen(spec.seed);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);

  SyntheticSet out{{}, spec.weight, spec.true_cov};
  out.samples.reserve(static_cast<std::size_t>(spec.sample_count));
  for (Index n = 0; n < spec.sample_count; ++n) {
    Eigen::VectorXd x(spec.feature_dim);
    for (Index i = 0; i < spec.feature_dim; ++i) x(i) = uniform(gen);
    out.samples.push_back({std::move(x), Eigen::VectorXd()});
  }
  const Gaussian noise(Eigen::VectorXd::Zero(kQualityDims), spec.true_cov);
  const Eigen::MatrixXd draws = sample(noise, spec.sample_count, gen());
  for (Index n = 0; n < spec.sample_count; ++n) {
    auto& s = out.samples[static_cast<std::size_t>(n)];
    s.labels = synthetic_mean(spec.weight, s.features) + draws.row(n).transpose();
  }
  return out;
}

void write_ground_truth(const std::filesystem::path& path, const SynthSpec& spec) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open ground-truth file for writing: " + path.string());
  out << "# synthetic ground truth: labels ~ N(3 + 1.5 tanh(W x), true_cov), x ~ U(-1,1)^D\n"
      << "feature_dim=" << spec.feature_dim << '\n'
      << "label_dim=" << kQualityDims << '\n'
      << "sample_count=" << spec.sample_count << '\n'
      << "seed=" << spec.seed << '\n'
      << "weight=" << join_reals(spec.weight) << '\n'
      << "true_cov=" << join_reals(spec.true_cov) << '\n';
  if (!out) throw IoError("failed writing ground truth: " + path.string());
}

SynthSpec read_ground_truth(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open ground-truth file: " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw SchemaError("ground truth line without '=': " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto need = [&](const std::string& key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw SchemaError("ground truth is missing '" + key + "'");
    return it->second;
  };
  SynthSpec spec;
  spec.feature_dim = std::stoll(need("feature_dim"));
  if (std::stoll(need("label_dim")) != kQualityDims) throw SchemaError("ground truth label_dim must be 5");
  spec.sample_count = std::stoll(need("sample_count"));
  spec.seed = std::stoull(need("seed"));
  spec.weight = parse_row_major(need("weight"), kQualityDims, spec.feature_dim, "weight");
  spec.true_cov = parse_row_major(need("true_cov"), kQualityDims, kQualityDims, "true_cov");
  return spec;
}

std::pair<Dataset, Dataset> split(const Dataset& data, double fraction, std::uint64_t seed) {
  if (data.size() < 2) throw InvalidInput("split needs at least two samples");
  if (!(fraction > 0.0 && fraction < 1.0)) throw InvalidInput("split fraction must lie in (0, 1)");
  const auto head = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(data.size())));
  if (head == 0 || head == data.size()) throw InvalidInput("split fraction leaves one side empty");

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 gen(seed);
  std::shuffle(order.begin(), order.end(), gen);

  std::pair<Dataset, Dataset> out;
  for (std::size_t k = 0; k < order.size(); ++k) (k < head ? out.first : out.second).push_back(data[order[k]]);
  return out;
}

}  // namespace multigauss
