#include "multigauss/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <string>

#include "multigauss/errors.hpp"
#include "multigauss/loss.hpp"

namespace multigauss {

void HeadConfig::validate() const {
  if (input_dim <= 0) throw InvalidConfig("input_dim must be positive");
  if (hidden_dims.empty()) throw InvalidConfig("hidden_dims must be non-empty");
  for (Index h : hidden_dims) {
    if (h <= 0) throw InvalidConfig("hidden layer width must be positive");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw InvalidConfig("dropout_rate must lie in [0, 1)");
}

HeadModel init_head(const HeadConfig& config) {
  config.validate();
  HeadModel model{config, {}};
  std::vector<Index> widths{config.input_dim};
  widths.insert(widths.end(), config.hidden_dims.begin(), config.hidden_dims.end());
  widths.push_back(config.output_dim());

  std::mt19937_64 gen(config.seed);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const Index fan_in = widths[l];
    const Index fan_out = widths[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> uniform(-limit, limit);
    DenseLayer layer{Eigen::MatrixXd(fan_out, fan_in), Eigen::VectorXd::Zero(fan_out)};
    for (Index r = 0; r < fan_out; ++r) {
      for (Index c = 0; c < fan_in; ++c) layer.weight(r, c) = uniform(gen);
    }
    model.layers.push_back(std::move(layer));
  }
  return model;
}

Eigen::MatrixXd forward_batch(const HeadModel& model, const Eigen::MatrixXd& inputs, bool training,
                              std::uint64_t dropout_seed, ForwardCache* cache) {
  if (inputs.rows() != model.config.input_dim) {
    throw InvalidInput("feature vector has length " + std::to_string(inputs.rows()) + ", model expects " +
                       std::to_string(model.config.input_dim));
  }
  const double rate = model.config.dropout_rate;
  const bool dropout = training && rate > 0.0;
  std::mt19937_64 gen(dropout_seed);
  std::bernoulli_distribution keep(1.0 - rate);

  if (cache) {
    cache->inputs.clear();
    cache->gates.clear();
  }
  Eigen::MatrixXd act = inputs;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const DenseLayer& layer = model.layers[l];
    Eigen::MatrixXd z = layer.weight * act;
    z.colwise() += layer.bias;
    if (cache) cache->inputs.push_back(std::move(act));
    if (l + 1 == model.layers.size()) return z;

    Eigen::MatrixXd gate = (z.array() > 0.0).cast<double>().matrix();
    if (dropout) {
      const double scale = 1.0 / (1.0 - rate);
      for (Index c = 0; c < gate.cols(); ++c) {
        for (Index r = 0; r < gate.rows(); ++r) gate(r, c) *= keep(gen) ? scale : 0.0;
      }
    }
    act = z.cwiseProduct(gate);
    if (cache) cache->gates.push_back(std::move(gate));
  }
  return act;  // unreachable: layers is never empty for an initialized model
}

Eigen::VectorXd forward(const HeadModel& model, const Eigen::VectorXd& x, bool training, std::uint64_t dropout_seed) {
  return forward_batch(model, x, training, dropout_seed);
}

std::vector<DenseLayer> backward_batch(const HeadModel& model, const ForwardCache& cache,
                                       const Eigen::MatrixXd& d_output) {
  const std::size_t depth = model.layers.size();
  if (cache.inputs.size() != depth || cache.gates.size() + 1 != depth) {
    throw InvalidInput("backward_batch: cache does not match the model");
  }
  std::vector<DenseLayer> grads(depth);
  Eigen::MatrixXd delta = d_output;
  for (std::size_t k = depth; k-- > 0;) {
    grads[k].weight = delta * cache.inputs[k].transpose();
    grads[k].bias = delta.rowwise().sum();
    if (k == 0) break;
    delta = (model.layers[k].weight.transpose() * delta).cwiseProduct(cache.gates[k - 1]);
  }
  return grads;
}

Prediction prediction_from_raw(Variant variant, const Eigen::VectorXd& raw, const Affine& map) {
  const Index n = map.dim();
  if (raw.size() != raw_output_dim(variant, n)) throw InvalidInput("raw output length does not match the variant");
  switch (variant) {
    case Variant::full: {
      Gaussian g = full_pipeline<double>(raw.head(n), raw.tail(triangle_size(n)), map);
      Eigen::VectorXd point = g.mean();
      return {std::move(g), std::move(point)};
    }
    case Variant::independent: {
      Gaussian g = diagonal_pipeline<double>(raw.head(n), raw.tail(n), map);
      Eigen::VectorXd point = g.mean();
      return {std::move(g), std::move(point)};
    }
    case Variant::mse: {
      Eigen::VectorXd point = map(raw);
      return {Gaussian(point, Eigen::MatrixXd::Identity(n, n)), point};
    }
  }
  throw InvalidInput("unknown variant");
}

Prediction predict(const HeadModel& model, const Eigen::VectorXd& x, const Affine& map) {
  return prediction_from_raw(model.config.variant, forward(model, x), map);
}

// Checkpoint layout (all integers u64 unless noted, all reals f64, little-endian):
//   magic "MGHEAD\0\0" (8 bytes), u32 format version, u32 variant
//   input_dim, hidden count, hidden widths..., dropout_rate, seed
//   label dims n, A (n*n row-major), b (n)
//   layer count, then per layer: rows, cols, weight row-major, bias (rows)
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'M', 'G', 'H', 'E', 'A', 'D', '\0', '\0'};
constexpr std::uint32_t kFormatVersion = 1;
constexpr std::uint64_t kMaxDim = 1u << 24;

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) throw SchemaError("checkpoint is truncated");
  return value;
}

std::uint64_t get_dim(std::istream& in, const char* what) {
  const auto v = get<std::uint64_t>(in);
  if (v == 0 || v > kMaxDim) throw SchemaError(std::string("checkpoint has implausible ") + what);
  return v;
}

void put_row_major(std::ostream& out, const Eigen::MatrixXd& m) {
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) put(out, m(r, c));
  }
}

Eigen::MatrixXd get_row_major(std::istream& in, Index rows, Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = get<double>(in);
  }
  return m;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint) {
  const HeadModel& model = checkpoint.model;
  const HeadConfig& cfg = model.config;
  out.write(kMagic, sizeof(kMagic));
  put(out, kFormatVersion);
  put(out, static_cast<std::uint32_t>(cfg.variant));
  put(out, static_cast<std::uint64_t>(cfg.input_dim));
  put(out, static_cast<std::uint64_t>(cfg.hidden_dims.size()));
  for (Index h : cfg.hidden_dims) put(out, static_cast<std::uint64_t>(h));
  put(out, cfg.dropout_rate);
  put(out, cfg.seed);

  const Affine& map = checkpoint.affine;
  put(out, static_cast<std::uint64_t>(map.dim()));
  put_row_major(out, map.a());
  for (Index i = 0; i < map.dim(); ++i) put(out, map.b()(i));

  put(out, static_cast<std::uint64_t>(model.layers.size()));
  for (const DenseLayer& layer : model.layers) {
    put(out, static_cast<std::uint64_t>(layer.weight.rows()));
    put(out, static_cast<std::uint64_t>(layer.weight.cols()));
    put_row_major(out, layer.weight);
    for (Index i = 0; i < layer.bias.size(); ++i) put(out, layer.bias(i));
  }
  if (!out) throw IoError("failed writing checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw SchemaError("not a multigauss checkpoint (bad magic)");
  }
  if (const auto version = get<std::uint32_t>(in); version != kFormatVersion) {
    throw SchemaError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto variant_tag = get<std::uint32_t>(in);
  if (variant_tag > static_cast<std::uint32_t>(Variant::mse)) throw SchemaError("unknown variant tag in checkpoint");

  HeadConfig cfg;
  cfg.variant = static_cast<Variant>(variant_tag);
  cfg.input_dim = static_cast<Index>(get_dim(in, "input_dim"));
  const auto hidden_count = get_dim(in, "hidden layer count");
  cfg.hidden_dims.clear();
  for (std::uint64_t i = 0; i < hidden_count; ++i) cfg.hidden_dims.push_back(static_cast<Index>(get_dim(in, "hidden width")));
  cfg.dropout_rate = get<double>(in);
  cfg.seed = get<std::uint64_t>(in);
  try {
    cfg.validate();
  } catch (const InvalidConfig& e) {
    throw SchemaError(std::string("checkpoint config invalid: ") + e.what());
  }

  const auto n = static_cast<Index>(get_dim(in, "label dimension"));
  if (n != kQualityDims) throw SchemaError("checkpoint label dimension must be 5");
  Eigen::MatrixXd a = get_row_major(in, n, n);
  Eigen::VectorXd b(n);
  for (Index i = 0; i < n; ++i) b(i) = get<double>(in);
  Affine affine = [&] {
    try {
      return Affine(std::move(a), std::move(b));
    } catch (const InvalidInput& e) {
      throw SchemaError(std::string("checkpoint affine map invalid: ") + e.what());
    }
  }();

  HeadModel model{cfg, {}};
  const auto layer_count = get_dim(in, "layer count");
  if (layer_count != cfg.hidden_dims.size() + 1) throw SchemaError("checkpoint layer count does not match config");
  Index fan_in = cfg.input_dim;
  for (std::uint64_t l = 0; l < layer_count; ++l) {
    const auto rows = static_cast<Index>(get_dim(in, "layer rows"));
    const auto cols = static_cast<Index>(get_dim(in, "layer cols"));
    const Index expected_rows = l + 1 == layer_count ? cfg.output_dim() : cfg.hidden_dims[l];
    if (rows != expected_rows || cols != fan_in) {
      throw SchemaError("checkpoint layer " + std::to_string(l) + " has shape " + std::to_string(rows) + "x" +
                        std::to_string(cols) + ", expected " + std::to_string(expected_rows) + "x" +
                        std::to_string(fan_in));
    }
    DenseLayer layer{get_row_major(in, rows, cols), Eigen::VectorXd(rows)};
    for (Index i = 0; i < rows; ++i) layer.bias(i) = get<double>(in);
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) throw SchemaError("checkpoint holds non-finite weights");
    model.layers.push_back(std::move(layer));
    fan_in = rows;
  }
  if (in.peek() != std::char_traits<char>::eof()) throw SchemaError("trailing bytes after checkpoint");
  return {std::move(model), std::move(affine)};
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  write_checkpoint(out, checkpoint);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  return read_checkpoint(in);
}

}  // namespace multigauss
