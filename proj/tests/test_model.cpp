#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "multigauss/errors.hpp"
#include "multigauss/loss.hpp"
#include "multigauss/model.hpp"
#include "test_support.hpp"

namespace mg = multigauss;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

mg::HeadModel small_model(mg::Variant variant, std::uint64_t seed, double dropout = 0.0) {
  mg::HeadConfig cfg;
  cfg.input_dim = 6;
  cfg.hidden_dims = {8, 7};
  cfg.variant = variant;
  cfg.dropout_rate = dropout;
  cfg.seed = seed;
  return mg::init_head(cfg);
}

mg::HeadModel hand_model(std::vector<mg::DenseLayer> layers, mg::Index input_dim) {
  mg::HeadModel m;
  m.config.input_dim = input_dim;
  m.layers = std::move(layers);
  return m;
}

// Parameters flattened layer by layer (weight column-major, then bias).
VectorXd flatten(const std::vector<mg::DenseLayer>& layers) {
  mg::Index total = 0;
  for (const auto& l : layers) total += l.weight.size() + l.bias.size();
  VectorXd out(total);
  mg::Index k = 0;
  for (const auto& l : layers) {
    out.segment(k, l.weight.size()) = l.weight.reshaped();
    k += l.weight.size();
    out.segment(k, l.bias.size()) = l.bias;
    k += l.bias.size();
  }
  return out;
}

void unflatten(const VectorXd& flat, std::vector<mg::DenseLayer>& layers) {
  mg::Index k = 0;
  for (auto& l : layers) {
    l.weight.reshaped() = flat.segment(k, l.weight.size());
    k += l.weight.size();
    l.bias = flat.segment(k, l.bias.size());
    k += l.bias.size();
  }
}

}  // namespace

TEST(HeadConfig, OutputDimensionPerVariant) {
  mg::HeadConfig cfg;
  cfg.variant = mg::Variant::full;
  EXPECT_EQ(cfg.output_dim(), 20);
  cfg.variant = mg::Variant::independent;
  EXPECT_EQ(cfg.output_dim(), 10);
  cfg.variant = mg::Variant::mse;
  EXPECT_EQ(cfg.output_dim(), 5);
  EXPECT_EQ(mg::HeadConfig{}.hidden_dims, (std::vector<mg::Index>{256, 64}));
}

TEST(InitHead, DeterministicPerSeed) {
  EXPECT_EQ(small_model(mg::Variant::full, 3), small_model(mg::Variant::full, 3));
  EXPECT_NE(small_model(mg::Variant::full, 3), small_model(mg::Variant::full, 4));
}

TEST(InitHead, ShapesChain) {
  mg::HeadConfig cfg;
  cfg.input_dim = 3;
  cfg.hidden_dims = {4};
  cfg.variant = mg::Variant::mse;
  const auto m = mg::init_head(cfg);
  ASSERT_EQ(m.layers.size(), 2u);
  EXPECT_EQ(m.layers[0].weight.rows(), 4);
  EXPECT_EQ(m.layers[0].weight.cols(), 3);
  EXPECT_EQ(m.layers[1].weight.rows(), 5);
  EXPECT_EQ(m.layers[1].weight.cols(), 4);
  EXPECT_TRUE(m.layers[0].bias.isZero(0.0));
  EXPECT_TRUE(m.layers[1].bias.isZero(0.0));
}

TEST(InitHead, GlorotBound) {
  mg::HeadConfig cfg;
  cfg.input_dim = 64;
  cfg.hidden_dims = {64};
  cfg.seed = 11;
  const auto m = mg::init_head(cfg);
  const MatrixXd& w = m.layers[0].weight;  // 64x64 = 4096 draws
  EXPECT_LE(w.cwiseAbs().maxCoeff(), 0.21650635094610965);
  EXPECT_GT(w.cwiseAbs().maxCoeff(), 0.2);  // actually spans the interval
}

TEST(InitHead, RejectsInvalidConfig) {
  mg::HeadConfig cfg;
  EXPECT_THROW(mg::init_head(cfg), mg::InvalidConfig);  // input_dim 0
  cfg.input_dim = 3;
  cfg.hidden_dims = {4, 0};
  EXPECT_THROW(mg::init_head(cfg), mg::InvalidConfig);
  cfg.hidden_dims = {};
  EXPECT_THROW(mg::init_head(cfg), mg::InvalidConfig);
  cfg.hidden_dims = {4};
  cfg.dropout_rate = 1.0;
  EXPECT_THROW(mg::init_head(cfg), mg::InvalidConfig);
}

TEST(Forward, IdentityLayer) {
  const auto m = hand_model({{MatrixXd::Identity(3, 3), VectorXd::Zero(3)}}, 3);
  VectorXd x(3);
  x << -1, 2, 0.5;
  EXPECT_EQ(mg::forward(m, x), x);
}

TEST(Forward, ReluOnHiddenLayer) {
  const auto m = hand_model({{MatrixXd::Identity(2, 2), VectorXd::Zero(2)}, {MatrixXd::Identity(2, 2), VectorXd::Zero(2)}}, 2);
  VectorXd x(2), expected(2);
  x << -1, 2;
  expected << 0, 2;
  EXPECT_EQ(mg::forward(m, x), expected);
}

TEST(Forward, HandEvaluatedNetwork) {
  MatrixXd w1(2, 2), w2(1, 2);
  w1 << 1, 0, 0, -1;
  w2 << 1, 1;
  const auto m = hand_model({{w1, VectorXd::Zero(2)}, {w2, VectorXd::Constant(1, 0.5)}}, 2);
  mg::ForwardCache cache;
  const MatrixXd out = mg::forward_batch(m, VectorXd::Ones(2), false, 0, &cache);
  EXPECT_EQ(out(0, 0), 1.5);
  VectorXd hidden(2);
  hidden << 1, 0;
  EXPECT_EQ(VectorXd(cache.inputs[1].col(0)), hidden);
}

TEST(Forward, DimensionMismatch) {
  const auto m = small_model(mg::Variant::full, 1);
  EXPECT_THROW(mg::forward(m, VectorXd::Zero(5)), mg::InvalidInput);
}

TEST(Forward, OutputLengthPerVariant) {
  const VectorXd x = VectorXd::Ones(6);
  EXPECT_EQ(mg::forward(small_model(mg::Variant::full, 1), x).size(), 20);
  EXPECT_EQ(mg::forward(small_model(mg::Variant::independent, 1), x).size(), 10);
  EXPECT_EQ(mg::forward(small_model(mg::Variant::mse, 1), x).size(), 5);
}

TEST(Forward, BatchColumnsMatchSingleSamples) {
  std::mt19937_64 gen(2);
  const auto m = small_model(mg::Variant::full, 5);
  const MatrixXd xs = mg::testing::normal_matrix(gen, 6, 9);
  const MatrixXd out = mg::forward_batch(m, xs);
  // Matrix-matrix and matrix-vector products may round differently.
  for (mg::Index c = 0; c < xs.cols(); ++c) {
    EXPECT_LT((out.col(c) - mg::forward(m, xs.col(c))).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Forward, FinalLayerHomogeneity) {
  std::mt19937_64 gen(3);
  auto m = small_model(mg::Variant::full, 7);
  m.layers.back().bias = mg::testing::normal_vector(gen, 20);
  const VectorXd x = mg::testing::normal_vector(gen, 6);
  const VectorXd before = mg::forward(m, x);
  // c = 2 keeps every product exact, so equality is bitwise.
  m.layers.back().weight *= 2.0;
  m.layers.back().bias *= 2.0;
  EXPECT_EQ(mg::forward(m, x), 2.0 * before);
}

TEST(Forward, DropoutOnlyInTraining) {
  std::mt19937_64 gen(4);
  const VectorXd x = mg::testing::normal_vector(gen, 6);
  const auto plain = small_model(mg::Variant::full, 8);
  EXPECT_EQ(mg::forward(plain, x, true, 99), mg::forward(plain, x, false));

  const auto dropped = small_model(mg::Variant::full, 8, 0.5);
  EXPECT_EQ(mg::forward(dropped, x, false), mg::forward(plain, x, false));
  EXPECT_EQ(mg::forward(dropped, x, true, 5), mg::forward(dropped, x, true, 5));
  EXPECT_NE(mg::forward(dropped, x, true, 5), mg::forward(dropped, x, false));
}

TEST(Backward, MatchesFiniteDifferences) {
  std::mt19937_64 gen(5);
  for (mg::Variant variant : {mg::Variant::full, mg::Variant::independent, mg::Variant::mse}) {
    for (int trial = 0; trial < 5; ++trial) {
      auto m = small_model(variant, 100 + static_cast<std::uint64_t>(trial));
      for (auto& l : m.layers) l.bias = mg::testing::normal_vector(gen, l.bias.size(), 0.1);
      const MatrixXd xs = mg::testing::normal_matrix(gen, 6, 4);
      MatrixXd ys(5, 4);
      for (mg::Index c = 0; c < 4; ++c) ys.col(c) = mg::testing::uniform_vector(gen, 5, 1.0, 5.0);
      const mg::Affine map = mg::Affine::label_scale();

      auto batch_loss = [&](const mg::HeadModel& model, MatrixXd* d_out) {
        const MatrixXd raw = mg::forward_batch(model, xs);
        double total = 0.0;
        if (d_out) d_out->resize(raw.rows(), raw.cols());
        for (mg::Index c = 0; c < raw.cols(); ++c) {
          const auto lg = mg::head_loss<double>(variant, raw.col(c), ys.col(c), map);
          total += lg.value;
          if (d_out) d_out->col(c) = lg.grad.flat();
        }
        return total;
      };

      mg::ForwardCache cache;
      mg::forward_batch(m, xs, false, 0, &cache);
      MatrixXd d_out;
      batch_loss(m, &d_out);
      const VectorXd analytic = flatten(mg::backward_batch(m, cache, d_out));

      const VectorXd theta = flatten(m.layers);
      const VectorXd numeric = mg::testing::central_difference(
          [&](const VectorXd& t) {
            mg::HeadModel probe = m;
            unflatten(t, probe.layers);
            return batch_loss(probe, nullptr);
          },
          theta, 1e-5);
      EXPECT_LT(mg::testing::max_relative_error(analytic, numeric), 1e-4)
          << mg::to_string(variant) << " trial " << trial;
    }
  }
}

TEST(Predict, ZeroFinalLayerAnchor) {
  std::mt19937_64 gen(6);
  auto m = small_model(mg::Variant::full, 9);
  m.layers.back().weight.setZero();
  m.layers.back().bias.setZero();
  const double var = 4.0 * std::log(2.0) * std::log(2.0);
  for (int trial = 0; trial < 10; ++trial) {
    const auto p = mg::predict(m, mg::testing::normal_vector(gen, 6), mg::Affine::label_scale());
    EXPECT_LT((p.gaussian.mean() - VectorXd::Constant(5, 3.0)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((p.gaussian.cov() - var * MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(p.gaussian.cov()(0, 0), 1.921812055672806, 1e-12);
  }
}

TEST(Predict, PointIsMean) {
  std::mt19937_64 gen(7);
  for (mg::Variant variant : {mg::Variant::full, mg::Variant::independent, mg::Variant::mse}) {
    const auto m = small_model(variant, 10);
    const auto p = mg::predict(m, mg::testing::normal_vector(gen, 6), mg::Affine::label_scale());
    EXPECT_EQ(p.point, p.gaussian.mean());
  }
}

TEST(Predict, IndependentOffDiagonalsExactlyZero) {
  std::mt19937_64 gen(8);
  for (int trial = 0; trial < 50; ++trial) {
    const auto m = small_model(mg::Variant::independent, 200 + static_cast<std::uint64_t>(trial));
    const auto p = mg::predict(m, mg::testing::normal_vector(gen, 6, 3.0), mg::Affine::label_scale());
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < 5; ++j) {
        if (i != j) ASSERT_EQ(p.gaussian.cov()(i, j), 0.0);
      }
    }
  }
}

TEST(Predict, MsePlaceholderCovariance) {
  const auto p = mg::predict(small_model(mg::Variant::mse, 1), VectorXd::Ones(6), mg::Affine::label_scale());
  EXPECT_EQ(p.gaussian.cov(), MatrixXd::Identity(5, 5));
}

TEST(Predict, AlwaysValidCovariance) {
  std::mt19937_64 gen(9);
  for (int trial = 0; trial < 1000; ++trial) {
    auto m = small_model(trial % 2 ? mg::Variant::full : mg::Variant::independent, 1000 + static_cast<std::uint64_t>(trial));
    m.layers.back().bias = mg::testing::normal_vector(gen, m.layers.back().bias.size(), 2.0);
    const auto p = mg::predict(m, mg::testing::normal_vector(gen, 6, 2.0), mg::Affine::label_scale());
    const MatrixXd& cov = p.gaussian.cov();
    ASSERT_TRUE(cov.allFinite());
    ASSERT_EQ(cov, cov.transpose());
    ASSERT_EQ(Eigen::LLT<MatrixXd>(cov).info(), Eigen::Success);
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  for (mg::Variant variant : {mg::Variant::full, mg::Variant::independent, mg::Variant::mse}) {
    std::mt19937_64 gen(10);
    mg::Checkpoint ck{small_model(variant, 12, 0.25),
                      mg::Affine(mg::testing::random_invertible(gen, 5), mg::testing::normal_vector(gen, 5))};
    ck.model.layers[0].bias = mg::testing::normal_vector(gen, 8);
    std::stringstream buf;
    mg::write_checkpoint(buf, ck);
    const std::string bytes = buf.str();
    std::istringstream in(bytes);
    const mg::Checkpoint back = mg::read_checkpoint(in);
    EXPECT_EQ(back, ck);
    std::ostringstream again;
    mg::write_checkpoint(again, back);
    EXPECT_EQ(again.str(), bytes);
  }
}

TEST(Checkpoint, SaveLoadFile) {
  const mg::Checkpoint ck{small_model(mg::Variant::full, 13), mg::Affine::label_scale()};
  const auto path = std::filesystem::temp_directory_path() / "multigauss_test_model.ckpt";
  mg::save_checkpoint(path, ck);
  EXPECT_EQ(mg::load_checkpoint(path), ck);
  std::filesystem::remove(path);
  EXPECT_THROW(mg::load_checkpoint(path), mg::IoError);
}

TEST(Checkpoint, RejectsCorruptInput) {
  std::ostringstream buf;
  mg::write_checkpoint(buf, {small_model(mg::Variant::full, 14), mg::Affine::label_scale()});
  const std::string bytes = buf.str();

  std::istringstream truncated(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(mg::read_checkpoint(truncated), mg::SchemaError);

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  std::istringstream magic(bad_magic);
  EXPECT_THROW(mg::read_checkpoint(magic), mg::SchemaError);

  std::istringstream trailing(bytes + "x");
  EXPECT_THROW(mg::read_checkpoint(trailing), mg::SchemaError);

  std::istringstream empty("");
  EXPECT_THROW(mg::read_checkpoint(empty), mg::SchemaError);
}
