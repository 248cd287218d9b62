#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "multigauss/dataio.hpp"
#include "multigauss/errors.hpp"
#include "multigauss/loss.hpp"
#include "multigauss/trainer.hpp"
#include "test_support.hpp"

namespace mg = multigauss;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

std::vector<mg::DenseLayer> scalar_param(double theta) {
  return {{MatrixXd::Constant(1, 1, theta), VectorXd::Zero(0)}};
}

std::vector<mg::DenseLayer> scalar_grad(double g) {
  return {{MatrixXd::Constant(1, 1, g), VectorXd::Zero(0)}};
}

mg::Dataset synthetic(mg::Index n, mg::Index d, std::uint64_t seed) {
  mg::SynthSpec spec;
  spec.feature_dim = d;
  spec.sample_count = n;
  spec.weight = mg::random_mean_weights(d, seed);
  spec.true_cov = mg::default_noise_covariance();
  spec.seed = seed + 1;
  return mg::generate_synthetic(spec).samples;
}

mg::HeadConfig small_head() {
  mg::HeadConfig head;
  head.hidden_dims = {16, 8};
  head.seed = 3;
  return head;
}

}  // namespace

TEST(AdamStep, ZeroGradientLeavesParameters) {
  auto params = scalar_param(0.7);
  auto state = mg::AdamState::zeros_like(params);
  mg::TrainConfig cfg;
  mg::adam_step(params, scalar_grad(0.0), state, cfg);
  EXPECT_EQ(params[0].weight(0, 0), 0.7);
  EXPECT_EQ(state.m[0].weight(0, 0), 0.0);
  EXPECT_EQ(state.v[0].weight(0, 0), 0.0);
  EXPECT_EQ(state.step, 1);
}

TEST(AdamStep, FirstAndSecondStep) {
  auto params = scalar_param(0.0);
  auto state = mg::AdamState::zeros_like(params);
  mg::TrainConfig cfg;
  cfg.learning_rate = 0.1;
  mg::adam_step(params, scalar_grad(1.0), state, cfg);
  EXPECT_NEAR(params[0].weight(0, 0), -0.1, 1e-7);
  mg::adam_step(params, scalar_grad(1.0), state, cfg);
  EXPECT_NEAR(params[0].weight(0, 0), -0.2, 1e-7);
  EXPECT_EQ(state.step, 2);
}

TEST(AdamStep, NonFiniteGradientNamesBlockAndChangesNothing) {
  std::vector<mg::DenseLayer> params{{MatrixXd::Ones(2, 2), VectorXd::Ones(2)}, {MatrixXd::Ones(1, 2), VectorXd::Ones(1)}};
  auto grads = params;
  grads[1].bias(0) = std::numeric_limits<double>::quiet_NaN();
  auto state = mg::AdamState::zeros_like(params);
  const auto before = params;
  try {
    mg::adam_step(params, grads, state, mg::TrainConfig{});
    FAIL() << "expected NumericFailure";
  } catch (const mg::NumericFailure& e) {
    EXPECT_NE(std::string(e.what()).find("layer 1 bias"), std::string::npos) << e.what();
  }
  EXPECT_EQ(params, before);
  EXPECT_EQ(state.step, 0);
  EXPECT_TRUE(state.m[0].weight.isZero(0.0));
}

TEST(AdamStep, ShapeMismatchRejected) {
  auto params = scalar_param(0.0);
  auto state = mg::AdamState::zeros_like(params);
  const std::vector<mg::DenseLayer> grads{{MatrixXd::Ones(2, 1), VectorXd::Zero(0)}};
  EXPECT_THROW(mg::adam_step(params, grads, state, mg::TrainConfig{}), mg::InvalidInput);
}

TEST(AdamStep, StepMagnitudeBound) {
  std::mt19937_64 gen(1);
  std::vector<mg::DenseLayer> params{{mg::testing::normal_matrix(gen, 4, 3), mg::testing::normal_vector(gen, 4)}};
  auto state = mg::AdamState::zeros_like(params);
  mg::TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  for (int step = 0; step < 500; ++step) {
    const double scale = std::pow(10.0, static_cast<double>(step % 7) - 3.0);
    const std::vector<mg::DenseLayer> grads{
        {mg::testing::normal_matrix(gen, 4, 3, scale), mg::testing::normal_vector(gen, 4, scale)}};
    const auto before = params;
    mg::adam_step(params, grads, state, cfg);
    ASSERT_LE((params[0].weight - before[0].weight).cwiseAbs().maxCoeff(), 10 * cfg.learning_rate) << step;
    ASSERT_LE((params[0].bias - before[0].bias).cwiseAbs().maxCoeff(), 10 * cfg.learning_rate) << step;
  }
}

TEST(AdamStep, SingleSampleStepDescends) {
  std::mt19937_64 gen(2);
  int decreased = 0;
  for (int trial = 0; trial < 100; ++trial) {
    mg::HeadConfig head;
    head.input_dim = 4;
    head.hidden_dims = {6};
    head.seed = 500 + static_cast<std::uint64_t>(trial);
    mg::HeadModel model = mg::init_head(head);
    const mg::Dataset one{{mg::testing::normal_vector(gen, 4), mg::testing::uniform_vector(gen, 5, 1.0, 5.0)}};
    const mg::Affine map = mg::Affine::label_scale();
    const double before = mg::mean_loss(model, one, map);

    mg::ForwardCache cache;
    const MatrixXd raw = mg::forward_batch(model, one[0].features, false, 0, &cache);
    const auto lg = mg::head_loss<double>(model.config.variant, raw.col(0), one[0].labels, map);
    const auto grads = mg::backward_batch(model, cache, lg.grad.flat());
    auto state = mg::AdamState::zeros_like(model.layers);
    mg::TrainConfig cfg;
    cfg.learning_rate = 1e-5;
    mg::adam_step(model.layers, grads, state, cfg);
    if (mg::mean_loss(model, one, map) < before) ++decreased;
  }
  EXPECT_GE(decreased, 95);
}

TEST(TrainConfig, Validation) {
  mg::TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.learning_rate, 1e-4);
  EXPECT_EQ(cfg.beta1, 0.9);
  EXPECT_EQ(cfg.beta2, 0.999);
  EXPECT_EQ(cfg.epochs, 30);
  cfg.beta1 = 1.0;
  EXPECT_THROW(cfg.validate(), mg::InvalidConfig);
  cfg = {};
  cfg.epochs = 0;
  EXPECT_THROW(cfg.validate(), mg::InvalidConfig);
  cfg = {};
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), mg::InvalidConfig);
}

TEST(Train, ZeroLearningRateKeepsInitialModel) {
  const auto data = synthetic(50, 4, 1);
  mg::TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.epochs = 1;
  auto head = small_head();
  const auto result = mg::train(data, nullptr, head, cfg);
  head.input_dim = 4;
  EXPECT_EQ(result.model, mg::init_head(head));
}

TEST(Train, EpochLossCoversEverySample) {
  // 10 samples in batches of 4: the last batch holds 2. With lr = 0 the
  // epoch loss must equal the mean over all 10.
  const auto data = synthetic(10, 3, 2);
  mg::TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  auto head = small_head();
  const auto result = mg::train(data, &data, head, cfg);
  const double expected = mg::mean_loss(result.model, data, cfg.affine);
  ASSERT_EQ(result.trace.epochs.size(), 2u);
  for (const auto& r : result.trace.epochs) {
    EXPECT_NEAR(r.train_loss, expected, 1e-12);
    ASSERT_TRUE(r.val_loss.has_value());
    EXPECT_EQ(*r.val_loss, expected);
  }
}

TEST(Train, LossDecreasesOnSyntheticData) {
  const auto data = synthetic(1000, 8, 3);
  mg::TrainConfig cfg;  // defaults
  mg::HeadConfig head;
  head.seed = 4;
  const auto result = mg::train(data, nullptr, head, cfg);
  ASSERT_EQ(result.trace.epochs.size(), 30u);
  EXPECT_LT(result.trace.epochs.back().train_loss, result.trace.epochs.front().train_loss);
}

TEST(Train, Deterministic) {
  const auto data = synthetic(200, 5, 4);
  mg::TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 9;
  auto head = small_head();
  head.dropout_rate = 0.3;
  const auto a = mg::train(data, &data, head, cfg);
  const auto b = mg::train(data, &data, head, cfg);
  EXPECT_EQ(a.model, b.model);
  EXPECT_TRUE(a.trace.same_losses(b.trace));
  cfg.seed = 10;
  const auto c = mg::train(data, &data, head, cfg);
  EXPECT_FALSE(a.trace.same_losses(c.trace));
}

TEST(Train, ConvexSubproblemIsMonotone) {
  // Single linear layer, mse, full batch: the loss is a convex quadratic.
  const auto data = synthetic(400, 6, 5);
  mg::HeadModel model;
  model.config.input_dim = 6;
  model.config.hidden_dims = {};
  model.config.variant = mg::Variant::mse;
  model.layers = {{MatrixXd::Zero(5, 6), VectorXd::Zero(5)}};
  mg::TrainConfig cfg;
  cfg.variant = mg::Variant::mse;
  cfg.batch_size = 400;
  cfg.epochs = 60;
  cfg.learning_rate = 1e-3;
  const auto result = mg::train_from(model, data, nullptr, cfg);
  for (std::size_t e = 5; e + 1 < result.trace.epochs.size(); ++e) {
    EXPECT_LE(result.trace.epochs[e + 1].train_loss, result.trace.epochs[e].train_loss + 1e-6) << "epoch " << e + 1;
  }
}

TEST(Train, NanAbortNamesEpochAndBatch) {
  auto data = synthetic(20, 3, 6);
  mg::TrainConfig cfg;
  cfg.batch_size = 20;
  cfg.epochs = 2;
  data[7].labels(2) = std::numeric_limits<double>::quiet_NaN();
  try {
    mg::train(data, nullptr, small_head(), cfg);
    FAIL() << "expected NumericFailure";
  } catch (const mg::NumericFailure& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 1, batch 0"), std::string::npos) << e.what();
  }
}

TEST(Train, RejectsMismatchedInputs) {
  const auto data = synthetic(20, 3, 7);
  EXPECT_THROW(mg::train({}, nullptr, small_head(), mg::TrainConfig{}), mg::InvalidInput);
  const auto other = synthetic(5, 4, 7);
  EXPECT_THROW(mg::train(data, &other, small_head(), mg::TrainConfig{}), mg::SchemaError);
}

TEST(WriteTrace, Format) {
  mg::TrainTrace trace;
  trace.epochs.push_back({1, 1.5, std::nullopt, 0.25});
  trace.epochs.push_back({2, 0.75, 0.5, 0.125});
  std::ostringstream out;
  mg::write_trace(out, trace);
  EXPECT_EQ(out.str(), "epoch train_loss val_loss seconds\n1 1.5 - 0.250\n2 0.75 0.5 0.125\n");
}

TEST(TrainTrace, SameLossesIgnoresWallTime) {
  mg::TrainTrace a, b;
  a.epochs.push_back({1, 1.0, 2.0, 0.1});
  b.epochs.push_back({1, 1.0, 2.0, 9.0});
  EXPECT_TRUE(a.same_losses(b));
  b.epochs[0].val_loss.reset();
  EXPECT_FALSE(a.same_losses(b));
}
