#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "odm/train.hpp"

using namespace odm;
using namespace odm::model;

namespace {

Architecture small() { return Architecture{5, 4, {8, 4}, {4, 8}}; }

std::vector<Matrix> wave_windows(std::size_t n) {
  std::vector<Matrix> out;
  for (std::size_t s = 0; s < n; ++s) {
    Matrix w(4, 5);
    for (Eigen::Index t = 0; t < 4; ++t)
      for (Eigen::Index f = 0; f < 5; ++f)
        w(t, f) = 0.5 + 0.4 * std::sin(0.3 * static_cast<double>(s + static_cast<std::size_t>(t)) + static_cast<double>(f));
    out.push_back(w);
  }
  return out;
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  auto p = glorot_init(small(), 1);
  const auto before = p;
  auto st = AdamState::zeros_like(p);
  adam_step(p, AutoencoderParams::zeros(p.arch), st, TrainConfig{});
  EXPECT_EQ(p.encoder[0].wx, before.encoder[0].wx);
  EXPECT_EQ(p.proj_b, before.proj_b);
  EXPECT_EQ(st.step, 1u);
}

TEST(Adam, FirstStepIsLearningRate) {
  Architecture a{1, 1, {1}, {1}};
  auto p = AutoencoderParams::zeros(a);
  auto g = AutoencoderParams::zeros(a);
  for_each_tensor(g, [](std::span<double> t) {
    for (double& v : t) v = 1.0;
  });
  auto st = AdamState::zeros_like(p);
  TrainConfig cfg;
  adam_step(p, g, st, cfg);
  // m_hat = 1, v_hat = 1, update = -lr * 1 / (1 + eps).
  for_each_tensor(std::as_const(p), [](std::span<const double> t) {
    for (double v : t) EXPECT_NEAR(v, -1e-3, 1e-5);
  });
}

TEST(Adam, Deterministic) {
  auto run = [] {
    auto p = glorot_init(small(), 3);
    auto g = glorot_init(small(), 4);
    auto st = AdamState::zeros_like(p);
    adam_step(p, g, st, TrainConfig{});
    adam_step(p, g, st, TrainConfig{});
    return p;
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.decoder[1].wh, b.decoder[1].wh);
}

TEST(TrainConfig, Invariants) {
  TrainConfig c;
  c.epochs = 0;
  EXPECT_THROW(c.validate(), InvalidConfig);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), InvalidConfig);
  c = {};
  c.learning_rate = 0;
  EXPECT_THROW(c.validate(), InvalidConfig);
}

TEST(Train, EmptyTrainingSet) {
  auto p = AutoencoderParams::zeros(small());
  auto st = AdamState::zeros_like(p);
  EXPECT_THROW(train(p, st, std::vector<Matrix>{}, TrainConfig{}, StartMode::Cold), EmptyTrainingSet);
}

TEST(Train, ConstantDatasetConverges) {
  auto p = AutoencoderParams::zeros(Architecture{});
  auto st = AdamState::zeros_like(p);
  // One interval worth of windows.
  const std::vector<Matrix> ws(1437, Matrix::Constant(4, 5, 0.5));
  TrainConfig cfg;
  cfg.seed = 5;
  const auto r = train(p, st, ws, cfg, StartMode::Cold);
  ASSERT_EQ(r.loss_history.size(), 50u);
  EXPECT_LT(r.loss_history.back(), 0.01 * r.loss_history.front());
}

TEST(Train, SeededRunsAreBitwiseIdentical) {
  const auto ws = wave_windows(100);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 77;
  auto run = [&] {
    auto p = AutoencoderParams::zeros(small());
    auto st = AdamState::zeros_like(p);
    auto r = train(p, st, ws, cfg, StartMode::Cold);
    return std::make_pair(r.loss_history, p.proj_w);
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Train, WarmStartContinuesFromState) {
  const auto ws = wave_windows(100);
  TrainConfig cfg;
  cfg.epochs = 10;
  auto p = AutoencoderParams::zeros(small());
  auto st = AdamState::zeros_like(p);
  const auto cold = train(p, st, ws, cfg, StartMode::Cold);
  const auto step = st.step;
  const auto warm = train(p, st, ws, cfg, StartMode::Warm);
  EXPECT_EQ(st.step, 2 * step);
  EXPECT_LT(warm.loss_history.front(), cold.loss_history.front());
}

TEST(Train, StopRequestCancels) {
  const auto ws = wave_windows(50);
  auto p = AutoencoderParams::zeros(small());
  auto st = AdamState::zeros_like(p);
  std::stop_source src;
  src.request_stop();
  const auto r = train(p, st, ws, TrainConfig{}, StartMode::Cold, src.get_token());
  EXPECT_TRUE(r.cancelled);
  EXPECT_TRUE(r.loss_history.empty());
}

TEST(Train, NonFiniteLossThrows) {
  auto p = glorot_init(small(), 1);
  auto st = AdamState::zeros_like(p);
  std::vector<Matrix> ws{Matrix::Constant(4, 5, 1e300)};
  EXPECT_THROW(train(p, st, ws, TrainConfig{}, StartMode::Warm), TrainingFailed);
}
