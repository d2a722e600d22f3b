#include "aroma/tensor.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "aroma/rng.hpp"
#include "testutil.hpp"

namespace aroma {
namespace {

Tensor random_param(int64_t rows, int64_t cols, Rng& rng, double scale = 1.0) {
  std::vector<double> values(rows * cols);
  for (double& v : values) v = rng.uniform(-scale, scale);
  return Tensor::param(std::move(values), rows, cols);
}

TEST(TensorOps, ForwardSemantics) {
  Tape tape;
  EXPECT_DOUBLE_EQ(tape.sigmoid(Tensor::scalar(0.0)).item(), 0.5);
  EXPECT_DOUBLE_EQ(tape.tanh_(Tensor::scalar(0.0)).item(), 0.0);
  EXPECT_DOUBLE_EQ(tape.relu(Tensor::scalar(-2.0)).item(), 0.0);

  // scatter_add with both rows targeting row 0
  Tensor x = Tensor::from({1.0, 2.0, 10.0, 20.0}, 2, 2);
  Tensor scattered = tape.scatter_add_rows(x, {0, 0}, 2);
  EXPECT_DOUBLE_EQ(scattered.at(0, 0), 11.0);
  EXPECT_DOUBLE_EQ(scattered.at(0, 1), 22.0);
  EXPECT_DOUBLE_EQ(scattered.at(1, 0), 0.0);

  // hand-multiplied 2x3 * 3x2
  Tensor a = Tensor::from({1, 2, 3, 4, 5, 6}, 2, 3);
  Tensor b = Tensor::from({7, 8, 9, 10, 11, 12}, 3, 2);
  Tensor c = tape.matmul(a, b);
  EXPECT_DOUBLE_EQ(c.at(0, 0), 58.0);
  EXPECT_DOUBLE_EQ(c.at(0, 1), 64.0);
  EXPECT_DOUBLE_EQ(c.at(1, 0), 139.0);
  EXPECT_DOUBLE_EQ(c.at(1, 1), 154.0);

  // transpose flags agree with explicit transposition
  Tensor ct = tape.matmul(b, a, true, true);
  for (int64_t i = 0; i < 2; ++i)
    for (int64_t j = 0; j < 2; ++j) EXPECT_DOUBLE_EQ(ct.at(i, j), c.at(j, i));

  Tensor row = Tensor::from({1.0, 2.0}, 1, 2);
  Tensor mat = Tensor::from({10, 20, 30, 40}, 2, 2);
  Tensor summed = tape.add(mat, row);
  EXPECT_DOUBLE_EQ(summed.at(1, 0), 31.0);
  EXPECT_DOUBLE_EQ(summed.at(1, 1), 42.0);

  Tensor sm = tape.softmax_rows(Tensor::from({0.0, 0.0, 1.0, 1.0}, 2, 2));
  EXPECT_DOUBLE_EQ(sm.at(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(sm.at(1, 1), 0.5);

  EXPECT_THROW(tape.matmul(a, a), ShapeMismatch);
  EXPECT_THROW(tape.add(a, Tensor::from({1, 2}, 2, 1)), ShapeMismatch);
  EXPECT_THROW(tape.gather_rows(a, {5}), ShapeMismatch);
}

TEST(TensorOps, NanPropagates) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  Tape tape;
  EXPECT_TRUE(std::isnan(tape.relu(Tensor::scalar(nan)).item()));
  EXPECT_TRUE(std::isnan(tape.sigmoid(Tensor::scalar(nan)).item()));
  EXPECT_TRUE(std::isnan(tape.tanh_(Tensor::scalar(nan)).item()));
  EXPECT_TRUE(std::isnan(
      tape.add(Tensor::scalar(nan), Tensor::scalar(1.0)).item()));
  EXPECT_TRUE(std::isnan(
      tape.mul(Tensor::scalar(nan), Tensor::scalar(0.0)).item()));
  EXPECT_TRUE(std::isnan(tape.sum_all(Tensor::from({1.0, nan}, 1, 2)).item()));
  Tensor logits = Tensor::from({nan}, 1, 1);
  Tensor targets = Tensor::from({1.0}, 1, 1);
  EXPECT_TRUE(std::isnan(tape.bce_with_logits(logits, targets).item()));
}

TEST(Backward, SquareGradient) {
  Tensor x = Tensor::param({3.0}, 1, 1);
  Tape tape;
  Tensor loss = tape.mul(x, x);
  tape.backward(loss);
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Backward, DisconnectedLeafGetsZero) {
  Tensor x = Tensor::param({3.0}, 1, 1);
  Tensor unused = Tensor::param({5.0}, 1, 1);
  Tape tape;
  tape.backward(tape.mul(x, x));
  EXPECT_DOUBLE_EQ(unused.grad()[0], 0.0);
}

TEST(Backward, ErrorsAndConsumption) {
  Tensor x = Tensor::param({1.0, 2.0}, 1, 2);
  Tape tape;
  Tensor y = tape.mul(x, x);
  EXPECT_THROW(tape.backward(y), TensorError);  // non-scalar
  Tensor loss = tape.sum_all(y);
  tape.backward(loss);
  EXPECT_THROW(tape.backward(loss), TensorError);  // consumed
  tape.clear();
  EXPECT_THROW(tape.backward(Tensor::from({1.0}, 1, 1)), TensorError);
}

TEST(Backward, FanOutAccumulates) {
  Tensor x = Tensor::param({2.0}, 1, 1);
  Tape tape;
  // loss = x*x + x*x = 2x^2, d/dx = 4x = 8
  Tensor loss = tape.add(tape.mul(x, x), tape.mul(x, x));
  tape.backward(loss);
  EXPECT_DOUBLE_EQ(x.grad()[0], 8.0);
}

// Central finite differences across the whole op set, random shapes/values.
TEST(GradCheck, AllOps) {
  Rng rng(0xC0FFEE);
  double worst = 0.0;
  for (int instance = 0; instance < 100; ++instance) {
    const int64_t n = 2 + static_cast<int64_t>(rng.below(4));
    const int64_t d = 2 + static_cast<int64_t>(rng.below(4));
    Tensor a = random_param(n, d, rng);
    Tensor b = random_param(n, d, rng);
    Tensor w = random_param(d, d + 1, rng);
    Tensor bias = random_param(1, d + 1, rng);
    Tensor scalar = random_param(1, 1, rng);
    Tensor mats = random_param(n, d * d, rng);

    std::vector<int32_t> gather_idx, scatter_idx;
    for (int64_t i = 0; i < n + 1; ++i)
      gather_idx.push_back(static_cast<int32_t>(rng.below(n)));
    for (int64_t i = 0; i < n; ++i)
      scatter_idx.push_back(static_cast<int32_t>(rng.below(n + 2)));

    std::vector<double> targets(n * (d + 1));
    for (double& t : targets) t = rng.below(2);
    std::vector<double> weights(d + 1);
    for (double& t : weights) t = 0.5 + rng.uniform01();

    auto forward = [&]() {
      Tape tape;
      Tensor h = tape.add(tape.matmul(a, w), bias);      // matmul + add
      h = tape.mul(h, scalar);                           // scalar broadcast
      h = tape.relu(h);
      Tensor g = tape.tanh_(tape.matmul(b, w, false, false));
      Tensor cat = tape.concat(h, g, 1);                 // concat cols
      Tensor cut = tape.slice(cat, 1, 1, d);             // slice cols
      Tensor gathered = tape.gather_rows(cut, gather_idx);
      Tensor rows = tape.slice(gathered, 0, 0, n);
      Tensor scattered = tape.scatter_add_rows(rows, scatter_idx, n + 2);
      Tensor sm = tape.softmax_rows(scattered);
      Tensor pooled = tape.concat(tape.mean_rows(sm), tape.sum_rows(sm), 1);
      Tensor wide = tape.broadcast(pooled, 3, pooled.cols());
      Tensor shaped = tape.reshape(wide, pooled.cols(), 3);
      Tensor sig = tape.sigmoid(shaped);
      Tensor ev = tape.edge_matvec(mats, a);
      Tensor logits = tape.add(tape.matmul(ev, w), bias);
      Tensor target =
          Tensor::from(targets, n, d + 1);
      Tensor bce = tape.bce_with_logits(logits, target, weights);
      Tensor loss = tape.add(tape.sum_all(sig), bce);
      return std::pair<Tape, Tensor>(std::move(tape), loss);
    };

    std::vector<Tensor> params = {a, b, w, bias, scalar, mats};
    for (Tensor& p : params) p.zero_grad();
    {
      auto [tape, loss] = forward();
      tape.backward(loss);
    }
    auto value = [&]() { return forward().second.item(); };
    worst = std::max(worst, test::max_grad_rel_error(value, params));
  }
  EXPECT_LT(worst, 1e-4);
}

// Adjointness by composition: gather after scatter_add and its reverse both
// reduce to exact permutation/accumulation identities on the gradient.
TEST(GradCheck, ScatterGatherAdjoint) {
  Rng rng(2024);
  Tensor x = random_param(4, 3, rng);
  std::vector<int32_t> idx = {2, 0, 0, 3};
  for (Tensor* p : {&x}) p->zero_grad();
  Tape tape;
  Tensor loss =
      tape.sum_all(tape.gather_rows(tape.scatter_add_rows(x, idx, 5), idx));
  tape.backward(loss);
  std::vector<Tensor> params = {x};
  auto value = [&]() {
    Tape t2;
    return t2.sum_all(t2.gather_rows(t2.scatter_add_rows(x, idx, 5), idx))
        .item();
  };
  EXPECT_LT(test::max_grad_rel_error(value, params), 1e-6);
  // Row 0 of x lands on output row 2, which is gathered once: grad 1.
  // Rows 1 and 2 both land on row 0, gathered twice: grad 2 each.
  EXPECT_DOUBLE_EQ(x.grad()[0], 1.0);
  EXPECT_DOUBLE_EQ(x.grad()[3], 2.0);
  EXPECT_DOUBLE_EQ(x.grad()[6], 2.0);
}

TEST(NumericalStability, BceAtExtremeLogits) {
  Tape tape;
  for (double z : {-50.0, -10.0, 0.0, 10.0, 50.0}) {
    Tensor logits = Tensor::scalar(z);
    for (double y : {0.0, 1.0}) {
      Tensor target = Tensor::scalar(y);
      const double loss = tape.bce_with_logits(logits, target).item();
      EXPECT_TRUE(std::isfinite(loss)) << z << " " << y;
      EXPECT_GE(loss, 0.0);
    }
  }
  // p = 0.5 -> loss = ln 2 per element
  Tensor logits = Tensor::zeros(3, 4);
  Tensor targets = Tensor::zeros(3, 4);
  EXPECT_NEAR(tape.bce_with_logits(logits, targets).item(),
              12.0 * std::log(2.0), 1e-12);
}

TEST(Adam, ZeroGradientKeepsParameters) {
  Tensor p = Tensor::param({1.0, -2.0}, 1, 2);
  std::vector<Tensor> params = {p};
  AdamState state;
  AdamConfig cfg;
  adam_step(params, state, cfg);  // grads are zero
  EXPECT_DOUBLE_EQ(p.data()[0], 1.0);
  EXPECT_DOUBLE_EQ(p.data()[1], -2.0);
}

TEST(Adam, FirstStepMovesByLr) {
  Tensor p = Tensor::param({0.0}, 1, 1);
  p.grad()[0] = 1.0;
  std::vector<Tensor> params = {p};
  AdamState state;
  AdamConfig cfg;
  cfg.lr = 0.01;
  adam_step(params, state, cfg);
  // bias-corrected m-hat = v-hat = 1, so the step is lr / (1 + eps)
  EXPECT_NEAR(p.data()[0], -0.01, 1e-9);
}

TEST(Adam, DeterministicTrajectory) {
  auto run = [] {
    Tensor p = Tensor::param({0.5, -0.25}, 1, 2);
    std::vector<Tensor> params = {p};
    AdamState state;
    AdamConfig cfg;
    cfg.lr = 0.05;
    cfg.weight_decay = 1e-2;
    for (int step = 0; step < 25; ++step) {
      p.zero_grad();
      Tape tape;
      Tensor loss = tape.sum_all(tape.mul(p, p));
      tape.backward(loss);
      adam_step(params, state, cfg);
    }
    return p.data();
  };
  EXPECT_EQ(run(), run());  // bitwise
}

TEST(Adam, WeightDecayActsAsL2) {
  Tensor p = Tensor::param({1.0}, 1, 1);
  std::vector<Tensor> params = {p};
  AdamState state;
  AdamConfig cfg;
  cfg.weight_decay = 0.1;
  adam_step(params, state, cfg);  // zero grad + decay pulls toward zero
  EXPECT_LT(p.data()[0], 1.0);
}

TEST(LrSchedule, ExponentialSteps) {
  ScheduleConfig cfg;
  cfg.kind = ScheduleConfig::Kind::ExponentialSteps;
  cfg.lr0 = 1e-3;
  cfg.rate = 0.5;
  cfg.decay_steps = 42 * 20;
  EXPECT_DOUBLE_EQ(lr_at(cfg, 0), 1e-3);
  EXPECT_DOUBLE_EQ(lr_at(cfg, 840), 5e-4);
  EXPECT_DOUBLE_EQ(lr_at(cfg, 1680), 2.5e-4);
  EXPECT_NEAR(lr_at(cfg, 420), 1e-3 * std::pow(0.5, 0.5), 1e-15);
}

TEST(LrSchedule, FractionalSpan) {
  ScheduleConfig cfg;
  cfg.kind = ScheduleConfig::Kind::FractionalSpan;
  cfg.lr0 = 2.1e-5;
  cfg.decay = 0.08;
  cfg.total_epochs = 100;
  EXPECT_DOUBLE_EQ(lr_at(cfg, 0), 2.1e-5);
  EXPECT_NEAR(lr_at(cfg, 90), 0.08 * 2.1e-5, 1e-12);
  EXPECT_NEAR(lr_at(cfg, 100), 0.08 * 2.1e-5, 1e-12);  // flat past 90%
  EXPECT_GT(lr_at(cfg, 45), lr_at(cfg, 90));
}

TEST(Checkpoint, RoundTripWithManifest) {
  NamedTensors tensors;
  Rng rng(512);
  tensors.emplace_back("layer.w", random_param(3, 4, rng));
  tensors.emplace_back("layer.b", random_param(1, 4, rng));
  const std::string path =
      (std::filesystem::temp_directory_path() / "aroma_ckpt.bin").string();
  save_checkpoint(path, tensors);

  const NamedTensors loaded = load_checkpoint(path);
  ASSERT_EQ(loaded.size(), tensors.size());
  for (size_t i = 0; i < tensors.size(); ++i) {
    EXPECT_EQ(loaded[i].first, tensors[i].first);
    EXPECT_EQ(loaded[i].second.data(), tensors[i].second.data());  // bitwise
  }
  std::ifstream manifest(path + ".json");
  ASSERT_TRUE(manifest.good());
  nlohmann::json j;
  manifest >> j;
  EXPECT_EQ(j.size(), 2u);
  EXPECT_EQ(j[0]["name"], "layer.w");
  EXPECT_EQ(j[0]["shape"], nlohmann::json({3, 4}));
  std::filesystem::remove(path);
  std::filesystem::remove(path + ".json");
}

}  // namespace
}  // namespace aroma
