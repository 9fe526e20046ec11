#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <gtest/gtest.h>

#include "ids/data.hpp"
#include "ids/errors.hpp"
#include "ids/grad_check.hpp"
#include "ids/trainer.hpp"
#include "support.hpp"

using namespace ids;
using ids::testing::random_tensor;

namespace {

ModelConfig small_config(std::size_t steps, std::size_t classes) {
  ModelConfig c;
  c.time_steps = steps;
  c.conv_filters = 8;
  c.gru_units = 6;
  c.num_heads = 2;
  c.key_dim = 4;
  c.dense_units = {16, 8};
  c.num_classes = classes;
  c.dropout_rate = 0.2;
  return c;
}

LabeledTensor labeled(const Dataset& d, const Standardizer& st) { return {reshape_for_model(d, st), d.labels}; }

struct SmallTask {
  LabeledTensor train, validation;
};

SmallTask small_task() {
  SynthOptions o;
  o.classes = 3;
  o.features = 12;
  o.per_class = 60;
  o.seed = 5;
  const Dataset d = synth_dataset(o);
  const SplitPair s = train_test_split(d, 0.8, 1);
  const Standardizer st = Standardizer::fit(s.train);
  return {labeled(s.train, st), labeled(s.test, st)};
}

}  // namespace

TEST(CrossEntropy, UniformOverSixClassesIsLn6) {
  Tape tape(false);
  const Var loss = cross_entropy_loss(tape, Var(Tensor({2, 6}, Real(1.0 / 6))), std::vector<int>{0, 5});
  EXPECT_NEAR(loss.value()[0], 1.79176, 5e-6);
  EXPECT_NEAR(loss.value()[0], std::log(6.0), 1e-12);
}

TEST(CrossEntropy, OneHotCorrectIsZeroAndFloorKeepsItFinite) {
  Tape tape(false);
  const Tensor onehot = Tensor::matrix(2, 3, {1, 0, 0, 0, 0, 1});
  EXPECT_NEAR(cross_entropy_loss(tape, Var(onehot), std::vector<int>{0, 2}).value()[0], 0.0, 1e-12);
  const Real wrong = cross_entropy_loss(tape, Var(onehot), std::vector<int>{1, 1}).value()[0];
  EXPECT_TRUE(std::isfinite(wrong));
  EXPECT_NEAR(wrong, -std::log(1e-12), 1e-9);
}

TEST(CrossEntropy, LabelOutOfRangeIsContractError) {
  Tape tape(false);
  EXPECT_THROW(cross_entropy_loss(tape, Var(Tensor({1, 3}, Real(1.0 / 3))), std::vector<int>{3}), ContractError);
  EXPECT_THROW(cross_entropy_loss(tape, Var(Tensor({1, 3}, Real(1.0 / 3))), std::vector<int>{-1}), ContractError);
}

TEST(CrossEntropy, LogitGradientIsProbsMinusOneHot) {
  Rng rng(1);
  const std::vector<int> y{2, 0, 1};
  Var logits(random_tensor({3, 4}, rng, -2, 2), true);
  Tape tape;
  const Var probs = softmax(tape, logits, 1);
  tape.backward(cross_entropy_loss(tape, probs, y));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      const double expected = (probs.value().at(i, j) - (int(j) == y[i] ? 1.0 : 0.0)) / 3.0;
      EXPECT_NEAR(logits.grad().at(i, j), expected, 1e-12);
    }
  }
  const Real err = grad_check([&](Tape& t, const Var& x) { return cross_entropy_loss(t, softmax(t, x, 1), y); },
                              random_tensor({3, 4}, rng), 1e-6);
  EXPECT_LT(err, 1e-6);
}

TEST(Adam, ZeroGradientFromFreshStateLeavesParameters) {
  Var p(Tensor::vector({1, -2, 3}), true);
  std::vector<Var> params{p};
  AdamState s = make_adam_state(params);
  p.grad_slot();  // zero gradient present
  adam_step(params, s);
  EXPECT_EQ(p.value(), Tensor::vector({1, -2, 3}));
  EXPECT_EQ(s.t, 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Var p(Tensor::vector({0.5, 0.5}), true);
  std::vector<Var> params{p};
  AdamState s = make_adam_state(params);
  p.grad_slot() = Tensor::vector({1, -3});
  adam_step(params, s);
  // m_hat = g and v_hat = g^2 at t = 1, so the step is lr * sign(g) up to epsilon.
  EXPECT_NEAR(p.value()[0], 0.5 - 0.001, 1e-10);
  EXPECT_NEAR(p.value()[1], 0.5 + 0.001, 1e-10);
  for (const Tensor& v : s.v) {
    for (Real e : v.data()) EXPECT_GE(e, 0.0);
  }
}

TEST(Adam, IdenticalStatesGiveIdenticalResults) {
  auto run = [] {
    Var p(Tensor::vector({0.1, 0.2, 0.3}), true);
    std::vector<Var> params{p};
    AdamState s = make_adam_state(params);
    for (int i = 0; i < 5; ++i) {
      p.grad_slot() = Tensor::vector({0.3 * i, -0.1, 0.05 * i * i});
      adam_step(params, s);
    }
    return p.value();
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, StepDecreasesConvexQuadratic) {
  Rng rng(2);
  for (double lr : {1e-4, 1e-3, 1e-2}) {
    for (int trial = 0; trial < 10; ++trial) {
      Var p(random_tensor({5}, rng, -10, 10), true);
      std::vector<Var> params{p};
      AdamConfig cfg;
      cfg.lr = lr;
      AdamState s = make_adam_state(params, cfg);
      auto loss = [&] {
        double l = 0;
        for (Real v : p.value().data()) l += v * v;
        return l;
      };
      const double before = loss();
      Tape tape;
      tape.backward(sum(tape, mul(tape, p, p)));
      adam_step(params, s);
      EXPECT_LT(loss(), before);
    }
  }
}

TEST(Train, LearnsSmallTaskDeterministically) {
  const SmallTask task = small_task();
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.batch_size = 16;
  cfg.lr = 3e-3;
  cfg.seed = 9;
  Model a = build_model(small_config(12, 3), 3);
  Model b = build_model(small_config(12, 3), 3);
  const auto ra = train(a, task.train, task.validation, cfg);
  const auto rb = train(b, task.train, task.validation, cfg);
  ASSERT_EQ(ra.size(), 10u);
  for (std::size_t i = 0; i < ra.size(); ++i) {
    EXPECT_EQ(ra[i].train_loss, rb[i].train_loss);
    EXPECT_EQ(ra[i].val_accuracy, rb[i].val_accuracy);
    EXPECT_GE(ra[i].train_loss, 0.0);
    EXPECT_GE(ra[i].val_accuracy, 0.0);
    EXPECT_LE(ra[i].val_accuracy, 1.0);
  }
  const auto pa = a.named_parameters(), pb = b.named_parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i].var.value(), pb[i].var.value()) << pa[i].name;
  EXPECT_GT(ra.back().val_accuracy, 0.9);
  std::size_t non_increasing = 0;
  for (std::size_t i = 1; i < ra.size(); ++i) non_increasing += ra[i].train_loss <= ra[i - 1].train_loss;
  EXPECT_GE(double(non_increasing), 0.8 * double(ra.size() - 1));
}

TEST(Train, ValidationRunsInInferMode) {
  const SmallTask task = small_task();
  Model m = build_model(small_config(12, 3), 4);
  TrainConfig cfg;
  cfg.epochs = 1;
  const auto rec = train(m, task.train, task.validation, cfg);
  // Infer mode is deterministic, so re-evaluating reproduces the record.
  const Evaluation e = evaluate(m, task.validation);
  EXPECT_EQ(e.accuracy, rec.back().val_accuracy);
  EXPECT_NEAR(e.loss, rec.back().val_loss, 1e-12);
  EXPECT_EQ(evaluate(m, task.validation).probabilities, e.probabilities);
}

TEST(Train, RejectsMismatchedInputAndBadConfig) {
  const SmallTask task = small_task();
  Model m = build_model(small_config(10, 3), 1);
  EXPECT_THROW(train(m, task.train, task.validation, TrainConfig{}), DimensionError);
  Model ok = build_model(small_config(12, 3), 1);
  TrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_THROW(train(ok, task.train, task.validation, cfg), ConfigError);
}

TEST(Train, NonFiniteLossNamesEpochAndBatch) {
  const SmallTask task = small_task();
  Model m = build_model(small_config(12, 3), 1);
  LabeledTensor poisoned = task.train;
  poisoned.x[0] = std::numeric_limits<Real>::quiet_NaN();
  TrainConfig cfg;
  cfg.epochs = 1;
  try {
    train(m, poisoned, task.validation, cfg);
    FAIL();
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epoch 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("batch"), std::string::npos) << msg;
  }
}

TEST(Inference, PositiveFiniteAndAmortised) {
  const Model m = build_model(small_config(12, 3), 2);
  Rng rng(3);
  const Tensor one = random_tensor({1, 12, 1}, rng), many = random_tensor({64, 12, 1}, rng);
  const double t1 = measure_inference(m, one, 15);
  const double t64 = measure_inference(m, many, 15);
  EXPECT_GT(t1, 0.0);
  EXPECT_TRUE(std::isfinite(t64));
  EXPECT_LE(t64, t1);
  EXPECT_THROW(measure_inference(m, one, 9), ContractError);
}

TEST(EpochCsv, HeaderAndRows) {
  const std::string path = ::testing::TempDir() + "epochs_test.csv";
  const std::vector<EpochRecord> recs{{1, 0.5, 0.8, 0.4, 0.85, 1.5}, {2, 0.3, 0.9, 0.35, 0.9, 1.4}};
  write_epoch_csv(path, recs);
  std::ifstream in(path);
  std::string header, line;
  std::getline(in, header);
  EXPECT_EQ(header, "epoch,train_loss,train_acc,val_loss,val_acc,seconds");
  std::size_t n = 0;
  while (std::getline(in, line)) ++n;
  EXPECT_EQ(n, 2u);
}
