#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "blgcn/config.hpp"
#include "blgcn/errors.hpp"
#include "blgcn/pipeline.hpp"
#include "blgcn/trainer.hpp"
#include "helpers.hpp"

namespace blgcn {
namespace {

TEST(ConfidenceInterval, ConstantSamples) {
  const std::vector<double> s(30, 0.9);
  const ConfidenceInterval ci = confidence_interval(s);
  EXPECT_EQ(ci.mean, 0.9);
  EXPECT_EQ(ci.standard_error, 0.0);
  EXPECT_EQ(ci.lower, 0.9);
  EXPECT_EQ(ci.upper, 0.9);
}

TEST(ConfidenceInterval, KnownMeanAndSpread) {
  // 15 values at 0.95 + d and 15 at 0.95 - d give sample std 0.01 when
  // d = 0.01 * sqrt(29/30).
  const double d = 0.01 * std::sqrt(29.0 / 30.0);
  std::vector<double> s;
  for (int i = 0; i < 15; ++i) s.insert(s.end(), {0.95 + d, 0.95 - d});
  const ConfidenceInterval ci = confidence_interval(s, 1.96);
  EXPECT_NEAR(ci.mean, 0.95, 1e-15);
  EXPECT_NEAR(ci.standard_error, 0.01 / std::sqrt(30.0), 1e-15);
  EXPECT_NEAR(ci.standard_error, 0.0018257, 1e-7);
  EXPECT_NEAR(ci.lower, 0.94642, 1e-5);
  EXPECT_NEAR(ci.upper, 0.95358, 1e-5);
  EXPECT_LE(ci.lower, ci.mean);
  EXPECT_LE(ci.mean, ci.upper);
}

TEST(ConfidenceInterval, ZeroZAndTooFewSamples) {
  const std::vector<double> s = {0.1, 0.5, 0.9};
  const ConfidenceInterval ci = confidence_interval(s, 0.0);
  EXPECT_EQ(ci.lower, ci.mean);
  EXPECT_EQ(ci.upper, ci.mean);
  const std::vector<double> one = {0.5};
  EXPECT_THROW(confidence_interval(one), ContractError);
  EXPECT_THROW(confidence_interval(std::vector<double>{}), ContractError);
}

TEST(ConfidenceInterval, BoundsBracketMeanOnRandomSamples) {
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> s(2 + rng.below(40));
    for (double& v : s) v = rng.uniform();
    const double z = rng.uniform(0, 3);
    const ConfidenceInterval ci = confidence_interval(s, z);
    EXPECT_NEAR(ci.upper - ci.mean, z * ci.standard_error, 1e-15);
    EXPECT_NEAR(ci.mean - ci.lower, z * ci.standard_error, 1e-15);
  }
}

TEST(PseudoLabel, Examples) {
  const Matrix p =
      Matrix::from_rows({{0.95, 0.05}, {0.85, 0.15}, {1.0, 0.0}, {0.02, 0.98}, {0.0, 1.0}});
  const std::vector<std::size_t> all = {0, 1, 2, 3, 4};
  const auto at90 = pseudo_label(p, all, 0.9);
  ASSERT_EQ(at90.size(), 4u);
  EXPECT_EQ(at90[0].node, 0u);
  EXPECT_EQ(at90[0].label, 1);
  EXPECT_EQ(at90[2].node, 3u);
  EXPECT_EQ(at90[2].label, 2);

  const auto certain = pseudo_label(p, all, 1.0);
  ASSERT_EQ(certain.size(), 2u);
  EXPECT_EQ(certain[0].node, 2u);
  EXPECT_EQ(certain[1].node, 4u);

  // Nodes outside the unlabeled set are never touched.
  const std::vector<std::size_t> some = {1, 3};
  const auto subset = pseudo_label(p, some, 0.9);
  ASSERT_EQ(subset.size(), 1u);
  EXPECT_EQ(subset[0].node, 3u);

  EXPECT_THROW(pseudo_label(p, all, 0.5), ContractError);
  EXPECT_THROW(pseudo_label(p, all, 1.1), ContractError);
}

// Synthetic gutter-layout graph, as used by the pipeline defaults.
struct Fixture {
  RunConfig config;
  Preprocessed prep;
};

Fixture synthetic(std::uint64_t seed = 1) {
  Fixture f;
  for (const char* kv : {"synth_noise=0", "superpixels=200", "rho_init=-7"})
    f.config.merge_assignment(kv);
  f.prep = preprocess(normalize(synth_dataset(f.config.synth())), f.config, seed);
  return f;
}

BlgcnModel model_for(const Fixture& f) {
  BlgcnModel m(f.config.model(f.prep.graph.features.cols(), f.prep.graph.classes));
  m.set_graph(renormalize(f.prep.graph.adjacency));
  return m;
}

void check_stop_rule(const TrainHistory& h, const TrainConfig& c) {
  ASSERT_FALSE(h.epochs.empty());
  for (std::size_t i = 0; i < h.epochs.size(); ++i) {
    const EpochRecord& e = h.epochs[i];
    EXPECT_EQ(e.epoch, static_cast<int>(i));
    EXPECT_EQ(e.passed_t1, e.val_accuracy >= c.t1);
    EXPECT_EQ(e.ci.has_value(), c.dynamic_control && e.passed_t1);
    if (e.ci) EXPECT_EQ(e.passed_t2, e.ci->upper >= c.t2);
    else EXPECT_FALSE(e.passed_t2);
    const bool last = i + 1 == h.epochs.size();
    if (!last) EXPECT_FALSE(e.passed_t2) << "epoch " << i << " should have stopped";
  }
  const bool stopped = h.epochs.back().passed_t2;
  EXPECT_EQ(h.stop_reason, stopped ? StopReason::Dynamic : StopReason::Budget);
  EXPECT_EQ(h.stop_epoch, h.epochs.back().epoch);
  if (!stopped) EXPECT_EQ(static_cast<int>(h.epochs.size()), c.max_epochs);
}

TEST(Train, VacuousThresholdsStopAfterFirstEpoch) {
  Fixture f = synthetic();
  BlgcnModel m = model_for(f);
  TrainConfig c = f.config.train();
  c.t1 = 0.0;
  c.t2 = 0.0;
  const TrainHistory h = train(m, f.prep.graph, f.prep.split, c);
  ASSERT_EQ(h.epochs.size(), 1u);
  EXPECT_EQ(h.stop_reason, StopReason::Dynamic);
  EXPECT_EQ(h.stop_epoch, 0);
  ASSERT_TRUE(h.epochs[0].ci.has_value());
  check_stop_rule(h, c);
}

TEST(Train, UnreachableGateRunsFullBudget) {
  Fixture f = synthetic();
  BlgcnModel m = model_for(f);
  TrainConfig c = f.config.train();
  c.max_epochs = 25;
  c.t1 = 1.01;
  c.t2 = 1.01;
  const TrainHistory h = train(m, f.prep.graph, f.prep.split, c);
  EXPECT_EQ(h.epochs.size(), 25u);
  EXPECT_EQ(h.stop_reason, StopReason::Budget);
  EXPECT_STREQ(stop_reason_name(h.stop_reason), "budget");
  check_stop_rule(h, c);
}

TEST(Train, SyntheticDatasetStopsEarlyWithHighAccuracy) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Fixture f = synthetic(seed);
    f.config.set("seed", std::to_string(seed));
    BlgcnModel m = model_for(f);
    const TrainConfig c = f.config.train();
    const TrainHistory h = train(m, f.prep.graph, f.prep.split, c);
    check_stop_rule(h, c);
    EXPECT_EQ(h.stop_reason, StopReason::Dynamic) << "seed " << seed;
    EXPECT_LT(h.stop_epoch, 500) << "seed " << seed;
    const Evaluation ev = evaluate(m, f.prep.graph, f.prep.split, 30, 5);
    const auto test_nodes = f.prep.split.unlabeled_nodes();
    EXPECT_GE(accuracy(ev.predictions, f.prep.graph.labels, test_nodes), 0.99) << "seed " << seed;
  }
}

TEST(Train, DeterministicUnderSeed) {
  Fixture f = synthetic();
  TrainConfig c = f.config.train();
  c.max_epochs = 15;
  c.dynamic_control = false;
  BlgcnModel a = model_for(f), b = model_for(f);
  const TrainHistory ha = train(a, f.prep.graph, f.prep.split, c);
  c.workers = 3;
  const TrainHistory hb = train(b, f.prep.graph, f.prep.split, c);
  ASSERT_EQ(ha.epochs.size(), hb.epochs.size());
  for (std::size_t i = 0; i < ha.epochs.size(); ++i) {
    EXPECT_EQ(ha.epochs[i].loss, hb.epochs[i].loss);
    EXPECT_EQ(ha.epochs[i].val_accuracy, hb.epochs[i].val_accuracy);
  }
  EXPECT_EQ(serialize_checkpoint(a.to_checkpoint()), serialize_checkpoint(b.to_checkpoint()));
}

TEST(Train, LossTrendsDownward) {
  Fixture f = synthetic();
  f.config.set("rho_init", "-5");
  BlgcnModel m = model_for(f);
  TrainConfig c = f.config.train();
  c.max_epochs = 600;
  c.dynamic_control = false;
  const TrainHistory h = train(m, f.prep.graph, f.prep.split, c);
  auto window_median = [&](std::size_t start) {
    std::vector<double> w;
    for (std::size_t i = start; i < start + 200; ++i) w.push_back(h.epochs[i].loss);
    std::nth_element(w.begin(), w.begin() + 100, w.end());
    return w[100];
  };
  const double first = window_median(0), middle = window_median(200), last = window_median(400);
  EXPECT_LT(middle, first);
  EXPECT_LT(last, middle);
  EXPECT_GT(h.epochs.back().pseudo_labels, 0u);  // refreshed at epoch 500
}

TEST(Train, NonFiniteLossRestoresLastGoodParameters) {
  // An infinite learning rate from epoch 3 on wrecks the parameters; the
  // model must come back exactly as it was after epoch 2.
  Fixture f = synthetic();
  TrainConfig c = f.config.train();
  c.dynamic_control = false;
  c.max_epochs = 3;
  BlgcnModel reference = model_for(f);
  train(reference, f.prep.graph, f.prep.split, c);

  c.max_epochs = 10;
  c.schedule.milestones = {3};
  c.schedule.gamma = std::numeric_limits<double>::infinity();
  BlgcnModel m = model_for(f);
  try {
    train(m, f.prep.graph, f.prep.split, c);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 3"), std::string::npos) << e.what();
  }
  EXPECT_EQ(serialize_checkpoint(m.to_checkpoint()), serialize_checkpoint(reference.to_checkpoint()));
}

TEST(Train, ContractErrors) {
  Fixture f = synthetic();
  BlgcnModel m = model_for(f);
  TrainConfig c = f.config.train();
  SplitAssignment short_split = f.prep.split;
  short_split.flags.pop_back();
  EXPECT_THROW(train(m, f.prep.graph, short_split, c), ContractError);
  c.t1 = 0.99;
  c.t2 = 0.9;
  EXPECT_THROW(train(m, f.prep.graph, f.prep.split, c), ContractError);
}

TEST(Evaluate, MeanIsArithmeticMeanOfRuns) {
  Fixture f = synthetic();
  f.config.set("rho_init", "-3");
  BlgcnModel m = model_for(f);
  TrainConfig c = f.config.train();
  c.max_epochs = 20;
  c.dynamic_control = false;
  train(m, f.prep.graph, f.prep.split, c);
  const Evaluation ev = evaluate(m, f.prep.graph, f.prep.split, 30, 11);
  ASSERT_EQ(ev.run_accuracy.size(), 30u);
  double sum = 0.0;
  for (double a : ev.run_accuracy) sum += a;
  EXPECT_NEAR(ev.ci.mean, sum / 30.0, 1e-15);
  EXPECT_EQ(ev.predictions, argmax_classes(ev.mean_probs));

  const Evaluation other = evaluate(m, f.prep.graph, f.prep.split, 30, 11, 1.96, 1);
  EXPECT_EQ(other.predictions, ev.predictions);
  EXPECT_EQ(other.run_accuracy, ev.run_accuracy);
}

TEST(Evaluate, CollapsedPosteriorHasZeroWidth) {
  Fixture f = synthetic();
  BlgcnModel m = model_for(f);
  m.set_rho(-40.0);
  const Evaluation ev = evaluate(m, f.prep.graph, f.prep.split, 30, 1);
  EXPECT_EQ(ev.ci.upper - ev.ci.lower, 0.0);
}

TEST(History, CsvLayout) {
  TrainHistory h;
  EpochRecord a;
  a.epoch = 0;
  a.lr = 0.001;
  a.loss = 2.5;
  a.val_accuracy = 0.5;
  EpochRecord b = a;
  b.epoch = 1;
  b.ci = ConfidenceInterval{0.9, 0.01, 0.88, 0.92, 1.96};
  h.epochs = {a, b};
  std::ostringstream os;
  write_history_csv(os, h);
  EXPECT_EQ(os.str(),
            "epoch,lr,loss,val_acc,ci_a,ci_mu,ci_b\n"
            "0,0.001,2.5,0.5\n"
            "1,0.001,2.5,0.5,0.88,0.9,0.92\n");
}

}  // namespace
}  // namespace blgcn
