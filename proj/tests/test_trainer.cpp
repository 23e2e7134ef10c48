#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "fixtures.hpp"
#include "l2lws/errors.hpp"
#include "l2lws/trainer.hpp"

using namespace l2lws;
using l2lws::testing::sgd_plan;
using l2lws::testing::small_task;
using model::DualModel;
using train::ConfidenceSource;

namespace {

using Snapshot = std::vector<std::vector<double>>;

Snapshot snapshot(const std::vector<model::NamedParameter>& params) {
  Snapshot out;
  for (const auto& p : params) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

Snapshot snapshot(const DualModel& m) { return snapshot(m.parameters()); }
Snapshot snapshot(const DualModel& m, model::Part part) { return snapshot(m.parameters(part)); }

Snapshot difference(const Snapshot& after, const Snapshot& before) {
  Snapshot d = after;
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t k = 0; k < d[i].size(); ++k) d[i][k] -= before[i][k];
  return d;
}

double max_abs(const Snapshot& s) {
  double m = 0.0;
  for (const auto& t : s)
    for (double v : t) m = std::max(m, std::abs(v));
  return m;
}

DualModel fresh(const model::ModelConfig& arch, std::uint64_t seed = 2) {
  Rng rng(seed);
  return DualModel::create(arch, rng);
}

ConfidenceSource rigged(std::vector<double> scores) {
  auto s = ConfidenceSource::joint();
  s.transform = [scores = std::move(scores)](std::size_t i, double) { return scores.at(i); };
  return s;
}

train::Batch first(const data::EncodedSet& set, std::size_t n, std::size_t offset = 0) {
  train::Batch b;
  for (std::size_t i = 0; i < n; ++i) b.push_back(&set[offset + i]);
  return b;
}

struct Stepper {
  train::TrainPlan plan;
  train::Optimizer optimizer;
  Rng rng{0};
  train::StepContext ctx{plan, optimizer, rng};

  explicit Stepper(train::TrainPlan p) : plan(p), optimizer(p.optimizer) {}
};

}  // namespace

TEST(WeakStep, ZeroConfidenceLeavesEveryParameterUnchanged) {
  const auto task = small_task();
  auto m = fresh(task.arch);
  const auto before = snapshot(m);
  Stepper s(sgd_plan(1, 4));
  train::weak_step(m, first(task.u, 4), s.ctx, rigged({0, 0, 0, 0}));
  EXPECT_EQ(snapshot(m), before);
}

TEST(WeakStep, UnitConfidenceEqualsUnweightedStep) {
  const auto task = small_task();
  auto a = fresh(task.arch);
  auto b = a.clone();
  Stepper s(sgd_plan(1, 4));
  train::weak_step(a, first(task.u, 4), s.ctx, rigged({1, 1, 1, 1}));
  train::weak_step(b, first(task.u, 4), s.ctx, ConfidenceSource::constant(1.0));
  EXPECT_EQ(snapshot(a), snapshot(b));
}

TEST(WeakStep, DeltaIsConfidenceWeightedSumOfPerInstanceDeltas) {
  const auto task = small_task();
  const auto base = fresh(task.arch);
  const auto before = snapshot(base);
  const std::vector<double> scores{0.2, 0.9, 0.05, 0.6};
  const auto batch = first(task.u, 4, 10);
  Stepper s(sgd_plan(1, 4));

  auto joint = base.clone();
  train::weak_step(joint, batch, s.ctx, rigged(scores));
  const auto delta = difference(snapshot(joint), before);
  EXPECT_GT(max_abs(delta), 0.0);

  Snapshot expected = delta;
  for (auto& t : expected) std::fill(t.begin(), t.end(), 0.0);
  for (std::size_t i = 0; i < 4; ++i) {
    auto single = base.clone();
    train::weak_step(single, {batch[i]}, s.ctx, ConfidenceSource::constant(1.0));
    const auto d = difference(snapshot(single), before);
    for (std::size_t p = 0; p < d.size(); ++p)
      for (std::size_t k = 0; k < d[p].size(); ++k) expected[p][k] += scores[i] * d[p][k];
  }
  EXPECT_LT(max_abs(difference(delta, expected)), 1e-12);
}

TEST(WeakStep, ZeroWeightInstanceContributesNothing) {
  const auto task = small_task();
  const auto base = fresh(task.arch);
  Stepper s(sgd_plan(1, 8));
  auto with = base.clone();
  auto without = base.clone();
  train::weak_step(with, first(task.u, 3), s.ctx, rigged({0.7, 0.0, 0.4}));
  train::weak_step(without, {&task.u[0], &task.u[2]}, s.ctx, rigged({0.7, 0.4}));
  EXPECT_LT(max_abs(difference(snapshot(with), snapshot(without))), 1e-15);
}

TEST(WeakStep, SgdUpdateIsLearningRateOverBatchSizeTimesGradient) {
  const auto task = small_task();
  auto m = fresh(task.arch);
  const auto batch = first(task.u, 5);
  // Gradient of the summed loss, computed by hand from the graph.
  auto ref = m.clone();
  ref.zero_grad();
  Rng rng(0);
  std::vector<const std::vector<std::size_t>*> tokens;
  std::vector<double> weak;
  for (const auto* e : batch) {
    tokens.push_back(&e->tokens);
    weak.insert(weak.end(), e->weak->begin(), e->weak->end());
  }
  const auto repr = model::represent(ref, tokens, nn::Mode::train, rng);
  const auto logits = model::predict_target(ref, repr);
  ad::backward(nn::softmax_cross_entropy(logits, ad::Tensor::matrix(5, 3, weak)));
  const auto before = snapshot(m);

  auto plan = sgd_plan(1, 8);
  Stepper s(plan);
  train::weak_step(m, batch, s.ctx, ConfidenceSource::constant(1.0));
  const auto after = m.parameters();
  const auto grads = ref.parameters();
  for (std::size_t p = 0; p < after.size(); ++p) {
    const auto& g = grads[p].tensor;
    for (std::size_t k = 0; k < after[p].tensor.size(); ++k) {
      const double gk = g.has_grad() ? g.grad()[k] : 0.0;
      EXPECT_NEAR(after[p].tensor.at(k), before[p][k] - plan.optimizer.lr / 8.0 * gk, 1e-14);
    }
  }
}

TEST(WeakStep, ConfidenceHeadIsBitIdenticalAfterManySteps) {
  const auto task = small_task();
  auto m = fresh(task.arch);
  const auto conf = snapshot(m, model::Part::confidence_head);
  const auto shared = snapshot(m, model::Part::shared);
  Stepper s(sgd_plan(1, 8));
  for (std::size_t i = 0; i < 20; ++i)
    train::weak_step(m, first(task.u, 8, i * 8), s.ctx, ConfidenceSource::joint());
  EXPECT_EQ(snapshot(m, model::Part::confidence_head), conf);
  EXPECT_NE(snapshot(m, model::Part::shared), shared);
  for (const auto& p : m.parameters(model::Part::confidence_head))
    if (p.tensor.has_grad())
      for (double g : p.tensor.grad()) EXPECT_EQ(g, 0.0);
}

TEST(WeakStep, StatisticsStayInUnitInterval) {
  const auto task = small_task();
  auto m = fresh(task.arch);
  Stepper s(sgd_plan(1, 8));
  const auto rec = train::weak_step(m, first(task.u, 8), s.ctx, ConfidenceSource::joint());
  EXPECT_GT(rec.conf_min, 0.0);
  EXPECT_LE(rec.conf_min, rec.conf_mean);
  EXPECT_LE(rec.conf_mean, rec.conf_max);
  EXPECT_LT(rec.conf_max, 1.0);
  EXPECT_EQ(rec.instances, 8u);
}

TEST(WeakStep, MissingWeakLabelIsValidationError) {
  const auto task = small_task();
  auto m = fresh(task.arch);
  Stepper s(sgd_plan(1, 4));
  auto broken = task.u[0];
  broken.weak.reset();
  EXPECT_THROW(train::weak_step(m, {&broken}, s.ctx), ValidationError);
}

TEST(FullStep, TargetHeadIsBitIdentical) {
  const auto task = small_task();
  auto m = fresh(task.arch);
  const auto target = snapshot(m, model::Part::target_head);
  const auto conf = snapshot(m, model::Part::confidence_head);
  Stepper s(sgd_plan(1, 8));
  for (int i = 0; i < 10; ++i) train::full_step(m, first(task.v, 8), s.ctx);
  EXPECT_EQ(snapshot(m, model::Part::target_head), target);
  EXPECT_NE(snapshot(m, model::Part::confidence_head), conf);
}

TEST(FullStep, AgreeingLabelsHaveUnitTargets) {
  const auto task = small_task();
  auto m = fresh(task.arch);
  auto agreeing = first(task.v, 6);
  std::vector<data::EncodedInstance> copies;
  for (const auto* e : agreeing) {
    auto c = *e;
    c.weak = weak::one_hot(*c.true_label, 3).probs;
    copies.push_back(c);
  }
  train::Batch batch;
  for (const auto& c : copies) batch.push_back(&c);
  // With c = 1 the per-instance BCE reduces to -log c~.
  Rng rng(0);
  std::vector<const std::vector<std::size_t>*> tokens;
  std::vector<double> weak;
  for (const auto& c : copies) {
    tokens.push_back(&c.tokens);
    weak.insert(weak.end(), c.weak->begin(), c.weak->end());
  }
  const auto scores = model::predict_confidence(
      m, model::represent(m, tokens, nn::Mode::eval, rng), ad::Tensor::matrix(6, 3, weak));
  double expected = 0.0;
  for (double c : scores.data()) expected += -std::log(c) / 6.0;
  Stepper s(sgd_plan(1, 6));
  const auto rec = train::full_step(m, batch, s.ctx);
  EXPECT_NEAR(rec.loss, expected, 1e-12);
}

TEST(FullStep, OverfitsAFixedBatch) {
  const auto task = small_task();
  auto m = fresh(task.arch);
  auto plan = sgd_plan(1, 8);
  plan.optimizer.lr = 0.5;
  Stepper s(plan);
  const auto batch = first(task.v, 8);
  const double start = train::full_step(m, batch, s.ctx).loss;
  double last = start;
  for (int i = 0; i < 50; ++i) last = train::full_step(m, batch, s.ctx).loss;
  EXPECT_LT(last, start);
}

TEST(FullStep, MissingTrueLabelIsValidationError) {
  const auto task = small_task();
  auto m = fresh(task.arch);
  Stepper s(sgd_plan(1, 4));
  EXPECT_THROW(train::full_step(m, {&task.u[0]}, s.ctx), ValidationError);
}

TEST(Samplers, UEmitsEachInstanceOncePerEpoch) {
  train::USampler sampler(10, Rng(4));
  std::multiset<std::size_t> seen;
  std::vector<std::size_t> sizes;
  while (sampler.epoch() == 0) {
    const auto b = sampler.next(4);
    sizes.push_back(b.size());
    seen.insert(b.begin(), b.end());
    if (seen.size() == 10) break;
  }
  EXPECT_EQ(sizes, (std::vector<std::size_t>{4, 4, 2}));
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(seen.count(i), 1u);
  std::multiset<std::size_t> second;
  for (int i = 0; i < 3; ++i) {
    const auto b = sampler.next(4);
    second.insert(b.begin(), b.end());
  }
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(second.count(i), 1u);
  EXPECT_GE(sampler.epoch(), 1u);
}

TEST(Samplers, VDrawsWithReplacement) {
  train::VSampler sampler(3, Rng(4));
  const auto b = sampler.next(50);
  ASSERT_EQ(b.size(), 50u);
  std::set<std::size_t> distinct(b.begin(), b.end());
  EXPECT_EQ(distinct.size(), 3u);
  for (auto i : b) EXPECT_LT(i, 3u);
}

TEST(Schedule, FullFractionMatchesRatio) {
  train::TrainPlan plan;
  plan.ratio_full = 1;
  plan.ratio_weak = 10;
  train::ModeSchedule schedule(plan, Rng(123));
  std::size_t full = 0;
  const std::size_t draws = 100000;
  for (std::size_t i = 0; i < draws; ++i) full += schedule.next() == model::SupervisionMode::full;
  EXPECT_NEAR(static_cast<double>(full) / draws, 1.0 / 11.0, 0.01);
  EXPECT_NEAR(plan.full_probability(), 1.0 / 11.0, 1e-15);
}

TEST(Schedule, InterleaveIsPeriodic) {
  train::TrainPlan plan;
  plan.ratio_full = 1;
  plan.ratio_weak = 3;
  plan.schedule = train::Schedule::interleave;
  train::ModeSchedule schedule(plan, Rng(1));
  for (int cycle = 0; cycle < 5; ++cycle) {
    std::size_t full = 0;
    for (int i = 0; i < 4; ++i) full += schedule.next() == model::SupervisionMode::full;
    EXPECT_EQ(full, 1u);
  }
}

TEST(Plan, Validation) {
  auto plan = sgd_plan();
  plan.ratio_full = plan.ratio_weak = 0;
  EXPECT_THROW(plan.validate(), ConfigError);
  plan = sgd_plan();
  plan.batch_size = 0;
  EXPECT_THROW(plan.validate(), ConfigError);
  plan = sgd_plan();
  plan.optimizer.lr = 0.0;
  EXPECT_THROW(plan.validate(), ConfigError);
}

TEST(Train, EmptySetsAreConfigErrors) {
  const auto task = small_task();
  auto m = fresh(task.arch);
  const data::EncodedSet empty;
  EXPECT_THROW(train::train(m, empty, task.v, sgd_plan()), ConfigError);
  EXPECT_THROW(train::train(m, task.u, empty, sgd_plan()), ConfigError);
}

TEST(Train, FullOnlyRatioTrainsConfidenceNetworkAlone) {
  const auto task = small_task();
  auto plan = sgd_plan(25);
  plan.ratio_full = 1;
  plan.ratio_weak = 0;
  auto joint = fresh(task.arch);
  auto alone = joint.clone();
  const auto target = snapshot(joint, model::Part::target_head);
  train::Trainer(joint, &task.u, &task.v, plan).run_joint(25, ConfidenceSource::joint());
  train::Trainer(alone, &task.u, &task.v, plan).run_full(25);
  EXPECT_EQ(snapshot(joint, model::Part::target_head), target);
  EXPECT_EQ(model::parameter_hash(joint), model::parameter_hash(alone));
}

TEST(Train, WeakOnlyWithSaturatedConfidenceMatchesUnweightedTrajectory) {
  const auto task = small_task();
  auto plan = sgd_plan(100);
  plan.ratio_full = 0;
  plan.ratio_weak = 1;
  auto joint = fresh(task.arch);
  // Final confidence layer emits a large constant, so c~ == 1 in double.
  auto& out = joint.confidence_head.layers.back();
  for (auto& w : out.weight.mutable_data()) w = 0.0;
  for (auto& b : out.bias.mutable_data()) b = 50.0;
  auto plain = joint.clone();
  train::Trainer(joint, &task.u, &task.v, plan).run_joint(100, ConfidenceSource::joint());
  train::Trainer(plain, &task.u, &task.v, plan).run_weak(100, ConfidenceSource::constant(1.0));
  const auto a = snapshot(joint), b = snapshot(plain);
  EXPECT_LE(max_abs(difference(a, b)), 1e-9);
}

TEST(Train, SameSeedGivesBitIdenticalModels) {
  const auto task = small_task();
  auto plan = sgd_plan(40);
  plan.ratio_full = 1;
  plan.ratio_weak = 3;
  auto run = [&] {
    auto m = fresh(task.arch, 9);
    train::train(m, task.u, task.v, plan);
    return model::parameter_hash(m);
  };
  EXPECT_EQ(run(), run());
  const auto h = run();
  plan.seed += 1;
  EXPECT_NE(run(), h);
}

TEST(Train, RecordsFollowEvalEvery) {
  const auto task = small_task();
  auto plan = sgd_plan(20);
  plan.eval_every = 5;
  auto m = fresh(task.arch);
  std::size_t calls = 0;
  auto evaluator = [&](const DualModel&) {
    ++calls;
    return train::ValidationResult{0.5, 0.25};
  };
  const auto records = train::train(m, task.u, task.v, plan, evaluator);
  ASSERT_EQ(records.size(), 4u);
  EXPECT_EQ(calls, 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(records[i].step, 5 * (i + 1));
    EXPECT_EQ(records[i].val_macro_f1, 0.25);
  }
  EXPECT_LE(records.back().weak_seen, 20u * plan.batch_size);
}

TEST(Optimizer, AdamFirstStepMovesByLearningRate) {
  auto p = ad::Tensor::vector({1.0, -2.0}, true);
  std::vector<model::NamedParameter> params{{"p", p}};
  ad::backward(ad::sum(p * ad::Tensor::vector({3.0, -0.5})));
  train::OptimizerConfig cfg;
  cfg.kind = train::OptimizerKind::adam;
  cfg.lr = 0.01;
  train::Optimizer opt(cfg);
  opt.step(params, 1.0);
  // Bias-corrected first Adam step is lr * g / (|g| + eps).
  EXPECT_NEAR(p.at(0), 1.0 - 0.01 * 3.0 / (3.0 + 1e-8), 1e-12);
  EXPECT_NEAR(p.at(1), -2.0 + 0.01 * 0.5 / (0.5 + 1e-8), 1e-12);
}

TEST(Optimizer, ClipNormBoundsTheUpdate) {
  auto p = ad::Tensor::vector({0.0, 0.0}, true);
  std::vector<model::NamedParameter> params{{"p", p}};
  ad::backward(ad::sum(p * ad::Tensor::vector({3.0, 4.0})));
  train::OptimizerConfig cfg;
  cfg.lr = 1.0;
  cfg.clip_norm = 1.0;
  train::Optimizer(cfg).step(params, 1.0);
  EXPECT_NEAR(p.at(0), -0.6, 1e-12);
  EXPECT_NEAR(p.at(1), -0.8, 1e-12);
}
