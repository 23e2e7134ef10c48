#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "l2lws/data.hpp"
#include "l2lws/model.hpp"
#include "l2lws/rng.hpp"

namespace l2lws::train {

enum class OptimizerKind { sgd, adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd;
  double lr = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Global-norm clip over the updated parameters; off when empty.
  std::optional<double> clip_norm;
};

class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config) : config_(config) {}

  // Updates each parameter from grad_scale * grad. SGD: p -= lr * g.
  // Adam keeps per-parameter moments and step counts.
  void step(std::span<const model::NamedParameter> params, double grad_scale);

  const OptimizerConfig& config() const { return config_; }

 private:
  struct AdamState {
    std::vector<double> m, v;
    std::uint64_t t = 0;
  };
  OptimizerConfig config_;
  std::unordered_map<const ad::Node*, AdamState> state_;
};

enum class Schedule { random, interleave };

struct TrainPlan {
  // Full-supervision to weak-supervision step ratio.
  std::size_t ratio_full = 1;
  std::size_t ratio_weak = 10;
  std::size_t batch_size = 64;
  OptimizerConfig optimizer;
  std::size_t max_steps = 1000;
  std::uint64_t seed = 0;
  // Evaluate every this many steps (0: only when a phase finishes).
  std::size_t eval_every = 0;
  Schedule schedule = Schedule::random;
  // sum: gradients of the summed loss divided by batch_size (the weighted
  // update rule). mean: divided by the actual batch length instead.
  nn::Reduction reduction = nn::Reduction::sum;

  void validate() const;
  double full_probability() const;
  std::size_t expected_full_steps() const;
};

// Without replacement; reshuffles at every epoch boundary. The batch that
// ends an epoch may be short.
class USampler {
 public:
  USampler(std::size_t size, Rng rng);
  std::vector<std::size_t> next(std::size_t batch_size);
  std::size_t epoch() const { return epoch_; }

 private:
  void reshuffle();
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
  Rng rng_;
};

// With replacement.
class VSampler {
 public:
  VSampler(std::size_t size, Rng rng) : size_(size), rng_(std::move(rng)) {}
  std::vector<std::size_t> next(std::size_t batch_size);

 private:
  std::size_t size_;
  Rng rng_;
};

class ModeSchedule {
 public:
  ModeSchedule(const TrainPlan& plan, Rng rng);
  model::SupervisionMode next();

 private:
  double p_full_;
  std::size_t ratio_full_, period_, position_ = 0;
  Schedule kind_;
  Rng rng_;
};

struct StepRecord {
  std::size_t step = 0;
  model::SupervisionMode mode = model::SupervisionMode::weak;
  double loss = 0.0;  // per instance
  double conf_mean = std::numeric_limits<double>::quiet_NaN();
  double conf_min = std::numeric_limits<double>::quiet_NaN();
  double conf_max = std::numeric_limits<double>::quiet_NaN();
  std::size_t instances = 0;
};

// Where c~ comes from in a weak step.
struct ConfidenceSource {
  enum class Kind { joint, constant, separate };
  Kind kind = Kind::joint;
  double value = 1.0;
  const model::DualModel* network = nullptr;
  // Applied to each score by batch position after it is computed.
  std::function<double(std::size_t position, double score)> transform;

  static ConfidenceSource joint() { return {}; }
  static ConfidenceSource constant(double c) { return {Kind::constant, c, nullptr, {}}; }
  // Scores from another (frozen) network in eval mode.
  static ConfidenceSource separate(const model::DualModel& net) {
    return {Kind::separate, 1.0, &net, {}};
  }
};

using Batch = std::vector<const data::EncodedInstance*>;

struct StepContext {
  const TrainPlan& plan;
  Optimizer& optimizer;
  Rng& dropout_rng;
};

// c~-weighted cross entropy on weak labels; updates shared + target head.
// c~ is a constant of the step: no gradient reaches its producer.
StepRecord weak_step(model::DualModel& model, const Batch& batch,
                     StepContext& ctx,
                     const ConfidenceSource& source = ConfidenceSource::joint());
// Binary cross entropy of c~ against confidence targets; updates shared +
// confidence head.
StepRecord full_step(model::DualModel& model, const Batch& batch,
                     StepContext& ctx);
// Unweighted cross entropy on true labels; updates shared + target head.
StepRecord supervised_step(model::DualModel& model, const Batch& batch,
                           StepContext& ctx);
// Cross entropy of the label-generator head on true labels; updates shared +
// generator head.
StepRecord generator_step(model::DualModel& model, const Batch& batch,
                          StepContext& ctx);

struct ValidationResult {
  double loss = std::numeric_limits<double>::quiet_NaN();
  double macro_f1 = std::numeric_limits<double>::quiet_NaN();
};
using Evaluator = std::function<ValidationResult(const model::DualModel&)>;

// One row of the metrics CSV.
struct MetricsRecord {
  std::size_t step = 0;
  std::string phase;
  double loss_t = std::numeric_limits<double>::quiet_NaN();
  double loss_c = std::numeric_limits<double>::quiet_NaN();
  double val_loss = std::numeric_limits<double>::quiet_NaN();
  double val_macro_f1 = std::numeric_limits<double>::quiet_NaN();
  double mean_conf = std::numeric_limits<double>::quiet_NaN();
  std::size_t weak_seen = 0;
};

// Drives the steps of one run. Sampling, dropout and mode schedule each use
// their own stream derived from plan.seed, so phases and methods that share a
// seed see the same U batch order.
class Trainer {
 public:
  Trainer(model::DualModel& model, const data::EncodedSet* u,
          const data::EncodedSet* v, TrainPlan plan, Evaluator evaluator = {});

  // Random (or interleaved) alternation between full and weak steps.
  void run_joint(std::size_t steps, const ConfidenceSource& source,
                 const std::string& phase = "joint");
  void run_weak(std::size_t steps, const ConfidenceSource& source,
                const std::string& phase = "weak");
  void run_full(std::size_t steps, const std::string& phase = "full");
  void run_supervised(std::size_t steps, const std::string& phase = "supervised");
  void run_generator(std::size_t steps, const std::string& phase = "generator");

  // Emits a record now unless the current step was already recorded.
  void flush(const std::string& phase);

  const std::vector<MetricsRecord>& records() const { return records_; }
  const std::vector<StepRecord>& steps() const { return step_log_; }
  std::size_t step() const { return step_; }
  std::size_t weak_seen() const { return weak_seen_; }
  const TrainPlan& plan() const { return plan_; }

 private:
  Batch draw_u();
  Batch draw_v();
  void after_step(const StepRecord& rec, const std::string& phase);

  model::DualModel& model_;
  const data::EncodedSet* u_;
  const data::EncodedSet* v_;
  TrainPlan plan_;
  Evaluator evaluator_;
  Optimizer optimizer_;
  Rng dropout_rng_;
  std::optional<USampler> u_sampler_;
  std::optional<VSampler> v_sampler_;
  ModeSchedule schedule_;

  std::size_t step_ = 0;
  std::size_t weak_seen_ = 0;
  std::optional<std::size_t> last_recorded_;
  std::vector<MetricsRecord> records_;
  std::vector<StepRecord> step_log_;
  // Window accumulators since the last record.
  double sum_loss_t_ = 0, sum_loss_c_ = 0, sum_conf_ = 0;
  std::size_t n_t_ = 0, n_c_ = 0, n_conf_ = 0;
};

// Joint training: alternates full and weak steps for plan.max_steps.
std::vector<MetricsRecord> train(model::DualModel& model,
                                 const data::EncodedSet& u,
                                 const data::EncodedSet& v,
                                 const TrainPlan& plan, Evaluator evaluator = {},
                                 const ConfidenceSource& source =
                                     ConfidenceSource::joint());

}  // namespace l2lws::train
