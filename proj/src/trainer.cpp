#include "l2lws/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "l2lws/errors.hpp"
#include "l2lws/weak_annotation.hpp"

namespace l2lws::train {

using model::SupervisionMode;

void Optimizer::step(std::span<const model::NamedParameter> params,
                     double grad_scale) {
  double scale = grad_scale;
  if (config_.clip_norm) {
    double sq = 0.0;
    for (const auto& p : params)
      for (double g : p.tensor.grad()) sq += (g * scale) * (g * scale);
    const double norm = std::sqrt(sq);
    if (norm > *config_.clip_norm && norm > 0.0) scale *= *config_.clip_norm / norm;
  }
  for (const auto& p : params) {
    ad::Tensor t = p.tensor;
    if (!t.has_grad()) continue;
    auto w = t.mutable_data();
    const auto g = t.grad();
    if (config_.kind == OptimizerKind::sgd) {
      const double lr = config_.lr * scale;
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
      continue;
    }
    auto& st = state_[t.node().get()];
    if (st.m.empty()) {
      st.m.assign(w.size(), 0.0);
      st.v.assign(w.size(), 0.0);
    }
    ++st.t;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.t));
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] * scale;
      st.m[i] = b1 * st.m[i] + (1.0 - b1) * gi;
      st.v[i] = b2 * st.v[i] + (1.0 - b2) * gi * gi;
      w[i] -= config_.lr * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + config_.eps);
    }
  }
}

void TrainPlan::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (!(optimizer.lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (ratio_full + ratio_weak == 0) throw ConfigError("ratio must not be 0:0");
}

double TrainPlan::full_probability() const {
  return static_cast<double>(ratio_full) /
         static_cast<double>(ratio_full + ratio_weak);
}

std::size_t TrainPlan::expected_full_steps() const {
  return static_cast<std::size_t>(
      std::llround(static_cast<double>(max_steps) * full_probability()));
}

USampler::USampler(std::size_t size, Rng rng) : order_(size), rng_(std::move(rng)) {
  if (size == 0) throw ConfigError("weak set is empty");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  reshuffle();
}

void USampler::reshuffle() {
  rng_.shuffle(std::span<std::size_t>(order_));
  cursor_ = 0;
}

std::vector<std::size_t> USampler::next(std::size_t batch_size) {
  if (cursor_ == order_.size()) {
    ++epoch_;
    reshuffle();
  }
  const std::size_t n = std::min(batch_size, order_.size() - cursor_);
  std::vector<std::size_t> out(order_.begin() + cursor_, order_.begin() + cursor_ + n);
  cursor_ += n;
  return out;
}

std::vector<std::size_t> VSampler::next(std::size_t batch_size) {
  if (size_ == 0) throw ConfigError("true-labelled set is empty");
  std::vector<std::size_t> out(batch_size);
  for (auto& i : out) i = static_cast<std::size_t>(rng_.uniform_int(size_));
  return out;
}

ModeSchedule::ModeSchedule(const TrainPlan& plan, Rng rng)
    : p_full_(plan.full_probability()),
      ratio_full_(plan.ratio_full),
      period_(plan.ratio_full + plan.ratio_weak),
      kind_(plan.schedule),
      rng_(std::move(rng)) {}

SupervisionMode ModeSchedule::next() {
  if (kind_ == Schedule::interleave) {
    const bool full = position_ < ratio_full_;
    position_ = (position_ + 1) % period_;
    return full ? SupervisionMode::full : SupervisionMode::weak;
  }
  return rng_.bernoulli(p_full_) ? SupervisionMode::full : SupervisionMode::weak;
}

namespace {

double grad_scale(const StepContext& ctx, std::size_t actual) {
  const std::size_t denom =
      ctx.plan.reduction == nn::Reduction::sum ? ctx.plan.batch_size : actual;
  return 1.0 / static_cast<double>(denom);
}

std::vector<const std::vector<std::size_t>*> token_views(const Batch& batch) {
  std::vector<const std::vector<std::size_t>*> out;
  out.reserve(batch.size());
  for (const auto* e : batch) out.push_back(&e->tokens);
  return out;
}

ad::Tensor weak_matrix(const Batch& batch, std::size_t k) {
  std::vector<double> w;
  w.reserve(batch.size() * k);
  for (const auto* e : batch) {
    if (!e->weak) throw ValidationError("instance in batch has no weak label");
    if (e->weak->size() != k) throw ValidationError("weak label width mismatch");
    w.insert(w.end(), e->weak->begin(), e->weak->end());
  }
  return ad::Tensor::matrix(batch.size(), k, std::move(w));
}

ad::Tensor one_hot_matrix(const Batch& batch, std::size_t k) {
  std::vector<double> y(batch.size() * k, 0.0);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& lbl = batch[i]->true_label;
    if (!lbl) throw ValidationError("instance in batch has no true label");
    if (*lbl >= k) throw ValidationError("true label out of range");
    y[i * k + *lbl] = 1.0;
  }
  return ad::Tensor::matrix(batch.size(), k, std::move(y));
}

void apply_update(model::DualModel& model, SupervisionMode mode, StepContext& ctx,
                  std::size_t actual) {
  const auto partition = model::parameter_partition(model, mode);
  ctx.optimizer.step(partition.trainable, grad_scale(ctx, actual));
  model.zero_grad();
}

void check_batch(const Batch& batch) {
  if (batch.empty()) throw ContractError("empty batch");
}

}  // namespace

StepRecord weak_step(model::DualModel& model, const Batch& batch,
                     StepContext& ctx, const ConfidenceSource& source) {
  check_batch(batch);
  const std::size_t b = batch.size(), k = model.config().num_classes;
  const auto targets = weak_matrix(batch, k);
  const auto tokens = token_views(batch);

  const auto repr = model::represent(model, tokens, nn::Mode::train, ctx.dropout_rng);
  const auto logits = model::predict_target(model, repr);

  std::vector<double> conf(b, source.value);
  if (source.kind == ConfidenceSource::Kind::joint) {
    ad::NoGradGuard no_grad;
    const auto c = model::predict_confidence(model, ad::stop_gradient(repr), targets);
    conf.assign(c.data().begin(), c.data().end());
  } else if (source.kind == ConfidenceSource::Kind::separate) {
    if (!source.network) throw ContractError("separate confidence source has no network");
    ad::NoGradGuard no_grad;
    Rng unused(0);
    const auto r = model::represent(*source.network, tokens, nn::Mode::eval, unused);
    const auto c = model::predict_confidence(*source.network, r, targets);
    conf.assign(c.data().begin(), c.data().end());
  }
  if (source.transform) {
    for (std::size_t i = 0; i < b; ++i) conf[i] = source.transform(i, conf[i]);
  }

  const auto weights = ad::Tensor::vector(conf);
  const auto loss = nn::softmax_cross_entropy(logits, targets, weights);
  ad::backward(loss);
  apply_update(model, SupervisionMode::weak, ctx, b);

  StepRecord rec;
  rec.mode = SupervisionMode::weak;
  rec.loss = loss.item() / static_cast<double>(b);
  rec.instances = b;
  rec.conf_mean = std::accumulate(conf.begin(), conf.end(), 0.0) / static_cast<double>(b);
  rec.conf_min = *std::min_element(conf.begin(), conf.end());
  rec.conf_max = *std::max_element(conf.begin(), conf.end());
  return rec;
}

StepRecord full_step(model::DualModel& model, const Batch& batch, StepContext& ctx) {
  check_batch(batch);
  const std::size_t b = batch.size(), k = model.config().num_classes;
  const auto weak = weak_matrix(batch, k);
  std::vector<double> target(b);
  for (std::size_t i = 0; i < b; ++i) {
    if (!batch[i]->true_label) throw ValidationError("instance in batch has no true label");
    target[i] = weak::confidence_target(*batch[i]->true_label, *batch[i]->weak).value;
  }
  const auto repr =
      model::represent(model, token_views(batch), nn::Mode::train, ctx.dropout_rng);
  const auto conf = model::predict_confidence(model, repr, weak);
  const auto loss = nn::binary_cross_entropy(conf, ad::Tensor::vector(std::move(target)));
  ad::backward(loss);
  apply_update(model, SupervisionMode::full, ctx, b);

  StepRecord rec;
  rec.mode = SupervisionMode::full;
  rec.loss = loss.item() / static_cast<double>(b);
  rec.instances = b;
  const auto c = conf.data();
  rec.conf_mean = std::accumulate(c.begin(), c.end(), 0.0) / static_cast<double>(b);
  rec.conf_min = *std::min_element(c.begin(), c.end());
  rec.conf_max = *std::max_element(c.begin(), c.end());
  return rec;
}

StepRecord supervised_step(model::DualModel& model, const Batch& batch,
                           StepContext& ctx) {
  check_batch(batch);
  const std::size_t b = batch.size(), k = model.config().num_classes;
  const auto targets = one_hot_matrix(batch, k);
  const auto repr =
      model::represent(model, token_views(batch), nn::Mode::train, ctx.dropout_rng);
  const auto loss = nn::softmax_cross_entropy(model::predict_target(model, repr), targets);
  ad::backward(loss);
  apply_update(model, SupervisionMode::weak, ctx, b);

  StepRecord rec;
  rec.mode = SupervisionMode::weak;
  rec.loss = loss.item() / static_cast<double>(b);
  rec.instances = b;
  return rec;
}

StepRecord generator_step(model::DualModel& model, const Batch& batch,
                          StepContext& ctx) {
  check_batch(batch);
  const std::size_t b = batch.size(), k = model.config().num_classes;
  const auto targets = one_hot_matrix(batch, k);
  const auto weak = weak_matrix(batch, k);
  const auto repr =
      model::represent(model, token_views(batch), nn::Mode::train, ctx.dropout_rng);
  const auto loss =
      nn::softmax_cross_entropy(model::predict_generator(model, repr, weak), targets);
  ad::backward(loss);
  apply_update(model, SupervisionMode::generator, ctx, b);

  StepRecord rec;
  rec.mode = SupervisionMode::generator;
  rec.loss = loss.item() / static_cast<double>(b);
  rec.instances = b;
  return rec;
}

Trainer::Trainer(model::DualModel& model, const data::EncodedSet* u,
                 const data::EncodedSet* v, TrainPlan plan, Evaluator evaluator)
    : model_(model),
      u_(u),
      v_(v),
      plan_(plan),
      evaluator_(std::move(evaluator)),
      optimizer_(plan.optimizer),
      dropout_rng_(make_stream(plan.seed, "dropout")),
      schedule_(plan, make_stream(plan.seed, "schedule")) {
  plan_.validate();
  if (u_ && !u_->empty()) u_sampler_.emplace(u_->size(), make_stream(plan.seed, "data/u"));
  if (v_ && !v_->empty()) v_sampler_.emplace(v_->size(), make_stream(plan.seed, "data/v"));
}

Batch Trainer::draw_u() {
  if (!u_sampler_) throw ConfigError("weak set is empty");
  Batch batch;
  for (auto i : u_sampler_->next(plan_.batch_size)) batch.push_back(&(*u_)[i]);
  return batch;
}

Batch Trainer::draw_v() {
  if (!v_sampler_) throw ConfigError("true-labelled set is empty");
  Batch batch;
  for (auto i : v_sampler_->next(plan_.batch_size)) batch.push_back(&(*v_)[i]);
  return batch;
}

void Trainer::after_step(const StepRecord& rec_in, const std::string& phase) {
  StepRecord rec = rec_in;
  rec.step = ++step_;
  // Auxiliary networks (confidence, label generator) report into loss_c.
  if (rec.mode != SupervisionMode::weak) {
    sum_loss_c_ += rec.loss;
    ++n_c_;
  } else {
    sum_loss_t_ += rec.loss;
    ++n_t_;
    if (!std::isnan(rec.conf_mean)) {
      sum_conf_ += rec.conf_mean;
      ++n_conf_;
    }
  }
  step_log_.push_back(rec);
  if (plan_.eval_every && step_ % plan_.eval_every == 0) flush(phase);
}

void Trainer::flush(const std::string& phase) {
  if (last_recorded_ && *last_recorded_ == step_) return;
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  MetricsRecord r;
  r.step = step_;
  r.phase = phase;
  r.loss_t = n_t_ ? sum_loss_t_ / static_cast<double>(n_t_) : nan;
  r.loss_c = n_c_ ? sum_loss_c_ / static_cast<double>(n_c_) : nan;
  r.mean_conf = n_conf_ ? sum_conf_ / static_cast<double>(n_conf_) : nan;
  r.weak_seen = weak_seen_;
  if (evaluator_) {
    const auto v = evaluator_(model_);
    r.val_loss = v.loss;
    r.val_macro_f1 = v.macro_f1;
  }
  records_.push_back(std::move(r));
  last_recorded_ = step_;
  sum_loss_t_ = sum_loss_c_ = sum_conf_ = 0.0;
  n_t_ = n_c_ = n_conf_ = 0;
}

void Trainer::run_joint(std::size_t steps, const ConfidenceSource& source,
                        const std::string& phase) {
  StepContext ctx{plan_, optimizer_, dropout_rng_};
  for (std::size_t s = 0; s < steps; ++s) {
    if (schedule_.next() == SupervisionMode::full) {
      after_step(full_step(model_, draw_v(), ctx), phase);
    } else {
      auto rec = weak_step(model_, draw_u(), ctx, source);
      weak_seen_ += rec.instances;
      after_step(rec, phase);
    }
  }
}

void Trainer::run_weak(std::size_t steps, const ConfidenceSource& source,
                       const std::string& phase) {
  StepContext ctx{plan_, optimizer_, dropout_rng_};
  for (std::size_t s = 0; s < steps; ++s) {
    auto rec = weak_step(model_, draw_u(), ctx, source);
    weak_seen_ += rec.instances;
    after_step(rec, phase);
  }
}

void Trainer::run_full(std::size_t steps, const std::string& phase) {
  StepContext ctx{plan_, optimizer_, dropout_rng_};
  for (std::size_t s = 0; s < steps; ++s) after_step(full_step(model_, draw_v(), ctx), phase);
}

void Trainer::run_supervised(std::size_t steps, const std::string& phase) {
  StepContext ctx{plan_, optimizer_, dropout_rng_};
  for (std::size_t s = 0; s < steps; ++s) {
    after_step(supervised_step(model_, draw_v(), ctx), phase);
  }
}

void Trainer::run_generator(std::size_t steps, const std::string& phase) {
  StepContext ctx{plan_, optimizer_, dropout_rng_};
  for (std::size_t s = 0; s < steps; ++s) {
    after_step(generator_step(model_, draw_v(), ctx), phase);
  }
}

std::vector<MetricsRecord> train(model::DualModel& model, const data::EncodedSet& u,
                                 const data::EncodedSet& v, const TrainPlan& plan,
                                 Evaluator evaluator, const ConfidenceSource& source) {
  plan.validate();
  if (u.empty() || v.empty()) throw ConfigError("train needs non-empty U and V");
  Trainer trainer(model, &u, &v, plan, std::move(evaluator));
  trainer.run_joint(plan.max_steps, source);
  trainer.flush("joint");
  return trainer.records();
}

}  // namespace l2lws::train
