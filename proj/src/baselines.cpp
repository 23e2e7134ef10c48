#include "l2lws/baselines.hpp"

#include <algorithm>
#include <cctype>

#include "l2lws/errors.hpp"

namespace l2lws::baselines {

namespace {

const std::vector<std::pair<Method, std::string_view>>& names() {
  static const std::vector<std::pair<Method, std::string_view>> n{
      {Method::WA, "WA"},       {Method::WSO, "WSO"},           {Method::FSO, "FSO"},
      {Method::WS_FT, "WS_FT"}, {Method::NLI, "NLI"},           {Method::L2LWS_ST, "L2LWS_ST"},
      {Method::L2LWS, "L2LWS"}};
  return n;
}

train::ConfidenceSource with_transform(train::ConfidenceSource src, const Setup& setup) {
  src.transform = setup.confidence_transform;
  return src;
}

std::size_t finetune_budget(const Setup& setup) {
  return setup.finetune_steps.value_or(setup.plan.expected_full_steps());
}

}  // namespace

std::string_view method_name(Method m) {
  for (const auto& [method, name] : names())
    if (method == m) return name;
  return "?";
}

Method parse_method(std::string_view name) {
  std::string upper(name);
  for (auto& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (upper == "WS+FT") upper = "WS_FT";
  for (const auto& [method, n] : names())
    if (n == upper) return method;
  throw ConfigError("unknown method '" + std::string(name) + "'");
}

const std::vector<Method>& all_methods() {
  static const std::vector<Method> methods = [] {
    std::vector<Method> m;
    for (const auto& [method, name] : names()) m.push_back(method);
    return m;
  }();
  return methods;
}

model::DualModel initial_model(const model::ModelConfig& arch, std::uint64_t seed) {
  Rng init = make_stream(seed, "init");
  return model::DualModel::create(arch, init);
}

model::DualModel initial_model(const Setup& setup) {
  auto m = initial_model(setup.architecture, setup.plan.seed);
  if (setup.on_init) setup.on_init(m);
  return m;
}

RunResult run_wso(const data::EncodedSet& u, const Setup& setup) {
  RunResult r{initial_model(setup), {}, {}, 0};
  train::Trainer t(r.model, &u, nullptr, setup.plan, setup.evaluator);
  t.run_weak(setup.plan.max_steps, train::ConfidenceSource::constant(1.0), "weak");
  t.flush("weak");
  r.records = t.records();
  r.steps = t.step();
  return r;
}

RunResult run_fso(const data::EncodedSet& v, const Setup& setup) {
  RunResult r{initial_model(setup), {}, {}, 0};
  train::Trainer t(r.model, nullptr, &v, setup.plan, setup.evaluator);
  t.run_supervised(setup.plan.max_steps, "supervised");
  t.flush("supervised");
  r.records = t.records();
  r.steps = t.step();
  return r;
}

RunResult run_ws_ft(const data::EncodedSet& u, const data::EncodedSet& v,
                    const Setup& setup) {
  RunResult r{initial_model(setup), {}, {}, 0};
  train::Trainer t(r.model, &u, &v, setup.plan, setup.evaluator);
  t.run_weak(setup.plan.max_steps, train::ConfidenceSource::constant(1.0), "weak");
  t.flush("weak");
  t.run_supervised(finetune_budget(setup), "finetune");
  t.flush("finetune");
  r.records = t.records();
  r.steps = t.step();
  return r;
}

RunResult run_nli(const data::EncodedSet& u, const data::EncodedSet& v,
                  const Setup& setup) {
  auto arch = setup.architecture;
  arch.label_generator = true;
  RunResult r{initial_model(arch, setup.plan.seed), {}, {}, 0};
  if (setup.on_init) setup.on_init(r.model);
  train::Trainer t(r.model, &u, &v, setup.plan, setup.evaluator);
  t.run_generator(setup.plan.expected_full_steps(), "generator");
  t.flush("generator");

  // New labels for every U instance from the trained generator.
  data::EncodedSet relabelled = u;
  {
    ad::NoGradGuard no_grad;
    Rng unused(0);
    const std::size_t k = arch.num_classes;
    for (auto& inst : relabelled) {
      if (!inst.weak) throw ValidationError("weak set instance has no weak label");
      const auto repr = model::represent(r.model, inst.tokens, nn::Mode::eval, unused);
      const auto logits = model::predict_generator(
          r.model, ad::reshape(repr, {1, repr.size()}),
          ad::Tensor::matrix(1, k, *inst.weak));
      inst.weak = nn::softmax_rows(logits.data(), k);
    }
  }
  train::Trainer target(r.model, &relabelled, nullptr, setup.plan, setup.evaluator);
  target.run_weak(setup.plan.max_steps, train::ConfidenceSource::constant(1.0), "weak");
  target.flush("weak");

  const std::size_t offset = t.step();
  r.records = t.records();
  for (auto rec : target.records()) {
    rec.step += offset;
    r.records.push_back(std::move(rec));
  }
  r.steps = offset + target.step();
  return r;
}

RunResult run_l2lws_st(const data::EncodedSet& u, const data::EncodedSet& v,
                       const Setup& setup) {
  Rng conf_init = make_stream(setup.plan.seed, "init/separate-confidence");
  auto conf_net = model::DualModel::create(setup.architecture, conf_init);
  if (setup.on_init) setup.on_init(conf_net);
  train::Trainer phase1(conf_net, nullptr, &v, setup.plan);
  phase1.run_full(setup.plan.expected_full_steps(), "full");
  phase1.flush("full");

  RunResult r{initial_model(setup), {}, std::move(conf_net), 0};
  train::Trainer phase2(r.model, &u, nullptr, setup.plan, setup.evaluator);
  phase2.run_weak(setup.plan.max_steps,
                  with_transform(train::ConfidenceSource::separate(*r.confidence_network), setup),
                  "weak");
  phase2.flush("weak");

  const std::size_t offset = phase1.step();
  r.records = phase1.records();
  for (auto rec : phase2.records()) {
    rec.step += offset;
    r.records.push_back(std::move(rec));
  }
  r.steps = offset + phase2.step();
  return r;
}

RunResult run_l2lws(const data::EncodedSet& u, const data::EncodedSet& v,
                    const Setup& setup) {
  RunResult r{initial_model(setup), {}, {}, 0};
  setup.plan.validate();
  if (u.empty() || v.empty()) throw ConfigError("L2LWS needs non-empty U and V");
  train::Trainer t(r.model, &u, &v, setup.plan, setup.evaluator);
  t.run_joint(setup.plan.max_steps, with_transform(train::ConfidenceSource::joint(), setup));
  t.flush("joint");
  r.records = t.records();
  r.steps = t.step();
  return r;
}

RunResult run_method(Method m, const data::EncodedSet& u, const data::EncodedSet& v,
                     const Setup& setup) {
  switch (m) {
    case Method::WSO: return run_wso(u, setup);
    case Method::FSO: return run_fso(v, setup);
    case Method::WS_FT: return run_ws_ft(u, v, setup);
    case Method::NLI: return run_nli(u, v, setup);
    case Method::L2LWS_ST: return run_l2lws_st(u, v, setup);
    case Method::L2LWS: return run_l2lws(u, v, setup);
    case Method::WA: break;
  }
  throw ConfigError("WA has no training recipe; use run_wa_eval");
}

metrics::Evaluation run_wa_eval(const data::EncodedSet& test, std::size_t num_classes,
                                bool pos_neg_only) {
  return metrics::evaluate_weak_labels(test, num_classes, pos_neg_only);
}

metrics::Evaluation run_wa_eval(const data::Dataset& test, const weak::Lexicon& lex,
                                bool pos_neg_only) {
  data::EncodedSet labelled;
  labelled.reserve(test.size());
  for (const auto& inst : test) {
    data::EncodedInstance e;
    e.true_label = inst.true_label;
    e.weak = weak::annotate(inst.tokens, lex).probs;
    labelled.push_back(std::move(e));
  }
  return metrics::evaluate_weak_labels(labelled, lex.num_classes(), pos_neg_only);
}

}  // namespace l2lws::baselines
