#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "l2lws/data.hpp"
#include "l2lws/metrics.hpp"
#include "l2lws/model.hpp"
#include "l2lws/trainer.hpp"
#include "l2lws/weak_annotation.hpp"

namespace l2lws::baselines {

enum class Method { WA, WSO, FSO, WS_FT, NLI, L2LWS_ST, L2LWS };

std::string_view method_name(Method m);
// Accepts the canonical names plus "WS+FT" and lower case.
Method parse_method(std::string_view name);
const std::vector<Method>& all_methods();

// Everything a recipe needs besides the data. All methods given the same
// setup share architecture, seed streams and initial target-network weights.
struct Setup {
  model::ModelConfig architecture;
  train::TrainPlan plan;
  // Fine-tuning steps for WS+FT; empty means plan.expected_full_steps().
  std::optional<std::size_t> finetune_steps;
  train::Evaluator evaluator;
  // Post-processing of c~ in the weak steps of L2LWS and L2LWS_ST.
  std::function<double(std::size_t, double)> confidence_transform;
  // Runs on every freshly initialized model (e.g. to load pretrained
  // embeddings).
  std::function<void(model::DualModel&)> on_init;
};

struct RunResult {
  model::DualModel model;
  std::vector<train::MetricsRecord> records;
  // The separately trained confidence network of L2LWS_ST.
  std::optional<model::DualModel> confidence_network;
  std::size_t steps = 0;
};

// Target network on U with unweighted cross entropy, plan.max_steps steps.
RunResult run_wso(const data::EncodedSet& u, const Setup& setup);
// Target network on V's true labels, plan.max_steps steps.
RunResult run_fso(const data::EncodedSet& v, const Setup& setup);
// WSO, then every target-network layer continues on V's true labels.
RunResult run_ws_ft(const data::EncodedSet& u, const data::EncodedSet& v,
                    const Setup& setup);
// Label generator on V (expected-full-steps budget), then the target network
// on U against the generator's soft labels, computed once after phase one.
RunResult run_nli(const data::EncodedSet& u, const data::EncodedSet& v,
                  const Setup& setup);
// Confidence network with its own representation trained on V for the
// expected-full-steps budget, then frozen while it weights the target
// network's weak steps.
RunResult run_l2lws_st(const data::EncodedSet& u, const data::EncodedSet& v,
                       const Setup& setup);
// Joint alternating training.
RunResult run_l2lws(const data::EncodedSet& u, const data::EncodedSet& v,
                    const Setup& setup);

RunResult run_method(Method m, const data::EncodedSet& u, const data::EncodedSet& v,
                     const Setup& setup);

// Weak annotator scored directly: argmax of each weak label.
metrics::Evaluation run_wa_eval(const data::EncodedSet& test, std::size_t num_classes,
                                bool pos_neg_only = false);
// Same, annotating the raw sentences with a lexicon first.
metrics::Evaluation run_wa_eval(const data::Dataset& test, const weak::Lexicon& lex,
                                bool pos_neg_only = false);

model::DualModel initial_model(const model::ModelConfig& arch, std::uint64_t seed);
model::DualModel initial_model(const Setup& setup);

}  // namespace l2lws::baselines
