#pragma once

#include "l2lws/data.hpp"
#include "l2lws/model.hpp"
#include "l2lws/trainer.hpp"

namespace l2lws::testing {

struct SmallTask {
  data::Vocabulary vocab;
  data::EncodedSet u, v, val, test;
  std::vector<std::size_t> u_hidden;
  model::ModelConfig arch;
};

inline SmallTask small_task(std::uint64_t seed = 3, double flip = 0.3) {
  data::SyntheticTaskSpec spec;
  spec.vocab_size = 200;
  spec.indicative_per_class = 15;
  spec.signal_rate = 0.3;
  spec.u_size = 300;
  spec.v_size = 40;
  spec.val_size = 60;
  spec.test_size = 60;
  spec.flip_prob = flip;
  spec.seed = seed;
  const auto syn = data::generate_synthetic(spec);

  SmallTask task;
  task.vocab = data::Vocabulary::build(syn.u, 1);
  task.arch.vocab_size = task.vocab.size();
  task.arch.embedding_dim = 8;
  task.arch.conv = {{6, 3}};
  task.arch.target_hidden = {8};
  task.arch.confidence_hidden = {6};
  task.arch.generator_hidden = {6};
  task.arch.dropout = 0.0;
  const auto len = task.arch.min_sequence_length();
  task.u = data::encode_dataset(syn.u, task.vocab, len);
  task.v = data::encode_dataset(syn.v, task.vocab, len);
  task.val = data::encode_dataset(syn.val, task.vocab, len);
  task.test = data::encode_dataset(syn.test, task.vocab, len);
  task.u_hidden = syn.u_hidden_labels;
  return task;
}

inline train::TrainPlan sgd_plan(std::size_t steps = 30, std::size_t batch = 8) {
  train::TrainPlan plan;
  plan.batch_size = batch;
  plan.max_steps = steps;
  plan.optimizer.kind = train::OptimizerKind::sgd;
  plan.optimizer.lr = 0.1;
  plan.seed = 11;
  return plan;
}

}  // namespace l2lws::testing
