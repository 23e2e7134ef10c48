#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <json.hpp>

#include "l2lws/baselines.hpp"
#include "l2lws/checkpoint.hpp"
#include "l2lws/data.hpp"
#include "l2lws/errors.hpp"
#include "l2lws/experiment.hpp"
#include "l2lws/metrics.hpp"
#include "l2lws/weak_annotation.hpp"

namespace py = pybind11;
using namespace l2lws;
using nlohmann::json;

namespace {

// Python objects cross as JSON text; the Python wrapper does the json.loads.
json parse(const std::string& text) { return json::parse(text); }

py::dict instance_dict(const data::Instance& inst, const data::LabelSet& labels) {
  py::dict d;
  d["id"] = inst.id;
  d["tokens"] = inst.tokens;
  d["label"] = inst.true_label ? py::cast(labels.names.at(*inst.true_label)) : py::none();
  d["weak"] = inst.weak_label ? py::cast(inst.weak_label->probs) : py::none();
  return d;
}

py::list dataset_list(const data::Dataset& ds, const data::LabelSet& labels) {
  py::list out;
  for (const auto& inst : ds) out.append(instance_dict(inst, labels));
  return out;
}

std::string run_to_json(const experiment::RunOutcome& r) {
  json records = json::array();
  for (const auto& rec : r.records)
    records.push_back({{"step", rec.step},
                       {"mode", rec.phase},
                       {"loss_t", rec.loss_t},
                       {"loss_c", rec.loss_c},
                       {"val_loss", rec.val_loss},
                       {"val_macro_f1", rec.val_macro_f1},
                       {"mean_conf", rec.mean_conf},
                       {"weak_seen", rec.weak_seen}});
  json out{{"method", std::string(baselines::method_name(r.spec.method))},
           {"seed", r.spec.seed},
           {"dataset", r.dataset},
           {"test_macro_f1", r.test_macro_f1},
           {"steps", r.steps},
           {"wa_val_macro_f1", r.wa_val_macro_f1},
           {"config_hash", r.config_hash},
           {"records", records}};
  out["weak_to_wa"] = r.weak_to_wa ? json(*r.weak_to_wa) : json(nullptr);
  out["error"] = r.error ? json(*r.error) : json(nullptr);
  return out.dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Weakly supervised text classification with a learned confidence gate";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<SchemaError>(m, "SchemaError", PyExc_ValueError);

  m.def(
      "annotate",
      [](const std::vector<std::string>& tokens, const std::map<std::string, std::vector<double>>& lexicon,
         std::size_t num_classes) {
        weak::Lexicon lex(num_classes);
        for (const auto& [tok, p] : lexicon) lex.add(tok, p);
        return weak::annotate(tokens, lex).probs;
      },
      py::arg("tokens"), py::arg("lexicon"), py::arg("num_classes") = weak::kDefaultNumClasses,
      "Soft label of a token sequence: the mean of the lexicon distributions, "
      "unknown tokens counting as neutral.");

  m.def(
      "annotate_file",
      [](const std::string& lexicon_path, const std::vector<std::vector<std::string>>& sentences,
         std::size_t num_classes) {
        const auto lex = weak::Lexicon::load_tsv(lexicon_path, num_classes);
        std::vector<std::optional<std::vector<double>>> out;
        for (auto& r : weak::annotate_corpus(sentences, lex))
          out.push_back(r.label ? std::optional(r.label->probs) : std::nullopt);
        return out;
      },
      py::arg("lexicon_path"), py::arg("sentences"), py::arg("num_classes") = weak::kDefaultNumClasses);

  m.def(
      "confidence_target",
      [](std::size_t true_class, const std::vector<double>& weak) {
        return weak::confidence_target(true_class, weak).value;
      },
      py::arg("true_class"), py::arg("weak"));

  m.def(
      "macro_f1",
      [](const std::vector<std::size_t>& gold, const std::vector<std::size_t>& predicted,
         std::size_t num_classes, bool pos_neg_only) {
        if (gold.size() != predicted.size()) throw ValidationError("gold and predicted differ in length");
        metrics::ConfusionMatrix cm(num_classes);
        for (std::size_t i = 0; i < gold.size(); ++i) cm.add(gold[i], predicted[i]);
        return pos_neg_only ? metrics::macro_f1_pos_neg(cm) : metrics::macro_f1(cm);
      },
      py::arg("gold"), py::arg("predicted"), py::arg("num_classes") = 3, py::arg("pos_neg_only") = false);

  m.def(
      "generate_synthetic",
      [](const std::string& spec_json) {
        const auto cfg = experiment::parse_config(
            json{{"methods", json::array({"WA"})}, {"data", {{"synthetic", parse(spec_json)}}}});
        auto spec = *cfg.data.synthetic;
        spec.validate();
        const auto syn = data::generate_synthetic(spec);
        data::LabelSet labels;
        if (spec.num_classes != labels.size()) {
          labels.names.clear();
          for (std::size_t k = 0; k < spec.num_classes; ++k) labels.names.push_back("class" + std::to_string(k));
        }
        py::dict out;
        out["u"] = dataset_list(syn.u, labels);
        out["v"] = dataset_list(syn.v, labels);
        out["val"] = dataset_list(syn.val, labels);
        out["test"] = dataset_list(syn.test, labels);
        out["u_hidden_labels"] = syn.u_hidden_labels;
        return out;
      },
      py::arg("spec_json"));

  m.def(
      "train",
      [](const std::string& config_json, const std::string& method, std::uint64_t seed,
         const std::string& checkpoint) {
        auto cfg = experiment::parse_config(parse(config_json));
        const auto prepared = experiment::prepare_data(cfg, seed);
        const experiment::RunSpec spec{baselines::parse_method(method), seed, 1.0};
        std::string result;
        {
          py::gil_scoped_release release;
          auto r = experiment::run_one(cfg, prepared, spec, !checkpoint.empty());
          if (r.model && !checkpoint.empty()) {
            json meta{{"method", std::string(baselines::method_name(spec.method))},
                      {"seed", seed},
                      {"labels", cfg.data.labels.names},
                      {"mask", cfg.data.mask},
                      {"vocabulary", prepared.vocab.tokens()},
                      {"config_hash", r.config_hash}};
            model::save_checkpoint(checkpoint, *r.model, meta);
          }
          result = run_to_json(r);
        }
        return result;
      },
      py::arg("config_json"), py::arg("method"), py::arg("seed") = 0, py::arg("checkpoint") = "");

  m.def(
      "evaluate",
      [](const std::string& checkpoint, const std::string& dataset_path, bool pos_neg_only) {
        const auto ckpt = model::load_checkpoint(checkpoint);
        const auto& meta = ckpt.metadata;
        data::LoadOptions opts;
        if (meta.contains("labels")) opts.labels.names = meta.at("labels").get<std::vector<std::string>>();
        opts.mask = meta.value("mask", false);
        if (!meta.contains("vocabulary")) throw InputError(checkpoint + ": no vocabulary in metadata");
        const auto vocab = data::Vocabulary::from_tokens(meta.at("vocabulary").get<std::vector<std::string>>());
        const auto ds = data::load_jsonl(dataset_path, opts);
        data::require_true_labels(ds, opts.labels.size());
        const auto ev = metrics::evaluate(
            ckpt.model, data::encode_dataset(ds, vocab, ckpt.model.config().min_sequence_length()), pos_neg_only);
        std::vector<std::vector<std::size_t>> cm(ev.confusion.num_classes());
        for (std::size_t g = 0; g < cm.size(); ++g)
          for (std::size_t p = 0; p < cm.size(); ++p) cm[g].push_back(ev.confusion.count(g, p));
        py::dict out;
        out["macro_f1"] = ev.macro_f1;
        out["mean_loss"] = ev.mean_loss;
        out["confusion"] = cm;
        return out;
      },
      py::arg("checkpoint"), py::arg("dataset_path"), py::arg("pos_neg_only") = false);

  m.def(
      "run_experiment",
      [](const std::string& config_json, const std::filesystem::path& out) {
        const auto cfg = experiment::parse_config(parse(config_json));
        py::gil_scoped_release release;
        return experiment::run_experiment(cfg, out).to_json().dump();
      },
      py::arg("config_json"), py::arg("out"));

  m.def("methods", [] {
    std::vector<std::string> names;
    for (auto m : baselines::all_methods()) names.emplace_back(baselines::method_name(m));
    return names;
  });
}
