#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <string>
#include <vector>

#include "mtlm/corpus.hpp"
#include "mtlm/corpus_io.hpp"
#include "mtlm/error.hpp"
#include "mtlm/metrics.hpp"
#include "mtlm/model.hpp"
#include "mtlm/rescorer.hpp"
#include "mtlm/rwma.hpp"

namespace py = pybind11;
using namespace mtlm;

namespace {

using Words = std::vector<std::string>;

py::dict utterance_dict(const AnnotatedUtterance& u) {
  py::dict d;
  d["id"] = u.id;
  d["tokens"] = u.tokens;
  d["intent"] = u.intent ? py::cast(*u.intent) : py::none();
  d["slots"] = u.slots;
  return d;
}

py::dict wer_dict(const WerBreakdown& w) {
  py::dict d;
  d["substitutions"] = w.substitutions;
  d["insertions"] = w.insertions;
  d["deletions"] = w.deletions;
  d["reference_length"] = w.reference_length;
  d["wer"] = w.wer;
  return d;
}

// hyps: [(tokens, first-pass log-prob), ...]
NBestList make_list(const Words& reference, const std::vector<std::pair<Words, double>>& hyps) {
  NBestList list{"py", reference, {}};
  for (const auto& [tokens, score] : hyps) list.hypotheses.push_back({tokens, score});
  list.validate();
  return list;
}

}  // namespace

PYBIND11_MODULE(_mtlm, m) {
  m.doc() = "multi-task LSTM language models for n-best rescoring";

  static py::exception<Error> error(m, "MtlmError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, (e.kind() + ": " + e.what()).c_str());
    }
  });

  m.def("wer", [](const Words& ref, const Words& hyp) { return wer_dict(wer(ref, hyp)); }, py::arg("ref"),
        py::arg("hyp"));
  m.def("werr", &werr, py::arg("baseline_wer"), py::arg("candidate_wer"));
  m.def("intent_error_rate", [](const Words& gold, const Words& pred) { return intent_error_rate(gold, pred); });
  m.def(
      "slot_f1",
      [](const std::vector<Words>& gold, const std::vector<Words>& pred, const std::string& other) {
        return slot_f1(gold, pred, other);
      },
      py::arg("gold"), py::arg("predicted"), py::arg("other_label") = "other");
  m.def("combined_score", py::overload_cast<double, std::size_t, double, double>(&combined_score),
        py::arg("first_pass_logprob"), py::arg("length"), py::arg("lm_score"), py::arg("lam"));
  m.def("default_lambda_grid", &default_lambda_grid);

  m.def("rwma_eta", &rwma_eta, py::arg("experts"), py::arg("horizon"));
  m.def("pearson_rho", [](const std::vector<double>& x, const std::vector<double>& y) { return pearson_rho(x, y); });
  m.def(
      "clamp_normalize",
      [](const std::vector<double>& raw, double lo, double hi) { return clamp_normalize(raw, lo, hi); },
      py::arg("raw"), py::arg("lo") = 0.2, py::arg("hi") = 0.6);

  py::class_<RwmaState>(m, "Rwma")
      .def(py::init([](std::size_t horizon, bool classical_decay) {
             RwmaConfig c;
             c.horizon = horizon;
             c.classical_decay = classical_decay;
             return RwmaState(c);
           }),
           py::arg("horizon") = 50, py::arg("classical_decay") = false)
      .def("step",
           [](RwmaState& s, const std::vector<double>& losses) {
             const auto r = s.step(losses);
             return py::make_tuple(r.weights, r.correlation, r.updated);
           })
      .def_property_readonly("weights", &RwmaState::weights)
      .def_property_readonly("raw_weights", &RwmaState::raw_weights)
      .def_property_readonly("eta", &RwmaState::eta)
      .def_property_readonly("round", &RwmaState::round);

  m.def(
      "generate",
      [](std::size_t train_nlu, std::size_t train_trans, std::size_t dev, std::size_t test_gen, std::size_t test_rare,
         std::uint64_t seed) {
        GrammarSpec g = default_grammar();
        g.seed = seed;
        const DatasetBundle b = generate(g, DatasetSizes{train_nlu, train_trans, dev, test_gen, test_rare});
        py::dict out;
        out["intents"] = b.intents;
        out["slot_labels"] = b.slot_labels;
        for (const auto& [name, split] : {std::pair{"train_nlu", &b.train_nlu}, std::pair{"train_trans", &b.train_trans},
                                          std::pair{"dev", &b.dev}, std::pair{"test_gen", &b.test_gen},
                                          std::pair{"test_rare", &b.test_rare}}) {
          py::list items;
          for (const auto& u : *split) items.append(utterance_dict(u));
          out[name] = items;
        }
        return out;
      },
      py::arg("train_nlu") = 200, py::arg("train_trans") = 0, py::arg("dev") = 20, py::arg("test_gen") = 20,
      py::arg("test_rare") = 10, py::arg("seed") = 7);

  py::class_<MultiTaskModel>(m, "Model")
      .def_static(
          "create",
          [](const Words& words, const Words& intents, const Words& slots, std::size_t embedding, std::size_t hidden,
             std::size_t layers, std::uint64_t seed) {
            ModelConfig c;
            c.embedding_dim = embedding;
            c.hidden_dim = hidden;
            c.layers = layers;
            c.seed = seed;
            return MultiTaskModel::create(Vocabulary(words), LabelSet(intents), LabelSet(slots), c);
          },
          py::arg("words"), py::arg("intents"), py::arg("slot_labels"), py::arg("embedding") = 32,
          py::arg("hidden") = 32, py::arg("layers") = 2, py::arg("seed") = 1)
      .def_static("load", &load_checkpoint, py::arg("path"))
      .def("save", [](const MultiTaskModel& model, const std::filesystem::path& p) { save_checkpoint(model, p); })
      .def_property_readonly("vocab_size", [](const MultiTaskModel& model) { return model.vocab().size(); })
      .def_property_readonly("intents", [](const MultiTaskModel& model) { return model.intents().names(); })
      .def_property_readonly("slot_labels", [](const MultiTaskModel& model) { return model.slots().names(); })
      .def(
          "logprob",
          [](const MultiTaskModel& model, const Words& tokens, bool normalized) {
            return model.backbone().sequence_logprob(model.params(), model.tokens(tokens), normalized);
          },
          py::arg("tokens"), py::arg("normalized") = false)
      .def("perplexity",
           [](const MultiTaskModel& model, const std::vector<Words>& sentences) {
             std::vector<EncodedUtterance> corpus;
             for (const auto& s : sentences) corpus.push_back({model.tokens(s), std::nullopt, {}});
             return model.perplexity(corpus);
           })
      .def("predict_intent",
           [](const MultiTaskModel& model, const Words& tokens) {
             return model.intents().name(
                 predict_intent(model.params(), model.backbone(), model.intent_head(), model.tokens(tokens)));
           })
      .def("predict_slots",
           [](const MultiTaskModel& model, const Words& tokens) {
             Words out;
             for (std::size_t k : predict_slots(model.params(), model.backbone(), model.slot_head(), model.tokens(tokens)))
               out.push_back(model.slots().name(k));
             return out;
           })
      .def(
          "rescore",
          [](const MultiTaskModel& model, const std::vector<std::pair<Words, double>>& hyps, double lam,
             bool normalize_lm) {
            const auto r = rescore(make_list({"_"}, hyps), model_scorer(model), RescoreConfig{lam, normalize_lm});
            return py::make_tuple(r.chosen, r.lm_scores, r.combined);
          },
          py::arg("hypotheses"), py::arg("lam") = 0.006, py::arg("normalize_lm") = true)
      .def(
          "tune_lambda",
          [](const MultiTaskModel& model, const std::string& nbest_path, std::vector<double> grid) {
            if (grid.empty()) grid = default_lambda_grid();
            const auto lists = read_nbest(nbest_path);
            const auto s = tune_lambda(lists, model_scorer(model), grid);
            return py::make_tuple(s.best_lambda, s.best_wer);
          },
          py::arg("nbest_path"), py::arg("grid") = std::vector<double>{});
}
