// mtlm: data generation, training, rescoring and evaluation from the command line.

#include <cstdio>
#include <deque>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "cli_support.hpp"
#include "mtlm/corpus.hpp"
#include "mtlm/corpus_io.hpp"
#include "mtlm/error.hpp"
#include "mtlm/format.hpp"
#include "mtlm/metrics.hpp"
#include "mtlm/model.hpp"
#include "mtlm/rescorer.hpp"
#include "mtlm/trainer.hpp"

using namespace mtlm;
using namespace mtlm::cli;

namespace {

constexpr const char* kSplits[] = {"train_nlu", "train_trans", "dev", "test_gen", "test_rare"};

void note(const std::string& line) { std::fprintf(stderr, "%s\n", line.c_str()); }

// ------------------------------------------------------------------ config

json model_defaults() {
  const ModelConfig m;
  return {{"embedding", m.embedding_dim}, {"hidden", m.hidden_dim},         {"layers", m.layers},
          {"variant", std::string(to_string(m.variant))}, {"tie_embeddings", m.tie_embeddings},
          {"init_scale", m.init_scale}};
}

json train_defaults(std::size_t epochs) {
  const TrainConfig t;
  return {{"learning_rate", t.learning_rate},
          {"batch_size", t.batch_size},
          {"epochs", epochs},
          {"evaluations_per_epoch", t.evaluations_per_epoch},
          {"clip_norm", t.clip_norm},
          {"momentum", t.momentum},
          {"keep_best", true}};
}

json rwma_defaults() {
  const RwmaConfig r;
  return {{"clamp_lo", r.clamp_lo},
          {"clamp_hi", r.clamp_hi},
          {"degradation_window", r.degradation_window},
          {"correlation_window", r.correlation_window},
          {"classical_decay", r.classical_decay},
          {"eta", r.eta_override}};
}

ModelConfig model_config(const json& c) {
  ModelConfig m;
  m.embedding_dim = get_count(c, "/model/embedding");
  m.hidden_dim = get_count(c, "/model/hidden");
  m.layers = get_count(c, "/model/layers");
  try {
    m.variant = parse_encoder_variant(get_text(c, "/model/variant"));
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  m.tie_embeddings = get_bool(c, "/model/tie_embeddings");
  m.init_scale = get_real(c, "/model/init_scale");
  m.seed = get_count(c, "/seed");
  return m;
}

ScheduleMode schedule_for(const std::string& mode) {
  if (mode == "stlm") return ScheduleMode::Fixed;
  if (mode == "mtlm-linear") return ScheduleMode::LinearRamp;
  if (mode == "mtlm-rwma") return ScheduleMode::Rwma;
  throw ConfigError("unknown mode '" + mode + "' (expected stlm, mtlm-linear or mtlm-rwma)");
}

TrainConfig train_config(const json& c) {
  TrainConfig t;
  t.mode = schedule_for(get_text(c, "/mode"));
  t.seed = get_count(c, "/seed");
  t.learning_rate = get_real(c, "/train/learning_rate");
  t.batch_size = get_count(c, "/train/batch_size");
  t.epochs = get_count(c, "/train/epochs");
  t.evaluations_per_epoch = get_count(c, "/train/evaluations_per_epoch");
  t.clip_norm = get_real(c, "/train/clip_norm");
  t.momentum = get_real(c, "/train/momentum");
  t.keep_best = get_bool(c, "/train/keep_best");
  t.rwma.horizon = t.evaluations_per_epoch;
  t.rwma.clamp_lo = get_real(c, "/rwma/clamp_lo");
  t.rwma.clamp_hi = get_real(c, "/rwma/clamp_hi");
  t.rwma.degradation_window = get_count(c, "/rwma/degradation_window");
  t.rwma.correlation_window = get_count(c, "/rwma/correlation_window");
  t.rwma.classical_decay = get_bool(c, "/rwma/classical_decay");
  t.rwma.eta_override = get_real(c, "/rwma/eta");
  t.validate();
  return t;
}

NoiseConfig noise_config(const json& c) {
  NoiseConfig n;
  n.nbest = get_count(c, "/noise/nbest");
  n.substitution_rate = get_real(c, "/noise/substitution_rate");
  n.deletion_rate = get_real(c, "/noise/deletion_rate");
  n.insertion_rate = get_real(c, "/noise/insertion_rate");
  n.rare_multiplier = get_real(c, "/noise/rare_multiplier");
  n.oracle_inclusion = get_real(c, "/noise/oracle_inclusion");
  n.per_token_cost = get_real(c, "/noise/per_token_cost");
  n.edit_cost = get_real(c, "/noise/edit_cost");
  n.rare_edit_cost = get_real(c, "/noise/rare_edit_cost");
  n.score_noise = get_real(c, "/noise/score_noise");
  n.validate();
  return n;
}

void add_train_flags(CLI::App* app, ConfigFlags& f) {
  f.count(app, "--epochs", "/train/epochs", "training epochs");
  f.real(app, "--lr", "/train/learning_rate", "SGD learning rate");
  f.count(app, "--batch-size", "/train/batch_size", "utterances per minibatch");
  f.count(app, "--evaluations", "/train/evaluations_per_epoch", "step-wise weight evaluations per epoch");
  f.real(app, "--clip-norm", "/train/clip_norm", "global gradient norm clip");
  f.real(app, "--momentum", "/train/momentum", "SGD momentum");
  f.toggle(app, "--no-keep-best", "/train/keep_best", false, "keep the last epoch instead of the best one");
  f.toggle(app, "--classical-decay", "/rwma/classical_decay", true, "multiply by (1 - eta)^l");
  f.real(app, "--eta", "/rwma/eta", "RWMA learning rate (0 derives it from the horizon)");
  f.count(app, "--seed", "/seed", "shuffling and initialization seed");
}

// ------------------------------------------------------------------ shared steps

Vocabulary data_vocabulary(const fs::path& data, const DatasetBundle& bundle) {
  Vocabulary v;
  const fs::path grammar = data / "grammar.json";
  if (fs::exists(grammar)) {
    for (const auto& w : grammar_from_json(read_text_file(grammar), grammar.string()).words()) v.add(w);
    return v;
  }
  for (const auto* split : {&bundle.train_nlu, &bundle.train_trans}) {
    for (const auto& u : *split)
      for (const auto& t : u.tokens) v.add(t);
  }
  return v;
}

const std::vector<AnnotatedUtterance>& split_of(const DatasetBundle& b, const std::string& name) {
  if (name == "train_nlu") return b.train_nlu;
  if (name == "train_trans") return b.train_trans;
  if (name == "dev") return b.dev;
  if (name == "test_gen") return b.test_gen;
  if (name == "test_rare") return b.test_rare;
  throw ConfigError("unknown split '" + name + "'");
}

std::string tsv(auto&& write, const TrainLog& log) {
  std::ostringstream out;
  write(out, log);
  return out.str();
}

void fit(MultiTaskModel& model, const DatasetBundle& bundle, const json& config, const std::string& corpus_name,
         Artifacts& out) {
  const TrainConfig tc = train_config(config);
  const auto& corpus = split_of(bundle, corpus_name);
  if (corpus.empty()) throw DataError("training split '" + corpus_name + "' is empty");
  if (tc.mode != ScheduleMode::Fixed) {
    for (const auto& u : corpus) {
      if (!u.annotated()) {
        throw ConfigError("mode '" + get_text(config, "/mode") + "' needs intent and slot annotations, but " +
                          corpus_name + " is transcription-only (utterance " + u.id + ")");
      }
    }
  }
  const auto train_set = model.encode_all(corpus);
  const auto valid = model.encode_all(bundle.dev);
  note("training " + get_text(config, "/mode") + " on " + std::to_string(train_set.size()) + " utterances, " +
       std::to_string(tc.epochs) + " epochs");
  const TrainLog log = train(model, train_set, valid, tc);
  for (const auto& e : log.epochs) {
    char line[200];
    std::snprintf(line, sizeof line, "epoch %zu  L_LM %.4f  L_ID %.4f  L_SF %.4f  alpha %.3f/%.3f/%.3f  valid PPL %.4f",
                  e.epoch, e.losses.lm, e.losses.intent, e.losses.slot, e.weights.lm, e.weights.intent,
                  e.weights.slot, e.valid_ppl);
    note(line);
  }

  out.write("model.ckpt", serialize_checkpoint(model));
  out.write("metrics.tsv", tsv([](std::ostream& o, const TrainLog& l) { write_metrics_tsv(o, l); }, log));
  out.write("weights.tsv", tsv([](std::ostream& o, const TrainLog& l) { write_weight_log_tsv(o, l); }, log));
  const LossWeights last = log.epochs.empty() ? tc.fixed_weights : log.epochs.back().weights;
  json summary = {{"mode", get_text(config, "/mode")},
                  {"corpus", corpus_name},
                  {"utterances", train_set.size()},
                  {"vocabulary", model.vocab().size()},
                  {"initial_valid_ppl", log.initial_valid_ppl},
                  {"best_epoch", log.best_epoch},
                  {"best_valid_ppl", log.best_valid_ppl},
                  {"final_weights", {last.lm, last.intent, last.slot}},
                  {"weight_updates", log.updates.size()}};
  out.write("summary.json", summary.dump(2) + "\n");
}

double lambda_from(const json& config, const Inputs& in) {
  const bool inline_value = !config.at("lambda").is_null();
  const bool from_file = in.contains("lambda_from");
  if (inline_value && from_file) throw ConfigError("give either --lambda or --lambda-from, not both");
  if (inline_value) return get_real(config, "/lambda");
  if (!from_file) throw ConfigError("no interpolation weight: pass --lambda or --lambda-from");
  const json j = read_json(in.at("lambda_from"));
  if (!j.contains("lambda") || !j["lambda"].is_number()) {
    throw ParseError(in.at("lambda_from").string() + ": no numeric \"lambda\" field");
  }
  return j["lambda"].get<double>();
}

std::size_t threads_of(const json& config) { return get_count(config, "/threads"); }

// ------------------------------------------------------------------ commands

void run_gen_data(const json& c, const Inputs& in, Artifacts& out) {
  GrammarSpec g = in.contains("grammar")
                      ? grammar_from_json(read_text_file(in.at("grammar")), in.at("grammar").string())
                      : default_grammar();
  g.seed = get_count(c, "/seed");
  g.validate();
  const DatasetSizes sizes{get_count(c, "/sizes/train_nlu"), get_count(c, "/sizes/train_trans"),
                           get_count(c, "/sizes/dev"), get_count(c, "/sizes/test_gen"),
                           get_count(c, "/sizes/test_rare")};
  const NoiseConfig noise = noise_config(c);
  const DatasetBundle bundle = generate(g, sizes);
  out.write("grammar.json", grammar_to_json(g));
  save_bundle(out.dir(), bundle);
  out.record("labels.json");
  for (const char* split : kSplits) out.record(std::string(split) + ".jsonl");
  const auto ctx = FirstPassContext::from_grammar(g);
  for (const char* split : {"dev", "test_gen", "test_rare"}) {
    const auto lists = simulate_first_pass(split_of(bundle, split), noise, ctx, g.seed);
    out.write(std::string(split) + ".nbest.jsonl", format_nbest(lists));
  }
  note("generated " + std::to_string(bundle.train_nlu.size()) + " annotated and " +
       std::to_string(bundle.train_trans.size()) + " transcription-only training utterances");
}

void run_train(const json& c, const Inputs& in, Artifacts& out) {
  const fs::path data = in.at("data");
  const DatasetBundle bundle = load_bundle(data);
  MultiTaskModel model = MultiTaskModel::create(data_vocabulary(data, bundle), LabelSet(bundle.intents),
                                                LabelSet(bundle.slot_labels), model_config(c));
  fit(model, bundle, c, get_text(c, "/corpus"), out);
}

void run_finetune(const json& c, const Inputs& in, Artifacts& out) {
  MultiTaskModel model = load_checkpoint(in.at("base"));
  const DatasetBundle bundle = load_bundle(in.at("data"));
  if (get_bool(c, "/reset_heads")) model.reset_heads(get_count(c, "/seed"));
  fit(model, bundle, c, "train_nlu", out);
}

void run_rescore(const json& c, const Inputs& in, Artifacts& out) {
  const double lambda = lambda_from(c, in);
  const RescoreConfig rc{lambda, get_bool(c, "/normalize_lm")};
  rc.validate();
  const MultiTaskModel model = load_checkpoint(in.at("model"));
  const auto lists = read_nbest(in.at("nbest"));
  const auto lm = score_hypotheses(lists, model_scorer(model), rc.normalize_lm, threads_of(c));
  std::vector<RescoreResult> results;
  for (std::size_t i = 0; i < lists.size(); ++i) {
    RescoreResult r;
    r.lm_scores = lm[i];
    for (std::size_t k = 0; k < lists[i].hypotheses.size(); ++k) {
      const auto& h = lists[i].hypotheses[k];
      r.combined.push_back(combined_score(h.first_pass_logprob, h.tokens.size(), lm[i][k], lambda));
    }
    r.chosen = choose(lists[i], lm[i], lambda);
    results.push_back(std::move(r));
  }
  out.write("rescored.jsonl", format_rescored(lists, results, lambda));
  const double base = first_pass_wer(lists);
  const double rescored = rescored_wer(lists, lm, lambda);
  const json summary = {{"lambda", lambda},
                        {"lists", lists.size()},
                        {"first_pass_wer", base},
                        {"rescored_wer", rescored},
                        {"werr", werr(base, rescored)}};
  out.write("summary.json", summary.dump(2) + "\n");
  note("WER " + format_number(base) + " -> " + format_number(rescored) + " at lambda " + format_number(lambda));
}

void run_tune_lambda(const json& c, const Inputs& in, Artifacts& out) {
  const MultiTaskModel model = load_checkpoint(in.at("model"));
  const auto dev = read_nbest(in.at("nbest"));
  const bool normalize = get_bool(c, "/normalize_lm");
  const auto lm = score_hypotheses(dev, model_scorer(model), normalize, threads_of(c));
  const auto grid = get_reals(c, "/grid");
  const LambdaSearch s = tune_lambda(dev, lm, grid);
  const json j = {{"lambda", s.best_lambda},
                  {"wer", s.best_wer},
                  {"first_pass_wer", first_pass_wer(dev)},
                  {"normalize_lm", normalize},
                  {"grid", s.grid},
                  {"grid_wer", s.grid_wer}};
  out.write("lambda.json", j.dump(2) + "\n");
  note("best lambda " + format_number(s.best_lambda) + " (dev WER " + format_number(s.best_wer) + ")");
}

struct SplitScores {
  double ppl = 0.0;
  double intent_er = 0.0;
  double slot_f1 = 0.0;
};

SplitScores nlu_scores(const MultiTaskModel& m, std::span<const AnnotatedUtterance> utts) {
  SplitScores s;
  s.ppl = m.perplexity(m.encode_all(utts));
  std::vector<std::string> gold_i, pred_i;
  std::vector<std::vector<std::string>> gold_s, pred_s;
  for (const auto& u : utts) {
    if (!u.annotated()) continue;
    const TokenSequence ts = m.tokens(u.tokens);
    gold_i.push_back(*u.intent);
    pred_i.push_back(m.intents().name(predict_intent(m.params(), m.backbone(), m.intent_head(), ts)));
    gold_s.push_back(u.slots);
    std::vector<std::string> labels;
    for (std::size_t k : predict_slots(m.params(), m.backbone(), m.slot_head(), ts)) labels.push_back(m.slots().name(k));
    pred_s.push_back(std::move(labels));
  }
  if (!gold_i.empty()) {
    s.intent_er = intent_error_rate(gold_i, pred_i);
    s.slot_f1 = slot_f1(gold_s, pred_s);
  }
  return s;
}

void run_eval(const json& c, const Inputs& in, Artifacts& out) {
  const fs::path data = in.at("data");
  const DatasetBundle bundle = load_bundle(data);
  const MultiTaskModel model = load_checkpoint(in.at("model"));
  std::unique_ptr<MultiTaskModel> baseline;
  if (in.contains("baseline")) baseline = std::make_unique<MultiTaskModel>(load_checkpoint(in.at("baseline")));
  const bool normalize = get_bool(c, "/normalize_lm");
  const std::size_t threads = threads_of(c);

  double lambda = 0.0;
  std::string source;
  if (!c.at("lambda").is_null() || in.contains("lambda_from")) {
    lambda = lambda_from(c, in);
    source = in.contains("lambda_from") ? "file" : "config";
  } else {
    const fs::path dev = data / "dev.nbest.jsonl";
    if (!fs::exists(dev)) throw ConfigError("no interpolation weight and no " + dev.string() + " to tune one on");
    const auto lists = read_nbest(dev);
    lambda = tune_lambda(lists, score_hypotheses(lists, model_scorer(model), normalize, threads),
                         default_lambda_grid())
                 .best_lambda;
    source = "tuned on dev";
  }

  json report = {{"lambda", lambda}, {"lambda_source", source}, {"baseline", baseline != nullptr}};
  json splits = json::object();
  std::string table = "split\tppl\tppl_norm\tintent_er\tslot_f1\tfirst_pass_wer\trescored_wer\twerr\twerr_vs_baseline\n";
  for (const auto& name : c.at("splits")) {
    if (!name.is_string()) throw ConfigError("config value '/splits' must list split names");
    const std::string split = name.get<std::string>();
    const auto& utts = split_of(bundle, split);
    if (utts.empty()) {
      note("skipping empty split " + split);
      continue;
    }
    const SplitScores s = nlu_scores(model, utts);
    json r = {{"utterances", utts.size()}, {"ppl", s.ppl}, {"intent_error_rate", s.intent_er}, {"slot_f1", s.slot_f1}};
    std::string ppl_norm = "-", first = "-", rescored = "-", rel = "-", rel_base = "-";
    if (baseline) {
      const double b = baseline->perplexity(baseline->encode_all(utts));
      r["baseline_ppl"] = b;
      r["ppl_norm"] = s.ppl / b;
      ppl_norm = format_number(s.ppl / b);
    }
    const fs::path nbest = data / (split + ".nbest.jsonl");
    if (fs::exists(nbest)) {
      const auto lists = read_nbest(nbest);
      const double base = first_pass_wer(lists);
      const double w = rescored_wer(lists, score_hypotheses(lists, model_scorer(model), normalize, threads), lambda);
      r["first_pass_wer"] = base;
      r["rescored_wer"] = w;
      r["werr"] = werr(base, w);
      first = format_number(base);
      rescored = format_number(w);
      rel = format_number(werr(base, w));
      if (baseline) {
        const double bw =
            rescored_wer(lists, score_hypotheses(lists, model_scorer(*baseline), normalize, threads), lambda);
        r["baseline_rescored_wer"] = bw;
        r["werr_vs_baseline"] = werr(bw, w);
        rel_base = format_number(werr(bw, w));
      }
    }
    table += split + '\t' + format_number(s.ppl) + '\t' + ppl_norm + '\t' + format_number(s.intent_er) + '\t' +
             format_number(s.slot_f1) + '\t' + first + '\t' + rescored + '\t' + rel + '\t' + rel_base + '\n';
    splits[split] = r;
  }
  report["splits"] = splits;
  out.write("report.json", report.dump(2) + "\n");
  out.write("report.tsv", table);
  std::fputs(table.c_str(), stdout);
}

void run_report(const json&, const Inputs& in, Artifacts& out) {
  std::string table = "run\tmode\tepochs\tbest_epoch\tbest_valid_ppl\tppl_norm\talpha_LM\talpha_ID\talpha_SF\n";
  double reference = 0.0;
  for (std::size_t i = 1; in.contains("run" + std::to_string(i)); ++i) {
    const fs::path run = in.at("run" + std::to_string(i));
    std::istringstream metrics(read_text_file(run / "metrics.tsv"));
    const auto epochs = read_metrics_tsv(metrics);
    if (epochs.empty()) throw DataError((run / "metrics.tsv").string() + ": no epochs");
    std::string mode = "-";
    if (fs::exists(run / "summary.json")) {
      const json s = read_json(run / "summary.json");
      if (s.contains("mode") && s["mode"].is_string()) mode = s["mode"].get<std::string>();
    }
    std::size_t best = 0;
    for (std::size_t e = 1; e < epochs.size(); ++e)
      if (epochs[e].valid_ppl < epochs[best].valid_ppl) best = e;
    const double ppl = epochs[best].valid_ppl;
    if (i == 1) reference = ppl;
    const auto& w = epochs.back().weights;
    table += run.filename().string() + '\t' + mode + '\t' + std::to_string(epochs.size()) + '\t' +
             std::to_string(epochs[best].epoch) + '\t' + format_number(ppl) + '\t' + format_number(ppl / reference) +
             '\t' + format_number(w.lm) + '\t' + format_number(w.intent) + '\t' + format_number(w.slot) + '\n';
  }
  std::fputs(table.c_str(), stdout);
  if (!out.dir().empty()) out.write("report.tsv", table);
}

// ------------------------------------------------------------------ registry

struct InputSpec {
  std::string name;
  bool required;
  std::string help;
};

struct Command {
  std::string name;
  std::string help;
  json defaults;
  std::vector<InputSpec> inputs;
  std::function<void(CLI::App*, ConfigFlags&)> flags;
  std::function<void(const json&, const Inputs&, Artifacts&)> run;
  bool out_required = true;
};

std::vector<Command> commands() {
  std::vector<Command> list;

  const NoiseConfig noise;
  list.push_back(
      {"gen-data",
       "generate a synthetic corpus and simulated first-pass n-best lists",
       {{"seed", default_grammar().seed},
        {"sizes",
         {{"train_nlu", DatasetSizes{}.train_nlu},
          {"train_trans", DatasetSizes{}.train_trans},
          {"dev", DatasetSizes{}.dev},
          {"test_gen", DatasetSizes{}.test_gen},
          {"test_rare", DatasetSizes{}.test_rare}}},
        {"noise",
         {{"nbest", noise.nbest},
          {"substitution_rate", noise.substitution_rate},
          {"deletion_rate", noise.deletion_rate},
          {"insertion_rate", noise.insertion_rate},
          {"rare_multiplier", noise.rare_multiplier},
          {"oracle_inclusion", noise.oracle_inclusion},
          {"per_token_cost", noise.per_token_cost},
          {"edit_cost", noise.edit_cost},
          {"rare_edit_cost", noise.rare_edit_cost},
          {"score_noise", noise.score_noise}}}},
       {{"grammar", false, "grammar JSON (default: built-in grammar)"}},
       [](CLI::App* app, ConfigFlags& f) {
         f.count(app, "--seed", "/seed", "generation seed");
         f.count(app, "--train-nlu", "/sizes/train_nlu", "annotated training utterances");
         f.count(app, "--train-trans", "/sizes/train_trans", "transcription-only utterances (0: 8x train-nlu)");
         f.count(app, "--dev", "/sizes/dev", "validation utterances");
         f.count(app, "--test-gen", "/sizes/test_gen", "general test utterances");
         f.count(app, "--test-rare", "/sizes/test_rare", "rare-word test utterances");
         f.count(app, "--nbest", "/noise/nbest", "hypotheses per list");
         f.real(app, "--oracle-inclusion", "/noise/oracle_inclusion", "probability that the reference is in the list");
         f.real(app, "--rare-multiplier", "/noise/rare_multiplier", "corruption rate multiplier for long-tail words");
         f.real(app, "--score-noise", "/noise/score_noise", "first-pass score noise");
       },
       run_gen_data});

  json train_cfg = {{"mode", "stlm"},
                    {"corpus", "train_nlu"},
                    {"seed", 1},
                    {"model", model_defaults()},
                    {"train", train_defaults(TrainConfig{}.epochs)},
                    {"rwma", rwma_defaults()}};
  list.push_back({"train",
                  "train a language model (stlm) or a multi-task model (mtlm-linear, mtlm-rwma)",
                  train_cfg,
                  {{"data", true, "dataset directory"}},
                  [](CLI::App* app, ConfigFlags& f) {
                    f.text(app, "--mode", "/mode", "stlm, mtlm-linear or mtlm-rwma");
                    f.text(app, "--corpus", "/corpus", "training split: train_nlu or train_trans");
                    f.count(app, "--embedding", "/model/embedding", "embedding width");
                    f.count(app, "--hidden", "/model/hidden", "LSTM width");
                    f.count(app, "--layers", "/model/layers", "LSTM layers");
                    f.text(app, "--variant", "/model/variant",
                           "no_attention, weighted_attention or projected_attention");
                    f.toggle(app, "--tie-embeddings", "/model/tie_embeddings", true, "share input and output embeddings");
                    f.real(app, "--init-scale", "/model/init_scale", "uniform initialization range");
                    add_train_flags(app, f);
                  },
                  run_train});

  list.push_back({"finetune",
                  "multi-task finetuning of a pretrained checkpoint with fresh NLU heads",
                  {{"mode", "mtlm-rwma"},
                   {"seed", 1},
                   {"reset_heads", true},
                   {"train", train_defaults(10)},
                   {"rwma", rwma_defaults()}},
                  {{"base", true, "pretrained checkpoint"}, {"data", true, "dataset directory"}},
                  [](CLI::App* app, ConfigFlags& f) {
                    f.text(app, "--mode", "/mode", "stlm, mtlm-linear or mtlm-rwma");
                    f.toggle(app, "--keep-heads", "/reset_heads", false, "keep the checkpoint's NLU heads");
                    add_train_flags(app, f);
                  },
                  run_finetune});

  list.push_back({"rescore",
                  "rescore n-best lists with a checkpoint",
                  {{"lambda", nullptr}, {"normalize_lm", true}, {"threads", 0}},
                  {{"model", true, "checkpoint"},
                   {"nbest", true, "n-best JSONL file"},
                   {"lambda_from", false, "lambda.json written by tune-lambda"}},
                  [](CLI::App* app, ConfigFlags& f) {
                    f.real(app, "--lambda", "/lambda", "LM interpolation weight");
                    f.toggle(app, "--raw-lm", "/normalize_lm", false, "use unnormalized LM log-probabilities");
                    f.count(app, "--threads", "/threads", "scoring threads (0: all cores)");
                  },
                  run_rescore});

  list.push_back({"tune-lambda",
                  "grid-search the LM interpolation weight on development n-best lists",
                  {{"grid", default_lambda_grid()}, {"normalize_lm", true}, {"threads", 0}},
                  {{"model", true, "checkpoint"}, {"nbest", true, "development n-best JSONL file"}},
                  [](CLI::App* app, ConfigFlags& f) {
                    f.reals(app, "--grid", "/grid", "comma-separated lambda values");
                    f.toggle(app, "--raw-lm", "/normalize_lm", false, "use unnormalized LM log-probabilities");
                    f.count(app, "--threads", "/threads", "scoring threads (0: all cores)");
                  },
                  run_tune_lambda});

  list.push_back({"eval",
                  "PPL, intent error, slot F1 and rescoring WER on test splits",
                  {{"lambda", nullptr},
                   {"normalize_lm", true},
                   {"threads", 0},
                   {"splits", json::array({"test_gen", "test_rare"})}},
                  {{"model", true, "checkpoint"},
                   {"data", true, "dataset directory"},
                   {"baseline", false, "baseline checkpoint for PPL_norm and WERR"},
                   {"lambda_from", false, "lambda.json written by tune-lambda"}},
                  [](CLI::App* app, ConfigFlags& f) {
                    f.real(app, "--lambda", "/lambda", "LM interpolation weight");
                    f.toggle(app, "--raw-lm", "/normalize_lm", false, "use unnormalized LM log-probabilities");
                    f.count(app, "--threads", "/threads", "scoring threads (0: all cores)");
                  },
                  run_eval});

  list.push_back({"report",
                  "tabulate training runs from their metrics logs",
                  json::object(),
                  {},
                  nullptr,
                  run_report,
                  false});
  return list;
}

std::string flag_name(const std::string& input) {
  std::string s = "--" + input;
  for (char& ch : s)
    if (ch == '_') ch = '-';
  return s;
}

json resolve(const Command& cmd, const json& overlay) {
  json config = cmd.defaults;
  if (!overlay.is_null()) merge_config(config, overlay);
  return config;
}

void check_outputs(const Inputs& in, const fs::path& out) {
  const fs::path target = out.empty() ? fs::path() : fs::weakly_canonical(out);
  for (const auto& [name, path] : in) {
    if (!fs::exists(path)) throw IoError("input '" + name + "' not found: " + path.string());
    if (!out.empty() && fs::weakly_canonical(path) == target) {
      throw ConfigError("output directory " + out.string() + " is the '" + name + "' input");
    }
  }
}

json execute(const Command& cmd, const json& config, const Inputs& in, const fs::path& out) {
  check_outputs(in, out);
  const json records = input_records(in);
  if (out.empty()) {
    Artifacts none{fs::path()};
    cmd.run(config, in, none);
    return json();
  }
  fs::create_directories(out);
  write_manifest(out, manifest_json(cmd.name, config, records, out, nullptr));
  Artifacts artifacts(out);
  cmd.run(config, in, artifacts);
  const json manifest = manifest_json(cmd.name, config, records, out, &artifacts);
  write_manifest(out, manifest);
  return manifest;
}

void replay(const std::vector<Command>& registry, const fs::path& manifest_path, const std::string& out_flag) {
  const json m = read_json(manifest_path);
  const auto field = [&](const char* key) -> const json& {
    if (!m.contains(key)) throw ParseError(manifest_path.string() + ": missing \"" + key + "\"");
    return m.at(key);
  };
  const std::string name = field("command").get<std::string>();
  const Command* cmd = nullptr;
  for (const auto& c : registry)
    if (c.name == name) cmd = &c;
  if (!cmd) throw ParseError(manifest_path.string() + ": unknown command '" + name + "'");

  const json config = resolve(*cmd, field("config"));
  Inputs in;
  for (const auto& [input, record] : field("inputs").items()) {
    const fs::path path = record.at("path").get<std::string>();
    if (!fs::exists(path)) throw IoError("input '" + input + "' not found: " + path.string());
    if (checksum_path(path) != record.at("checksum").get<std::string>()) {
      throw Error("replay", "input '" + input + "' (" + path.string() + ") changed since the recorded run");
    }
    in[input] = path;
  }
  const fs::path out = out_flag.empty() ? fs::path(field("out").get<std::string>()) : fs::path(out_flag);
  const json fresh = execute(*cmd, config, in, out);

  const json& before = field("artifacts");
  if (before.empty()) {
    note("replayed " + name + "; the recorded run never completed, nothing to compare");
    return;
  }
  for (const auto& [artifact, sum] : before.items()) {
    if (!fresh["artifacts"].contains(artifact) || fresh["artifacts"][artifact] != sum) {
      throw Error("replay", "artifact '" + artifact + "' differs from the recorded run");
    }
  }
  note("replayed " + name + ": " + std::to_string(before.size()) + " artifacts identical");
}

int exit_code(const std::string& kind) {
  static const std::map<std::string, int> codes{
      {"config", 3},     {"io", 4},          {"parse", 5},       {"label", 6},      {"alignment", 7},
      {"data", 8},       {"vocabulary", 9},  {"checkpoint", 10}, {"divergence", 11}, {"replay", 12},
      {"dimension", 13}, {"domain", 14},     {"index", 15},      {"evaluation", 16}};
  const auto it = codes.find(kind);
  return it == codes.end() ? 1 : it->second;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mtlm: multi-task LSTM language models for n-best rescoring"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "mtlm 1.0");

  const std::vector<Command> registry = commands();
  struct Parsed {
    CLI::App* app;
    ConfigFlags flags;
    std::map<std::string, std::string> inputs;
    std::vector<std::string> runs;
    std::string config_file;
    std::string out;
  };
  std::deque<Parsed> parsed;
  for (const auto& cmd : registry) {
    Parsed& p = parsed.emplace_back();
    p.app = app.add_subcommand(cmd.name, cmd.help);
    for (const auto& input : cmd.inputs) {
      auto* opt = p.app->add_option(flag_name(input.name), p.inputs[input.name], input.help);
      if (input.required) opt->required();
    }
    if (cmd.name == "report") p.app->add_option("runs", p.runs, "run directories")->required();
    if (cmd.flags) cmd.flags(p.app, p.flags);
    if (!cmd.defaults.empty()) p.app->add_option("--config", p.config_file, "JSON config file");
    auto* out = p.app->add_option("--out", p.out, "output directory");
    if (cmd.out_required) out->required();
  }
  auto* replay_app = app.add_subcommand("replay", "re-run a command from its manifest and verify the artifacts");
  std::string manifest_path, replay_out;
  replay_app->add_option("--manifest", manifest_path, "manifest.json of the recorded run")->required();
  replay_app->add_option("--out", replay_out, "output directory (default: the recorded one)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::string msg = e.what();
    for (char& ch : msg)
      if (ch == '\n') ch = ' ';
    std::fprintf(stderr, "error: usage: %s\n", msg.c_str());
    return 2;
  }

  try {
    if (replay_app->parsed()) {
      replay(registry, manifest_path, replay_out);
      return 0;
    }
    for (std::size_t i = 0; i < registry.size(); ++i) {
      Parsed& p = parsed[i];
      if (!p.app->parsed()) continue;
      json config = resolve(registry[i], p.config_file.empty() ? json() : read_json(p.config_file));
      p.flags.apply(config);
      Inputs in;
      for (const auto& [name, value] : p.inputs)
        if (!value.empty()) in[name] = fs::absolute(value);
      for (std::size_t r = 0; r < p.runs.size(); ++r) in["run" + std::to_string(r + 1)] = fs::absolute(p.runs[r]);
      execute(registry[i], config, in, p.out.empty() ? fs::path() : fs::absolute(p.out));
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s: %s\n", e.kind().c_str(), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: internal: %s\n", e.what());
    return 1;
  }
  return 0;
}
