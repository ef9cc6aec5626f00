#include "mtlm/trainer.hpp"

#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "mtlm/error.hpp"
#include "mtlm/format.hpp"

namespace mtlm {
namespace {

bool needs_annotations(const LossWeights& w) { return w.intent != 0.0 || w.slot != 0.0; }

void require_annotations(std::span<const EncodedUtterance> corpus) {
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (!corpus[i].intent) {
      throw DataError("multi-task training needs intent and slot annotations; utterance " +
                      std::to_string(i) + " has none");
    }
  }
}

std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  CounterRng rng = CounterRng(seed, 0x73687566ull).split(epoch);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

double validation_ppl(const MultiTaskModel& model, std::span<const EncodedUtterance> valid) {
  if (valid.empty()) return std::nan("");
  return model.perplexity(valid);
}

}  // namespace

std::string_view to_string(ScheduleMode mode) {
  switch (mode) {
    case ScheduleMode::Fixed: return "fixed";
    case ScheduleMode::LinearRamp: return "linear_ramp";
    case ScheduleMode::Rwma: return "rwma";
  }
  return "unknown";
}

ScheduleMode parse_schedule_mode(std::string_view name) {
  if (name == "fixed") return ScheduleMode::Fixed;
  if (name == "linear_ramp") return ScheduleMode::LinearRamp;
  if (name == "rwma") return ScheduleMode::Rwma;
  throw ConfigError("unknown schedule mode '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (!(clip_norm > 0.0)) throw ConfigError("clip norm must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0, 1)");
  if (mode == ScheduleMode::Rwma) {
    rwma.validate();
    if (rwma.experts != 3) throw ConfigError("RWMA over the task losses needs exactly 3 experts");
  }
  if (evaluations_per_epoch == 0) throw ConfigError("evaluations per epoch must be positive");
  if (fixed_weights.lm < 0.0 || fixed_weights.intent < 0.0 || fixed_weights.slot < 0.0) {
    throw ConfigError("loss weights must be nonnegative");
  }
}

double total_loss(const MultiTaskModel& model, std::span<const EncodedUtterance> batch,
                  const LossWeights& weights, Gradients* grads, TaskLosses* parts) {
  if (batch.empty()) throw DomainError("total_loss of an empty batch");
  const ParamSet& params = model.params();
  GradTape tape;
  std::vector<Var> lm_terms, id_terms, sf_terms;
  const bool want_id = weights.intent != 0.0;
  const bool want_sf = weights.slot != 0.0;
  for (const auto& utt : batch) {
    if ((want_id || want_sf) && !utt.intent) throw DataError("utterance lacks annotations required by a nonzero task weight");
    const Var states = model.backbone().encode(tape, params, utt.tokens);
    lm_terms.push_back(model.backbone().sequence_loss(tape, params, utt.tokens, states));
    if (utt.intent) {
      const Var aligned = token_aligned_states(tape, states);
      id_terms.push_back(intent_term(tape, params, model.intent_head(), aligned, utt));
      sf_terms.push_back(slot_term(tape, params, model.slot_head(), aligned, utt));
    }
  }
  const double inv_m = 1.0 / static_cast<double>(batch.size());
  const Var lm = tape.scale(tape.sum(lm_terms), inv_m);
  std::vector<Var> weighted{tape.scale(lm, weights.lm)};
  TaskLosses losses{tape.scalar(lm), std::nan(""), std::nan("")};
  if (!id_terms.empty()) {
    const double inv_annotated = 1.0 / static_cast<double>(id_terms.size());
    const Var id = tape.scale(tape.sum(id_terms), inv_annotated);
    const Var sf = tape.scale(tape.sum(sf_terms), inv_annotated);
    losses.intent = tape.scalar(id);
    losses.slot = tape.scalar(sf);
    if (want_id) weighted.push_back(tape.scale(id, weights.intent));
    if (want_sf) weighted.push_back(tape.scale(sf, weights.slot));
  }
  const Var loss = tape.sum(weighted);
  if (parts) *parts = losses;
  const double value = tape.scalar(loss);
  if (grads) {
    if (!std::isfinite(value)) throw DivergenceError("non-finite training loss");
    *grads = tape.backward(loss, params);
  }
  return value;
}

TrainLog train(MultiTaskModel& model, std::span<const EncodedUtterance> corpus,
               std::span<const EncodedUtterance> valid, const TrainConfig& config) {
  config.validate();
  if (corpus.empty()) throw DomainError("training corpus is empty");
  if (config.mode != ScheduleMode::Fixed || needs_annotations(config.fixed_weights)) require_annotations(corpus);

  const std::size_t n = corpus.size();
  const std::size_t batches = (n + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = batches * config.epochs;
  const std::size_t evals = config.evaluations_per_epoch;

  RwmaState rwma(config.mode == ScheduleMode::Rwma ? config.rwma : RwmaConfig{});
  LossWeights weights = config.fixed_weights;
  if (config.mode == ScheduleMode::Rwma) weights = to_loss_weights(rwma.weights());

  ParamSet& params = model.params();
  std::vector<Matrix> velocity;
  if (config.momentum > 0.0) velocity = params.zeros_like();

  TrainLog log;
  log.initial_valid_ppl = validation_ppl(model, valid);
  log.best_valid_ppl = log.initial_valid_ppl;
  const bool track_best = config.keep_best && !valid.empty();
  std::vector<Matrix> best_values;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = shuffled_order(n, config.seed, epoch);
    TaskLosses epoch_sum, window_sum;
    std::size_t window_batches = 0, evaluation = 0;
    std::vector<EncodedUtterance> batch;
    for (std::size_t b = 0; b < batches; ++b, ++step) {
      if (config.mode == ScheduleMode::LinearRamp) weights = linear_ramp_weights(step, total_steps);

      batch.clear();
      const std::size_t end = std::min(n, (b + 1) * config.batch_size);
      for (std::size_t i = b * config.batch_size; i < end; ++i) batch.push_back(corpus[order[i]]);

      Gradients grads;
      TaskLosses parts;
      const double loss = total_loss(model, batch, weights, &grads, &parts);
      if (!std::isfinite(loss)) {
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch + 1) + ", step " +
                              std::to_string(step) + " (loss " + format_number(loss) + ")");
      }
      const double norm = global_norm(grads);
      const double clip = norm > config.clip_norm ? config.clip_norm / norm : 1.0;
      for (std::size_t p = 0; p < params.size(); ++p) {
        auto value = params.value(p).data();
        const auto g = grads[p].data();
        if (config.momentum > 0.0) {
          auto v = velocity[p].data();
          for (std::size_t k = 0; k < value.size(); ++k) {
            v[k] = config.momentum * v[k] + clip * g[k];
            value[k] -= config.learning_rate * v[k];
          }
        } else {
          for (std::size_t k = 0; k < value.size(); ++k) value[k] -= config.learning_rate * clip * g[k];
        }
      }

      epoch_sum.lm += parts.lm;
      epoch_sum.intent += parts.intent;
      epoch_sum.slot += parts.slot;
      window_sum.lm += parts.lm;
      window_sum.intent += parts.intent;
      window_sum.slot += parts.slot;
      ++window_batches;

      const bool evaluate = (b + 1) * evals / batches > b * evals / batches;
      if (evaluate && config.mode == ScheduleMode::Rwma) {
        const double inv = 1.0 / static_cast<double>(window_batches);
        const TaskLosses avg{window_sum.lm * inv, window_sum.intent * inv, window_sum.slot * inv};
        const double step_losses[3] = {avg.lm, avg.intent, avg.slot};
        const auto result = rwma.step(step_losses);
        weights = to_loss_weights(result.weights);
        log.updates.push_back({epoch + 1, ++evaluation, step + 1, avg, weights, rwma.raw_weights(), result.updated});
      }
      if (evaluate) {
        window_sum = {};
        window_batches = 0;
      }
    }
    if (!params.all_finite()) {
      throw DivergenceError("parameters became non-finite during epoch " + std::to_string(epoch + 1));
    }
    const double inv = 1.0 / static_cast<double>(batches);
    log.epochs.push_back({epoch + 1,
                          {epoch_sum.lm * inv, epoch_sum.intent * inv, epoch_sum.slot * inv},
                          weights,
                          validation_ppl(model, valid)});
    const double ppl = log.epochs.back().valid_ppl;
    if (!track_best) {
      log.best_epoch = epoch + 1;
      log.best_valid_ppl = ppl;
    } else if (epoch == 0 || ppl < log.best_valid_ppl) {
      log.best_epoch = epoch + 1;
      log.best_valid_ppl = ppl;
      best_values = params.values();
    }
  }
  if (track_best && log.best_epoch != config.epochs) params.set_values(std::move(best_values));
  return log;
}

PretrainFinetuneLog pretrain_finetune(MultiTaskModel& model, std::span<const EncodedUtterance> transcriptions,
                                      std::span<const EncodedUtterance> annotated,
                                      std::span<const EncodedUtterance> valid, const TrainConfig& pretrain,
                                      const TrainConfig& finetune) {
  TrainConfig stage1 = pretrain;
  stage1.mode = ScheduleMode::Fixed;
  stage1.fixed_weights = {1.0, 0.0, 0.0};
  PretrainFinetuneLog log;
  log.pretrain = train(model, transcriptions, valid, stage1);
  model.reset_heads(finetune.seed ^ 0x66696E65ull);
  log.finetune = train(model, annotated, valid, finetune);
  return log;
}

void write_metrics_tsv(std::ostream& out, const TrainLog& log) {
  out << "epoch\tL_LM\tL_ID\tL_SF\talpha_LM\talpha_ID\talpha_SF\tvalid_ppl\n";
  for (const auto& e : log.epochs) {
    out << e.epoch << '\t' << format_number(e.losses.lm) << '\t' << format_number(e.losses.intent) << '\t'
        << format_number(e.losses.slot) << '\t' << format_number(e.weights.lm) << '\t'
        << format_number(e.weights.intent) << '\t' << format_number(e.weights.slot) << '\t'
        << format_number(e.valid_ppl) << '\n';
  }
}

std::vector<EpochRecord> read_metrics_tsv(std::istream& in) {
  std::vector<EpochRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, '\t')) fields.push_back(f);
    if (fields.size() != 8) {
      throw ParseError("metrics line " + std::to_string(line_no) + ": expected 8 fields, got " +
                       std::to_string(fields.size()));
    }
    try {
      EpochRecord r;
      r.epoch = static_cast<std::size_t>(std::stoul(fields[0]));
      r.losses = {parse_number(fields[1]), parse_number(fields[2]), parse_number(fields[3])};
      r.weights = {parse_number(fields[4]), parse_number(fields[5]), parse_number(fields[6])};
      r.valid_ppl = parse_number(fields[7]);
      out.push_back(r);
    } catch (const std::exception& e) {
      throw ParseError("metrics line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_weight_log_tsv(std::ostream& out, const TrainLog& log) {
  out << "epoch\tevaluation\tstep\tL_LM\tL_ID\tL_SF\talpha_LM\talpha_ID\talpha_SF\tupdated\n";
  for (const auto& u : log.updates) {
    std::string flags;
    for (bool b : u.updated) flags.push_back(b ? '1' : '0');
    out << u.epoch << '\t' << u.evaluation << '\t' << u.step << '\t' << format_number(u.step_losses.lm) << '\t'
        << format_number(u.step_losses.intent) << '\t' << format_number(u.step_losses.slot) << '\t'
        << format_number(u.weights.lm) << '\t' << format_number(u.weights.intent) << '\t'
        << format_number(u.weights.slot) << '\t' << flags << '\n';
  }
}

}  // namespace mtlm
