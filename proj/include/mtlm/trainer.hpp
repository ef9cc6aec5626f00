#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mtlm/model.hpp"
#include "mtlm/rwma.hpp"

namespace mtlm {

enum class ScheduleMode { Fixed, LinearRamp, Rwma };

std::string_view to_string(ScheduleMode mode);
ScheduleMode parse_schedule_mode(std::string_view name);

struct TrainConfig {
  double learning_rate = 0.5;
  std::size_t batch_size = 8;
  std::size_t epochs = 20;
  std::uint64_t seed = 1;
  ScheduleMode mode = ScheduleMode::Fixed;
  LossWeights fixed_weights{1.0, 0.0, 0.0};
  // Step-wise evaluations per epoch (RWMA updates).
  std::size_t evaluations_per_epoch = 50;
  double clip_norm = 5.0;
  double momentum = 0.0;
  // Restore the parameters of the trained epoch with the lowest validation PPL.
  bool keep_best = false;
  RwmaConfig rwma;

  void validate() const;
};

struct TaskLosses {
  double lm = 0.0;
  double intent = 0.0;
  double slot = 0.0;
};

// alpha_LM * L_LM + alpha_ID * L_ID + alpha_SF * L_SF over one batch, each
// task loss averaged over the batch. Tasks with zero weight need no
// annotations; their losses are reported in `parts` when annotations exist.
double total_loss(const MultiTaskModel& model, std::span<const EncodedUtterance> batch,
                  const LossWeights& weights, Gradients* grads = nullptr, TaskLosses* parts = nullptr);

struct EpochRecord {
  std::size_t epoch = 0;
  TaskLosses losses;  // mean per-batch task losses over the epoch
  LossWeights weights;  // weights in effect at the end of the epoch
  double valid_ppl = 0.0;
};

struct WeightUpdate {
  std::size_t epoch = 0;
  std::size_t evaluation = 0;
  std::size_t step = 0;  // global optimizer step at which it happened
  TaskLosses step_losses;
  LossWeights weights;
  std::vector<double> raw_weights;
  std::vector<bool> updated;
};

struct TrainLog {
  double initial_valid_ppl = 0.0;
  std::vector<EpochRecord> epochs;
  // Epoch whose parameters the model holds on return (0 only when no epoch ran) and its PPL.
  std::size_t best_epoch = 0;
  double best_valid_ppl = 0.0;
  std::vector<WeightUpdate> updates;
};

// Minibatch SGD with global-norm clipping. Throws DivergenceError when a
// loss becomes non-finite.
TrainLog train(MultiTaskModel& model, std::span<const EncodedUtterance> corpus,
               std::span<const EncodedUtterance> valid, const TrainConfig& config);

struct PretrainFinetuneLog {
  TrainLog pretrain;
  TrainLog finetune;
};

// Stage 1: LM loss only on transcriptions. Stage 2: fresh NLU heads, then
// multi-task training (config.mode of `finetune`) on the annotated corpus.
PretrainFinetuneLog pretrain_finetune(MultiTaskModel& model, std::span<const EncodedUtterance> transcriptions,
                                      std::span<const EncodedUtterance> annotated,
                                      std::span<const EncodedUtterance> valid, const TrainConfig& pretrain,
                                      const TrainConfig& finetune);

// Tab-separated per-epoch metrics:
// epoch, L_LM, L_ID, L_SF, alpha_LM, alpha_ID, alpha_SF, valid_ppl
void write_metrics_tsv(std::ostream& out, const TrainLog& log);
std::vector<EpochRecord> read_metrics_tsv(std::istream& in);
// One line per step-wise weight evaluation.
void write_weight_log_tsv(std::ostream& out, const TrainLog& log);

}  // namespace mtlm
