#pragma once

#include <cstddef>
#include <deque>
#include <span>
#include <vector>

namespace mtlm {

// Weight coefficients of the combined loss alpha_LM*L_LM + alpha_ID*L_ID + alpha_SF*L_SF.
struct LossWeights {
  double lm = 1.0;
  double intent = 0.0;
  double slot = 0.0;

  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

// alpha_LM = 1, alpha_ID = alpha_SF = step / total_steps.
LossWeights linear_ramp_weights(std::size_t step, std::size_t total_steps);

// Pearson correlation; 0 when either series has zero variance.
double pearson_rho(std::span<const double> xs, std::span<const double> ys);

struct RwmaConfig {
  std::size_t experts = 3;
  std::size_t horizon = 50;  // step-wise evaluations per epoch
  double clamp_lo = 0.2;
  double clamp_hi = 0.6;
  std::size_t degradation_window = 1000;
  std::size_t correlation_window = 10;
  // Multiply by (1 - eta)^l instead of exp((1 - eta) l).
  bool classical_decay = false;
  // Overrides sqrt(2 ln(d) / T) when positive.
  double eta_override = 0.0;

  void validate() const;
};

// Randomized weighted majority over the task-loss experts. Expert 0 is the
// LM loss; the trigger correlates every expert's step-loss series with it.
class RwmaState {
 public:
  explicit RwmaState(const RwmaConfig& config = {});

  struct StepResult {
    std::vector<double> weights;      // normalized and clamped
    std::vector<double> correlation;  // rho per expert, 0 while the trigger is inactive
    std::vector<bool> updated;        // whether the multiplicative rule fired
  };

  StepResult step(std::span<const double> step_losses);

  const RwmaConfig& config() const noexcept { return config_; }
  double eta() const noexcept { return eta_; }
  std::size_t round() const noexcept { return round_; }
  const std::vector<double>& raw_weights() const noexcept { return raw_; }
  const std::vector<double>& degradation() const noexcept { return degradation_; }
  // Current normalized + clamped weights.
  std::vector<double> weights() const;

 private:
  RwmaConfig config_;
  double eta_ = 0.0;
  std::size_t round_ = 0;
  std::vector<double> raw_;
  std::vector<double> degradation_;
  std::vector<std::deque<double>> windows_;
};

double rwma_eta(std::size_t experts, std::size_t horizon);

// Normalizes `raw` to sum 1, then moves entries outside [lo, hi] onto the
// bound and rescales the remaining free entries, for at most `experts` rounds.
std::vector<double> clamp_normalize(std::span<const double> raw, double lo, double hi);

LossWeights to_loss_weights(std::span<const double> weights);

}  // namespace mtlm
