#include "mtlm/rwma.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mtlm/error.hpp"

namespace mtlm {
namespace {

// Raw weights are divided by their maximum once it leaves this band; alpha is
// invariant to a common factor. Entries far below the maximum are floored so
// they stay positive, which the clamp cannot tell apart.
constexpr double kRawRescaleHigh = 1e200;
constexpr double kRawRescaleLow = 1e-200;
constexpr double kRawFloor = 1e-100;

double degradation_rate(const std::deque<double>& window) {
  if (window.size() < 2) return 0.0;
  std::size_t increases = 0;
  for (std::size_t i = 1; i < window.size(); ++i)
    if (window[i] > window[i - 1]) ++increases;
  return static_cast<double>(increases) / static_cast<double>(window.size() - 1);
}

}  // namespace

LossWeights linear_ramp_weights(std::size_t step, std::size_t total_steps) {
  if (total_steps == 0) return {1.0, 1.0, 1.0};
  const double r = static_cast<double>(std::min(step, total_steps)) / static_cast<double>(total_steps);
  return {1.0, r, r};
}

double pearson_rho(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) {
    throw DomainError("pearson_rho length mismatch: " + std::to_string(xs.size()) + " vs " +
                      std::to_string(ys.size()));
  }
  if (xs.size() < 2) throw DomainError("pearson_rho needs at least two points");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double rwma_eta(std::size_t experts, std::size_t horizon) {
  if (experts < 2 || horizon < 1) {
    throw ConfigError("RWMA needs d >= 2 experts and horizon T >= 1 (got d=" + std::to_string(experts) +
                      ", T=" + std::to_string(horizon) + ")");
  }
  return std::sqrt(2.0 * std::log(static_cast<double>(experts)) / static_cast<double>(horizon));
}

void RwmaConfig::validate() const {
  (void)rwma_eta(experts, horizon);
  if (!(clamp_lo > 0.0) || !(clamp_lo <= clamp_hi)) throw ConfigError("RWMA clamp range must satisfy 0 < lo <= hi");
  const double d = static_cast<double>(experts);
  if (clamp_lo * d > 1.0 || clamp_hi * d < 1.0) {
    throw ConfigError("RWMA clamp range cannot hold weights summing to 1 for " + std::to_string(experts) +
                      " experts");
  }
  if (correlation_window < 2) throw ConfigError("RWMA correlation window must be >= 2");
  if (degradation_window < correlation_window) {
    throw ConfigError("RWMA degradation window must cover the correlation window");
  }
}

std::vector<double> clamp_normalize(std::span<const double> raw, double lo, double hi) {
  const double total = std::accumulate(raw.begin(), raw.end(), 0.0);
  std::vector<double> base(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) base[i] = raw[i] / total;

  std::vector<double> out = base;
  std::vector<bool> fixed(raw.size(), false);
  for (std::size_t round = 0; round < raw.size(); ++round) {
    double fixed_mass = 0.0, free_mass = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (fixed[i]) fixed_mass += out[i];
      else free_mass += base[i];
    }
    if (free_mass <= 0.0) break;
    const double scale = (1.0 - fixed_mass) / free_mass;
    bool violated = false;
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (fixed[i]) continue;
      out[i] = base[i] * scale;
      if (out[i] < lo || out[i] > hi) violated = true;
    }
    if (!violated) break;
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (fixed[i]) continue;
      if (out[i] < lo) {
        out[i] = lo;
        fixed[i] = true;
      } else if (out[i] > hi) {
        out[i] = hi;
        fixed[i] = true;
      }
    }
  }
  return out;
}

LossWeights to_loss_weights(std::span<const double> weights) {
  if (weights.size() != 3) throw DimensionError("expected 3 task weights, got " + std::to_string(weights.size()));
  return {weights[0], weights[1], weights[2]};
}

RwmaState::RwmaState(const RwmaConfig& config)
    : config_(config),
      raw_(config.experts, 1.0),
      degradation_(config.experts, 0.0),
      windows_(config.experts) {
  config_.validate();
  eta_ = config_.eta_override > 0.0 ? config_.eta_override : rwma_eta(config_.experts, config_.horizon);
}

std::vector<double> RwmaState::weights() const {
  return clamp_normalize(raw_, config_.clamp_lo, config_.clamp_hi);
}

RwmaState::StepResult RwmaState::step(std::span<const double> step_losses) {
  if (step_losses.size() != config_.experts) {
    throw DimensionError("RWMA step expects " + std::to_string(config_.experts) + " losses, got " +
                         std::to_string(step_losses.size()));
  }
  for (double v : step_losses)
    if (!std::isfinite(v)) throw DomainError("RWMA step loss is not finite");

  ++round_;
  for (std::size_t i = 0; i < config_.experts; ++i) {
    auto& w = windows_[i];
    w.push_back(step_losses[i]);
    if (w.size() > config_.degradation_window) w.pop_front();
    degradation_[i] = degradation_rate(w);
  }

  StepResult result;
  result.correlation.assign(config_.experts, 0.0);
  result.updated.assign(config_.experts, false);
  const std::size_t k = config_.correlation_window;
  if (round_ > k) {
    const auto tail = [k](const std::deque<double>& w) {
      return std::vector<double>(w.end() - static_cast<std::ptrdiff_t>(k), w.end());
    };
    const std::vector<double> lm = tail(windows_[0]);
    bool any = false;
    for (std::size_t i = 0; i < config_.experts; ++i) {
      const double rho = pearson_rho(lm, tail(windows_[i]));
      result.correlation[i] = rho;
      if (rho < 0.0) {
        const double l = degradation_[i];
        raw_[i] *= config_.classical_decay ? std::pow(1.0 - eta_, l) : std::exp((1.0 - eta_) * l);
        result.updated[i] = true;
        any = true;
      }
    }
    const double largest = *std::max_element(raw_.begin(), raw_.end());
    if (any && (largest > kRawRescaleHigh || largest < kRawRescaleLow)) {
      for (double& r : raw_) r = std::max(r / largest, kRawFloor);
    }
  }
  result.weights = weights();
  return result;
}

}  // namespace mtlm
