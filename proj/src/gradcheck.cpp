#include "mtlm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "mtlm/error.hpp"
#include "mtlm/rng.hpp"

namespace mtlm {
namespace {

constexpr std::size_t kPerArrayFloor = 8;

double evaluate(const LossFunction& loss_fn, const ParamSet& params) {
  const double loss = loss_fn(params, nullptr);
  if (!std::isfinite(loss)) throw EvaluationError("loss is not finite during gradient check");
  return loss;
}

}  // namespace

GradCheckReport check_gradients(const LossFunction& loss_fn, ParamSet& params, double epsilon,
                                std::size_t min_samples, std::uint64_t seed) {
  if (!(epsilon > 0.0)) throw DomainError("gradient check epsilon must be positive");
  Gradients analytic = params.zeros_like();
  const double base = loss_fn(params, &analytic);
  if (!std::isfinite(base)) throw EvaluationError("loss is not finite during gradient check");

  const std::size_t total = params.total_size();
  CounterRng rng(seed, 0x67726164ull);
  GradCheckReport report;

  for (std::size_t p = 0; p < params.size(); ++p) {
    Matrix& values = params.value(p);
    const std::size_t n = values.size();
    if (n == 0) continue;
    const std::size_t share = (min_samples * n + total - 1) / total;
    const std::size_t take = std::min(n, std::max(kPerArrayFloor, share));
    std::vector<std::size_t> offsets(n);
    std::iota(offsets.begin(), offsets.end(), std::size_t{0});
    for (std::size_t k = 0; k < take; ++k) {
      const std::size_t pick = k + static_cast<std::size_t>(rng.below(n - k));
      std::swap(offsets[k], offsets[pick]);
    }
    offsets.resize(take);
    std::sort(offsets.begin(), offsets.end());

    for (std::size_t offset : offsets) {
      const double original = values[offset];
      values[offset] = original + epsilon;
      const double plus = evaluate(loss_fn, params);
      values[offset] = original - epsilon;
      const double minus = evaluate(loss_fn, params);
      values[offset] = original;

      const double numeric = (plus - minus) / (2.0 * epsilon);
      const double exact = analytic[p][offset];
      const double denom = std::max({std::abs(exact), std::abs(numeric), 1e-8});
      const double rel = std::abs(exact - numeric) / denom;
      ++report.coordinates_checked;
      if (rel > report.max_relative_error || report.worst_parameter.empty()) {
        report.max_relative_error = std::max(report.max_relative_error, rel);
        report.worst_parameter = params.name(p);
        report.worst_offset = offset;
        report.worst_analytic = exact;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace mtlm
