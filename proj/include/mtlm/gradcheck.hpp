#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>

#include "mtlm/tape.hpp"

namespace mtlm {

// Evaluates the loss at the current parameter values. When `grads` is non-null
// it must also fill it with the analytic gradient (shaped like the ParamSet).
using LossFunction = std::function<double(const ParamSet&, Gradients* grads)>;

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t coordinates_checked = 0;
  std::string worst_parameter;
  std::size_t worst_offset = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Compares the analytic gradient with central finite differences on a seeded
// subsample of coordinates (every array contributes; at least `min_samples`
// coordinates overall, or all of them when fewer exist). The relative error
// uses max(|g|, |g_fd|, 1e-8) as denominator. `params` is restored on return.
GradCheckReport check_gradients(const LossFunction& loss_fn, ParamSet& params,
                                double epsilon = 1e-5, std::size_t min_samples = 200,
                                std::uint64_t seed = 0);

}  // namespace mtlm
