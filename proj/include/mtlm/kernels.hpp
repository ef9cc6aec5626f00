#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "mtlm/matrix.hpp"

namespace mtlm {

inline constexpr double kProbabilityFloor = 1e-30;
inline constexpr double kLayerNormEpsilon = 1e-5;

Matrix matmul(const Matrix& a, const Matrix& b);

// out += a * b, out += a^T * b, out += a * b^T. Shapes are checked by callers.
void gemm_accumulate(const Matrix& a, const Matrix& b, Matrix& out);
void gemm_at_b_accumulate(const Matrix& a, const Matrix& b, Matrix& out);
void gemm_a_bt_accumulate(const Matrix& a, const Matrix& b, Matrix& out);

Matrix transpose(const Matrix& a);

std::vector<double> softmax(std::span<const double> logits);
void softmax_inplace(std::span<double> values);

// -log(max(probs[target], 1e-30))
double cross_entropy(std::span<const double> probs, std::size_t target);

inline double sigmoid(double x) {
  // Both branches avoid exp overflow.
  if (x >= 0.0) {
    const double z = std::exp(-x);
    return 1.0 / (1.0 + z);
  }
  const double z = std::exp(x);
  return z / (1.0 + z);
}

// Weights of one LSTM layer. Gate blocks are laid out [input | forget | candidate | output]
// along the 4*hidden columns.
struct LstmWeights {
  Matrix input;   // in x 4H
  Matrix hidden;  // H x 4H
  Matrix bias;    // 1 x 4H

  std::size_t input_dim() const { return input.rows(); }
  std::size_t hidden_dim() const { return hidden.rows(); }
};

struct LstmState {
  std::vector<double> h;
  std::vector<double> c;
};

// Activated gate values of one step, kept for backpropagation.
struct LstmGates {
  std::vector<double> input, forget, candidate, output;
};

LstmState lstm_step(std::span<const double> x, std::span<const double> h_prev,
                    std::span<const double> c_prev, const LstmWeights& weights,
                    LstmGates* gates = nullptr);

std::vector<double> layer_norm(std::span<const double> x, std::span<const double> gain,
                               std::span<const double> bias);

}  // namespace mtlm
