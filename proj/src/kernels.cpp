#include "mtlm/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mtlm/error.hpp"

namespace mtlm {

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul shape mismatch: " + a.shape_string() + " x " + b.shape_string());
  }
  Matrix out(a.rows(), b.cols());
  gemm_accumulate(a, b, out);
  return out;
}

void gemm_accumulate(const Matrix& a, const Matrix& b, Matrix& out) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    double* orow = po + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const double* brow = pb + p * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
}

void gemm_at_b_accumulate(const Matrix& a, const Matrix& b, Matrix& out) {
  // a: k x n, b: k x m, out: n x m
  const std::size_t k = a.rows(), n = a.cols(), m = b.cols();
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = pb + p * m;
    for (std::size_t i = 0; i < n; ++i) {
      const double av = pa[p * n + i];
      if (av == 0.0) continue;
      double* orow = po + i * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
}

void gemm_a_bt_accumulate(const Matrix& a, const Matrix& b, Matrix& out) {
  // a: n x k, b: m x k, out: n x m
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = pa + i * k;
    for (std::size_t j = 0; j < m; ++j) {
      const double* brow = pb + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      po[i * m + j] += acc;
    }
  }
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

void softmax_inplace(std::span<double> values) {
  if (values.empty()) throw DomainError("softmax of an empty vector");
  const double max = *std::max_element(values.begin(), values.end());
  double total = 0.0;
  for (double& v : values) {
    v = std::exp(v - max);
    total += v;
  }
  for (double& v : values) v /= total;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.begin(), logits.end());
  softmax_inplace(out);
  return out;
}

double cross_entropy(std::span<const double> probs, std::size_t target) {
  if (target >= probs.size()) {
    throw IndexError("cross-entropy target " + std::to_string(target) + " out of range for " +
                     std::to_string(probs.size()) + " classes");
  }
  return -std::log(std::max(probs[target], kProbabilityFloor));
}

LstmState lstm_step(std::span<const double> x, std::span<const double> h_prev,
                    std::span<const double> c_prev, const LstmWeights& w, LstmGates* gates) {
  const std::size_t hidden = w.hidden_dim();
  if (x.size() != w.input_dim() || h_prev.size() != hidden || c_prev.size() != hidden ||
      w.input.cols() != 4 * hidden || w.hidden.cols() != 4 * hidden ||
      w.bias.rows() != 1 || w.bias.cols() != 4 * hidden) {
    throw DimensionError("lstm_step: input " + std::to_string(x.size()) + ", state " +
                         std::to_string(h_prev.size()) + "/" + std::to_string(c_prev.size()) +
                         " inconsistent with weights " + w.input.shape_string() + ", " +
                         w.hidden.shape_string() + ", " + w.bias.shape_string());
  }
  std::vector<double> z(w.bias.data().begin(), w.bias.data().end());
  for (std::size_t p = 0; p < x.size(); ++p) {
    const double xv = x[p];
    if (xv == 0.0) continue;
    const auto row = w.input.row(p);
    for (std::size_t j = 0; j < z.size(); ++j) z[j] += xv * row[j];
  }
  for (std::size_t p = 0; p < hidden; ++p) {
    const double hv = h_prev[p];
    if (hv == 0.0) continue;
    const auto row = w.hidden.row(p);
    for (std::size_t j = 0; j < z.size(); ++j) z[j] += hv * row[j];
  }

  LstmState out{std::vector<double>(hidden), std::vector<double>(hidden)};
  if (gates) {
    gates->input.resize(hidden);
    gates->forget.resize(hidden);
    gates->candidate.resize(hidden);
    gates->output.resize(hidden);
  }
  for (std::size_t j = 0; j < hidden; ++j) {
    const double i = sigmoid(z[j]);
    const double f = sigmoid(z[hidden + j]);
    const double g = std::tanh(z[2 * hidden + j]);
    const double o = sigmoid(z[3 * hidden + j]);
    out.c[j] = f * c_prev[j] + i * g;
    out.h[j] = o * std::tanh(out.c[j]);
    if (gates) {
      gates->input[j] = i;
      gates->forget[j] = f;
      gates->candidate[j] = g;
      gates->output[j] = o;
    }
  }
  return out;
}

std::vector<double> layer_norm(std::span<const double> x, std::span<const double> gain,
                               std::span<const double> bias) {
  if (x.empty() || gain.size() != x.size() || bias.size() != x.size()) {
    throw DimensionError("layer_norm: input " + std::to_string(x.size()) + ", gain " +
                         std::to_string(gain.size()) + ", bias " + std::to_string(bias.size()));
  }
  const double n = static_cast<double>(x.size());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  const double inv_std = 1.0 / std::sqrt(var + kLayerNormEpsilon);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = gain[i] * (x[i] - mean) * inv_std + bias[i];
  return out;
}

}  // namespace mtlm
