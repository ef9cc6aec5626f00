#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mtlm/matrix.hpp"

namespace mtlm {

// Ordered collection of named trainable arrays.
class ParamSet {
 public:
  std::size_t add(std::string name, Matrix init);

  std::size_t size() const noexcept { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  Matrix& value(std::size_t i) { return values_.at(i); }
  const Matrix& value(std::size_t i) const { return values_.at(i); }

  // Throws IndexError when absent.
  std::size_t index(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t total_size() const;
  bool all_finite() const;

  // Zero-filled arrays with the same shapes, in the same order.
  std::vector<Matrix> zeros_like() const;
  const std::vector<Matrix>& values() const noexcept { return values_; }
  // Replaces every array; shapes must match.
  void set_values(std::vector<Matrix> values);

  friend bool operator==(const ParamSet&, const ParamSet&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
  std::unordered_map<std::string, std::size_t> lookup_;
};

using Gradients = std::vector<Matrix>;

double global_norm(const Gradients& grads);

// Handle to a node recorded on a GradTape.
struct Var {
  std::size_t id = 0;
};

// Reverse-mode tape. Operations are recorded in execution order; backward()
// walks them in reverse, calling each node's gradient routine once.
// A tape is single-owner; parameters are bound by reference and must outlive it.
class GradTape {
 public:
  GradTape() = default;
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  Var parameter(const ParamSet& params, std::size_t index);
  Var constant(Matrix value);

  Var matmul(Var a, Var b);
  Var transpose(Var a);
  // Same shape, or b is 1 x n and is broadcast over the rows of a.
  Var add(Var a, Var b);
  Var scale(Var a, double factor);
  Var tanh(Var a);
  Var gather_rows(Var table, std::vector<std::size_t> ids);
  Var slice_rows(Var a, std::size_t begin, std::size_t end);
  Var softmax_rows(Var a);
  Var layer_norm_rows(Var x, Var gain, Var bias);
  // Runs a full LSTM layer over the rows of `inputs` from zero state; returns T x H.
  Var lstm_layer(Var inputs, Var w_input, Var w_hidden, Var bias);
  // Sum over rows of -log softmax(logits[r])[targets[r]], as a 1 x 1 value.
  Var softmax_cross_entropy(Var logits, std::vector<std::size_t> targets);
  // Sum of 1 x 1 values.
  Var sum(std::span<const Var> scalars);

  const Matrix& value(Var v) const;
  double scalar(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 and returns gradients shaped like `params`.
  Gradients backward(Var loss, const ParamSet& params);

 private:
  struct Node {
    Matrix value;
    const Matrix* bound = nullptr;  // parameter leaves point into a ParamSet
    std::ptrdiff_t param = -1;
    Matrix grad;
    bool has_grad = false;
    std::function<void(GradTape&, std::size_t)> backward;
  };

  Var push(Matrix value, std::function<void(GradTape&, std::size_t)> backward);
  Matrix& grad(std::size_t id);
  const Matrix& val(std::size_t id) const;

  std::vector<Node> nodes_;
  const ParamSet* bound_params_ = nullptr;
  std::unordered_map<std::size_t, std::size_t> param_nodes_;
};

}  // namespace mtlm
