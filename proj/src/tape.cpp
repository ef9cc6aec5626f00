#include "mtlm/tape.hpp"

#include <algorithm>
#include <cmath>

#include "mtlm/error.hpp"
#include "mtlm/kernels.hpp"

namespace mtlm {

std::size_t ParamSet::add(std::string name, Matrix init) {
  if (lookup_.contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  const std::size_t idx = values_.size();
  lookup_.emplace(name, idx);
  names_.push_back(std::move(name));
  values_.push_back(std::move(init));
  return idx;
}

std::size_t ParamSet::index(std::string_view name) const {
  const auto it = lookup_.find(std::string(name));
  if (it == lookup_.end()) throw IndexError("no parameter named '" + std::string(name) + "'");
  return it->second;
}

bool ParamSet::contains(std::string_view name) const {
  return lookup_.contains(std::string(name));
}

std::size_t ParamSet::total_size() const {
  std::size_t n = 0;
  for (const auto& m : values_) n += m.size();
  return n;
}

bool ParamSet::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](const Matrix& m) { return m.all_finite(); });
}

std::vector<Matrix> ParamSet::zeros_like() const {
  std::vector<Matrix> out;
  out.reserve(values_.size());
  for (const auto& m : values_) out.emplace_back(m.rows(), m.cols());
  return out;
}

void ParamSet::set_values(std::vector<Matrix> values) {
  if (values.size() != values_.size()) {
    throw DimensionError("expected " + std::to_string(values_.size()) + " arrays, got " +
                         std::to_string(values.size()));
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].rows() != values_[i].rows() || values[i].cols() != values_[i].cols()) {
      throw DimensionError("parameter '" + names_[i] + "' has shape " + values_[i].shape_string() +
                           ", got " + values[i].shape_string());
    }
  }
  values_ = std::move(values);
}

double global_norm(const Gradients& grads) {
  double total = 0.0;
  for (const auto& g : grads)
    for (double v : g.data()) total += v * v;
  return std::sqrt(total);
}

// ---------------------------------------------------------------------------

Var GradTape::push(Matrix value, std::function<void(GradTape&, std::size_t)> backward) {
  Node node;
  node.value = std::move(value);
  node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

const Matrix& GradTape::val(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.bound ? *n.bound : n.value;
}

const Matrix& GradTape::value(Var v) const {
  if (v.id >= nodes_.size()) throw IndexError("tape variable out of range");
  return val(v.id);
}

double GradTape::scalar(Var v) const {
  const Matrix& m = value(v);
  if (m.size() != 1) throw DimensionError("expected a scalar, got " + m.shape_string());
  return m[0];
}

Matrix& GradTape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    const Matrix& v = val(id);
    n.grad = Matrix(v.rows(), v.cols());
    n.has_grad = true;
  }
  return n.grad;
}

Var GradTape::parameter(const ParamSet& params, std::size_t index) {
  if (bound_params_ && bound_params_ != &params) {
    throw ConfigError("a tape can bind parameters from a single ParamSet");
  }
  bound_params_ = &params;
  if (auto it = param_nodes_.find(index); it != param_nodes_.end()) return Var{it->second};
  Node node;
  node.bound = &params.value(index);
  node.param = static_cast<std::ptrdiff_t>(index);
  nodes_.push_back(std::move(node));
  param_nodes_.emplace(index, nodes_.size() - 1);
  return Var{nodes_.size() - 1};
}

Var GradTape::constant(Matrix value) { return push(std::move(value), nullptr); }

Var GradTape::matmul(Var a, Var b) {
  const Matrix& av = val(a.id);
  const Matrix& bv = val(b.id);
  Matrix out = mtlm::matmul(av, bv);
  return push(std::move(out), [a, b](GradTape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    gemm_a_bt_accumulate(g, t.val(b.id), t.grad(a.id));
    gemm_at_b_accumulate(t.val(a.id), g, t.grad(b.id));
  });
}

Var GradTape::transpose(Var a) {
  return push(mtlm::transpose(val(a.id)), [a](GradTape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    Matrix& ga = t.grad(a.id);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) ga(j, i) += g(i, j);
  });
}

Var GradTape::add(Var a, Var b) {
  const Matrix& av = val(a.id);
  const Matrix& bv = val(b.id);
  const bool broadcast = !av.same_shape(bv);
  if (broadcast && !(bv.rows() == 1 && bv.cols() == av.cols())) {
    throw DimensionError("add shape mismatch: " + av.shape_string() + " + " + bv.shape_string());
  }
  Matrix out = av;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    const auto brow = bv.row(broadcast ? 0 : i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += brow[j];
  }
  return push(std::move(out), [a, b, broadcast](GradTape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    Matrix& ga = t.grad(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    Matrix& gb = t.grad(b.id);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      const auto grow = g.row(i);
      auto brow = gb.row(broadcast ? 0 : i);
      for (std::size_t j = 0; j < grow.size(); ++j) brow[j] += grow[j];
    }
  });
}

Var GradTape::scale(Var a, double factor) {
  Matrix out = val(a.id);
  for (double& v : out.data()) v *= factor;
  return push(std::move(out), [a, factor](GradTape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    Matrix& ga = t.grad(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += factor * g[i];
  });
}

Var GradTape::tanh(Var a) {
  Matrix out = val(a.id);
  for (double& v : out.data()) v = std::tanh(v);
  return push(std::move(out), [a](GradTape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    const Matrix& y = t.nodes_[self].value;
    Matrix& ga = t.grad(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var GradTape::gather_rows(Var table, std::vector<std::size_t> ids) {
  const Matrix& tv = val(table.id);
  Matrix out(ids.size(), tv.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= tv.rows()) {
      throw IndexError("row id " + std::to_string(ids[r]) + " out of range for table " +
                       tv.shape_string());
    }
    std::copy(tv.row(ids[r]).begin(), tv.row(ids[r]).end(), out.row(r).begin());
  }
  return push(std::move(out), [table, ids = std::move(ids)](GradTape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    Matrix& gt = t.grad(table.id);
    for (std::size_t r = 0; r < ids.size(); ++r) {
      auto dst = gt.row(ids[r]);
      const auto src = g.row(r);
      for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
    }
  });
}

Var GradTape::slice_rows(Var a, std::size_t begin, std::size_t end) {
  const Matrix& av = val(a.id);
  if (begin > end || end > av.rows()) {
    throw IndexError("row slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of range for " + av.shape_string());
  }
  Matrix out(end - begin, av.cols());
  std::copy(av.data().begin() + static_cast<std::ptrdiff_t>(begin * av.cols()),
            av.data().begin() + static_cast<std::ptrdiff_t>(end * av.cols()), out.data().begin());
  return push(std::move(out), [a, begin](GradTape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    Matrix& ga = t.grad(a.id);
    const std::size_t offset = begin * g.cols();
    for (std::size_t i = 0; i < g.size(); ++i) ga[offset + i] += g[i];
  });
}

Var GradTape::softmax_rows(Var a) {
  Matrix out = val(a.id);
  for (std::size_t r = 0; r < out.rows(); ++r) softmax_inplace(out.row(r));
  return push(std::move(out), [a](GradTape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    const Matrix& p = t.nodes_[self].value;
    Matrix& ga = t.grad(a.id);
    for (std::size_t r = 0; r < p.rows(); ++r) {
      const auto pr = p.row(r);
      const auto gr = g.row(r);
      double dot = 0.0;
      for (std::size_t j = 0; j < pr.size(); ++j) dot += pr[j] * gr[j];
      auto dst = ga.row(r);
      for (std::size_t j = 0; j < pr.size(); ++j) dst[j] += pr[j] * (gr[j] - dot);
    }
  });
}

Var GradTape::layer_norm_rows(Var x, Var gain, Var bias) {
  const Matrix& xv = val(x.id);
  const Matrix& gv = val(gain.id);
  const Matrix& bv = val(bias.id);
  const std::size_t n = xv.cols();
  if (gv.rows() != 1 || gv.cols() != n || bv.rows() != 1 || bv.cols() != n) {
    throw DimensionError("layer_norm shape mismatch: input " + xv.shape_string() + ", gain " +
                         gv.shape_string() + ", bias " + bv.shape_string());
  }
  Matrix normalized(xv.rows(), n);
  std::vector<double> inv_std(xv.rows());
  Matrix out(xv.rows(), n);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    const auto row = xv.row(r);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + kLayerNormEpsilon);
    for (std::size_t j = 0; j < n; ++j) {
      normalized(r, j) = (row[j] - mean) * inv_std[r];
      out(r, j) = gv[j] * normalized(r, j) + bv[j];
    }
  }
  return push(std::move(out), [x, gain, bias, normalized = std::move(normalized),
                               inv_std = std::move(inv_std)](GradTape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    const Matrix& gv = t.val(gain.id);
    Matrix& gx = t.grad(x.id);
    Matrix& ggain = t.grad(gain.id);
    Matrix& gbias = t.grad(bias.id);
    const std::size_t n = g.cols();
    std::vector<double> dxhat(n);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      double mean_d = 0.0, mean_dx = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        ggain[j] += g(r, j) * normalized(r, j);
        gbias[j] += g(r, j);
        dxhat[j] = g(r, j) * gv[j];
        mean_d += dxhat[j];
        mean_dx += dxhat[j] * normalized(r, j);
      }
      mean_d /= static_cast<double>(n);
      mean_dx /= static_cast<double>(n);
      for (std::size_t j = 0; j < n; ++j)
        gx(r, j) += inv_std[r] * (dxhat[j] - mean_d - normalized(r, j) * mean_dx);
    }
  });
}

Var GradTape::lstm_layer(Var inputs, Var w_input, Var w_hidden, Var bias) {
  const Matrix& x = val(inputs.id);
  LstmWeights weights{val(w_input.id), val(w_hidden.id), val(bias.id)};
  const std::size_t steps = x.rows();
  const std::size_t hidden = weights.hidden_dim();
  if (x.cols() != weights.input_dim()) {
    throw DimensionError("lstm layer input " + x.shape_string() + " does not match weights " +
                         weights.input.shape_string());
  }
  Matrix h_all(steps, hidden), c_all(steps, hidden);
  Matrix gi(steps, hidden), gf(steps, hidden), gg(steps, hidden), go(steps, hidden);
  std::vector<double> h(hidden, 0.0), c(hidden, 0.0);
  LstmGates gates;
  for (std::size_t step = 0; step < steps; ++step) {
    LstmState next = lstm_step(x.row(step), h, c, weights, &gates);
    h = std::move(next.h);
    c = std::move(next.c);
    std::copy(h.begin(), h.end(), h_all.row(step).begin());
    std::copy(c.begin(), c.end(), c_all.row(step).begin());
    std::copy(gates.input.begin(), gates.input.end(), gi.row(step).begin());
    std::copy(gates.forget.begin(), gates.forget.end(), gf.row(step).begin());
    std::copy(gates.candidate.begin(), gates.candidate.end(), gg.row(step).begin());
    std::copy(gates.output.begin(), gates.output.end(), go.row(step).begin());
  }
  return push(std::move(h_all),
              [inputs, w_input, w_hidden, bias, c_all = std::move(c_all), gi = std::move(gi),
               gf = std::move(gf), gg = std::move(gg),
               go = std::move(go)](GradTape& t, std::size_t self) {
                const Matrix& dh_out = t.nodes_[self].grad;
                const Matrix& h_all = t.nodes_[self].value;
                const Matrix& x = t.val(inputs.id);
                const Matrix& wx = t.val(w_input.id);
                const Matrix& wh = t.val(w_hidden.id);
                Matrix& gx = t.grad(inputs.id);
                Matrix& gwx = t.grad(w_input.id);
                Matrix& gwh = t.grad(w_hidden.id);
                Matrix& gb = t.grad(bias.id);
                const std::size_t steps = h_all.rows();
                const std::size_t hidden = h_all.cols();
                const std::size_t in_dim = x.cols();
                std::vector<double> dh_next(hidden, 0.0), dc_next(hidden, 0.0), dz(4 * hidden);
                for (std::size_t s = steps; s-- > 0;) {
                  for (std::size_t j = 0; j < hidden; ++j) {
                    const double dh = dh_out(s, j) + dh_next[j];
                    const double tc = std::tanh(c_all(s, j));
                    const double i = gi(s, j), f = gf(s, j), g = gg(s, j), o = go(s, j);
                    const double c_prev = s > 0 ? c_all(s - 1, j) : 0.0;
                    const double dc = dc_next[j] + dh * o * (1.0 - tc * tc);
                    dz[j] = dc * g * i * (1.0 - i);
                    dz[hidden + j] = dc * c_prev * f * (1.0 - f);
                    dz[2 * hidden + j] = dc * i * (1.0 - g * g);
                    dz[3 * hidden + j] = dh * tc * o * (1.0 - o);
                    dc_next[j] = dc * f;
                  }
                  for (std::size_t j = 0; j < 4 * hidden; ++j) gb[j] += dz[j];
                  const auto xrow = x.row(s);
                  for (std::size_t p = 0; p < in_dim; ++p) {
                    const double xv = xrow[p];
                    auto wrow = gwx.row(p);
                    if (xv != 0.0)
                      for (std::size_t j = 0; j < 4 * hidden; ++j) wrow[j] += xv * dz[j];
                    const auto wxrow = wx.row(p);
                    double acc = 0.0;
                    for (std::size_t j = 0; j < 4 * hidden; ++j) acc += wxrow[j] * dz[j];
                    gx(s, p) += acc;
                  }
                  for (std::size_t p = 0; p < hidden; ++p) {
                    const double hv = s > 0 ? h_all(s - 1, p) : 0.0;
                    auto wrow = gwh.row(p);
                    if (hv != 0.0)
                      for (std::size_t j = 0; j < 4 * hidden; ++j) wrow[j] += hv * dz[j];
                    const auto whrow = wh.row(p);
                    double acc = 0.0;
                    for (std::size_t j = 0; j < 4 * hidden; ++j) acc += whrow[j] * dz[j];
                    dh_next[p] = acc;
                  }
                }
              });
}

Var GradTape::softmax_cross_entropy(Var logits, std::vector<std::size_t> targets) {
  const Matrix& lv = val(logits.id);
  if (targets.size() != lv.rows()) {
    throw DimensionError("cross-entropy: " + std::to_string(targets.size()) + " targets for " +
                         lv.shape_string() + " logits");
  }
  Matrix probs = lv;
  double loss = 0.0;
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    auto row = probs.row(r);
    softmax_inplace(row);
    loss += cross_entropy(row, targets[r]);
  }
  Matrix out(1, 1, loss);
  return push(std::move(out), [logits, targets = std::move(targets),
                               probs = std::move(probs)](GradTape& t, std::size_t self) {
    const double g = t.nodes_[self].grad[0];
    Matrix& gl = t.grad(logits.id);
    for (std::size_t r = 0; r < probs.rows(); ++r) {
      const auto pr = probs.row(r);
      auto dst = gl.row(r);
      for (std::size_t j = 0; j < pr.size(); ++j) dst[j] += g * pr[j];
      dst[targets[r]] -= g;
    }
  });
}

Var GradTape::sum(std::span<const Var> scalars) {
  double total = 0.0;
  for (Var v : scalars) {
    const Matrix& m = val(v.id);
    if (m.size() != 1) throw DimensionError("sum expects 1x1 values, got " + m.shape_string());
    total += m[0];
  }
  std::vector<Var> inputs(scalars.begin(), scalars.end());
  return push(Matrix(1, 1, total), [inputs = std::move(inputs)](GradTape& t, std::size_t self) {
    const double g = t.nodes_[self].grad[0];
    for (Var v : inputs) t.grad(v.id)[0] += g;
  });
}

Gradients GradTape::backward(Var loss, const ParamSet& params) {
  if (bound_params_ && bound_params_ != &params) {
    throw ConfigError("backward called with a ParamSet the tape was not built from");
  }
  const Matrix& lv = value(loss);
  if (lv.size() != 1) throw DimensionError("backward expects a scalar loss, got " + lv.shape_string());
  if (!std::isfinite(lv[0])) throw EvaluationError("non-finite loss in backward pass");
  for (auto& n : nodes_) n.has_grad = false;
  grad(loss.id)[0] = 1.0;
  Gradients out = params.zeros_like();
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param >= 0) {
      Matrix& dst = out[static_cast<std::size_t>(n.param)];
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += n.grad[k];
    }
  }
  return out;
}

}  // namespace mtlm
