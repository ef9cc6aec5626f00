#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "mtlm/error.hpp"
#include "mtlm/gradcheck.hpp"
#include "mtlm/kernels.hpp"
#include "mtlm/rng.hpp"
#include "mtlm/tape.hpp"

using namespace mtlm;

namespace {

constexpr double kGradTol = 1e-4;

Matrix random_matrix(std::size_t r, std::size_t c, CounterRng& rng, double scale = 0.5) {
  Matrix m(r, c);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = scale * (2.0 * rng.uniform() - 1.0);
  return m;
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Plain-loop LSTM step, gate blocks [i | f | g | o].
LstmState lstm_oracle(const std::vector<double>& x, const std::vector<double>& h, const std::vector<double>& c,
                      const LstmWeights& w) {
  const std::size_t H = h.size();
  std::vector<double> z(4 * H);
  for (std::size_t j = 0; j < 4 * H; ++j) {
    double s = w.bias(0, j);
    for (std::size_t k = 0; k < x.size(); ++k) s += x[k] * w.input(k, j);
    for (std::size_t k = 0; k < H; ++k) s += h[k] * w.hidden(k, j);
    z[j] = s;
  }
  LstmState out{std::vector<double>(H), std::vector<double>(H)};
  for (std::size_t j = 0; j < H; ++j) {
    const double i = sig(z[j]), f = sig(z[H + j]), g = std::tanh(z[2 * H + j]), o = sig(z[3 * H + j]);
    out.c[j] = f * c[j] + i * g;
    out.h[j] = o * std::tanh(out.c[j]);
  }
  return out;
}

GradCheckReport check(ParamSet& params, const std::function<Var(GradTape&, const ParamSet&)>& build) {
  LossFunction fn = [&](const ParamSet& p, Gradients* g) {
    GradTape tape;
    const Var loss = build(tape, p);
    if (g) *g = tape.backward(loss, p);
    return tape.scalar(loss);
  };
  return check_gradients(fn, params, 1e-5, 200, 3);
}

// Reduces any matrix to a scalar with fixed random weights so every entry matters.
Var weighted_sum(GradTape& t, Var x, std::uint64_t seed) {
  const Matrix& v = t.value(x);
  CounterRng rng(seed);
  Matrix w = random_matrix(v.cols(), 1, rng, 1.0);
  Var col = t.matmul(x, t.constant(w));
  Matrix ones(1, v.rows(), 1.0);
  return t.matmul(t.constant(ones), col);
}

}  // namespace

TEST_CASE("matmul hand fixture and shape errors") {
  const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
  const Matrix b = Matrix::from_rows({{5, 6}, {7, 8}});
  CHECK(matmul(a, b) == Matrix::from_rows({{19, 22}, {43, 50}}));
  CHECK(matmul(a, Matrix::identity(2)) == a);
  CHECK_THROWS_AS(matmul(a, Matrix(3, 2)), DimensionError);
  try {
    matmul(a, Matrix(3, 2));
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find("(2x2)") != std::string::npos);
    CHECK(std::string(e.what()).find("(3x2)") != std::string::npos);
  }
}

TEST_CASE("matmul matches a naive triple loop") {
  CounterRng rng(11);
  const Matrix a = random_matrix(5, 7, rng), b = random_matrix(7, 3, rng);
  const Matrix c = matmul(a, b);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 7; ++k) s += a(i, k) * b(k, j);
      CHECK(c(i, j) == doctest::Approx(s).epsilon(1e-14));
    }
}

TEST_CASE("softmax values, stability and errors") {
  const std::vector<double> logits{1.0, 2.0, 3.0};
  const auto p = softmax(logits);
  CHECK(p[0] == doctest::Approx(0.09003057317038046).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(0.24472847105479764).epsilon(1e-14));
  CHECK(p[2] == doctest::Approx(0.6652409557748219).epsilon(1e-14));

  const std::vector<double> big{1000.0, 1001.0, 1002.0};
  const auto q = softmax(big);
  for (std::size_t i = 0; i < 3; ++i) CHECK(q[i] == doctest::Approx(p[i]).epsilon(1e-12));
  CHECK(std::accumulate(q.begin(), q.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(softmax(std::vector<double>{}), DomainError);
}

TEST_CASE("cross entropy") {
  const std::vector<double> probs{0.25, 0.5, 0.25};
  CHECK(cross_entropy(probs, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(cross_entropy(std::vector<double>{1.0, 0.0}, 1) == doctest::Approx(-std::log(1e-30)));
  CHECK_THROWS_AS(cross_entropy(probs, 3), IndexError);
}

TEST_CASE("lstm step matches the plain-loop oracle") {
  CounterRng rng(5);
  const std::size_t in = 3, H = 4;
  LstmWeights w{random_matrix(in, 4 * H, rng), random_matrix(H, 4 * H, rng), random_matrix(1, 4 * H, rng)};
  const Matrix x = random_matrix(1, in, rng), h = random_matrix(1, H, rng), c = random_matrix(1, H, rng);
  const std::vector<double> xv(x.data().begin(), x.data().end()), hv(h.data().begin(), h.data().end()),
      cv(c.data().begin(), c.data().end());
  const LstmState got = lstm_step(xv, hv, cv, w);
  const LstmState want = lstm_oracle(xv, hv, cv, w);
  for (std::size_t j = 0; j < H; ++j) {
    CHECK(got.h[j] == doctest::Approx(want.h[j]).epsilon(1e-14));
    CHECK(got.c[j] == doctest::Approx(want.c[j]).epsilon(1e-14));
  }
}

TEST_CASE("lstm step with zero weights keeps half the cell") {
  const std::size_t H = 2;
  LstmWeights w{Matrix(1, 4 * H), Matrix(H, 4 * H), Matrix(1, 4 * H)};
  const LstmState s = lstm_step(std::vector<double>{0.7}, std::vector<double>{0.0, 0.0},
                                std::vector<double>{1.0, -2.0}, w);
  // All gates at sigmoid(0) = 0.5, candidate tanh(0) = 0.
  CHECK(s.c[0] == doctest::Approx(0.5));
  CHECK(s.c[1] == doctest::Approx(-1.0));
  CHECK(s.h[0] == doctest::Approx(0.5 * std::tanh(0.5)));
}

TEST_CASE("layer norm matches mean/variance oracle") {
  const std::vector<double> x{1.0, 2.0, 4.0, 7.0};
  const std::vector<double> gain{1.0, 2.0, 0.5, 1.0}, bias{0.0, 1.0, -1.0, 0.5};
  const double mean = 3.5;
  double var = 0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= 4.0;
  const auto y = layer_norm(x, gain, bias);
  for (std::size_t i = 0; i < 4; ++i) {
    const double want = gain[i] * (x[i] - mean) / std::sqrt(var + kLayerNormEpsilon) + bias[i];
    CHECK(y[i] == doctest::Approx(want).epsilon(1e-14));
  }
}

TEST_CASE("sigmoid is stable at the extremes") {
  CHECK(sigmoid(800.0) == 1.0);
  CHECK(sigmoid(-800.0) == doctest::Approx(0.0));
  CHECK(std::isfinite(sigmoid(-800.0)));
  CHECK(sigmoid(0.0) == 0.5);
}

TEST_CASE("param set bookkeeping") {
  ParamSet p;
  CHECK(p.add("a", Matrix(2, 3)) == 0);
  CHECK(p.add("b", Matrix(1, 4)) == 1);
  CHECK_THROWS_AS(p.add("a", Matrix(1, 1)), Error);
  CHECK(p.index("b") == 1);
  CHECK_THROWS_AS(p.index("c"), IndexError);
  CHECK(p.total_size() == 10);
  CHECK(p.all_finite());
  p.value(0)(1, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(p.all_finite());
}

TEST_CASE("tape: matmul, add with broadcast, scale, tanh, transpose gradients") {
  CounterRng rng(21);
  ParamSet p;
  p.add("a", random_matrix(3, 4, rng));
  p.add("b", random_matrix(4, 2, rng));
  p.add("row", random_matrix(1, 2, rng));
  const auto r = check(p, [](GradTape& t, const ParamSet& ps) {
    Var a = t.parameter(ps, 0), b = t.parameter(ps, 1), row = t.parameter(ps, 2);
    Var y = t.tanh(t.add(t.matmul(a, b), row));
    Var z = t.scale(t.transpose(y), 1.7);
    return weighted_sum(t, z, 1);
  });
  CHECK(r.max_relative_error < kGradTol);
  CHECK(r.coordinates_checked == p.total_size());
}

TEST_CASE("tape: gather, slice and softmax rows gradients") {
  CounterRng rng(22);
  ParamSet p;
  p.add("table", random_matrix(6, 3, rng));
  const auto r = check(p, [](GradTape& t, const ParamSet& ps) {
    Var rows = t.gather_rows(t.parameter(ps, 0), {4, 1, 1, 5});
    Var s = t.softmax_rows(t.slice_rows(rows, 1, 4));
    return weighted_sum(t, s, 2);
  });
  CHECK(r.max_relative_error < kGradTol);
}

TEST_CASE("tape: layer norm gradients") {
  CounterRng rng(23);
  ParamSet p;
  p.add("x", random_matrix(3, 5, rng, 1.0));
  p.add("gain", random_matrix(1, 5, rng, 1.0));
  p.add("bias", random_matrix(1, 5, rng, 1.0));
  const auto r = check(p, [](GradTape& t, const ParamSet& ps) {
    return weighted_sum(t, t.layer_norm_rows(t.parameter(ps, 0), t.parameter(ps, 1), t.parameter(ps, 2)), 3);
  });
  CHECK(r.max_relative_error < kGradTol);
}

TEST_CASE("tape: lstm layer gradients through time") {
  CounterRng rng(24);
  ParamSet p;
  const std::size_t in = 3, H = 4;
  p.add("x", random_matrix(5, in, rng, 1.0));
  p.add("wi", random_matrix(in, 4 * H, rng));
  p.add("wh", random_matrix(H, 4 * H, rng));
  p.add("b", random_matrix(1, 4 * H, rng));
  const auto r = check(p, [](GradTape& t, const ParamSet& ps) {
    Var h = t.lstm_layer(t.parameter(ps, 0), t.parameter(ps, 1), t.parameter(ps, 2), t.parameter(ps, 3));
    return weighted_sum(t, h, 4);
  });
  CHECK(r.max_relative_error < kGradTol);
}

TEST_CASE("tape: lstm layer forward equals repeated steps") {
  CounterRng rng(25);
  const std::size_t in = 2, H = 3;
  LstmWeights w{random_matrix(in, 4 * H, rng), random_matrix(H, 4 * H, rng), random_matrix(1, 4 * H, rng)};
  const Matrix x = random_matrix(4, in, rng);
  GradTape t;
  const Matrix& out = t.value(t.lstm_layer(t.constant(x), t.constant(w.input), t.constant(w.hidden),
                                           t.constant(w.bias)));
  std::vector<double> h(H, 0.0), c(H, 0.0);
  for (std::size_t s = 0; s < 4; ++s) {
    const auto row = x.row(s);
    LstmState next = lstm_oracle(std::vector<double>(row.begin(), row.end()), h, c, w);
    h = next.h;
    c = next.c;
    for (std::size_t j = 0; j < H; ++j) CHECK(out(s, j) == doctest::Approx(h[j]).epsilon(1e-14));
  }
}

TEST_CASE("tape: softmax cross entropy value and gradients") {
  CounterRng rng(26);
  ParamSet p;
  p.add("logits", random_matrix(3, 4, rng, 2.0));
  const std::vector<std::size_t> targets{2, 0, 3};
  GradTape t;
  const double got = t.scalar(t.softmax_cross_entropy(t.parameter(p, 0), targets));
  double want = 0;
  for (std::size_t r = 0; r < 3; ++r) {
    const auto row = p.value(0).row(r);
    want += cross_entropy(softmax(row), targets[r]);
  }
  CHECK(got == doctest::Approx(want).epsilon(1e-13));
  const auto report = check(p, [&](GradTape& tape, const ParamSet& ps) {
    return tape.softmax_cross_entropy(tape.parameter(ps, 0), targets);
  });
  CHECK(report.max_relative_error < kGradTol);
}

TEST_CASE("tape: sum of scalars and reused parameter") {
  CounterRng rng(27);
  ParamSet p;
  p.add("w", random_matrix(2, 2, rng));
  const auto r = check(p, [](GradTape& t, const ParamSet& ps) {
    Var a = t.parameter(ps, 0);
    Var b = t.parameter(ps, 0);
    std::vector<Var> parts{weighted_sum(t, t.matmul(a, b), 5), weighted_sum(t, t.tanh(a), 6)};
    return t.sum(parts);
  });
  CHECK(r.max_relative_error < kGradTol);
}

TEST_CASE("backward refuses non-finite losses") {
  ParamSet p;
  p.add("w", Matrix(1, 1, std::numeric_limits<double>::infinity()));
  GradTape t;
  Var loss = t.scale(t.parameter(p, 0), 2.0);
  CHECK_THROWS_AS(t.backward(loss, p), EvaluationError);
}

TEST_CASE("gradient check flags a wrong analytic gradient") {
  ParamSet p;
  p.add("w", Matrix::from_rows({{0.3, -0.2}}));
  LossFunction fn = [](const ParamSet& ps, Gradients* g) {
    const auto& w = ps.value(0);
    if (g) {
      *g = ps.zeros_like();
      (*g)[0][0] = 2 * w[0];
      (*g)[0][1] = 3 * w[1];  // should be 2 * w[1]
    }
    return w[0] * w[0] + w[1] * w[1];
  };
  const auto r = check_gradients(fn, p);
  CHECK(r.max_relative_error > 0.3);
  CHECK(r.worst_parameter == "w");
  CHECK(r.worst_offset == 1);
  CHECK(p.value(0) == Matrix::from_rows({{0.3, -0.2}}));
}

TEST_CASE("gradient check samples every array and at least the requested count") {
  CounterRng rng(28);
  ParamSet p;
  p.add("big", random_matrix(40, 40, rng));
  p.add("tiny", random_matrix(1, 3, rng));
  LossFunction fn = [](const ParamSet& ps, Gradients* g) {
    double s = 0;
    if (g) *g = ps.zeros_like();
    for (std::size_t a = 0; a < ps.size(); ++a)
      for (std::size_t i = 0; i < ps.value(a).size(); ++i) {
        s += std::sin(ps.value(a)[i]);
        if (g) (*g)[a][i] = std::cos(ps.value(a)[i]);
      }
    return s;
  };
  const auto r = check_gradients(fn, p, 1e-5, 200);
  CHECK(r.coordinates_checked >= 200);
  CHECK(r.max_relative_error < kGradTol);
}

TEST_CASE("counter rng is a pure function of seed, stream and counter") {
  CounterRng a(9, 4), b(9, 4), c(9, 5);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    CHECK(x == b.next());
    CHECK(x != c.next());
  }
  CounterRng d(1);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const auto k = d.below(7);
    REQUIRE(k < 7);
    ++counts[k];
  }
  for (int n : counts) CHECK(std::abs(n - 10000) < 500);
  CounterRng e(2);
  const auto threshold = probability_threshold(0.3);
  int hits = 0;
  for (int i = 0; i < 100000; ++i) hits += e.bernoulli(threshold);
  CHECK(std::abs(hits - 30000) < 600);
  CHECK(probability_threshold(0.0) == 0);
  CHECK(probability_threshold(1.0) == ~std::uint64_t{0});
}
