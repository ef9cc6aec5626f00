#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "doctest.h"
#include "mtlm/error.hpp"
#include "mtlm/metrics.hpp"
#include "mtlm/model.hpp"
#include "mtlm/rescorer.hpp"
#include "mtlm/rng.hpp"

using namespace mtlm;

namespace {

using Words = std::vector<std::string>;

// Deterministic pseudo-LM: a fixed score per hypothesis text.
LmScorer table_scorer(std::map<std::string, double> table) {
  return [table = std::move(table)](std::span<const std::string> tokens, bool) {
    return table.at(join_tokens(tokens));
  };
}

// Length-normalized score derived from the text itself, for random lists.
double hashed_lm(std::span<const std::string> tokens, bool normalized) {
  double s = -static_cast<double>(hash_string(join_tokens(tokens)) % 1000) / 100.0;
  return normalized ? s / static_cast<double>(tokens.size() + 1) : s;
}

NBestList random_list(CounterRng& rng, std::size_t n) {
  static const char* alphabet[] = {"play", "the", "beatles", "some", "music", "adele", "now"};
  NBestList list;
  list.id = "r" + std::to_string(rng.next() % 100000);
  for (std::size_t k = 0; k < 3; ++k) list.reference.push_back(alphabet[rng.below(7)]);
  for (std::size_t k = 0; k < n; ++k) {
    Hypothesis h;
    const std::size_t len = 1 + rng.below(5);
    for (std::size_t t = 0; t < len; ++t) h.tokens.push_back(alphabet[rng.below(7)]);
    h.first_pass_logprob = -10.0 * rng.uniform();
    list.hypotheses.push_back(std::move(h));
  }
  return list;
}

// Independent scoring loop.
std::size_t brute_force_choice(const NBestList& list, double lambda) {
  std::size_t best = 0;
  double best_score = -INFINITY;
  for (std::size_t k = 0; k < list.hypotheses.size(); ++k) {
    const auto& h = list.hypotheses[k];
    const double s = h.first_pass_logprob / static_cast<double>(h.tokens.size()) + lambda * hashed_lm(h.tokens, true);
    if (s > best_score) {
      best_score = s;
      best = k;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("combined score with lambda zero is the per-word first-pass score") {
  const Hypothesis h{{"a", "b", "c", "d"}, -6.0};
  const LmScorer lm = [](std::span<const std::string>, bool) { return -123.0; };
  CHECK(combined_score(h, lm, RescoreConfig{0.0, true}) == -1.5);
  CHECK_THROWS_AS(combined_score(Hypothesis{{}, -1.0}, lm, RescoreConfig{}), DomainError);
  CHECK_THROWS_AS((RescoreConfig{-0.1, true}.validate()), ConfigError);
}

TEST_CASE("hand-derived two-hypothesis fixture") {
  const double a = combined_score(-4.0, 2, -3.0, 0.006);
  const double b = combined_score(-4.2, 2, -1.0, 0.006);
  CHECK(std::abs(a - (-2.018)) <= 1e-12);
  CHECK(std::abs(b - (-2.106)) <= 1e-12);
  NBestList list{"u", {"x", "y"}, {{{"x", "y"}, -4.0}, {{"x", "z"}, -4.2}}};
  const auto r = rescore(list, table_scorer({{"x y", -3.0}, {"x z", -1.0}}), RescoreConfig{0.006, true});
  CHECK(r.chosen == 0);
}

TEST_CASE("uniform LM gives -ln|V| per normalized position") {
  Vocabulary v;
  for (const char* w : {"play", "music", "now", "loud"}) v.add(w);
  ModelConfig cfg;
  cfg.embedding_dim = cfg.hidden_dim = 4;
  cfg.layers = 1;
  MultiTaskModel m = MultiTaskModel::create(v, LabelSet({"a", "b"}), LabelSet({"other", "x"}), cfg);
  m.params().value(m.params().index("lm.output.weight")).fill(0.0);
  m.params().value(m.params().index("lm.output.bias")).fill(0.0);
  const LmScorer lm = model_scorer(m);
  const Hypothesis h{{"play", "music"}, -4.0};
  const double lambda = 0.5;
  const double want = -2.0 + lambda * -std::log(static_cast<double>(v.size()));
  CHECK(combined_score(h, lm, RescoreConfig{lambda, true}) == doctest::Approx(want).epsilon(1e-12));
  // Out-of-vocabulary words are scored as <unk>.
  CHECK(lm(Words{"play", "zebra"}, true) == doctest::Approx(lm(Words{"play", "<unk>"}, true)).epsilon(1e-15));
}

TEST_CASE("single hypothesis and lambda zero") {
  NBestList one{"u", {"a"}, {{{"b"}, -1.0}}};
  CHECK(rescore(one, hashed_lm, RescoreConfig{3.0, true}).chosen == 0);
  NBestList list{"u", {"a", "b"}, {{{"a", "b", "c"}, -3.0}, {{"a", "b"}, -2.2}, {{"a"}, -1.5}}};
  // Per-word scores -1.0, -1.1, -1.5.
  CHECK(rescore(list, hashed_lm, RescoreConfig{0.0, true}).chosen == 0);
}

TEST_CASE("ties go to the earlier hypothesis") {
  NBestList list{"u", {"a"}, {{{"a"}, -1.0}, {{"b"}, -1.0}, {{"c"}, -1.0}}};
  const LmScorer flat = [](std::span<const std::string>, bool) { return -2.0; };
  CHECK(rescore(list, flat, RescoreConfig{1.0, true}).chosen == 0);
}

TEST_CASE("20-hypothesis lists match brute-force scoring") {
  CounterRng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const NBestList list = random_list(rng, 20);
    const double lambda = 2.0 * rng.uniform();
    const auto r = rescore(list, hashed_lm, RescoreConfig{lambda, true});
    REQUIRE(r.chosen == brute_force_choice(list, lambda));
    for (std::size_t k = 0; k < 20; ++k) {
      const auto& h = list.hypotheses[k];
      REQUIRE(r.combined[k] == h.first_pass_logprob / static_cast<double>(h.tokens.size()) +
                                   lambda * hashed_lm(h.tokens, true));
    }
  }
}

TEST_CASE("rescoring is invariant under permutation up to ties") {
  CounterRng rng(32);
  for (int trial = 0; trial < 50; ++trial) {
    NBestList list = random_list(rng, 10);
    const RescoreConfig cfg{0.7, true};
    const auto r = rescore(list, hashed_lm, cfg);
    const double best = r.combined[r.chosen];
    NBestList shuffled = list;
    for (std::size_t k = shuffled.hypotheses.size(); k > 1; --k)
      std::swap(shuffled.hypotheses[k - 1], shuffled.hypotheses[rng.below(k)]);
    const auto s = rescore(shuffled, hashed_lm, cfg);
    REQUIRE(s.combined[s.chosen] == best);
  }
}

TEST_CASE("combined score is affine in lambda") {
  const Hypothesis h{{"play", "the", "beatles"}, -5.5};
  const double s0 = combined_score(h, hashed_lm, RescoreConfig{0.0, true});
  const double s1 = combined_score(h, hashed_lm, RescoreConfig{0.5, true});
  const double s2 = combined_score(h, hashed_lm, RescoreConfig{1.0, true});
  CHECK(std::abs((s2 - s1) - (s1 - s0)) <= 1e-12);
}

TEST_CASE("raising lambda only moves the winner towards higher LM scores") {
  CounterRng rng(33);
  for (int trial = 0; trial < 100; ++trial) {
    const NBestList list = random_list(rng, 15);
    const auto lm = score_hypotheses(std::span(&list, 1), hashed_lm, true, 1).front();
    double prev_lm = -INFINITY;
    for (double lambda = 0.0; lambda <= 5.0; lambda += 0.05) {
      const std::size_t k = choose(list, lm, lambda);
      REQUIRE(lm[k] >= prev_lm);
      prev_lm = lm[k];
    }
  }
}

TEST_CASE("threaded scoring equals sequential scoring") {
  CounterRng rng(34);
  std::vector<NBestList> lists;
  for (int i = 0; i < 37; ++i) lists.push_back(random_list(rng, 6));
  CHECK(score_hypotheses(lists, hashed_lm, true, 1) == score_hypotheses(lists, hashed_lm, true, 4));
}

TEST_CASE("lambda tuning") {
  CounterRng rng(35);
  std::vector<NBestList> dev;
  for (int i = 0; i < 30; ++i) dev.push_back(random_list(rng, 8));
  const auto cache = score_hypotheses(dev, hashed_lm, true, 1);

  const std::vector<double> zero{0.0};
  CHECK(tune_lambda(dev, cache, zero).best_lambda == 0.0);
  CHECK_THROWS_AS(tune_lambda(dev, cache, std::vector<double>{}), ConfigError);
  CHECK_THROWS_AS(tune_lambda(dev, hashed_lm, std::vector<double>{}), ConfigError);

  const auto grid = default_lambda_grid();
  const auto search = tune_lambda(dev, cache, grid);
  // Independent grid evaluation.
  double best_wer = INFINITY, best_lambda = 0.0;
  for (double lambda : grid) {
    CorpusWer c;
    for (const auto& list : dev) c.add(wer(list.reference, list.hypotheses[brute_force_choice(list, lambda)].tokens));
    const double w = c.total().wer;
    if (w < best_wer || (w == best_wer && lambda < best_lambda)) {
      best_wer = w;
      best_lambda = lambda;
    }
  }
  CHECK(search.best_lambda == best_lambda);
  CHECK(search.best_wer == best_wer);
  CHECK(rescored_wer(dev, cache, 0.0) == search.grid_wer.front());
}

TEST_CASE("lambda tuning picks a positive lambda when the LM knows the reference") {
  std::vector<NBestList> dev;
  std::map<std::string, double> table;
  for (int i = 0; i < 10; ++i) {
    const std::string ref = "ref" + std::to_string(i);
    const std::string bad = "bad" + std::to_string(i);
    dev.push_back({"d" + std::to_string(i), {ref}, {{{bad}, -1.0}, {{ref}, -1.2}}});
    table[ref] = -1.0;
    table[bad] = -5.0;
  }
  const auto search = tune_lambda(dev, table_scorer(table), std::vector<double>{0.0, 0.01, 0.1, 1.0});
  CHECK(search.best_lambda == 0.1);
  CHECK(search.best_wer == 0.0);
  CHECK(search.grid_wer.front() == 1.0);
  CHECK(first_pass_wer(dev) == 1.0);
}

TEST_CASE("n-best validation") {
  CHECK_THROWS_AS((NBestList{"x", {"a"}, {}}.validate()), DomainError);
  CHECK_THROWS_AS((NBestList{"x", {"a"}, {{{"a"}, 0.5}}}.validate()), DomainError);
  CHECK_THROWS_AS((NBestList{"x", {"a"}, {{{}, -0.5}}}.validate()), DomainError);
}
