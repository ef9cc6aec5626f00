#include <algorithm>
#include <string>
#include <vector>

#include "doctest.h"
#include "mtlm/error.hpp"
#include "mtlm/metrics.hpp"
#include "mtlm/rng.hpp"
#include "mtlm/vocabulary.hpp"

using namespace mtlm;

namespace {

using Words = std::vector<std::string>;

Words words(const char* text) { return split_whitespace(text); }

// Full-table edit distance with the same (cost, insertions + deletions) ordering,
// counting operations along an explicit backtrace.
WerBreakdown oracle(const Words& r, const Words& h) {
  const std::size_t n = r.size(), m = h.size();
  struct Cell {
    std::size_t cost, indel, s, i, d;
  };
  std::vector<std::vector<Cell>> t(n + 1, std::vector<Cell>(m + 1));
  for (std::size_t i = 0; i <= n; ++i) t[i][0] = {i, i, 0, 0, i};
  for (std::size_t j = 0; j <= m; ++j) t[0][j] = {j, j, 0, j, 0};
  auto better = [](const Cell& a, const Cell& b) {
    return a.cost != b.cost ? a.cost < b.cost : a.indel < b.indel;
  };
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j) {
      const bool same = r[i - 1] == h[j - 1];
      Cell diag = t[i - 1][j - 1];
      diag.cost += same ? 0 : 1;
      diag.s += same ? 0 : 1;
      Cell del = t[i - 1][j];
      del.cost += 1;
      del.indel += 1;
      del.d += 1;
      Cell ins = t[i][j - 1];
      ins.cost += 1;
      ins.indel += 1;
      ins.i += 1;
      Cell best = diag;
      if (better(del, best)) best = del;
      if (better(ins, best)) best = ins;
      t[i][j] = best;
    }
  const Cell& c = t[n][m];
  return {c.s, c.i, c.d, n, static_cast<double>(c.cost) / static_cast<double>(n)};
}

Words random_words(CounterRng& rng, std::size_t max_len) {
  static const char* alphabet[] = {"a", "b", "c"};
  Words w(rng.below(max_len + 1));
  for (auto& x : w) x = alphabet[rng.below(3)];
  return w;
}

}  // namespace

TEST_CASE("WER fixtures") {
  const auto r = wer(words("play the beatles"), words("play beatles"));
  CHECK(r.deletions == 1);
  CHECK(r.substitutions == 0);
  CHECK(r.insertions == 0);
  CHECK(r.wer == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(wer(words("a b c"), words("a b c")).wer == 0.0);
  const auto empty = wer(words("a b c"), Words{});
  CHECK(empty.wer == 1.0);
  CHECK(empty.deletions == 3);
  CHECK_THROWS_AS(wer(Words{}, words("a")), DomainError);
  const auto ins = wer(words("a"), words("x a y"));
  CHECK(ins.insertions == 2);
  CHECK(ins.wer == 2.0);
}

TEST_CASE("WER prefers substitutions over insertion/deletion pairs") {
  const auto r = wer(words("a b"), words("a c"));
  CHECK(r.substitutions == 1);
  CHECK(r.insertions + r.deletions == 0);
}

TEST_CASE("WER equals the quadratic DP oracle on all short pairs") {
  // Exhaustive over all sequences up to length 4 on a 3-letter alphabet, then
  // random pairs up to length 10.
  std::vector<Words> all{{}};
  for (std::size_t len = 1; len <= 4; ++len) {
    std::vector<Words> next;
    for (const auto& w : all)
      if (w.size() == len - 1)
        for (const char* a : {"a", "b", "c"}) {
          Words x = w;
          x.push_back(a);
          next.push_back(x);
        }
    all.insert(all.end(), next.begin(), next.end());
  }
  std::size_t checked = 0;
  for (const auto& r : all) {
    if (r.empty()) continue;
    for (const auto& h : all) {
      REQUIRE(wer(r, h) == oracle(r, h));
      ++checked;
    }
  }
  CHECK(checked == 120 * 121);
  CounterRng rng(7);
  for (int k = 0; k < 5000; ++k) {
    Words r = random_words(rng, 10), h = random_words(rng, 10);
    if (r.empty()) r.push_back("a");
    REQUIRE(wer(r, h) == oracle(r, h));
  }
}

TEST_CASE("alignment agrees with the WER counts") {
  CounterRng rng(8);
  for (int k = 0; k < 2000; ++k) {
    Words r = random_words(rng, 8), h = random_words(rng, 8);
    if (r.empty()) r.push_back("b");
    const auto path = align(r, h);
    std::size_t s = 0, i = 0, d = 0, ref_seen = 0, hyp_seen = 0;
    for (const auto& step : path) {
      switch (step.op) {
        case EditOp::Match:
          REQUIRE(r[step.ref_index] == h[step.hyp_index]);
          break;
        case EditOp::Substitution:
          REQUIRE(r[step.ref_index] != h[step.hyp_index]);
          ++s;
          break;
        case EditOp::Deletion:
          ++d;
          break;
        case EditOp::Insertion:
          ++i;
          break;
      }
      ref_seen += step.ref_index >= 0;
      hyp_seen += step.hyp_index >= 0;
    }
    REQUIRE(ref_seen == r.size());
    REQUIRE(hyp_seen == h.size());
    const auto b = wer(r, h);
    REQUIRE(b.substitutions == s);
    REQUIRE(b.insertions == i);
    REQUIRE(b.deletions == d);
  }
}

TEST_CASE("edit distance is a metric on random triples") {
  CounterRng rng(9);
  for (int k = 0; k < 2000; ++k) {
    Words a = random_words(rng, 7), b = random_words(rng, 7), c = random_words(rng, 7);
    for (Words* w : {&a, &b, &c})
      if (w->empty()) w->push_back("c");
    const auto d = [](const Words& x, const Words& y) { return wer(x, y).errors(); };
    REQUIRE(d(a, c) <= d(a, b) + d(b, c));
    REQUIRE(d(a, b) == d(b, a));
    if (a.size() == b.size()) REQUIRE(wer(a, b).substitutions == wer(b, a).substitutions);
  }
}

TEST_CASE("corpus WER and WERR") {
  CorpusWer c;
  c.add(wer(words("a b c d"), words("a b c d")));
  c.add(wer(words("a b"), words("a")));
  CHECK(c.total().wer == doctest::Approx(1.0 / 6.0));
  CHECK(c.utterances() == 2);
  CHECK_THROWS_AS(CorpusWer{}.total(), DomainError);
  CHECK(werr(0.10, 0.10) == 0.0);
  CHECK(werr(0.10, 0.09) == doctest::Approx(-0.10).epsilon(1e-12));
  CHECK_THROWS_AS(werr(0.0, 0.1), DomainError);
}

TEST_CASE("intent error rate") {
  const Words gold{"a", "b", "c", "d"};
  CHECK(intent_error_rate(gold, gold) == 0.0);
  CHECK(intent_error_rate(gold, Words{"x", "x", "x", "x"}) == 1.0);
  CHECK(intent_error_rate(gold, Words{"a", "b", "c", "x"}) == 0.25);
  CHECK_THROWS_AS(intent_error_rate(gold, Words{"a"}), DomainError);
}

TEST_CASE("slot F1") {
  const std::vector<Words> gold{{"other", "artist", "artist"}, {"other", "city"}};
  CHECK(slot_f1(gold, gold) == 1.0);
  const std::vector<Words> none{{"other", "other", "other"}, {"other", "other"}};
  CHECK(slot_f1(gold, none) == 0.0);
  // Two gold positives, four predicted positives of which two are right: P = 0.5, R = 1.
  const std::vector<Words> g2{{"other", "artist", "other", "city", "other"}};
  const std::vector<Words> p2{{"artist", "artist", "city", "city", "other"}};
  CHECK(slot_f1(g2, p2) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK_THROWS_AS(slot_f1(gold, std::vector<Words>{{"other"}}), DomainError);
  CHECK_THROWS_AS(slot_f1(gold, std::vector<Words>{{"other"}, {"other", "city"}}), DomainError);
}

TEST_CASE("slot F1 stays in [0, 1] and hits 1 only on exact non-other agreement") {
  CounterRng rng(10);
  const char* labels[] = {"other", "artist", "city"};
  for (int k = 0; k < 500; ++k) {
    std::vector<Words> g(3), p(3);
    for (std::size_t u = 0; u < 3; ++u)
      for (std::size_t t = 0; t < 4; ++t) {
        g[u].push_back(labels[rng.below(3)]);
        p[u].push_back(labels[rng.below(3)]);
      }
    const double f = slot_f1(g, p);
    REQUIRE(f >= 0.0);
    REQUIRE(f <= 1.0);
    bool exact = true, any_gold = false;
    for (std::size_t u = 0; u < 3; ++u)
      for (std::size_t t = 0; t < 4; ++t) {
        const bool gp = g[u][t] != "other", pp = p[u][t] != "other";
        any_gold = any_gold || gp;
        if ((gp || pp) && g[u][t] != p[u][t]) exact = false;
      }
    if (any_gold) REQUIRE((f == 1.0) == exact);
  }
}
