#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "mtlm/error.hpp"
#include "mtlm/gradcheck.hpp"
#include "mtlm/rng.hpp"
#include "mtlm/trainer.hpp"

using namespace mtlm;

namespace {

const double kEta = std::sqrt(2.0 * std::log(3.0) / 50.0);

MultiTaskModel toy_model(EncoderVariant variant = EncoderVariant::NoAttention, std::size_t hidden = 4,
                         double init_scale = 0.5) {
  Vocabulary v;
  for (const char* w : {"play", "the", "beatles", "adele", "weather", "in", "paris", "rome"}) v.add(w);
  ModelConfig cfg;
  cfg.embedding_dim = hidden;
  cfg.hidden_dim = hidden;
  cfg.layers = 1;
  cfg.variant = variant;
  cfg.init_scale = init_scale;
  return MultiTaskModel::create(v, LabelSet({"music", "weather"}), LabelSet({"other", "artist", "city"}), cfg);
}

std::vector<AnnotatedUtterance> toy_corpus() {
  return {{"u0", {"play", "the", "beatles"}, "music", {"other", "artist", "artist"}},
          {"u1", {"play", "adele"}, "music", {"other", "artist"}},
          {"u2", {"weather", "in", "paris"}, "weather", {"other", "other", "city"}},
          {"u3", {"weather", "in", "rome"}, "weather", {"other", "other", "city"}},
          {"u4", {"play", "adele"}, "music", {"other", "artist"}},
          {"u5", {"weather", "in", "rome"}, "weather", {"other", "other", "city"}}};
}

TrainConfig quick_config(ScheduleMode mode, std::size_t epochs) {
  TrainConfig c;
  c.mode = mode;
  c.epochs = epochs;
  c.batch_size = 2;
  c.learning_rate = 0.3;
  c.evaluations_per_epoch = 3;
  return c;
}

}  // namespace

TEST_CASE("total loss reduces to the LM loss under (1, 0, 0)") {
  MultiTaskModel m = toy_model();
  const auto batch = m.encode_all(toy_corpus());
  std::vector<TokenSequence> seqs;
  for (const auto& u : batch) seqs.push_back(u.tokens);
  CHECK(total_loss(m, batch, {1, 0, 0}) == m.backbone().lm_loss(m.params(), seqs));
}

TEST_CASE("total loss is the weighted sum of independently computed task losses") {
  MultiTaskModel m = toy_model(EncoderVariant::WeightedAttention);
  const auto batch = m.encode_all(toy_corpus());
  std::vector<TokenSequence> seqs;
  for (const auto& u : batch) seqs.push_back(u.tokens);
  const double lm = m.backbone().lm_loss(m.params(), seqs);
  const double id = intent_loss(m.params(), m.backbone(), m.intent_head(), batch);
  const double sf = slot_loss(m.params(), m.backbone(), m.slot_head(), batch);
  CHECK(total_loss(m, batch, {0.5, 0.25, 0.25}) == doctest::Approx(0.5 * lm + 0.25 * id + 0.25 * sf).epsilon(1e-12));
  const double once = total_loss(m, batch, {0.3, 0.2, 0.5});
  CHECK(total_loss(m, batch, {0.6, 0.4, 1.0}) == doctest::Approx(2.0 * once).epsilon(1e-12));

  CounterRng rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    const LossWeights a{rng.uniform(), rng.uniform(), rng.uniform()};
    const LossWeights b{rng.uniform(), rng.uniform(), rng.uniform()};
    const double s = rng.uniform();
    const LossWeights mix{s * a.lm + (1 - s) * b.lm, s * a.intent + (1 - s) * b.intent, s * a.slot + (1 - s) * b.slot};
    const double want = s * total_loss(m, batch, a) + (1 - s) * total_loss(m, batch, b);
    CHECK(std::abs(total_loss(m, batch, mix) - want) <= 1e-10 * std::abs(want));
  }
}

TEST_CASE("total loss needs annotations only for weighted tasks") {
  MultiTaskModel m = toy_model();
  auto batch = m.encode_all(toy_corpus());
  batch[0].intent.reset();
  batch[0].slots.clear();
  CHECK_NOTHROW(total_loss(m, batch, {1, 0, 0}));
  CHECK_THROWS_AS(total_loss(m, batch, {1, 0.5, 0}), DataError);
}

TEST_CASE("multi-task gradient check with random weights for every encoder") {
  for (EncoderVariant v :
       {EncoderVariant::NoAttention, EncoderVariant::WeightedAttention, EncoderVariant::ProjectedAttention}) {
    // Attention gradients at small init sit below the finite-difference
    // roundoff floor, so this check uses a wider init and step.
    MultiTaskModel m = toy_model(v, 6, 1.0);
    const auto corpus = toy_corpus();
    const auto batch = m.encode_all(std::span(corpus).first(2));
    const LossWeights w{0.37, 0.81, 0.23};
    LossFunction fn = [&](const ParamSet& p, Gradients* g) {
      MultiTaskModel probe = MultiTaskModel::assemble(m.vocab(), m.intents(), m.slots(), m.config(), p);
      return total_loss(probe, batch, w, g);
    };
    const auto r = check_gradients(fn, m.params(), 1e-4);
    INFO(to_string(v), " ", r.worst_parameter, "[", r.worst_offset, "] analytic ", r.worst_analytic, " numeric ",
         r.worst_numeric);
    CHECK(r.max_relative_error < 1e-4);
  }
}

TEST_CASE("linear ramp schedule") {
  CHECK(linear_ramp_weights(0, 100) == LossWeights{1, 0, 0});
  CHECK(linear_ramp_weights(100, 100) == LossWeights{1, 1, 1});
  CHECK(linear_ramp_weights(50, 100) == LossWeights{1, 0.5, 0.5});
}

TEST_CASE("pearson correlation") {
  const std::vector<double> xs{1, 2, 4, 7, 11};
  std::vector<double> affine, neg;
  for (double x : xs) {
    affine.push_back(2 * x + 1);
    neg.push_back(-x);
  }
  CHECK(pearson_rho(xs, affine) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(pearson_rho(xs, neg) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(pearson_rho(std::vector<double>(5, 3.0), xs) == 0.0);
  CHECK_THROWS_AS(pearson_rho(xs, std::vector<double>{1, 2}), DomainError);
  CHECK_THROWS_AS(pearson_rho(std::vector<double>{1}, std::vector<double>{1}), DomainError);
}

TEST_CASE("RWMA initial state") {
  CHECK(rwma_eta(3, 50) == doctest::Approx(0.20966).epsilon(1e-4));
  CHECK(rwma_eta(3, 50) == std::sqrt(2.0 * std::log(3.0) / 50.0));
  CHECK_THROWS_AS(rwma_eta(1, 50), ConfigError);
  CHECK_THROWS_AS(rwma_eta(3, 0), ConfigError);
  RwmaState s;
  CHECK(s.raw_weights() == std::vector<double>{1, 1, 1});
  for (double w : s.weights()) CHECK(w == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  RwmaConfig bad;
  bad.clamp_lo = 0.4;
  CHECK_THROWS_AS(RwmaState{bad}, ConfigError);
}

TEST_CASE("RWMA does not update before round 11") {
  RwmaState s;
  // ID loss rises while LM falls: anti-correlated from the start.
  for (int t = 1; t <= 10; ++t) {
    const double losses[3] = {10.0 - t, 1.0 + t, 5.0};
    const auto r = s.step(losses);
    CHECK(s.raw_weights() == std::vector<double>{1, 1, 1});
    CHECK(r.updated == std::vector<bool>{false, false, false});
  }
  const double losses[3] = {0.0, 12.0, 5.0};
  const auto r = s.step(losses);
  CHECK(r.updated[1]);
}

TEST_CASE("RWMA keep rule leaves raw weights bitwise unchanged") {
  RwmaState s;
  for (int t = 1; t <= 30; ++t) {
    const double v = 10.0 - 0.1 * t;
    const double losses[3] = {v, v * 0.5, v * 2.0};
    const auto before = s.raw_weights();
    const auto r = s.step(losses);
    CHECK(r.updated == std::vector<bool>{false, false, false});
    CHECK(s.raw_weights() == before);
  }
}

TEST_CASE("RWMA scripted anti-correlated expert with full degradation") {
  RwmaState s;
  // LM strictly decreasing, ID strictly increasing: rho = -1 and l_ID = 1.
  for (int t = 1; t <= 10; ++t) {
    const double losses[3] = {100.0 - t, static_cast<double>(t), 7.0};
    s.step(losses);
  }
  for (int t = 11; t <= 14; ++t) {
    const double prev = s.raw_weights()[1];
    const double losses[3] = {100.0 - t, static_cast<double>(t), 7.0};
    const auto r = s.step(losses);
    CHECK(r.correlation[1] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(s.degradation()[1] == 1.0);
    CHECK(std::abs(s.raw_weights()[1] - prev * std::exp(1.0 - kEta)) <= 1e-12 * prev * std::exp(1.0 - kEta));
    CHECK(s.raw_weights()[0] == 1.0);
    CHECK(s.raw_weights()[2] == 1.0);
  }
}

TEST_CASE("RWMA classical decay flag") {
  RwmaConfig cfg;
  cfg.classical_decay = true;
  RwmaState s(cfg);
  for (int t = 1; t <= 11; ++t) {
    const double losses[3] = {100.0 - t, static_cast<double>(t), 7.0};
    s.step(losses);
  }
  CHECK(s.raw_weights()[1] == doctest::Approx(1.0 - kEta).epsilon(1e-14));
}

TEST_CASE("clamp normalize keeps weights in range and summing to one") {
  const std::vector<double> raw{1.0, 50.0, 1.0};
  const auto w = clamp_normalize(raw, 0.2, 0.6);
  CHECK(w[1] == doctest::Approx(0.6));
  CHECK(w[0] == doctest::Approx(0.2));
  CHECK(w[0] + w[1] + w[2] == doctest::Approx(1.0).epsilon(1e-15));
  const std::vector<double> even{2.0, 2.0, 2.0};
  for (double x : clamp_normalize(even, 0.2, 0.6)) CHECK(x == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("RWMA property sweep: 10k random steps") {
  CounterRng rng(2024);
  RwmaState s;
  double lm = 5.0, id = 2.0, sf = 3.0;
  for (int t = 0; t < 10000; ++t) {
    lm += rng.uniform() - 0.55;
    id += 2.0 * rng.uniform() - 1.0;
    sf += 3.0 * rng.uniform() - 1.5;
    const double losses[3] = {lm, id, sf};
    const auto r = s.step(losses);
    double sum = 0;
    for (double w : r.weights) {
      REQUIRE(w > 0.0);
      REQUIRE(w >= 0.2 - 1e-12);
      REQUIRE(w <= 0.6 + 1e-12);
      sum += w;
    }
    REQUIRE(std::abs(sum - 1.0) <= 1e-9);
    for (double l : s.degradation()) REQUIRE((l >= 0.0 && l <= 1.0));
    for (double raw : s.raw_weights()) REQUIRE(raw > 0.0);
  }
}

TEST_CASE("training is deterministic and the LM loss falls") {
  const auto corpus = toy_corpus();
  MultiTaskModel a = toy_model(EncoderVariant::NoAttention, 8);
  MultiTaskModel b = toy_model(EncoderVariant::NoAttention, 8);
  const auto enc = a.encode_all(corpus);
  const auto cfg = quick_config(ScheduleMode::Fixed, 5);
  const TrainLog la = train(a, enc, enc, cfg);
  const TrainLog lb = train(b, enc, enc, cfg);
  CHECK(a.params() == b.params());
  REQUIRE(la.epochs.size() == 5);
  for (std::size_t e = 0; e < 5; ++e) CHECK(la.epochs[e].losses.lm == lb.epochs[e].losses.lm);
  for (std::size_t e = 1; e < 5; ++e) CHECK(la.epochs[e].losses.lm < la.epochs[e - 1].losses.lm);
}

TEST_CASE("RWMA training logs the configured number of weight updates per epoch") {
  MultiTaskModel m = toy_model();
  const auto enc = m.encode_all(toy_corpus());
  auto cfg = quick_config(ScheduleMode::Rwma, 2);
  const TrainLog log = train(m, enc, enc, cfg);
  CHECK(log.updates.size() == 6);
  for (const auto& u : log.updates) {
    CHECK(u.weights.lm + u.weights.intent + u.weights.slot == doctest::Approx(1.0).epsilon(1e-9));
  }
  std::ostringstream out;
  write_weight_log_tsv(out, log);
  std::size_t lines = 0;
  for (char ch : out.str()) lines += ch == '\n';
  CHECK(lines == 7);  // header + updates
}

TEST_CASE("training refuses multi-task modes on transcription-only data") {
  MultiTaskModel m = toy_model();
  auto corpus = toy_corpus();
  for (auto& u : corpus) {
    u.intent.reset();
    u.slots.clear();
  }
  const auto enc = m.encode_all(corpus);
  CHECK_THROWS_AS(train(m, enc, enc, quick_config(ScheduleMode::Rwma, 1)), DataError);
  CHECK_NOTHROW(train(m, enc, enc, quick_config(ScheduleMode::Fixed, 1)));
}

TEST_CASE("divergence is reported") {
  MultiTaskModel m = toy_model();
  m.params().value(0)[0] = std::numeric_limits<double>::quiet_NaN();
  const auto enc = m.encode_all(toy_corpus());
  CHECK_THROWS_AS(train(m, enc, enc, quick_config(ScheduleMode::Fixed, 1)), Error);
}

TEST_CASE("pretrain then finetune continues from the stage-1 parameters") {
  MultiTaskModel m = toy_model();
  auto trans = toy_corpus();
  for (auto& u : trans) {
    u.intent.reset();
    u.slots.clear();
  }
  const auto t_enc = m.encode_all(trans);
  const auto a_enc = m.encode_all(toy_corpus());
  auto stage1 = quick_config(ScheduleMode::Fixed, 2);
  auto stage2 = quick_config(ScheduleMode::Rwma, 1);
  const auto log = pretrain_finetune(m, t_enc, a_enc, a_enc, stage1, stage2);
  CHECK(log.finetune.initial_valid_ppl == log.pretrain.epochs.back().valid_ppl);

  MultiTaskModel z = toy_model();
  stage2.epochs = 0;
  const auto zlog = pretrain_finetune(z, t_enc, a_enc, a_enc, stage1, stage2);
  MultiTaskModel ref = toy_model();
  train(ref, t_enc, a_enc, stage1);
  for (std::size_t i = 0; i < ref.params().size(); ++i) {
    if (ref.params().name(i).starts_with("lm.")) CHECK(z.params().value(i) == ref.params().value(i));
  }
  CHECK(zlog.finetune.epochs.empty());
}

TEST_CASE("metrics TSV round trip") {
  TrainLog log;
  log.epochs.push_back({1, {3.5, 0.25, 1.125}, {0.6, 0.2, 0.2}, 12.75});
  log.epochs.push_back({2, {3.0, 0.125, 1.0}, {0.5, 0.25, 0.25}, 11.0});
  std::ostringstream out;
  write_metrics_tsv(out, log);
  CHECK(out.str().starts_with("epoch\tL_LM\tL_ID\tL_SF\talpha_LM\talpha_ID\talpha_SF\tvalid_ppl\n"));
  std::istringstream in(out.str());
  const auto back = read_metrics_tsv(in);
  REQUIRE(back.size() == 2);
  CHECK(back[1].valid_ppl == 11.0);
  CHECK(back[0].weights == LossWeights{0.6, 0.2, 0.2});
  std::istringstream bad("epoch\tL_LM\n1\tx\n");
  CHECK_THROWS_AS(read_metrics_tsv(bad), ParseError);
}

TEST_CASE("keep-best restores the epoch with the lowest validation PPL") {
  MultiTaskModel m = toy_model();
  const auto enc = m.encode_all(toy_corpus());
  auto cfg = quick_config(ScheduleMode::Rwma, 6);
  cfg.learning_rate = 2.0;
  cfg.keep_best = true;
  const TrainLog log = train(m, enc, enc, cfg);
  double best = INFINITY;
  std::size_t best_epoch = 0;
  for (const auto& e : log.epochs)
    if (e.valid_ppl < best) {
      best = e.valid_ppl;
      best_epoch = e.epoch;
    }
  CHECK(log.best_epoch == best_epoch);
  CHECK(log.best_valid_ppl == best);
  CHECK(m.perplexity(enc) == best);
  CHECK(best_epoch >= 1);

  MultiTaskModel plain = toy_model();
  cfg.keep_best = false;
  const TrainLog last = train(plain, enc, enc, cfg);
  CHECK(last.best_epoch == 6);
  CHECK(plain.perplexity(enc) == last.epochs.back().valid_ppl);
}
