#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "mtlm/rescorer.hpp"
#include "mtlm/rng.hpp"
#include "mtlm/utterance.hpp"

namespace mtlm {

// Templates are whitespace-separated words; "{slot}" is replaced by a filler
// of that slot. Carrier words are labeled with the grammar's other label.
struct IntentTemplates {
  std::string intent;
  std::vector<std::string> templates;
};

// Fillers in frequency-rank order: index 0 is the most frequent. A filler may
// span several words.
struct SlotFillers {
  std::string slot;
  std::vector<std::string> fillers;
};

struct GrammarSpec {
  std::vector<IntentTemplates> intents;
  std::vector<SlotFillers> slots;
  double zipf_exponent = 1.2;
  std::string other_label = "other";
  std::uint64_t seed = 7;

  void validate() const;
  const SlotFillers& slot(std::string_view name) const;
  // Intent names, then slot labels with the other label first.
  std::vector<std::string> intent_labels() const;
  std::vector<std::string> slot_labels() const;
  // Long-tail fillers of one slot: the bottom quartile by rank.
  std::span<const std::string> long_tail(const SlotFillers& slot) const;
  // Every word that appears in a long-tail filler.
  std::unordered_set<std::string> long_tail_words() const;
  // Every word the grammar can produce, in first-seen order.
  std::vector<std::string> words() const;
};

// Five intents over seven slots plus "other"; about 200 distinct words.
GrammarSpec default_grammar();

// Index of the first long-tail filler for a slot with n fillers.
std::size_t long_tail_start(std::size_t n);

// Draws a rank in [0, n) with P(k) proportional to (k+1)^-s.
class ZipfSampler {
 public:
  ZipfSampler(std::size_t n, double exponent);
  std::size_t operator()(CounterRng& rng) const;
  double probability(std::size_t rank) const;
  std::size_t size() const noexcept { return cdf_.size(); }

 private:
  std::vector<std::uint64_t> cdf_;  // cumulative mass scaled to 2^64 - 1
  std::vector<double> pmf_;
};

struct DatasetSizes {
  std::size_t train_nlu = 5000;
  std::size_t train_trans = 0;  // 0 means 8 x train_nlu
  std::size_t dev = 500;
  std::size_t test_gen = 1000;
  std::size_t test_rare = 500;

  std::size_t resolved_train_trans() const { return train_trans == 0 ? 8 * train_nlu : train_trans; }
};

// train_trans carries no annotations; every other split is annotated.
struct DatasetBundle {
  std::vector<std::string> intents;
  std::vector<std::string> slot_labels;
  std::vector<AnnotatedUtterance> train_nlu;
  std::vector<AnnotatedUtterance> train_trans;
  std::vector<AnnotatedUtterance> dev;
  std::vector<AnnotatedUtterance> test_gen;
  std::vector<AnnotatedUtterance> test_rare;

  friend bool operator==(const DatasetBundle&, const DatasetBundle&) = default;
};

class UtteranceGenerator {
 public:
  explicit UtteranceGenerator(GrammarSpec spec);

  const GrammarSpec& spec() const noexcept { return spec_; }
  // One utterance from its own stream; pure in (seed, split, index).
  AnnotatedUtterance sample(std::string_view split, std::size_t index) const;
  // Rejection-samples until the utterance contains a long-tail filler.
  AnnotatedUtterance sample_rare(std::string_view split, std::size_t index) const;
  std::size_t sample_filler(std::size_t slot, CounterRng& rng) const;

 private:
  AnnotatedUtterance draw(CounterRng& rng, std::string id, bool* has_long_tail) const;

  GrammarSpec spec_;
  std::vector<ZipfSampler> samplers_;
  std::vector<std::vector<std::vector<std::string>>> filler_words_;
  std::vector<std::vector<std::string>> template_words_;
  std::vector<std::vector<std::size_t>> intent_templates_;
};

DatasetBundle generate(const GrammarSpec& spec, const DatasetSizes& sizes);

std::string utterance_id(std::string_view split, std::size_t index);

struct NoiseConfig {
  std::size_t nbest = 10;
  double substitution_rate = 0.05;
  double deletion_rate = 0.02;
  double insertion_rate = 0.02;
  // Long-tail words are corrupted at rate * rare_multiplier (capped at 1).
  double rare_multiplier = 6.0;
  double oracle_inclusion = 0.9;
  // Score = -per_token_cost * |w| - sum of edit costs + score_noise * N(0,1), capped at 0.
  double per_token_cost = 0.3;
  double edit_cost = 1.5;
  double rare_edit_cost = 0.3;
  double score_noise = 1.0;

  void validate() const;
};

// Words substitutions and insertions are drawn from, and the long-tail words
// that are corrupted at the elevated rate.
struct FirstPassContext {
  std::vector<std::string> confusion_words;
  std::unordered_set<std::string> long_tail_words;

  static FirstPassContext from_grammar(const GrammarSpec& spec);
};

NBestList simulate_first_pass(const AnnotatedUtterance& utt, const NoiseConfig& noise,
                              const FirstPassContext& context, std::uint64_t seed);
std::vector<NBestList> simulate_first_pass(std::span<const AnnotatedUtterance> utts, const NoiseConfig& noise,
                                           const FirstPassContext& context, std::uint64_t seed);

}  // namespace mtlm
