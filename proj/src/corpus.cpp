#include "mtlm/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <unordered_map>

#include "mtlm/error.hpp"
#include "mtlm/vocabulary.hpp"

namespace mtlm {
namespace {

constexpr std::size_t kRareAttempts = 10000;

bool is_placeholder(std::string_view word) {
  return word.size() > 2 && word.front() == '{' && word.back() == '}';
}

std::string_view placeholder_name(std::string_view word) { return word.substr(1, word.size() - 2); }

void check_rate(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ConfigError(std::string(name) + " must lie in [0, 1], got " + std::to_string(p));
  }
}

// Approximately standard normal from twelve uniforms; exact integer-to-double
// arithmetic only, so the value is identical on every IEEE platform.
double irwin_hall_normal(CounterRng& rng) {
  double sum = 0.0;
  for (int k = 0; k < 12; ++k) sum += static_cast<double>(rng.next() >> 11) * 0x1.0p-53;
  return sum - 6.0;
}

}  // namespace

std::size_t long_tail_start(std::size_t n) { return n - n / 4; }

void GrammarSpec::validate() const {
  if (intents.size() < 2) throw ConfigError("grammar needs at least 2 intents");
  if (!(zipf_exponent >= 0.0) || !std::isfinite(zipf_exponent)) {
    throw ConfigError("zipf exponent must be finite and >= 0");
  }
  if (other_label.empty()) throw ConfigError("grammar other label is empty");
  std::unordered_map<std::string, const SlotFillers*> by_name;
  for (const SlotFillers& s : slots) {
    if (s.slot.empty() || s.slot == other_label) throw ConfigError("invalid slot name '" + s.slot + "'");
    if (!by_name.emplace(s.slot, &s).second) throw ConfigError("duplicate slot '" + s.slot + "'");
    for (const std::string& f : s.fillers) {
      if (split_whitespace(f).empty()) throw ConfigError("slot '" + s.slot + "' has an empty filler");
    }
  }
  std::unordered_set<std::string> seen_intents;
  for (const IntentTemplates& it : intents) {
    if (it.intent.empty()) throw ConfigError("intent with empty name");
    if (!seen_intents.insert(it.intent).second) throw ConfigError("duplicate intent '" + it.intent + "'");
    if (it.templates.empty()) throw ConfigError("intent '" + it.intent + "' has no templates");
    for (const std::string& t : it.templates) {
      const auto words = split_whitespace(t);
      if (words.empty()) throw ConfigError("intent '" + it.intent + "' has an empty template");
      for (const std::string& w : words) {
        if (!is_placeholder(w)) continue;
        const auto found = by_name.find(std::string(placeholder_name(w)));
        if (found == by_name.end()) {
          throw ConfigError("template '" + t + "' uses unknown slot " + w);
        }
        if (found->second->fillers.empty()) {
          throw ConfigError("template '" + t + "' uses slot " + w + " which has no fillers");
        }
      }
    }
  }
}

const SlotFillers& GrammarSpec::slot(std::string_view name) const {
  for (const SlotFillers& s : slots)
    if (s.slot == name) return s;
  throw LabelError("unknown slot '" + std::string(name) + "'");
}

std::vector<std::string> GrammarSpec::intent_labels() const {
  std::vector<std::string> out;
  for (const IntentTemplates& it : intents) out.push_back(it.intent);
  return out;
}

std::vector<std::string> GrammarSpec::slot_labels() const {
  std::vector<std::string> out{other_label};
  for (const SlotFillers& s : slots) out.push_back(s.slot);
  return out;
}

std::span<const std::string> GrammarSpec::long_tail(const SlotFillers& slot) const {
  const std::size_t start = long_tail_start(slot.fillers.size());
  return std::span<const std::string>(slot.fillers).subspan(start);
}

std::unordered_set<std::string> GrammarSpec::long_tail_words() const {
  std::unordered_set<std::string> out;
  for (const SlotFillers& s : slots)
    for (const std::string& f : long_tail(s))
      for (std::string& w : split_whitespace(f)) out.insert(std::move(w));
  return out;
}

std::vector<std::string> GrammarSpec::words() const {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  auto push = [&](const std::string& text) {
    for (std::string& w : split_whitespace(text))
      if (!is_placeholder(w) && seen.insert(w).second) out.push_back(std::move(w));
  };
  for (const IntentTemplates& it : intents)
    for (const std::string& t : it.templates) push(t);
  for (const SlotFillers& s : slots)
    for (const std::string& f : s.fillers) push(f);
  return out;
}

ZipfSampler::ZipfSampler(std::size_t n, double exponent) {
  if (n == 0) throw ConfigError("Zipf sampler over zero items");
  pmf_.resize(n);
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    pmf_[k] = std::pow(static_cast<double>(k + 1), -exponent);
    total += pmf_[k];
  }
  cdf_.resize(n);
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    pmf_[k] /= total;
    acc += pmf_[k];
    cdf_[k] = k + 1 == n ? std::numeric_limits<std::uint64_t>::max() : probability_threshold(acc);
  }
}

std::size_t ZipfSampler::operator()(CounterRng& rng) const {
  const std::uint64_t x = rng.next();
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), x);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
}

double ZipfSampler::probability(std::size_t rank) const { return pmf_.at(rank); }

std::string utterance_id(std::string_view split, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "-%06zu", index);
  return std::string(split) + buf;
}

UtteranceGenerator::UtteranceGenerator(GrammarSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  for (std::size_t s = 0; s < spec_.slots.size(); ++s) {
    samplers_.emplace_back(std::max<std::size_t>(1, spec_.slots[s].fillers.size()), spec_.zipf_exponent);
    auto& words = filler_words_.emplace_back();
    for (const std::string& f : spec_.slots[s].fillers) words.push_back(split_whitespace(f));
  }
  intent_templates_.resize(spec_.intents.size());
  for (std::size_t i = 0; i < spec_.intents.size(); ++i) {
    for (const std::string& t : spec_.intents[i].templates) {
      intent_templates_[i].push_back(template_words_.size());
      template_words_.push_back(split_whitespace(t));
    }
  }
}

std::size_t UtteranceGenerator::sample_filler(std::size_t slot, CounterRng& rng) const {
  return samplers_.at(slot)(rng);
}

AnnotatedUtterance UtteranceGenerator::draw(CounterRng& rng, std::string id, bool* has_long_tail) const {
  const std::size_t intent = rng.below(spec_.intents.size());
  const auto& choices = intent_templates_[intent];
  const std::size_t tmpl = choices[rng.below(choices.size())];

  AnnotatedUtterance utt;
  utt.id = std::move(id);
  utt.intent = spec_.intents[intent].intent;
  bool tail = false;
  for (const std::string& word : template_words_[tmpl]) {
    if (!is_placeholder(word)) {
      utt.tokens.push_back(word);
      utt.slots.push_back(spec_.other_label);
      continue;
    }
    const std::string_view name = placeholder_name(word);
    std::size_t s = 0;
    while (spec_.slots[s].slot != name) ++s;
    const std::size_t rank = sample_filler(s, rng);
    if (rank >= long_tail_start(spec_.slots[s].fillers.size())) tail = true;
    for (const std::string& w : filler_words_[s][rank]) {
      utt.tokens.push_back(w);
      utt.slots.push_back(spec_.slots[s].slot);
    }
  }
  if (has_long_tail) *has_long_tail = tail;
  return utt;
}

AnnotatedUtterance UtteranceGenerator::sample(std::string_view split, std::size_t index) const {
  CounterRng rng = CounterRng(spec_.seed, hash_string(split)).split(index);
  return draw(rng, utterance_id(split, index), nullptr);
}

AnnotatedUtterance UtteranceGenerator::sample_rare(std::string_view split, std::size_t index) const {
  CounterRng rng = CounterRng(spec_.seed, hash_string(split)).split(index);
  for (std::size_t attempt = 0; attempt < kRareAttempts; ++attempt) {
    bool tail = false;
    AnnotatedUtterance utt = draw(rng, utterance_id(split, index), &tail);
    if (tail) return utt;
  }
  throw ConfigError("no utterance with a long-tail filler after " + std::to_string(kRareAttempts) +
                    " attempts; the grammar's long tail is unreachable");
}

DatasetBundle generate(const GrammarSpec& spec, const DatasetSizes& sizes) {
  UtteranceGenerator gen(spec);
  if (sizes.test_rare > 0) {
    bool any_tail = false;
    for (const SlotFillers& s : spec.slots) any_tail = any_tail || !spec.long_tail(s).empty();
    if (!any_tail) throw ConfigError("a rare-word test set was requested but no slot has long-tail fillers");
  }
  DatasetBundle out;
  out.intents = spec.intent_labels();
  out.slot_labels = spec.slot_labels();
  auto fill = [&](std::vector<AnnotatedUtterance>& dst, std::string_view split, std::size_t n) {
    dst.reserve(n);
    for (std::size_t i = 0; i < n; ++i) dst.push_back(gen.sample(split, i));
  };
  fill(out.train_nlu, "train_nlu", sizes.train_nlu);
  fill(out.train_trans, "train_trans", sizes.resolved_train_trans());
  for (AnnotatedUtterance& u : out.train_trans) {
    u.intent.reset();
    u.slots.clear();
  }
  fill(out.dev, "dev", sizes.dev);
  fill(out.test_gen, "test_gen", sizes.test_gen);
  out.test_rare.reserve(sizes.test_rare);
  for (std::size_t i = 0; i < sizes.test_rare; ++i) out.test_rare.push_back(gen.sample_rare("test_rare", i));
  return out;
}

void NoiseConfig::validate() const {
  if (nbest < 1) throw ConfigError("n-best size must be >= 1");
  check_rate(substitution_rate, "substitution rate");
  check_rate(deletion_rate, "deletion rate");
  check_rate(insertion_rate, "insertion rate");
  check_rate(oracle_inclusion, "oracle inclusion");
  if (!(rare_multiplier >= 0.0)) throw ConfigError("rare multiplier must be >= 0");
  if (!(per_token_cost >= 0.0 && edit_cost >= 0.0 && rare_edit_cost >= 0.0 && score_noise >= 0.0)) {
    throw ConfigError("first-pass score costs must be >= 0");
  }
}

FirstPassContext FirstPassContext::from_grammar(const GrammarSpec& spec) {
  return FirstPassContext{spec.words(), spec.long_tail_words()};
}

namespace {

struct Variant {
  std::vector<std::string> tokens;
  double cost = 0.0;
  std::size_t edits = 0;
};

std::string confusion(const FirstPassContext& ctx, CounterRng& rng, const std::string& avoid) {
  if (ctx.confusion_words.empty()) throw ConfigError("first-pass simulation needs confusion words");
  if (ctx.confusion_words.size() == 1) return ctx.confusion_words.front();
  for (;;) {
    const std::string& w = ctx.confusion_words[rng.below(ctx.confusion_words.size())];
    if (w != avoid) return w;
  }
}

Variant corrupt(const std::vector<std::string>& ref, const NoiseConfig& noise, const FirstPassContext& ctx,
                CounterRng& rng) {
  const bool noisy = noise.substitution_rate > 0 || noise.deletion_rate > 0 || noise.insertion_rate > 0;
  const std::uint64_t ins = probability_threshold(noise.insertion_rate);
  Variant v;
  for (const std::string& word : ref) {
    const bool rare = ctx.long_tail_words.contains(word);
    const double m = rare ? noise.rare_multiplier : 1.0;
    const double edit = rare ? noise.rare_edit_cost : noise.edit_cost;
    const double p_del = std::min(1.0, noise.deletion_rate * m);
    const double p_sub = std::min(1.0 - p_del, noise.substitution_rate * m);
    const std::uint64_t x = rng.next();
    if (x < probability_threshold(p_del)) {
      v.cost += edit;
      ++v.edits;
    } else if (x < probability_threshold(p_del + p_sub)) {
      v.tokens.push_back(confusion(ctx, rng, word));
      v.cost += edit;
      ++v.edits;
    } else {
      v.tokens.push_back(word);
    }
    if (rng.bernoulli(ins)) {
      v.tokens.push_back(confusion(ctx, rng, ""));
      v.cost += noise.edit_cost;
      ++v.edits;
    }
  }
  if (noisy && v.edits == 0) {
    // Substitute one position so that the variant differs from the reference.
    const std::size_t pos = rng.below(v.tokens.size());
    const bool rare = ctx.long_tail_words.contains(v.tokens[pos]);
    v.tokens[pos] = confusion(ctx, rng, v.tokens[pos]);
    v.cost += rare ? noise.rare_edit_cost : noise.edit_cost;
    ++v.edits;
  }
  if (v.tokens.empty()) {
    v.tokens.push_back(confusion(ctx, rng, ""));
    v.cost += noise.edit_cost;
  }
  return v;
}

}  // namespace

NBestList simulate_first_pass(const AnnotatedUtterance& utt, const NoiseConfig& noise,
                              const FirstPassContext& context, std::uint64_t seed) {
  noise.validate();
  if (utt.tokens.empty()) throw DomainError("utterance '" + utt.id + "' has no tokens");
  CounterRng rng = CounterRng(seed, hash_string("first_pass")).split(hash_string(utt.id));

  std::vector<Variant> variants;
  if (rng.bernoulli(probability_threshold(noise.oracle_inclusion))) variants.push_back({utt.tokens, 0.0, 0});
  const std::size_t max_attempts = 20 * noise.nbest;
  for (std::size_t attempt = 0; variants.size() < noise.nbest && attempt < max_attempts; ++attempt) {
    Variant v = corrupt(utt.tokens, noise, context, rng);
    const bool duplicate = std::any_of(variants.begin(), variants.end(),
                                       [&](const Variant& o) { return o.tokens == v.tokens; });
    if (!duplicate) variants.push_back(std::move(v));
  }
  while (variants.size() < noise.nbest) variants.push_back(corrupt(utt.tokens, noise, context, rng));

  NBestList out;
  out.id = utt.id;
  out.reference = utt.tokens;
  std::vector<std::pair<double, std::size_t>> order;
  for (std::size_t k = 0; k < variants.size(); ++k) {
    const Variant& v = variants[k];
    const double score = -noise.per_token_cost * static_cast<double>(v.tokens.size()) - v.cost +
                         noise.score_noise * irwin_hall_normal(rng);
    order.emplace_back(std::min(0.0, score), k);
  }
  // Rank by per-word score, the first-pass term of the rescoring formula.
  const auto per_word = [&](const std::pair<double, std::size_t>& e) {
    return e.first / static_cast<double>(variants[e.second].tokens.size());
  };
  std::stable_sort(order.begin(), order.end(),
                   [&](const auto& a, const auto& b) { return per_word(a) > per_word(b); });
  for (const auto& [score, k] : order) out.hypotheses.push_back({std::move(variants[k].tokens), score});
  return out;
}

std::vector<NBestList> simulate_first_pass(std::span<const AnnotatedUtterance> utts, const NoiseConfig& noise,
                                           const FirstPassContext& context, std::uint64_t seed) {
  std::vector<NBestList> out;
  out.reserve(utts.size());
  for (const AnnotatedUtterance& u : utts) out.push_back(simulate_first_pass(u, noise, context, seed));
  return out;
}

}  // namespace mtlm
