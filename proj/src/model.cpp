#include "mtlm/model.hpp"

#include "mtlm/error.hpp"

namespace mtlm {
namespace {

constexpr std::uint64_t kBackboneStream = 0x6C6D;
constexpr std::uint64_t kIntentStream = 0x6964;
constexpr std::uint64_t kSlotStream = 0x7366;

HeadConfig head_config(const ModelConfig& config, std::size_t classes) {
  return {config.variant, config.hidden_dim, classes};
}

}  // namespace

LabelSet::LabelSet(std::vector<std::string> names) : names_(std::move(names)) {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (!lookup_.emplace(names_[i], i).second) throw ConfigError("duplicate label '" + names_[i] + "'");
  }
}

std::size_t LabelSet::index(std::string_view name) const {
  const auto it = lookup_.find(std::string(name));
  if (it == lookup_.end()) throw LabelError("unknown label '" + std::string(name) + "'");
  return it->second;
}

BackboneConfig backbone_config(const ModelConfig& config, std::size_t vocab_size) {
  return {vocab_size, config.embedding_dim, config.hidden_dim, config.layers, config.tie_embeddings};
}

MultiTaskModel MultiTaskModel::create(Vocabulary vocab, LabelSet intents, LabelSet slots,
                                      const ModelConfig& config) {
  MultiTaskModel m;
  m.config_ = config;
  CounterRng root(config.seed);
  CounterRng lm_rng = root.split(kBackboneStream);
  CounterRng id_rng = root.split(kIntentStream);
  CounterRng sf_rng = root.split(kSlotStream);
  m.backbone_ = Backbone::create(m.params_, backbone_config(config, vocab.size()), lm_rng, config.init_scale);
  m.intent_head_ = IntentHead::create(m.params_, head_config(config, intents.size()), id_rng, config.init_scale);
  m.slot_head_ = SlotHead::create(m.params_, head_config(config, slots.size()), sf_rng, config.init_scale);
  m.vocab_ = std::move(vocab);
  m.intents_ = std::move(intents);
  m.slots_ = std::move(slots);
  return m;
}

MultiTaskModel MultiTaskModel::assemble(Vocabulary vocab, LabelSet intents, LabelSet slots,
                                        const ModelConfig& config, ParamSet params) {
  MultiTaskModel m;
  m.config_ = config;
  m.params_ = std::move(params);
  m.backbone_ = Backbone::bind(m.params_, backbone_config(config, vocab.size()));
  m.intent_head_ = IntentHead::bind(m.params_, head_config(config, intents.size()));
  m.slot_head_ = SlotHead::bind(m.params_, head_config(config, slots.size()));
  if (!m.params_.all_finite()) throw CheckpointError("parameters contain non-finite values");
  m.vocab_ = std::move(vocab);
  m.intents_ = std::move(intents);
  m.slots_ = std::move(slots);
  return m;
}

void MultiTaskModel::reset_heads(std::uint64_t seed) {
  // Recreate the heads in a scratch ParamSet with the same registration order,
  // then copy the values over.
  ParamSet scratch;
  CounterRng root(seed);
  CounterRng id_rng = root.split(kIntentStream);
  CounterRng sf_rng = root.split(kSlotStream);
  (void)IntentHead::create(scratch, head_config(config_, intents_.size()), id_rng, config_.init_scale);
  (void)SlotHead::create(scratch, head_config(config_, slots_.size()), sf_rng, config_.init_scale);
  for (std::size_t i = 0; i < scratch.size(); ++i) params_.value(params_.index(scratch.name(i))) = scratch.value(i);
}

EncodedUtterance MultiTaskModel::encode(const AnnotatedUtterance& utt) const {
  EncodedUtterance out{tokens(utt.tokens), std::nullopt, {}};
  if (utt.intent) out.intent = intents_.index(*utt.intent);
  out.slots.reserve(utt.slots.size());
  for (const auto& s : utt.slots) out.slots.push_back(slots_.index(s));
  return out;
}

std::vector<EncodedUtterance> MultiTaskModel::encode_all(std::span<const AnnotatedUtterance> utts) const {
  std::vector<EncodedUtterance> out;
  out.reserve(utts.size());
  for (const auto& u : utts) out.push_back(encode(u));
  return out;
}

TokenSequence MultiTaskModel::tokens(std::span<const std::string> words) const {
  return TokenSequence::from_tokens(vocab_, words);
}

double MultiTaskModel::perplexity(std::span<const EncodedUtterance> corpus) const {
  std::vector<TokenSequence> seqs;
  seqs.reserve(corpus.size());
  for (const auto& u : corpus) seqs.push_back(u.tokens);
  return backbone_.perplexity(params_, seqs);
}

}  // namespace mtlm
