#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mtlm/backbone.hpp"
#include "mtlm/heads.hpp"
#include "mtlm/utterance.hpp"

namespace mtlm {

// Ordered label inventory (intents or slot labels).
class LabelSet {
 public:
  LabelSet() = default;
  explicit LabelSet(std::vector<std::string> names);

  std::size_t size() const noexcept { return names_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  // Throws LabelError naming the label when absent.
  std::size_t index(std::string_view name) const;
  bool contains(std::string_view name) const { return lookup_.contains(std::string(name)); }

  friend bool operator==(const LabelSet& a, const LabelSet& b) { return a.names_ == b.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> lookup_;
};

struct ModelConfig {
  std::size_t embedding_dim = 32;
  std::size_t hidden_dim = 32;
  std::size_t layers = 2;
  bool tie_embeddings = false;
  EncoderVariant variant = EncoderVariant::ProjectedAttention;
  double init_scale = 0.1;
  std::uint64_t seed = 1;
};

// Shared backbone plus intent and slot heads over one ParamSet.
class MultiTaskModel {
 public:
  static MultiTaskModel create(Vocabulary vocab, LabelSet intents, LabelSet slots,
                               const ModelConfig& config);
  // Rebuilds a model around existing parameters (used when loading checkpoints).
  static MultiTaskModel assemble(Vocabulary vocab, LabelSet intents, LabelSet slots,
                                 const ModelConfig& config, ParamSet params);

  const Vocabulary& vocab() const noexcept { return vocab_; }
  const LabelSet& intents() const noexcept { return intents_; }
  const LabelSet& slots() const noexcept { return slots_; }
  const ModelConfig& config() const noexcept { return config_; }
  const ParamSet& params() const noexcept { return params_; }
  ParamSet& params() noexcept { return params_; }
  const Backbone& backbone() const noexcept { return backbone_; }
  const IntentHead& intent_head() const noexcept { return intent_head_; }
  const SlotHead& slot_head() const noexcept { return slot_head_; }

  // Fresh random values for both NLU heads; backbone untouched.
  void reset_heads(std::uint64_t seed);

  // Maps surface tokens and labels to ids. Unknown tokens become <unk>;
  // unknown labels raise LabelError.
  EncodedUtterance encode(const AnnotatedUtterance& utt) const;
  std::vector<EncodedUtterance> encode_all(std::span<const AnnotatedUtterance> utts) const;
  TokenSequence tokens(std::span<const std::string> words) const;

  double perplexity(std::span<const EncodedUtterance> corpus) const;

  friend bool operator==(const MultiTaskModel& a, const MultiTaskModel& b) {
    return a.vocab_ == b.vocab_ && a.intents_ == b.intents_ && a.slots_ == b.slots_ &&
           a.params_ == b.params_;
  }

 private:
  Vocabulary vocab_;
  LabelSet intents_;
  LabelSet slots_;
  ModelConfig config_;
  ParamSet params_;
  Backbone backbone_;
  IntentHead intent_head_;
  SlotHead slot_head_;
};

BackboneConfig backbone_config(const ModelConfig& config, std::size_t vocab_size);

// Binary checkpoint: "MTLM1", a little-endian u64 byte length followed by a
// UTF-8 JSON manifest (config, vocabulary, labels, ordered array shapes),
// then every array as little-endian IEEE-754 doubles in manifest order.
void save_checkpoint(const MultiTaskModel& model, const std::filesystem::path& path);
MultiTaskModel load_checkpoint(const std::filesystem::path& path);
std::string serialize_checkpoint(const MultiTaskModel& model);
MultiTaskModel deserialize_checkpoint(std::string_view bytes);

}  // namespace mtlm
