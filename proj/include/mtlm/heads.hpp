#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mtlm/backbone.hpp"
#include "mtlm/utterance.hpp"

namespace mtlm {

enum class EncoderVariant { NoAttention, WeightedAttention, ProjectedAttention };

std::string_view to_string(EncoderVariant variant);
EncoderVariant parse_encoder_variant(std::string_view name);

inline constexpr std::size_t kProjectedAttentionBlocks = 2;

// ---- pooling / encoder building blocks -------------------------------------

struct WeightedAttentionWeights {
  Matrix w;  // H x H
  Matrix v;  // H x 1
};

// One projected self-attention block: y = layer_norm(x + softmax(q k^T / sqrt(H)) v W_o).
struct ProjectedBlockWeights {
  Matrix wq, wk, wv, wo;  // H x H
  Matrix gain, bias;      // 1 x H
};

// Last row of the states.
std::vector<double> pool_no_attention(const HiddenStates& states);
// softmax_t(v . tanh(W c_t)) weighted sum of the rows.
std::vector<double> pool_weighted_attention(const HiddenStates& states,
                                            const WeightedAttentionWeights& weights);
// Stacked projected attention blocks; output keeps one row per input row.
Matrix encode_projected_attention(const HiddenStates& states,
                                  std::span<const ProjectedBlockWeights> blocks);

Var weighted_attention_pool(GradTape& tape, Var states, Var w, Var v);
Var projected_attention_block(GradTape& tape, Var x, Var wq, Var wk, Var wv, Var wo, Var gain,
                              Var bias);
// Per-step context for slot tagging: x + softmax(x W x^T) x.
Var bilinear_self_attention(GradTape& tape, Var x, Var w);

// ---- heads ------------------------------------------------------------------

struct HeadConfig {
  EncoderVariant variant = EncoderVariant::NoAttention;
  std::size_t hidden_dim = 32;
  std::size_t classes = 2;
};

// Utterance-level intent classifier over the token-aligned backbone states.
class IntentHead {
 public:
  static IntentHead create(ParamSet& params, const HeadConfig& config, CounterRng& rng,
                           double init_scale);
  static IntentHead bind(const ParamSet& params, const HeadConfig& config);

  const HeadConfig& config() const noexcept { return config_; }
  // token_states: T x H (backbone rows 1..T). Returns 1 x classes.
  Var logits(GradTape& tape, const ParamSet& params, Var token_states) const;
  // Parameter indices owned by this head.
  const std::vector<std::size_t>& parameter_indices() const noexcept { return owned_; }

 private:
  HeadConfig config_;
  std::vector<std::size_t> owned_;
  std::size_t pool_w_ = 0, pool_v_ = 0;
  std::vector<std::array<std::size_t, 6>> blocks_;
  std::size_t weight_ = 0, bias_ = 0;
};

// Per-token slot classifier; never pools over time.
class SlotHead {
 public:
  static SlotHead create(ParamSet& params, const HeadConfig& config, CounterRng& rng,
                         double init_scale);
  static SlotHead bind(const ParamSet& params, const HeadConfig& config);

  const HeadConfig& config() const noexcept { return config_; }
  // token_states: T x H. Returns T x classes.
  Var logits(GradTape& tape, const ParamSet& params, Var token_states) const;
  const std::vector<std::size_t>& parameter_indices() const noexcept { return owned_; }

 private:
  HeadConfig config_;
  std::vector<std::size_t> owned_;
  std::size_t attn_w_ = 0;
  std::vector<std::array<std::size_t, 6>> blocks_;
  std::size_t weight_ = 0, bias_ = 0;
};

// Rows 1..T of the backbone output, i.e. the states aligned to w_1..w_T.
Var token_aligned_states(GradTape& tape, Var states);

// Mean over the batch of -log P(intent | w).
double intent_loss(const ParamSet& params, const Backbone& backbone, const IntentHead& head,
                   std::span<const EncodedUtterance> batch, Gradients* grads = nullptr);
// Mean over the batch of sum_t -log P(s_t | w).
double slot_loss(const ParamSet& params, const Backbone& backbone, const SlotHead& head,
                 std::span<const EncodedUtterance> batch, Gradients* grads = nullptr);

// Tape-level terms for one utterance; validate labels against the head.
Var intent_term(GradTape& tape, const ParamSet& params, const IntentHead& head, Var token_states,
                const EncodedUtterance& utt);
Var slot_term(GradTape& tape, const ParamSet& params, const SlotHead& head, Var token_states,
              const EncodedUtterance& utt);

std::size_t predict_intent(const ParamSet& params, const Backbone& backbone, const IntentHead& head,
                           const TokenSequence& tokens);
std::vector<std::size_t> predict_slots(const ParamSet& params, const Backbone& backbone,
                                       const SlotHead& head, const TokenSequence& tokens);

// First index of the maximum.
std::size_t argmax(std::span<const double> values);

}  // namespace mtlm
