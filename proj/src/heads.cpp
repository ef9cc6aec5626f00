#include "mtlm/heads.hpp"

#include <algorithm>
#include <cmath>

#include "mtlm/error.hpp"
#include "mtlm/kernels.hpp"

namespace mtlm {
namespace {

constexpr const char* kBlockFields[6] = {"wq", "wk", "wv", "wo", "ln_gain", "ln_bias"};

std::size_t bind_shape(const ParamSet& params, const std::string& name, std::size_t rows,
                       std::size_t cols) {
  const std::size_t idx = params.index(name);
  const Matrix& m = params.value(idx);
  if (m.rows() != rows || m.cols() != cols) {
    throw DimensionError("parameter '" + name + "' has shape " + m.shape_string() + ", expected " +
                         shape_string(rows, cols));
  }
  return idx;
}

std::string block_name(const std::string& prefix, std::size_t b, std::size_t field) {
  return prefix + ".block" + std::to_string(b) + "." + kBlockFields[field];
}

std::array<std::size_t, 6> create_block(ParamSet& params, const std::string& prefix, std::size_t b,
                                        std::size_t h, CounterRng& rng, double scale) {
  std::array<std::size_t, 6> idx{};
  for (std::size_t f = 0; f < 4; ++f) idx[f] = params.add(block_name(prefix, b, f), random_uniform(h, h, scale, rng));
  idx[4] = params.add(block_name(prefix, b, 4), Matrix(1, h, 1.0));
  idx[5] = params.add(block_name(prefix, b, 5), Matrix(1, h));
  return idx;
}

std::array<std::size_t, 6> bind_block(const ParamSet& params, const std::string& prefix,
                                      std::size_t b, std::size_t h) {
  std::array<std::size_t, 6> idx{};
  for (std::size_t f = 0; f < 6; ++f) idx[f] = bind_shape(params, block_name(prefix, b, f), f < 4 ? h : 1, h);
  return idx;
}

Var run_blocks(GradTape& tape, const ParamSet& params, Var x,
               const std::vector<std::array<std::size_t, 6>>& blocks) {
  for (const auto& b : blocks) {
    x = projected_attention_block(tape, x, tape.parameter(params, b[0]), tape.parameter(params, b[1]),
                                  tape.parameter(params, b[2]), tape.parameter(params, b[3]),
                                  tape.parameter(params, b[4]), tape.parameter(params, b[5]));
  }
  return x;
}

void check_states(const Matrix& states) {
  if (states.rows() == 0) throw DomainError("hidden states are empty");
}

void validate_head(const HeadConfig& config) {
  if (config.classes < 2) throw ConfigError("a classification head needs at least 2 classes");
  if (config.hidden_dim == 0) throw ConfigError("head hidden size must be positive");
}

}  // namespace

std::string_view to_string(EncoderVariant variant) {
  switch (variant) {
    case EncoderVariant::NoAttention: return "no_attention";
    case EncoderVariant::WeightedAttention: return "weighted_attention";
    case EncoderVariant::ProjectedAttention: return "projected_attention";
  }
  return "unknown";
}

EncoderVariant parse_encoder_variant(std::string_view name) {
  if (name == "no_attention") return EncoderVariant::NoAttention;
  if (name == "weighted_attention") return EncoderVariant::WeightedAttention;
  if (name == "projected_attention") return EncoderVariant::ProjectedAttention;
  throw ConfigError("unknown encoder variant '" + std::string(name) + "'");
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw DomainError("argmax of an empty vector");
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

// ---- building blocks ---------------------------------------------------------

Var weighted_attention_pool(GradTape& tape, Var states, Var w, Var v) {
  const Var scores = tape.matmul(tape.tanh(tape.matmul(states, w)), v);  // T x 1
  const Var weights = tape.softmax_rows(tape.transpose(scores));          // 1 x T
  return tape.matmul(weights, states);
}

Var projected_attention_block(GradTape& tape, Var x, Var wq, Var wk, Var wv, Var wo, Var gain,
                              Var bias) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(tape.value(x).cols()));
  const Var q = tape.matmul(x, wq);
  const Var k = tape.matmul(x, wk);
  const Var v = tape.matmul(x, wv);
  const Var attn = tape.softmax_rows(tape.scale(tape.matmul(q, tape.transpose(k)), scale));
  const Var projected = tape.matmul(tape.matmul(attn, v), wo);
  return tape.layer_norm_rows(tape.add(x, projected), gain, bias);
}

Var bilinear_self_attention(GradTape& tape, Var x, Var w) {
  const Var attn = tape.softmax_rows(tape.matmul(tape.matmul(x, w), tape.transpose(x)));
  return tape.add(x, tape.matmul(attn, x));
}

std::vector<double> pool_no_attention(const HiddenStates& states) {
  check_states(states);
  const auto last = states.row(states.rows() - 1);
  return {last.begin(), last.end()};
}

std::vector<double> pool_weighted_attention(const HiddenStates& states,
                                            const WeightedAttentionWeights& weights) {
  check_states(states);
  if (weights.w.rows() != states.cols() || weights.v.rows() != weights.w.cols() || weights.v.cols() != 1) {
    throw DimensionError("weighted attention weights " + weights.w.shape_string() + ", " +
                         weights.v.shape_string() + " do not fit states " + states.shape_string());
  }
  GradTape tape;
  const Var out = weighted_attention_pool(tape, tape.constant(states), tape.constant(weights.w),
                                          tape.constant(weights.v));
  const auto row = tape.value(out).row(0);
  return {row.begin(), row.end()};
}

Matrix encode_projected_attention(const HiddenStates& states,
                                  std::span<const ProjectedBlockWeights> blocks) {
  check_states(states);
  GradTape tape;
  Var x = tape.constant(states);
  const std::size_t h = states.cols();
  for (const auto& b : blocks) {
    for (const Matrix* m : {&b.wq, &b.wk, &b.wv, &b.wo}) {
      if (m->rows() != h || m->cols() != h) {
        throw DimensionError("projection " + m->shape_string() + " does not fit states " +
                             states.shape_string());
      }
    }
    x = projected_attention_block(tape, x, tape.constant(b.wq), tape.constant(b.wk), tape.constant(b.wv),
                                  tape.constant(b.wo), tape.constant(b.gain), tape.constant(b.bias));
  }
  return tape.value(x);
}

Var token_aligned_states(GradTape& tape, Var states) {
  return tape.slice_rows(states, 1, tape.value(states).rows());
}

// ---- intent head -------------------------------------------------------------

IntentHead IntentHead::create(ParamSet& params, const HeadConfig& config, CounterRng& rng,
                              double init_scale) {
  validate_head(config);
  IntentHead head;
  head.config_ = config;
  const std::size_t h = config.hidden_dim;
  const std::size_t first = params.size();
  if (config.variant == EncoderVariant::ProjectedAttention) {
    for (std::size_t b = 0; b < kProjectedAttentionBlocks; ++b)
      head.blocks_.push_back(create_block(params, "id", b, h, rng, init_scale));
  }
  if (config.variant != EncoderVariant::NoAttention) {
    head.pool_w_ = params.add("id.pool.w", random_uniform(h, h, init_scale, rng));
    head.pool_v_ = params.add("id.pool.v", random_uniform(h, 1, init_scale, rng));
  }
  head.weight_ = params.add("id.classifier.weight", random_uniform(h, config.classes, init_scale, rng));
  head.bias_ = params.add("id.classifier.bias", Matrix(1, config.classes));
  for (std::size_t i = first; i < params.size(); ++i) head.owned_.push_back(i);
  return head;
}

IntentHead IntentHead::bind(const ParamSet& params, const HeadConfig& config) {
  validate_head(config);
  IntentHead head;
  head.config_ = config;
  const std::size_t h = config.hidden_dim;
  if (config.variant == EncoderVariant::ProjectedAttention) {
    for (std::size_t b = 0; b < kProjectedAttentionBlocks; ++b) {
      head.blocks_.push_back(bind_block(params, "id", b, h));
      head.owned_.insert(head.owned_.end(), head.blocks_.back().begin(), head.blocks_.back().end());
    }
  }
  if (config.variant != EncoderVariant::NoAttention) {
    head.pool_w_ = bind_shape(params, "id.pool.w", h, h);
    head.pool_v_ = bind_shape(params, "id.pool.v", h, 1);
    head.owned_.push_back(head.pool_w_);
    head.owned_.push_back(head.pool_v_);
  }
  head.weight_ = bind_shape(params, "id.classifier.weight", h, config.classes);
  head.bias_ = bind_shape(params, "id.classifier.bias", 1, config.classes);
  head.owned_.push_back(head.weight_);
  head.owned_.push_back(head.bias_);
  return head;
}

Var IntentHead::logits(GradTape& tape, const ParamSet& params, Var token_states) const {
  const std::size_t steps = tape.value(token_states).rows();
  if (steps == 0) throw DomainError("intent head received empty states");
  Var pooled;
  switch (config_.variant) {
    case EncoderVariant::NoAttention:
      pooled = tape.slice_rows(token_states, steps - 1, steps);
      break;
    case EncoderVariant::WeightedAttention:
      pooled = weighted_attention_pool(tape, token_states, tape.parameter(params, pool_w_),
                                       tape.parameter(params, pool_v_));
      break;
    case EncoderVariant::ProjectedAttention:
      pooled = weighted_attention_pool(tape, run_blocks(tape, params, token_states, blocks_),
                                       tape.parameter(params, pool_w_), tape.parameter(params, pool_v_));
      break;
  }
  return tape.add(tape.matmul(pooled, tape.parameter(params, weight_)), tape.parameter(params, bias_));
}

// ---- slot head ---------------------------------------------------------------

SlotHead SlotHead::create(ParamSet& params, const HeadConfig& config, CounterRng& rng,
                          double init_scale) {
  validate_head(config);
  SlotHead head;
  head.config_ = config;
  const std::size_t h = config.hidden_dim;
  const std::size_t first = params.size();
  if (config.variant == EncoderVariant::ProjectedAttention) {
    for (std::size_t b = 0; b < kProjectedAttentionBlocks; ++b)
      head.blocks_.push_back(create_block(params, "sf", b, h, rng, init_scale));
  }
  if (config.variant == EncoderVariant::WeightedAttention) {
    head.attn_w_ = params.add("sf.attn.w", random_uniform(h, h, init_scale, rng));
  }
  head.weight_ = params.add("sf.classifier.weight", random_uniform(h, config.classes, init_scale, rng));
  head.bias_ = params.add("sf.classifier.bias", Matrix(1, config.classes));
  for (std::size_t i = first; i < params.size(); ++i) head.owned_.push_back(i);
  return head;
}

SlotHead SlotHead::bind(const ParamSet& params, const HeadConfig& config) {
  validate_head(config);
  SlotHead head;
  head.config_ = config;
  const std::size_t h = config.hidden_dim;
  if (config.variant == EncoderVariant::ProjectedAttention) {
    for (std::size_t b = 0; b < kProjectedAttentionBlocks; ++b) {
      head.blocks_.push_back(bind_block(params, "sf", b, h));
      head.owned_.insert(head.owned_.end(), head.blocks_.back().begin(), head.blocks_.back().end());
    }
  }
  if (config.variant == EncoderVariant::WeightedAttention) {
    head.attn_w_ = bind_shape(params, "sf.attn.w", h, h);
    head.owned_.push_back(head.attn_w_);
  }
  head.weight_ = bind_shape(params, "sf.classifier.weight", h, config.classes);
  head.bias_ = bind_shape(params, "sf.classifier.bias", 1, config.classes);
  head.owned_.push_back(head.weight_);
  head.owned_.push_back(head.bias_);
  return head;
}

Var SlotHead::logits(GradTape& tape, const ParamSet& params, Var token_states) const {
  if (tape.value(token_states).rows() == 0) throw DomainError("slot head received empty states");
  Var z = token_states;
  switch (config_.variant) {
    case EncoderVariant::NoAttention:
      break;
    case EncoderVariant::WeightedAttention:
      z = bilinear_self_attention(tape, token_states, tape.parameter(params, attn_w_));
      break;
    case EncoderVariant::ProjectedAttention:
      z = run_blocks(tape, params, token_states, blocks_);
      break;
  }
  return tape.add(tape.matmul(z, tape.parameter(params, weight_)), tape.parameter(params, bias_));
}

// ---- losses and predictions --------------------------------------------------

Var intent_term(GradTape& tape, const ParamSet& params, const IntentHead& head, Var token_states,
                const EncodedUtterance& utt) {
  if (!utt.intent) throw DataError("utterance has no intent annotation");
  if (*utt.intent >= head.config().classes) {
    throw LabelError("intent label " + std::to_string(*utt.intent) + " out of range for " +
                     std::to_string(head.config().classes) + " intents");
  }
  return tape.softmax_cross_entropy(head.logits(tape, params, token_states), {*utt.intent});
}

Var slot_term(GradTape& tape, const ParamSet& params, const SlotHead& head, Var token_states,
              const EncodedUtterance& utt) {
  if (utt.slots.size() != utt.tokens.size()) {
    throw AlignmentError("slot sequence of length " + std::to_string(utt.slots.size()) +
                         " does not align with " + std::to_string(utt.tokens.size()) + " tokens");
  }
  for (std::size_t s : utt.slots) {
    if (s >= head.config().classes) {
      throw LabelError("slot label " + std::to_string(s) + " out of range for " +
                       std::to_string(head.config().classes) + " slot labels");
    }
  }
  return tape.softmax_cross_entropy(head.logits(tape, params, token_states),
                                    std::vector<std::size_t>(utt.slots.begin(), utt.slots.end()));
}

double intent_loss(const ParamSet& params, const Backbone& backbone, const IntentHead& head,
                   std::span<const EncodedUtterance> batch, Gradients* grads) {
  if (batch.empty()) throw DomainError("intent_loss of an empty batch");
  GradTape tape;
  std::vector<Var> terms;
  for (const auto& utt : batch) {
    const Var states = token_aligned_states(tape, backbone.encode(tape, params, utt.tokens));
    terms.push_back(intent_term(tape, params, head, states, utt));
  }
  const Var loss = tape.scale(tape.sum(terms), 1.0 / static_cast<double>(batch.size()));
  if (grads) *grads = tape.backward(loss, params);
  return tape.scalar(loss);
}

double slot_loss(const ParamSet& params, const Backbone& backbone, const SlotHead& head,
                 std::span<const EncodedUtterance> batch, Gradients* grads) {
  if (batch.empty()) throw DomainError("slot_loss of an empty batch");
  GradTape tape;
  std::vector<Var> terms;
  for (const auto& utt : batch) {
    const Var states = token_aligned_states(tape, backbone.encode(tape, params, utt.tokens));
    terms.push_back(slot_term(tape, params, head, states, utt));
  }
  const Var loss = tape.scale(tape.sum(terms), 1.0 / static_cast<double>(batch.size()));
  if (grads) *grads = tape.backward(loss, params);
  return tape.scalar(loss);
}

std::size_t predict_intent(const ParamSet& params, const Backbone& backbone, const IntentHead& head,
                           const TokenSequence& tokens) {
  GradTape tape;
  const Var states = token_aligned_states(tape, backbone.encode(tape, params, tokens));
  return argmax(tape.value(head.logits(tape, params, states)).row(0));
}

std::vector<std::size_t> predict_slots(const ParamSet& params, const Backbone& backbone,
                                       const SlotHead& head, const TokenSequence& tokens) {
  GradTape tape;
  const Var states = token_aligned_states(tape, backbone.encode(tape, params, tokens));
  const Matrix& logits = tape.value(head.logits(tape, params, states));
  std::vector<std::size_t> out;
  out.reserve(logits.rows());
  for (std::size_t t = 0; t < logits.rows(); ++t) out.push_back(argmax(logits.row(t)));
  return out;
}

}  // namespace mtlm
