#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mtlm/matrix.hpp"
#include "mtlm/rng.hpp"
#include "mtlm/tape.hpp"
#include "mtlm/vocabulary.hpp"

namespace mtlm {

struct BackboneConfig {
  std::size_t vocab_size = 0;
  std::size_t embedding_dim = 32;
  std::size_t hidden_dim = 32;
  std::size_t layers = 2;
  // Reuse the input embeddings as output projection (needs embedding_dim == hidden_dim).
  bool tie_embeddings = false;

  void validate() const;
  friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

// Top-layer context vectors, one row per input position: row 0 is the state
// after reading <sos>, row t the state after reading w_t. Shape (T+1) x H.
using HiddenStates = Matrix;

// Embedding layer, K stacked LSTM layers and the next-word softmax layer.
// Parameters live in a ParamSet under the "lm." prefix; this class only
// records their indices, so it stays valid across copies of the ParamSet.
class Backbone {
 public:
  // Registers freshly initialised parameters in `params`.
  static Backbone create(ParamSet& params, const BackboneConfig& config, CounterRng& rng,
                         double init_scale);
  // Looks up existing parameters by name and checks their shapes.
  static Backbone bind(const ParamSet& params, const BackboneConfig& config);

  const BackboneConfig& config() const noexcept { return config_; }

  Var encode(GradTape& tape, const ParamSet& params, const TokenSequence& seq) const;
  // (T+1) x V logits for the states returned by encode().
  Var logits(GradTape& tape, const ParamSet& params, Var states) const;
  // Summed cross-entropy of w_1..w_T, <eos> given the states of encode().
  Var sequence_loss(GradTape& tape, const ParamSet& params, const TokenSequence& seq,
                    Var states) const;

  HiddenStates encode(const ParamSet& params, const TokenSequence& seq) const;
  std::vector<double> next_word_distribution(const ParamSet& params,
                                             std::span<const double> state) const;
  // Per-position log-probabilities log P(w_t | w_<t), t = 1..T+1 (the last is <eos>).
  std::vector<double> token_logprobs(const ParamSet& params, const TokenSequence& seq) const;
  double sequence_logprob(const ParamSet& params, const TokenSequence& seq,
                          bool length_normalized) const;
  // Mean over sequences of summed token cross-entropy; fills `grads` when given.
  double lm_loss(const ParamSet& params, std::span<const TokenSequence> batch,
                 Gradients* grads = nullptr) const;
  double perplexity(const ParamSet& params, std::span<const TokenSequence> corpus) const;

 private:
  struct LayerIndex {
    std::size_t w_input, w_hidden, bias;
  };

  BackboneConfig config_;
  std::size_t embedding_ = 0;
  std::vector<LayerIndex> layers_;
  std::size_t output_weight_ = 0;  // unused when tied
  std::size_t output_bias_ = 0;
};

// candidate / baseline
double normalized_ppl(double candidate, double baseline);

// Uniform in [-scale, scale].
Matrix random_uniform(std::size_t rows, std::size_t cols, double scale, CounterRng& rng);

}  // namespace mtlm
