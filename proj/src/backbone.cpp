#include "mtlm/backbone.hpp"

#include <cmath>
#include <string>

#include "mtlm/error.hpp"
#include "mtlm/kernels.hpp"

namespace mtlm {
namespace {

std::string layer_name(std::size_t k, const char* field) {
  return "lm.lstm" + std::to_string(k) + "." + field;
}

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

}  // namespace

void BackboneConfig::validate() const {
  if (vocab_size < Vocabulary::kReserved + 1) {
    throw ConfigError("vocabulary must hold at least one ordinary token (size >= 5), got " +
                      std::to_string(vocab_size));
  }
  if (embedding_dim == 0 || hidden_dim == 0) throw ConfigError("embedding and hidden sizes must be positive");
  if (layers == 0) throw ConfigError("backbone needs at least one LSTM layer");
  if (tie_embeddings && embedding_dim != hidden_dim) {
    throw ConfigError("tied embeddings require embedding_dim == hidden_dim");
  }
}

Matrix random_uniform(std::size_t rows, std::size_t cols, double scale, CounterRng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = (2.0 * rng.uniform() - 1.0) * scale;
  return m;
}

Backbone Backbone::create(ParamSet& params, const BackboneConfig& config, CounterRng& rng,
                          double init_scale) {
  config.validate();
  Backbone b;
  b.config_ = config;
  const std::size_t h = config.hidden_dim;
  b.embedding_ = params.add("lm.embedding",
                            random_uniform(config.vocab_size, config.embedding_dim, init_scale, rng));
  for (std::size_t k = 0; k < config.layers; ++k) {
    const std::size_t in = k == 0 ? config.embedding_dim : h;
    LayerIndex layer;
    layer.w_input = params.add(layer_name(k, "w_input"), random_uniform(in, 4 * h, init_scale, rng));
    layer.w_hidden = params.add(layer_name(k, "w_hidden"), random_uniform(h, 4 * h, init_scale, rng));
    Matrix bias(1, 4 * h);
    for (std::size_t j = h; j < 2 * h; ++j) bias[j] = 1.0;  // forget gate
    layer.bias = params.add(layer_name(k, "bias"), std::move(bias));
    b.layers_.push_back(layer);
  }
  if (!config.tie_embeddings) {
    b.output_weight_ =
        params.add("lm.output.weight", random_uniform(h, config.vocab_size, init_scale, rng));
  }
  b.output_bias_ = params.add("lm.output.bias", Matrix(1, config.vocab_size));
  return b;
}

Backbone Backbone::bind(const ParamSet& params, const BackboneConfig& config) {
  config.validate();
  Backbone b;
  b.config_ = config;
  const std::size_t h = config.hidden_dim;
  b.embedding_ = bind_shape(params, "lm.embedding", config.vocab_size, config.embedding_dim);
  for (std::size_t k = 0; k < config.layers; ++k) {
    const std::size_t in = k == 0 ? config.embedding_dim : h;
    b.layers_.push_back({bind_shape(params, layer_name(k, "w_input"), in, 4 * h),
                         bind_shape(params, layer_name(k, "w_hidden"), h, 4 * h),
                         bind_shape(params, layer_name(k, "bias"), 1, 4 * h)});
  }
  if (!config.tie_embeddings) {
    b.output_weight_ = bind_shape(params, "lm.output.weight", h, config.vocab_size);
  }
  b.output_bias_ = bind_shape(params, "lm.output.bias", 1, config.vocab_size);
  return b;
}

Var Backbone::encode(GradTape& tape, const ParamSet& params, const TokenSequence& seq) const {
  std::vector<std::size_t> inputs;
  inputs.reserve(seq.size() + 1);
  inputs.push_back(Vocabulary::kSos);
  for (TokenId id : seq) {
    if (id >= config_.vocab_size) {
      throw VocabularyError("token id " + std::to_string(id) + " out of range for vocabulary of size " +
                            std::to_string(config_.vocab_size));
    }
    inputs.push_back(id);
  }
  Var x = tape.gather_rows(tape.parameter(params, embedding_), std::move(inputs));
  for (const auto& layer : layers_) {
    x = tape.lstm_layer(x, tape.parameter(params, layer.w_input), tape.parameter(params, layer.w_hidden),
                        tape.parameter(params, layer.bias));
  }
  return x;
}

Var Backbone::logits(GradTape& tape, const ParamSet& params, Var states) const {
  const Var projection = config_.tie_embeddings
                             ? tape.transpose(tape.parameter(params, embedding_))
                             : tape.parameter(params, output_weight_);
  return tape.add(tape.matmul(states, projection), tape.parameter(params, output_bias_));
}

Var Backbone::sequence_loss(GradTape& tape, const ParamSet& params, const TokenSequence& seq,
                            Var states) const {
  std::vector<std::size_t> targets(seq.begin(), seq.end());
  targets.push_back(Vocabulary::kEos);
  return tape.softmax_cross_entropy(logits(tape, params, states), std::move(targets));
}

HiddenStates Backbone::encode(const ParamSet& params, const TokenSequence& seq) const {
  GradTape tape;
  return tape.value(encode(tape, params, seq));
}

std::vector<double> Backbone::next_word_distribution(const ParamSet& params,
                                                     std::span<const double> state) const {
  if (state.size() != config_.hidden_dim) {
    throw DimensionError("state of size " + std::to_string(state.size()) +
                         " does not match hidden size " + std::to_string(config_.hidden_dim));
  }
  GradTape tape;
  const Var s = tape.constant(Matrix::row_vector(state));
  const Matrix& l = tape.value(logits(tape, params, s));
  return softmax(l.row(0));
}

std::vector<double> Backbone::token_logprobs(const ParamSet& params, const TokenSequence& seq) const {
  GradTape tape;
  const Var states = encode(tape, params, seq);
  Matrix l = tape.value(logits(tape, params, states));
  std::vector<double> out;
  out.reserve(seq.size() + 1);
  for (std::size_t t = 0; t <= seq.size(); ++t) {
    auto row = l.row(t);
    softmax_inplace(row);
    const TokenId target = t < seq.size() ? seq[t] : Vocabulary::kEos;
    out.push_back(-cross_entropy(row, target));
  }
  return out;
}

double Backbone::sequence_logprob(const ParamSet& params, const TokenSequence& seq,
                                  bool length_normalized) const {
  const auto lp = token_logprobs(params, seq);
  double total = 0.0;
  for (double v : lp) total += v;
  return length_normalized ? total / static_cast<double>(lp.size()) : total;
}

double Backbone::lm_loss(const ParamSet& params, std::span<const TokenSequence> batch,
                         Gradients* grads) const {
  if (batch.empty()) throw DomainError("lm_loss of an empty batch");
  GradTape tape;
  std::vector<Var> terms;
  terms.reserve(batch.size());
  for (const auto& seq : batch) terms.push_back(sequence_loss(tape, params, seq, encode(tape, params, seq)));
  const Var loss = tape.scale(tape.sum(terms), 1.0 / static_cast<double>(batch.size()));
  if (grads) *grads = tape.backward(loss, params);
  return tape.scalar(loss);
}

double Backbone::perplexity(const ParamSet& params, std::span<const TokenSequence> corpus) const {
  if (corpus.empty()) throw DomainError("perplexity of an empty corpus");
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& seq : corpus) {
    GradTape tape;
    total += tape.scalar(sequence_loss(tape, params, seq, encode(tape, params, seq)));
    count += seq.size() + 1;
  }
  return std::exp(total / static_cast<double>(count));
}

double normalized_ppl(double candidate, double baseline) {
  if (!(baseline > 0.0)) throw DomainError("baseline perplexity must be positive");
  return candidate / baseline;
}

}  // namespace mtlm
