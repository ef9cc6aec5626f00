#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace mtlm {

class MultiTaskModel;

struct Hypothesis {
  std::vector<std::string> tokens;
  double first_pass_logprob = 0.0;  // natural log, <= 0

  friend bool operator==(const Hypothesis&, const Hypothesis&) = default;
};

// Hypotheses are kept in first-pass rank order.
struct NBestList {
  std::string id;
  std::vector<std::string> reference;
  std::vector<Hypothesis> hypotheses;

  void validate() const;
  friend bool operator==(const NBestList&, const NBestList&) = default;
};

struct RescoreConfig {
  double lambda = 0.006;
  bool normalize_lm = true;

  void validate() const;
};

// log P(w) under a language model, optionally divided by |w| + 1.
using LmScorer = std::function<double(std::span<const std::string> tokens, bool normalized)>;

// Scores through the model's backbone; out-of-vocabulary tokens become <unk>.
// The model must outlive the returned scorer.
LmScorer model_scorer(const MultiTaskModel& model);

// first_pass_logprob / |w| + lambda * lm_score
double combined_score(double first_pass_logprob, std::size_t length, double lm_score, double lambda);
double combined_score(const Hypothesis& h, const LmScorer& lm, const RescoreConfig& cfg);

struct RescoreResult {
  std::size_t chosen = 0;
  std::vector<double> lm_scores;
  std::vector<double> combined;
};

// Argmax of combined_score; the earlier hypothesis wins ties.
RescoreResult rescore(const NBestList& nbest, const LmScorer& lm, const RescoreConfig& cfg);

// LM scores for every hypothesis of every list, computed once so that many
// lambda values can be tried cheaply. Lists are scored on worker threads.
std::vector<std::vector<double>> score_hypotheses(std::span<const NBestList> lists, const LmScorer& lm,
                                                  bool normalize_lm, std::size_t threads = 0);

// Index of the winner for a given lambda over cached LM scores.
std::size_t choose(const NBestList& nbest, std::span<const double> lm_scores, double lambda);

// Corpus WER of the chosen hypotheses.
double rescored_wer(std::span<const NBestList> lists, std::span<const std::vector<double>> lm_scores,
                    double lambda);
// Corpus WER of the first-pass top hypotheses.
double first_pass_wer(std::span<const NBestList> lists);

struct LambdaSearch {
  double best_lambda = 0.0;
  double best_wer = 0.0;
  std::vector<double> grid;
  std::vector<double> grid_wer;
};

// Exhaustive grid search for the lambda with the lowest corpus WER; ties go to
// the smallest lambda. Throws ConfigError on an empty grid or negative values.
LambdaSearch tune_lambda(std::span<const NBestList> dev, std::span<const std::vector<double>> lm_scores,
                         std::span<const double> grid);
LambdaSearch tune_lambda(std::span<const NBestList> dev, const LmScorer& lm, std::span<const double> grid,
                         bool normalize_lm = true);

std::vector<double> default_lambda_grid();

}  // namespace mtlm
