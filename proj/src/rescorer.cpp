#include "mtlm/rescorer.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "mtlm/error.hpp"
#include "mtlm/metrics.hpp"
#include "mtlm/model.hpp"

namespace mtlm {

void NBestList::validate() const {
  if (hypotheses.empty()) throw DomainError("n-best list '" + id + "' has no hypotheses");
  for (std::size_t k = 0; k < hypotheses.size(); ++k) {
    const Hypothesis& h = hypotheses[k];
    if (h.tokens.empty()) {
      throw DomainError("n-best list '" + id + "': hypothesis " + std::to_string(k) + " is empty");
    }
    if (!(h.first_pass_logprob <= 0.0)) {
      throw DomainError("n-best list '" + id + "': hypothesis " + std::to_string(k) +
                        " has first-pass log-probability " + std::to_string(h.first_pass_logprob) + " > 0");
    }
  }
}

void RescoreConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ConfigError("lambda must be a finite value >= 0, got " + std::to_string(lambda));
  }
}

LmScorer model_scorer(const MultiTaskModel& model) {
  return [&model](std::span<const std::string> tokens, bool normalized) {
    const TokenSequence seq = model.tokens(tokens);
    return model.backbone().sequence_logprob(model.params(), seq, normalized);
  };
}

double combined_score(double first_pass_logprob, std::size_t length, double lm_score, double lambda) {
  if (length == 0) throw DomainError("cannot score an empty hypothesis");
  return first_pass_logprob / static_cast<double>(length) + lambda * lm_score;
}

double combined_score(const Hypothesis& h, const LmScorer& lm, const RescoreConfig& cfg) {
  if (h.tokens.empty()) throw DomainError("cannot score an empty hypothesis");
  return combined_score(h.first_pass_logprob, h.tokens.size(), lm(h.tokens, cfg.normalize_lm), cfg.lambda);
}

RescoreResult rescore(const NBestList& nbest, const LmScorer& lm, const RescoreConfig& cfg) {
  cfg.validate();
  nbest.validate();
  RescoreResult out;
  for (const Hypothesis& h : nbest.hypotheses) {
    const double lm_score = lm(h.tokens, cfg.normalize_lm);
    out.lm_scores.push_back(lm_score);
    out.combined.push_back(combined_score(h.first_pass_logprob, h.tokens.size(), lm_score, cfg.lambda));
  }
  for (std::size_t k = 1; k < out.combined.size(); ++k)
    if (out.combined[k] > out.combined[out.chosen]) out.chosen = k;
  return out;
}

std::vector<std::vector<double>> score_hypotheses(std::span<const NBestList> lists, const LmScorer& lm,
                                                  bool normalize_lm, std::size_t threads) {
  for (const NBestList& list : lists) list.validate();
  std::vector<std::vector<double>> out(lists.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(1, lists.size()));

  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&](std::size_t first) {
    try {
      for (std::size_t i = first; i < lists.size(); i += threads) {
        std::vector<double>& scores = out[i];
        scores.reserve(lists[i].hypotheses.size());
        for (const Hypothesis& h : lists[i].hypotheses) scores.push_back(lm(h.tokens, normalize_lm));
      }
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t);
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::size_t choose(const NBestList& nbest, std::span<const double> lm_scores, double lambda) {
  if (lm_scores.size() != nbest.hypotheses.size()) {
    throw DimensionError("n-best list '" + nbest.id + "' has " + std::to_string(nbest.hypotheses.size()) +
                         " hypotheses but " + std::to_string(lm_scores.size()) + " LM scores");
  }
  std::size_t best = 0;
  double best_score = 0.0;
  for (std::size_t k = 0; k < lm_scores.size(); ++k) {
    const Hypothesis& h = nbest.hypotheses[k];
    const double s = combined_score(h.first_pass_logprob, h.tokens.size(), lm_scores[k], lambda);
    if (k == 0 || s > best_score) {
      best = k;
      best_score = s;
    }
  }
  return best;
}

double rescored_wer(std::span<const NBestList> lists, std::span<const std::vector<double>> lm_scores,
                    double lambda) {
  if (lists.size() != lm_scores.size()) throw DimensionError("LM score cache does not match the n-best lists");
  CorpusWer total;
  for (std::size_t i = 0; i < lists.size(); ++i) {
    const std::size_t k = choose(lists[i], lm_scores[i], lambda);
    total.add(wer(lists[i].reference, lists[i].hypotheses[k].tokens));
  }
  return total.total().wer;
}

double first_pass_wer(std::span<const NBestList> lists) {
  CorpusWer total;
  for (const NBestList& list : lists) {
    list.validate();
    total.add(wer(list.reference, list.hypotheses.front().tokens));
  }
  return total.total().wer;
}

LambdaSearch tune_lambda(std::span<const NBestList> dev, std::span<const std::vector<double>> lm_scores,
                         std::span<const double> grid) {
  if (grid.empty()) throw ConfigError("lambda grid is empty");
  if (dev.empty()) throw ConfigError("lambda tuning needs a nonempty development set");
  LambdaSearch out;
  out.grid.assign(grid.begin(), grid.end());
  for (double lambda : grid) {
    RescoreConfig{lambda, true}.validate();
    out.grid_wer.push_back(rescored_wer(dev, lm_scores, lambda));
  }
  std::size_t best = 0;
  for (std::size_t g = 1; g < grid.size(); ++g) {
    if (out.grid_wer[g] < out.grid_wer[best] || (out.grid_wer[g] == out.grid_wer[best] && grid[g] < grid[best]))
      best = g;
  }
  out.best_lambda = grid[best];
  out.best_wer = out.grid_wer[best];
  return out;
}

LambdaSearch tune_lambda(std::span<const NBestList> dev, const LmScorer& lm, std::span<const double> grid,
                         bool normalize_lm) {
  if (grid.empty()) throw ConfigError("lambda grid is empty");
  const auto cache = score_hypotheses(dev, lm, normalize_lm);
  return tune_lambda(dev, cache, grid);
}

std::vector<double> default_lambda_grid() {
  return {0.0, 0.006, 0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 5.0};
}

}  // namespace mtlm
