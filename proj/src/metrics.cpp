#include "mtlm/metrics.hpp"

#include <algorithm>
#include <utility>

#include "mtlm/error.hpp"

namespace mtlm {
namespace {

// (edit cost, insertions + deletions), compared lexicographically.
using Cell = std::pair<std::size_t, std::size_t>;

Cell plus(Cell c, std::size_t cost, std::size_t indel) { return {c.first + cost, c.second + indel}; }

}  // namespace

std::vector<AlignedPair> align(std::span<const std::string> ref, std::span<const std::string> hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<Cell> table((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> Cell& { return table[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = {i, i};
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = {j, j};
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = ref[i - 1] == hyp[j - 1] ? 0 : 1;
      at(i, j) = std::min({plus(at(i - 1, j - 1), sub, 0), plus(at(i - 1, j), 1, 1), plus(at(i, j - 1), 1, 1)});
    }
  }

  std::vector<AlignedPair> path;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    const Cell here = at(i, j);
    if (i > 0 && j > 0) {
      const bool same = ref[i - 1] == hyp[j - 1];
      if (plus(at(i - 1, j - 1), same ? 0 : 1, 0) == here) {
        path.push_back({same ? EditOp::Match : EditOp::Substitution, static_cast<std::ptrdiff_t>(i - 1),
                        static_cast<std::ptrdiff_t>(j - 1)});
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && plus(at(i - 1, j), 1, 1) == here) {
      path.push_back({EditOp::Deletion, static_cast<std::ptrdiff_t>(i - 1), -1});
      --i;
      continue;
    }
    path.push_back({EditOp::Insertion, -1, static_cast<std::ptrdiff_t>(j - 1)});
    --j;
  }
  std::reverse(path.begin(), path.end());
  return path;
}

WerBreakdown wer(std::span<const std::string> ref, std::span<const std::string> hyp) {
  if (ref.empty()) throw DomainError("WER needs a nonempty reference");
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<Cell> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = {j, j};
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = {i, i};
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = ref[i - 1] == hyp[j - 1] ? 0 : 1;
      cur[j] = std::min({plus(prev[j - 1], sub, 0), plus(prev[j], 1, 1), plus(cur[j - 1], 1, 1)});
    }
    std::swap(prev, cur);
  }
  const auto [cost, indel] = prev[m];
  // insertions - deletions is fixed by the lengths.
  const auto len_diff = static_cast<std::ptrdiff_t>(m) - static_cast<std::ptrdiff_t>(n);
  WerBreakdown out;
  out.substitutions = cost - indel;
  out.insertions = static_cast<std::size_t>((static_cast<std::ptrdiff_t>(indel) + len_diff) / 2);
  out.deletions = static_cast<std::size_t>((static_cast<std::ptrdiff_t>(indel) - len_diff) / 2);
  out.reference_length = n;
  out.wer = static_cast<double>(cost) / static_cast<double>(n);
  return out;
}

void CorpusWer::add(const WerBreakdown& utt) {
  sum_.substitutions += utt.substitutions;
  sum_.insertions += utt.insertions;
  sum_.deletions += utt.deletions;
  sum_.reference_length += utt.reference_length;
  ++count_;
}

WerBreakdown CorpusWer::total() const {
  if (sum_.reference_length == 0) throw DomainError("corpus WER over zero reference tokens");
  WerBreakdown out = sum_;
  out.wer = static_cast<double>(out.errors()) / static_cast<double>(out.reference_length);
  return out;
}

double werr(double baseline_wer, double candidate_wer) {
  if (!(baseline_wer > 0.0)) throw DomainError("WERR needs a positive baseline WER");
  return (candidate_wer - baseline_wer) / baseline_wer;
}

double intent_error_rate(std::span<const std::string> gold, std::span<const std::string> predicted) {
  if (gold.size() != predicted.size()) {
    throw DomainError("intent error rate: " + std::to_string(gold.size()) + " gold vs " +
                      std::to_string(predicted.size()) + " predicted labels");
  }
  if (gold.empty()) throw DomainError("intent error rate over zero utterances");
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < gold.size(); ++i)
    if (gold[i] != predicted[i]) ++wrong;
  return static_cast<double>(wrong) / static_cast<double>(gold.size());
}

double slot_f1(std::span<const std::vector<std::string>> gold,
               std::span<const std::vector<std::string>> predicted, std::string_view other_label) {
  if (gold.size() != predicted.size()) {
    throw DomainError("slot F1: " + std::to_string(gold.size()) + " gold vs " +
                      std::to_string(predicted.size()) + " predicted utterances");
  }
  std::size_t true_pos = 0, pred_pos = 0, gold_pos = 0;
  for (std::size_t u = 0; u < gold.size(); ++u) {
    if (gold[u].size() != predicted[u].size()) {
      throw DomainError("slot F1: utterance " + std::to_string(u) + " has " + std::to_string(gold[u].size()) +
                        " gold labels but " + std::to_string(predicted[u].size()) + " predictions");
    }
    for (std::size_t t = 0; t < gold[u].size(); ++t) {
      const bool g = gold[u][t] != other_label;
      const bool p = predicted[u][t] != other_label;
      gold_pos += g;
      pred_pos += p;
      if (g && p && gold[u][t] == predicted[u][t]) ++true_pos;
    }
  }
  if (true_pos == 0) return 0.0;
  const double precision = static_cast<double>(true_pos) / static_cast<double>(pred_pos);
  const double recall = static_cast<double>(true_pos) / static_cast<double>(gold_pos);
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace mtlm
