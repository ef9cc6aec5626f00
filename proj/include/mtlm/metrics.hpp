#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mtlm {

struct WerBreakdown {
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  std::size_t reference_length = 0;
  double wer = 0.0;

  std::size_t errors() const noexcept { return substitutions + insertions + deletions; }
  friend bool operator==(const WerBreakdown&, const WerBreakdown&) = default;
};

enum class EditOp { Match, Substitution, Deletion, Insertion };

struct AlignedPair {
  EditOp op;
  std::ptrdiff_t ref_index;  // -1 for insertions
  std::ptrdiff_t hyp_index;  // -1 for deletions
};

// Minimum-edit alignment with unit costs. Among equal-cost alignments the one
// with fewest insertions + deletions wins; the backtrace prefers
// match > substitution > deletion > insertion.
std::vector<AlignedPair> align(std::span<const std::string> ref, std::span<const std::string> hyp);

// Same contract as align(), in linear memory. Throws DomainError on an empty reference.
WerBreakdown wer(std::span<const std::string> ref, std::span<const std::string> hyp);

// Sums edit counts over utterances; wer = total errors / total reference tokens.
class CorpusWer {
 public:
  void add(const WerBreakdown& utt);
  WerBreakdown total() const;
  std::size_t utterances() const noexcept { return count_; }

 private:
  WerBreakdown sum_;
  std::size_t count_ = 0;
};

// (candidate - baseline) / baseline; negative means improvement.
double werr(double baseline_wer, double candidate_wer);

double intent_error_rate(std::span<const std::string> gold, std::span<const std::string> predicted);

// Token-level micro F1 over labels other than `other_label`.
double slot_f1(std::span<const std::vector<std::string>> gold,
               std::span<const std::vector<std::string>> predicted, std::string_view other_label = "other");

}  // namespace mtlm
