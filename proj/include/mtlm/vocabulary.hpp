#pragma once

#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mtlm {

using TokenId = std::size_t;

// Bidirectional token <-> id map. Ids 0..3 are reserved for <sos>, <eos>,
// <unk> and <pad>; ordinary tokens follow in insertion order.
class Vocabulary {
 public:
  static constexpr TokenId kSos = 0;
  static constexpr TokenId kEos = 1;
  static constexpr TokenId kUnk = 2;
  static constexpr TokenId kPad = 3;
  static constexpr std::size_t kReserved = 4;

  Vocabulary();
  explicit Vocabulary(std::span<const std::string> tokens);

  // Returns the existing id when the token is already present.
  TokenId add(std::string_view token);

  std::optional<TokenId> find(std::string_view token) const;
  // Unknown tokens map to <unk>.
  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const;
  std::size_t size() const noexcept { return tokens_.size(); }
  bool contains(std::string_view token) const { return find(token).has_value(); }

  // Ordinary tokens (ids >= kReserved), in id order.
  std::vector<std::string> ordinary_tokens() const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

// Token ids w_1..w_T of one utterance, T >= 1. <sos>, <eos> and <pad> never
// appear inside; <unk> is allowed.
class TokenSequence {
 public:
  explicit TokenSequence(std::vector<TokenId> ids);
  TokenSequence(std::initializer_list<TokenId> ids) : TokenSequence(std::vector<TokenId>(ids)) {}

  // Whitespace-separated tokens or a token list, mapped through `vocab` with <unk> fallback.
  static TokenSequence from_text(const Vocabulary& vocab, std::string_view text);
  static TokenSequence from_tokens(const Vocabulary& vocab, std::span<const std::string> tokens);

  std::size_t size() const noexcept { return ids_.size(); }
  const std::vector<TokenId>& ids() const noexcept { return ids_; }
  TokenId operator[](std::size_t i) const { return ids_[i]; }
  auto begin() const { return ids_.begin(); }
  auto end() const { return ids_.end(); }

  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;

 private:
  std::vector<TokenId> ids_;
};

std::vector<std::string> split_whitespace(std::string_view text);
std::string join_tokens(std::span<const std::string> tokens);

}  // namespace mtlm
