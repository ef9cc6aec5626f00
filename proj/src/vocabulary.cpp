#include "mtlm/vocabulary.hpp"

#include "mtlm/error.hpp"

namespace mtlm {

Vocabulary::Vocabulary() {
  for (const char* reserved : {"<sos>", "<eos>", "<unk>", "<pad>"}) {
    ids_.emplace(reserved, tokens_.size());
    tokens_.emplace_back(reserved);
  }
}

Vocabulary::Vocabulary(std::span<const std::string> tokens) : Vocabulary() {
  for (const auto& t : tokens) add(t);
}

TokenId Vocabulary::add(std::string_view token) {
  if (token.empty()) throw VocabularyError("empty token");
  for (char ch : token) {
    if (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r') {
      throw VocabularyError("token '" + std::string(token) + "' contains whitespace");
    }
  }
  if (auto existing = find(token)) return *existing;
  const TokenId id = tokens_.size();
  ids_.emplace(std::string(token), id);
  tokens_.emplace_back(token);
  return id;
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  const auto it = ids_.find(std::string(token));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::id(std::string_view token) const { return find(token).value_or(kUnk); }

const std::string& Vocabulary::token(TokenId id) const {
  if (id >= tokens_.size()) {
    throw VocabularyError("token id " + std::to_string(id) + " out of range for vocabulary of size " +
                          std::to_string(tokens_.size()));
  }
  return tokens_[id];
}

std::vector<std::string> Vocabulary::ordinary_tokens() const {
  return {tokens_.begin() + kReserved, tokens_.end()};
}

TokenSequence::TokenSequence(std::vector<TokenId> ids) : ids_(std::move(ids)) {
  if (ids_.empty()) throw DomainError("token sequence must contain at least one token");
  for (TokenId id : ids_) {
    if (id == Vocabulary::kSos || id == Vocabulary::kEos || id == Vocabulary::kPad) {
      throw VocabularyError("reserved id " + std::to_string(id) + " inside a token sequence");
    }
  }
}

TokenSequence TokenSequence::from_text(const Vocabulary& vocab, std::string_view text) {
  const auto tokens = split_whitespace(text);
  return from_tokens(vocab, tokens);
}

TokenSequence TokenSequence::from_tokens(const Vocabulary& vocab, std::span<const std::string> tokens) {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(vocab.id(t));
  return TokenSequence(std::move(ids));
}

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t' || text[i] == '\n' || text[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < text.size() && !(text[i] == ' ' || text[i] == '\t' || text[i] == '\n' || text[i] == '\r')) ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

}  // namespace mtlm
