#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "mtlm/vocabulary.hpp"

namespace mtlm {

// Surface form of one utterance. Transcription-only data has no intent and
// no slot labels; annotated data has one slot label per token.
struct AnnotatedUtterance {
  std::string id;
  std::vector<std::string> tokens;
  std::optional<std::string> intent;
  std::vector<std::string> slots;

  bool annotated() const noexcept { return intent.has_value(); }
  friend bool operator==(const AnnotatedUtterance&, const AnnotatedUtterance&) = default;
};

// Model-side form: token ids plus label ids.
struct EncodedUtterance {
  TokenSequence tokens;
  std::optional<std::size_t> intent;
  std::vector<std::size_t> slots;
};

}  // namespace mtlm
