#pragma once

#include <stdexcept>
#include <string>

namespace mtlm {

// Every error carries a short machine-readable kind ("dimension", "label", ...)
// so the CLI can print a single parseable line.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define MTLM_DEFINE_ERROR(Name, kind_string)                                 \
  class Name : public Error {                                                \
   public:                                                                   \
    explicit Name(const std::string& message) : Error(kind_string, message) {} \
  };

MTLM_DEFINE_ERROR(DimensionError, "dimension")
MTLM_DEFINE_ERROR(DomainError, "domain")
MTLM_DEFINE_ERROR(IndexError, "index")
MTLM_DEFINE_ERROR(EvaluationError, "evaluation")
MTLM_DEFINE_ERROR(VocabularyError, "vocabulary")
MTLM_DEFINE_ERROR(LabelError, "label")
MTLM_DEFINE_ERROR(AlignmentError, "alignment")
MTLM_DEFINE_ERROR(DataError, "data")
MTLM_DEFINE_ERROR(ConfigError, "config")
MTLM_DEFINE_ERROR(ParseError, "parse")
MTLM_DEFINE_ERROR(IoError, "io")
MTLM_DEFINE_ERROR(DivergenceError, "divergence")
MTLM_DEFINE_ERROR(CheckpointError, "checkpoint")

#undef MTLM_DEFINE_ERROR

}  // namespace mtlm
