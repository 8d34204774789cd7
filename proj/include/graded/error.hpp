#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace graded {

enum class ErrorCode {
  invalid_argument,
  not_a_word,
  insufficient_text,
  provider_unavailable,
  provider_contract_violation,
  embedding_contract,
  degenerate_training_set,
  insufficient_class_support,
  invalid_score,
  feed_parse,
  fetch_failed,
  storage,
  not_found,
  conflict,
  format,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries a machine-readable code; the
// message is the human-readable text, starting with the contract phrase
// ("not a word", "insufficient text", ...).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Remote provider failure; status is the last HTTP status seen (0 when the
// connection itself failed).
class ProviderError : public Error {
 public:
  ProviderError(ErrorCode code, const std::string& message, int status)
      : Error(code, message), status_(status) {}

  int status() const noexcept { return status_; }

 private:
  int status_;
};

}  // namespace graded
