#include "graded/error.hpp"

namespace graded {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::not_a_word: return "not_a_word";
    case ErrorCode::insufficient_text: return "insufficient_text";
    case ErrorCode::provider_unavailable: return "provider_unavailable";
    case ErrorCode::provider_contract_violation: return "provider_contract_violation";
    case ErrorCode::embedding_contract: return "embedding_contract";
    case ErrorCode::degenerate_training_set: return "degenerate_training_set";
    case ErrorCode::insufficient_class_support: return "insufficient_class_support";
    case ErrorCode::invalid_score: return "invalid_score";
    case ErrorCode::feed_parse: return "feed_parse";
    case ErrorCode::fetch_failed: return "fetch_failed";
    case ErrorCode::storage: return "storage";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::conflict: return "conflict";
    case ErrorCode::format: return "format";
  }
  return "unknown";
}

}  // namespace graded
