#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <semaphore>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "graded/http.hpp"

namespace graded::topics {

enum class Origin { classifier, pretagged, keyword };

std::string_view to_string(Origin origin);
Origin parse_origin(std::string_view s);

struct TopicAssignment {
  std::string topic;  // normalized
  double confidence = 0.0;
  Origin origin = Origin::classifier;
  bool accepted = false;

  friend bool operator==(const TopicAssignment&, const TopicAssignment&) = default;
};

// Lowercase, trimmed, internal whitespace collapsed to single spaces.
std::string normalize_topic(std::string_view topic);

const std::vector<std::string>& default_candidates();

using Lexicon = std::map<std::string, std::set<std::string>>;

// "topic<TAB>kw1<TAB>kw2..." per line; '#' starts a comment line.
Lexicon parse_lexicon(std::string_view text);
Lexicon load_lexicon(const std::filesystem::path& path);

// Zero-shot classifier: one score per candidate label.
class ZeroShotClient {
 public:
  virtual ~ZeroShotClient() = default;
  // Returns label -> score. Throws on transport or contract failures.
  virtual std::map<std::string, double> classify(const std::string& text,
                                                 const std::vector<std::string>& labels) = 0;
};

// Wire contract: POST {text, candidate_labels:[string]} -> {labels:[string],
// scores:[number]}.
class HttpZeroShotClient final : public ZeroShotClient {
 public:
  HttpZeroShotClient(std::string endpoint, std::shared_ptr<http::Transport> transport,
                     std::chrono::milliseconds timeout = std::chrono::milliseconds(30000),
                     std::ptrdiff_t max_in_flight = 4);
  std::map<std::string, double> classify(const std::string& text,
                                         const std::vector<std::string>& labels) override;

 private:
  std::string endpoint_;
  std::shared_ptr<http::Transport> transport_;
  std::chrono::milliseconds timeout_;
  std::counting_semaphore<64> in_flight_;
};

// confidence = matched lexicon words / lexicon words for the topic, matched
// case- and diacritic-insensitively against the text's word tokens.
std::vector<TopicAssignment> keyword_fallback(std::string_view text, const Lexicon& lexicon,
                                              double threshold = 0.5);

struct TopicResult {
  std::vector<TopicAssignment> assignments;  // one per candidate, candidate order
  bool degraded = false;                     // fell back to the lexicon
};

// One assignment per candidate; accepted when confidence >= threshold. On a
// client failure (or a null client) the lexicon scorer answers instead and
// the result is flagged degraded.
TopicResult classify_topics(std::string_view text, const std::vector<std::string>& candidates,
                            ZeroShotClient* client, const Lexicon& fallback_lexicon,
                            double threshold = 0.5);

// Union of normalized pretags (confidence 1, origin pretagged) and the
// predicted assignments; duplicates keep the max confidence. Sorted by topic.
std::vector<TopicAssignment> merge_topics(const std::vector<std::string>& pretagged,
                                          const std::vector<TopicAssignment>& predicted);

}  // namespace graded::topics
