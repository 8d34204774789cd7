#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "graded/classifier.hpp"
#include "graded/readability.hpp"
#include "graded/timeutil.hpp"
#include "graded/topics.hpp"

namespace graded::catalog {

enum class Kind { article, video };

std::string_view to_string(Kind kind);
Kind parse_kind(std::string_view s);

// One caption cue; times in milliseconds from the start of the video.
struct Cue {
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
  std::string text;

  friend bool operator==(const Cue&, const Cue&) = default;
};

struct Difficulty {
  std::string label;
  std::size_t index = 0;
  std::vector<double> probs;

  friend bool operator==(const Difficulty&, const Difficulty&) = default;
};

struct ContentItem {
  std::string id;  // content hash of the body, see content_id()
  std::string url;
  std::string title;
  std::string description;
  std::string language;
  Kind kind = Kind::article;
  timeutil::Timestamp published_at{};
  std::size_t word_count = 0;
  std::vector<std::string> authors;
  std::vector<topics::TopicAssignment> topics;
  Difficulty difficulty;
  std::optional<readability::ReadabilityReport> readability;
  bool degraded = false;
  std::string body_text;
  std::vector<Cue> cues;  // videos only, in cue order
  std::string source_id;
  std::string guid;

  bool has_topic(std::string_view topic) const;

  friend bool operator==(const ContentItem&, const ContentItem&) = default;
};

// SHA-256 of the body with whitespace runs collapsed, so re-annotating the
// same text always yields the same id.
std::string content_id(std::string_view body_text);

nlohmann::json to_json(const ContentItem& item);
ContentItem item_from_json(const nlohmann::json& j);

struct Query {
  std::optional<std::string> text;
  std::set<std::string> topics_any;
  std::optional<std::string> min_label;
  std::optional<std::string> max_label;
  std::optional<std::string> language;
  std::optional<Kind> kind;
  std::size_t limit = 20;
  std::size_t offset = 0;
};

// Field weights for term-frequency scoring.
inline constexpr double kTitleWeight = 3.0;
inline constexpr double kDescriptionWeight = 2.0;
inline constexpr double kBodyWeight = 1.0;

// Persistent document store plus inverted index under one directory:
//   documents.jsonl  append-only log of {"op":"put"|"del", ...} records
//   index.json       postings snapshot, trusted only when the manifest agrees
//   manifest.json    format name/version and the log record count
//
// Many concurrent readers, one writer at a time. Every public method is
// thread-safe; search results are taken from a consistent snapshot.
class Catalog {
 public:
  static constexpr int kFormatVersion = 1;

  Catalog(std::filesystem::path dir, classifier::DifficultyScale scale);
  ~Catalog();

  Catalog(const Catalog&) = delete;
  Catalog& operator=(const Catalog&) = delete;

  // Returns true when the id was new. Storing an identical item again is a
  // no-op; a changed item with the same id replaces the old one.
  bool upsert(const ContentItem& item);
  std::size_t upsert_batch(const std::vector<ContentItem>& items);

  std::optional<ContentItem> get(const std::string& id) const;
  bool remove(const std::string& id);
  std::size_t size() const;

  // Throws Error(invalid_argument) for unknown labels, an inverted range or
  // limit 0.
  std::vector<ContentItem> search(const Query& q) const;
  // Text relevance of one stored item for the query text; 0 when unrelated.
  double relevance(const std::string& id, std::string_view text) const;

  std::vector<ContentItem> snapshot() const;

  // Rewrites the log with live records only.
  void compact();
  // Writes the index snapshot and manifest.
  void flush();

  const classifier::DifficultyScale& scale() const noexcept { return scale_; }
  const std::filesystem::path& dir() const noexcept { return dir_; }

 private:
  void validate(const ContentItem& item) const;
  void index_locked(const ContentItem& item);
  void unindex_locked(const std::string& id);
  void append_locked(const nlohmann::json& record);
  void load();
  bool load_index(std::size_t expected_records);
  void write_index_locked();
  void write_manifest_locked();
  std::shared_lock<std::shared_mutex> read_lock() const;
  std::unique_lock<std::shared_mutex> write_lock() const;

  std::filesystem::path dir_;
  classifier::DifficultyScale scale_;
  mutable std::shared_mutex mutex_;
  // Taken briefly by readers and held by a writer while it waits, so a
  // steady stream of searches cannot starve upserts.
  mutable std::mutex gate_;
  std::map<std::string, ContentItem> items_;
  // term -> (id -> weighted term frequency)
  std::unordered_map<std::string, std::map<std::string, double>> postings_;
  std::unordered_map<std::string, std::vector<std::string>> terms_by_id_;
  std::size_t log_records_ = 0;
  bool dirty_ = false;
};

// Weighted term frequencies of an item: title x3, description x2, body x1.
std::map<std::string, double> weighted_terms(const ContentItem& item);

}  // namespace graded::catalog
