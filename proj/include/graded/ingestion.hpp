#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "graded/catalog.hpp"
#include "graded/classifier.hpp"
#include "graded/embedding.hpp"
#include "graded/http.hpp"
#include "graded/timeutil.hpp"
#include "graded/topics.hpp"

namespace graded::ingestion {

using timeutil::Timestamp;

enum class SourceKind { article_feed, video_channel };

std::string_view to_string(SourceKind kind);
SourceKind parse_source_kind(std::string_view s);

struct FeedSource {
  std::string id;  // defaults to the url
  std::string url;
  SourceKind kind = SourceKind::article_feed;
  std::string language = "fr";
  std::chrono::minutes poll_interval{30};
  bool enabled = true;
  // Channels whose feed has no caption link: "{video_id}" and "{guid}" are
  // substituted per entry.
  std::string caption_url_template;

  // poll_interval >= 1 minute; url is http(s) with a host, or file://.
  void validate() const;
};

struct RawItem {
  FeedSource source;
  std::string guid;
  std::string url;
  std::string title;
  std::string description;  // plain text
  Timestamp published_at{};
  std::string body_text;    // article text or caption transcript
  std::vector<std::string> authors;
  std::vector<std::string> tags;  // categories supplied by the feed
  std::string language;           // feed-declared primary subtag, else the source's
  std::string markup;             // article markup when available, for marker checks
  std::vector<catalog::Cue> cues;
};

nlohmann::json to_json(const RawItem& item);
RawItem raw_item_from_json(const nlohmann::json& j);

// ---- fetching -------------------------------------------------------------

struct FetchResult {
  int status = 0;  // 0: transport failure
  std::string body;
  std::string content_type;
  std::string error;

  bool ok() const { return status >= 200 && status < 300; }
};

class Fetcher {
 public:
  virtual ~Fetcher() = default;
  virtual FetchResult fetch(const std::string& url) = 0;
};

struct FetchPolicy {
  std::string user_agent = "graded-crawler/0.3";
  std::chrono::milliseconds per_host_interval{1000};
  int retry_limit = 3;
  std::chrono::milliseconds retry_backoff{500};  // doubles per attempt
  std::chrono::milliseconds timeout{20000};
};

// file:// URLs are read from disk; http(s) goes through the transport with
// a per-host minimum interval between requests and exponential backoff on
// transport errors, 429 and 5xx.
class HttpFetcher final : public Fetcher {
 public:
  explicit HttpFetcher(FetchPolicy policy = {}, std::shared_ptr<http::Transport> transport = {});
  FetchResult fetch(const std::string& url) override;

 private:
  void wait_for_host(const std::string& host);

  FetchPolicy policy_;
  std::shared_ptr<http::Transport> transport_;
  std::mutex mutex_;
  std::map<std::string, std::chrono::steady_clock::time_point> next_slot_;
};

// Resolves ref against base ("file:///a/feed.xml" + "c.vtt" ->
// "file:///a/c.vtt"). Absolute refs are returned unchanged.
std::string resolve_url(const std::string& base, const std::string& ref);

// ---- captions -------------------------------------------------------------

// WebVTT cues in file order with markup tags and entities removed. Throws
// Error(format) when the WEBVTT signature is missing.
std::vector<catalog::Cue> parse_webvtt(std::string_view text);

// Cue texts joined with single spaces; a cue repeating the previous one
// verbatim (rolling captions) is emitted once.
std::string join_cues(const std::vector<catalog::Cue>& cues);

// ---- dedup and retry state ------------------------------------------------

// Persistent set of (source id, guid) pairs, appended as JSON lines.
class SeenStore {
 public:
  explicit SeenStore(std::filesystem::path file);
  bool contains(const std::string& source_id, const std::string& guid) const;
  // Returns false when the pair was already present.
  bool mark(const std::string& source_id, const std::string& guid);
  std::size_t size() const;

 private:
  std::filesystem::path file_;
  mutable std::mutex mutex_;
  std::set<std::pair<std::string, std::string>> seen_;
};

// Items whose mandatory annotation failed, persisted for the next pass.
class RetryQueue {
 public:
  struct Entry {
    RawItem item;
    std::string reason;
    int attempts = 0;
  };

  explicit RetryQueue(std::filesystem::path file);
  // Re-parking an item that is already queued bumps its attempt count.
  void park(const RawItem& item, const std::string& reason);
  void resolve(const std::string& source_id, const std::string& guid);
  std::vector<Entry> pending() const;
  std::size_t size() const;

 private:
  void rewrite_locked() const;

  std::filesystem::path file_;
  mutable std::mutex mutex_;
  std::vector<Entry> entries_;
};

// ---- feed polling ---------------------------------------------------------

struct PollResult {
  std::vector<RawItem> items;  // unseen items, in document order
  std::size_t in_feed = 0;     // entries present in the document
  bool skipped = false;        // fetch failed after retries
  std::string error;
};

// Parses RSS 2.0 or Atom. Entries already in `seen` (or repeated within the
// document) are dropped, but nothing is marked: callers mark an item once it
// has been fully handled. Throws Error(feed_parse) naming the source when the
// document is not a well-formed feed.
PollResult poll_feed(const FeedSource& source, Fetcher& fetcher, const SeenStore* seen,
                     Timestamp now = timeutil::now());

// Parsing only, for already-fetched documents; `base_url` resolves relative
// links. Bodies not present in the document are left empty.
std::vector<RawItem> parse_feed(const FeedSource& source, std::string_view document,
                                const std::string& base_url, Timestamp now = timeutil::now());

// ---- filtering and annotation ---------------------------------------------

enum class RejectReason { too_short, paywalled, too_old, wrong_language };

std::string_view to_string(RejectReason reason);

struct FilterPolicy {
  std::size_t min_words = 100;
  std::vector<std::string> paywall_markers{"paywall", "réservé aux abonnés",
                                           "article réservé", "premium-content",
                                           "subscriber-only"};
  std::chrono::seconds max_age{0};  // 0: no age limit
  std::set<std::string> allowed_languages;  // empty: any

  void validate() const;
};

struct FilterDecision {
  std::optional<RejectReason> reason;  // empty: accepted
  bool accepted() const { return !reason.has_value(); }
};

// Checks run in the fixed order too_short, paywalled, too_old,
// wrong_language; the first failure wins. Markers match case-insensitively
// in the body text and the markup.
FilterDecision quality_filter(const RawItem& item, const FilterPolicy& policy,
                              Timestamp now = timeutil::now());

struct ContentMetadata {
  std::vector<std::string> authors;
  std::size_t word_count = 0;
  std::string description;
};

inline constexpr std::size_t kDescriptionLimit = 300;

// At most max_chars code points, cut at a word boundary and ending with an
// ellipsis when anything was removed.
std::string truncate_description(std::string_view text, std::size_t max_chars = kDescriptionLimit);

ContentMetadata extract_metadata(const RawItem& item);

struct Annotators {
  std::shared_ptr<const classifier::ModelFile> model;
  std::shared_ptr<embedding::EmbeddingProvider> provider;
  std::shared_ptr<topics::ZeroShotClient> topic_client;  // may be null
  std::map<std::string, topics::Lexicon> lexicons;       // keyed by language
  std::vector<std::string> candidates = topics::default_candidates();
  double topic_threshold = 0.5;
};

// Builds the catalog entry. Topic and readability failures degrade (field
// left empty, degraded flag set, logged); a difficulty failure throws.
catalog::ContentItem annotate(const RawItem& item, const Annotators& annotators);

// ---- crawling -------------------------------------------------------------

struct SourceTally {
  std::string source_id;
  std::size_t in_feed = 0;
  std::size_t new_items = 0;
  std::size_t admitted = 0;
  std::size_t duplicates = 0;  // passed the filter but the content was already stored
  std::size_t parked = 0;
  std::size_t retried = 0;     // parked items admitted on this pass
  std::map<RejectReason, std::size_t> rejected;
  bool skipped = false;
  std::string error;

  std::size_t rejected_total() const;
};

struct CrawlOptions {
  std::size_t workers = 4;
  FilterPolicy filter;
};

// Polls sources on a bounded worker pool. Each source is handled by one
// worker from start to finish, so its items are processed in feed order.
// An item is marked seen only after it was rejected, admitted or parked.
class Crawler {
 public:
  Crawler(std::vector<FeedSource> sources, CrawlOptions options, Annotators annotators,
          Fetcher& fetcher, catalog::Catalog& catalog, const std::filesystem::path& state_dir);

  // One pass over every enabled source, preceded by the retry queue.
  std::vector<SourceTally> run_once(Timestamp now = timeutil::now());

  // Polls each source whenever its interval has elapsed until stop() is
  // true. `on_pass` receives the tallies of each source as it is polled.
  void run(const std::function<bool()>& stop,
           const std::function<void(const SourceTally&)>& on_pass = {});

  const SeenStore& seen() const { return seen_; }
  const RetryQueue& retry_queue() const { return retry_; }

 private:
  SourceTally crawl_source(const FeedSource& source, Timestamp now);
  void drain_retry_queue(std::map<std::string, SourceTally>& tallies);

  std::vector<FeedSource> sources_;
  CrawlOptions options_;
  Annotators annotators_;
  Fetcher& fetcher_;
  catalog::Catalog& catalog_;
  SeenStore seen_;
  RetryQueue retry_;
};

// ---- configuration --------------------------------------------------------

// The crawl configuration file (JSON). Relative paths and scheme-less source
// urls are resolved against the file's directory.
struct CrawlConfig {
  std::filesystem::path model_path;
  std::optional<std::filesystem::path> data_dir;
  std::optional<std::string> topic_endpoint;
  std::vector<std::string> candidates = topics::default_candidates();
  double topic_threshold = 0.5;
  std::map<std::string, std::filesystem::path> lexicon_paths;
  FilterPolicy filter;
  FetchPolicy fetch;
  std::size_t workers = 4;
  std::vector<FeedSource> sources;
};

CrawlConfig load_crawl_config(const std::filesystem::path& path);
CrawlConfig parse_crawl_config(std::string_view text, const std::filesystem::path& base_dir);

// Loads the model, provider, lexicons and optional zero-shot client named by
// the configuration.
Annotators make_annotators(const CrawlConfig& config,
                           std::shared_ptr<http::Transport> transport = {});

}  // namespace graded::ingestion
