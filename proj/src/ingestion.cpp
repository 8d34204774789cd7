#include "graded/ingestion.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <thread>

#include "graded/error.hpp"
#include "graded/readability.hpp"
#include "graded/textproc.hpp"
#include "graded/utf8.hpp"

namespace graded::ingestion {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

void append_line(const fs::path& file, const std::string& line) {
  std::ofstream out(file, std::ios::binary | std::ios::app);
  if (!out) throw Error(ErrorCode::storage, "cannot open " + file.string());
  out << line << '\n';
  out.flush();
  if (!out) throw Error(ErrorCode::storage, "write to " + file.string() + " failed");
}

template <typename F>
void for_each_json_line(const fs::path& file, F&& f) {
  std::ifstream in(file, std::ios::binary);
  std::string line;
  std::size_t n = 0;
  while (in && std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      f(json::parse(line));
    } catch (const json::exception& e) {
      if (in.peek() == std::char_traits<char>::eof()) {
        spdlog::warn("{}: dropping torn trailing line {}", file.string(), n);
        return;
      }
      throw Error(ErrorCode::storage, file.string() + ": corrupt line " + std::to_string(n));
    }
  }
}

json source_to_json(const FeedSource& s) {
  return {{"id", s.id},
          {"url", s.url},
          {"kind", to_string(s.kind)},
          {"language", s.language},
          {"poll_interval_minutes", s.poll_interval.count()},
          {"enabled", s.enabled},
          {"caption_url_template", s.caption_url_template}};
}

FeedSource source_from_json(const json& j, const fs::path& base_dir) {
  FeedSource s;
  s.url = j.at("url").get<std::string>();
  if (s.url.find("://") == std::string::npos) {
    // scheme-less urls are paths relative to the configuration file
    fs::path p(s.url);
    if (p.is_relative()) p = base_dir / p;
    s.url = "file://" + fs::weakly_canonical(p).string();
  }
  s.id = j.value("id", s.url);
  s.kind = parse_source_kind(j.value("kind", "article_feed"));
  s.language = j.value("language", "fr");
  s.poll_interval = std::chrono::minutes(j.value("poll_interval_minutes", 30));
  s.enabled = j.value("enabled", true);
  s.caption_url_template = j.value("caption_url_template", "");
  return s;
}

std::string lower_text(std::string_view s) { return utf8::to_lower(s); }

}  // namespace

std::string_view to_string(SourceKind kind) {
  return kind == SourceKind::video_channel ? "video_channel" : "article_feed";
}

SourceKind parse_source_kind(std::string_view s) {
  if (s == "article_feed") return SourceKind::article_feed;
  if (s == "video_channel") return SourceKind::video_channel;
  throw Error(ErrorCode::invalid_argument, "unknown source kind '" + std::string(s) + "'");
}

void FeedSource::validate() const {
  if (poll_interval < std::chrono::minutes(1))
    throw Error(ErrorCode::invalid_argument, "source " + id + ": poll interval below 1 minute");
  if (url.rfind("file://", 0) == 0) {
    if (url.size() <= 7) throw Error(ErrorCode::invalid_argument, "source " + id + ": empty file url");
    return;
  }
  const auto parts = http::parse_url(url);
  if (parts.scheme != "http" && parts.scheme != "https")
    throw Error(ErrorCode::invalid_argument, "source " + id + ": unsupported scheme");
}

json to_json(const RawItem& item) {
  json cues = json::array();
  for (const auto& c : item.cues)
    cues.push_back({{"start_ms", c.start_ms}, {"end_ms", c.end_ms}, {"text", c.text}});
  return {{"source", source_to_json(item.source)},
          {"guid", item.guid},
          {"url", item.url},
          {"title", item.title},
          {"description", item.description},
          {"published_at", timeutil::format_rfc3339(item.published_at)},
          {"body_text", item.body_text},
          {"authors", item.authors},
          {"tags", item.tags},
          {"language", item.language},
          {"markup", item.markup},
          {"cues", cues}};
}

RawItem raw_item_from_json(const json& j) {
  RawItem item;
  item.source = source_from_json(j.at("source"), fs::path());
  item.guid = j.at("guid").get<std::string>();
  item.url = j.value("url", "");
  item.title = j.value("title", "");
  item.description = j.value("description", "");
  item.published_at = timeutil::parse_stored(j.at("published_at").get<std::string>());
  item.body_text = j.value("body_text", "");
  item.authors = j.value("authors", std::vector<std::string>{});
  item.tags = j.value("tags", std::vector<std::string>{});
  item.language = j.value("language", item.source.language);
  item.markup = j.value("markup", "");
  for (const auto& c : j.value("cues", json::array()))
    item.cues.push_back({c.at("start_ms").get<std::int64_t>(), c.at("end_ms").get<std::int64_t>(),
                         c.at("text").get<std::string>()});
  return item;
}

// ---- SeenStore ------------------------------------------------------------

SeenStore::SeenStore(fs::path file) : file_(std::move(file)) {
  if (file_.has_parent_path()) fs::create_directories(file_.parent_path());
  for_each_json_line(file_, [this](const json& j) {
    seen_.emplace(j.at(0).get<std::string>(), j.at(1).get<std::string>());
  });
}

bool SeenStore::contains(const std::string& source_id, const std::string& guid) const {
  std::lock_guard lock(mutex_);
  return seen_.count({source_id, guid}) > 0;
}

bool SeenStore::mark(const std::string& source_id, const std::string& guid) {
  std::lock_guard lock(mutex_);
  if (seen_.count({source_id, guid})) return false;
  append_line(file_, json::array({source_id, guid}).dump());
  seen_.emplace(source_id, guid);
  return true;
}

std::size_t SeenStore::size() const {
  std::lock_guard lock(mutex_);
  return seen_.size();
}

// ---- RetryQueue -----------------------------------------------------------

RetryQueue::RetryQueue(fs::path file) : file_(std::move(file)) {
  if (file_.has_parent_path()) fs::create_directories(file_.parent_path());
  for_each_json_line(file_, [this](const json& j) {
    entries_.push_back(
        {raw_item_from_json(j.at("item")), j.value("reason", ""), j.value("attempts", 1)});
  });
}

void RetryQueue::rewrite_locked() const {
  std::string content;
  for (const auto& e : entries_) {
    content += json{{"item", to_json(e.item)}, {"reason", e.reason}, {"attempts", e.attempts}}.dump();
    content.push_back('\n');
  }
  const fs::path tmp = file_.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << content;
    if (!out) throw Error(ErrorCode::storage, "cannot write " + tmp.string());
  }
  fs::rename(tmp, file_);
}

void RetryQueue::park(const RawItem& item, const std::string& reason) {
  std::lock_guard lock(mutex_);
  const auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) {
    return e.item.source.id == item.source.id && e.item.guid == item.guid;
  });
  if (it != entries_.end()) {
    ++it->attempts;
    it->reason = reason;
  } else {
    entries_.push_back({item, reason, 1});
  }
  rewrite_locked();
}

void RetryQueue::resolve(const std::string& source_id, const std::string& guid) {
  std::lock_guard lock(mutex_);
  const auto before = entries_.size();
  std::erase_if(entries_, [&](const Entry& e) {
    return e.item.source.id == source_id && e.item.guid == guid;
  });
  if (entries_.size() != before) rewrite_locked();
}

std::vector<RetryQueue::Entry> RetryQueue::pending() const {
  std::lock_guard lock(mutex_);
  return entries_;
}

std::size_t RetryQueue::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

// ---- filtering and metadata -----------------------------------------------

std::string_view to_string(RejectReason reason) {
  switch (reason) {
    case RejectReason::too_short: return "too_short";
    case RejectReason::paywalled: return "paywalled";
    case RejectReason::too_old: return "too_old";
    case RejectReason::wrong_language: return "wrong_language";
  }
  return "too_short";
}

void FilterPolicy::validate() const {
  if (min_words < 1) throw Error(ErrorCode::invalid_argument, "min_words must be >= 1");
  if (max_age.count() < 0) throw Error(ErrorCode::invalid_argument, "max_age must be >= 0");
}

FilterDecision quality_filter(const RawItem& item, const FilterPolicy& policy, Timestamp now) {
  if (textproc::word_count(item.body_text) < policy.min_words) return {RejectReason::too_short};
  if (!policy.paywall_markers.empty()) {
    const std::string body = lower_text(item.body_text);
    const std::string markup = lower_text(item.markup);
    for (const auto& marker : policy.paywall_markers) {
      const std::string m = lower_text(marker);
      if (m.empty()) continue;
      if (body.find(m) != std::string::npos || markup.find(m) != std::string::npos)
        return {RejectReason::paywalled};
    }
  }
  if (policy.max_age.count() > 0 && now - item.published_at > policy.max_age)
    return {RejectReason::too_old};
  if (!policy.allowed_languages.empty() && !policy.allowed_languages.count(item.language))
    return {RejectReason::wrong_language};
  return {};
}

std::string truncate_description(std::string_view text, std::size_t max_chars) {
  // normalize whitespace first so the limit counts visible characters
  std::u32string cps;
  bool space = false;
  for (const auto& cp : utf8::decode(text)) {
    if (utf8::is_space(cp.value)) {
      space = !cps.empty();
      continue;
    }
    if (space) cps.push_back(U' ');
    space = false;
    cps.push_back(cp.value);
  }
  if (cps.size() <= max_chars) return utf8::encode(cps);
  if (max_chars == 0) return {};
  const std::size_t room = max_chars - 1;  // one code point for the ellipsis
  std::size_t cut = room;
  if (cps[room] != U' ') {
    const auto last_space = cps.rfind(U' ', room);
    if (last_space != std::u32string::npos && last_space > 0) cut = last_space;
  }
  std::u32string head = cps.substr(0, cut);
  while (!head.empty() && (head.back() == U' ' || head.back() == U',' || head.back() == U';' ||
                           head.back() == U':' || head.back() == U'.'))
    head.pop_back();
  head.push_back(U'…');
  return utf8::encode(head);
}

ContentMetadata extract_metadata(const RawItem& item) {
  ContentMetadata meta;
  for (const auto& a : item.authors) {
    if (!a.empty() && std::find(meta.authors.begin(), meta.authors.end(), a) == meta.authors.end())
      meta.authors.push_back(a);
  }
  meta.word_count = textproc::word_count(item.body_text);
  meta.description =
      truncate_description(item.description.empty() ? item.body_text : item.description);
  return meta;
}

// ---- annotation -----------------------------------------------------------

catalog::ContentItem annotate(const RawItem& item, const Annotators& annotators) {
  if (!annotators.model || !annotators.provider) {
    throw Error(ErrorCode::invalid_argument, "annotation needs a model and an embedding provider");
  }
  catalog::ContentItem out;
  out.id = catalog::content_id(item.body_text);
  out.url = item.url;
  out.title = item.title;
  out.language = item.language;
  out.kind = item.source.kind == SourceKind::video_channel ? catalog::Kind::video
                                                           : catalog::Kind::article;
  out.published_at = item.published_at;
  out.body_text = item.body_text;
  out.cues = item.cues;
  out.source_id = item.source.id;
  out.guid = item.guid;
  const auto meta = extract_metadata(item);
  out.authors = meta.authors;
  out.word_count = meta.word_count;
  out.description = meta.description;

  // difficulty is mandatory: any failure propagates
  const std::vector<std::string> texts{item.body_text};
  const auto vectors =
      embedding::embed_batch(texts, *annotators.provider, annotators.model->provider.max_words);
  const auto prediction = classifier::predict(annotators.model->params, vectors.at(0));
  out.difficulty = {prediction.label, prediction.index, prediction.probs};

  try {
    out.readability = readability::score_all(item.body_text);
  } catch (const std::exception& e) {
    spdlog::warn("item {}: readability unavailable: {}", item.guid, e.what());
    out.degraded = true;
  }

  std::vector<topics::TopicAssignment> accepted;
  try {
    const auto lex = annotators.lexicons.find(item.language);
    static const topics::Lexicon kEmpty;
    const auto& lexicon = lex == annotators.lexicons.end() ? kEmpty : lex->second;
    const std::string text = item.title.empty() ? item.body_text : item.title + "\n\n" + item.body_text;
    const auto result = topics::classify_topics(text, annotators.candidates,
                                                annotators.topic_client.get(), lexicon,
                                                annotators.topic_threshold);
    if (result.degraded) out.degraded = true;
    for (const auto& a : result.assignments)
      if (a.accepted) accepted.push_back(a);
  } catch (const std::exception& e) {
    spdlog::warn("item {}: topic detection unavailable: {}", item.guid, e.what());
    out.degraded = true;
  }
  out.topics = topics::merge_topics(item.tags, accepted);
  return out;
}

// ---- crawler --------------------------------------------------------------

std::size_t SourceTally::rejected_total() const {
  std::size_t n = 0;
  for (const auto& [reason, count] : rejected) n += count;
  return n;
}

Crawler::Crawler(std::vector<FeedSource> sources, CrawlOptions options, Annotators annotators,
                 Fetcher& fetcher, catalog::Catalog& catalog, const fs::path& state_dir)
    : sources_(std::move(sources)),
      options_(std::move(options)),
      annotators_(std::move(annotators)),
      fetcher_(fetcher),
      catalog_(catalog),
      seen_(state_dir / "seen.jsonl"),
      retry_(state_dir / "retry.jsonl") {
  options_.filter.validate();
  std::set<std::string> ids;
  for (const auto& s : sources_) {
    s.validate();
    if (!ids.insert(s.id).second)
      throw Error(ErrorCode::invalid_argument, "duplicate source id " + s.id);
  }
  if (options_.workers == 0) options_.workers = 1;
}

SourceTally Crawler::crawl_source(const FeedSource& source, Timestamp now) {
  SourceTally tally;
  tally.source_id = source.id;
  PollResult polled;
  try {
    polled = poll_feed(source, fetcher_, &seen_, now);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    tally.skipped = true;
    tally.error = e.what();
    return tally;
  }
  tally.in_feed = polled.in_feed;
  tally.skipped = polled.skipped;
  tally.error = polled.error;
  tally.new_items = polled.items.size();
  for (const auto& item : polled.items) {
    const auto decision = quality_filter(item, options_.filter, now);
    if (!decision.accepted()) {
      ++tally.rejected[*decision.reason];
      spdlog::info("source {}: rejected {} ({})", source.id, item.guid, to_string(*decision.reason));
      seen_.mark(source.id, item.guid);
      continue;
    }
    try {
      const auto content = annotate(item, annotators_);
      if (catalog_.get(content.id)) {
        ++tally.duplicates;
      } else if (catalog_.upsert(content)) {
        ++tally.admitted;
      } else {
        ++tally.duplicates;
      }
    } catch (const std::exception& e) {
      spdlog::warn("source {}: parking {}: {}", source.id, item.guid, e.what());
      retry_.park(item, e.what());
      ++tally.parked;
    }
    seen_.mark(source.id, item.guid);
  }
  return tally;
}

void Crawler::drain_retry_queue(std::map<std::string, SourceTally>& tallies) {
  for (const auto& entry : retry_.pending()) {
    const auto& item = entry.item;
    auto& tally = tallies[item.source.id];
    tally.source_id = item.source.id;
    try {
      const auto content = annotate(item, annotators_);
      if (!catalog_.get(content.id)) catalog_.upsert(content);
      retry_.resolve(item.source.id, item.guid);
      ++tally.retried;
    } catch (const std::exception& e) {
      retry_.park(item, e.what());
      spdlog::warn("retry of {} failed again (attempt {}): {}", item.guid, entry.attempts + 1,
                   e.what());
    }
  }
}

namespace {

// Runs job(i) for every i in [0, n) on at most `workers` threads.
template <typename Job>
void run_pool(std::size_t n, std::size_t workers, Job&& job) {
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) job(i);
  };
  const std::size_t count = std::min(workers, n);
  std::vector<std::jthread> threads;
  for (std::size_t t = 1; t < count; ++t) threads.emplace_back(worker);
  if (count > 0) worker();
}

}  // namespace

std::vector<SourceTally> Crawler::run_once(Timestamp now) {
  std::map<std::string, SourceTally> retried;
  drain_retry_queue(retried);
  std::vector<const FeedSource*> enabled;
  for (const auto& s : sources_)
    if (s.enabled) enabled.push_back(&s);
  std::vector<SourceTally> tallies(enabled.size());
  run_pool(enabled.size(), options_.workers,
           [&](std::size_t i) { tallies[i] = crawl_source(*enabled[i], now); });
  for (auto& t : tallies) {
    const auto it = retried.find(t.source_id);
    if (it != retried.end()) t.retried = it->second.retried;
  }
  catalog_.flush();
  return tallies;
}

void Crawler::run(const std::function<bool()>& stop,
                  const std::function<void(const SourceTally&)>& on_pass) {
  using clock = std::chrono::steady_clock;
  std::vector<clock::time_point> due(sources_.size(), clock::now());
  std::mutex report_mutex;
  while (!stop()) {
    std::map<std::string, SourceTally> retried;
    drain_retry_queue(retried);
    std::vector<std::size_t> ready;
    const auto tick = clock::now();
    for (std::size_t i = 0; i < sources_.size(); ++i)
      if (sources_[i].enabled && due[i] <= tick) ready.push_back(i);
    run_pool(ready.size(), options_.workers, [&](std::size_t k) {
      const auto& source = sources_[ready[k]];
      const auto tally = crawl_source(source, timeutil::now());
      due[ready[k]] = clock::now() + source.poll_interval;
      if (on_pass) {
        std::lock_guard lock(report_mutex);
        on_pass(tally);
      }
    });
    if (!ready.empty()) catalog_.flush();
    for (int i = 0; i < 10 && !stop(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  catalog_.flush();
}

// ---- configuration --------------------------------------------------------

CrawlConfig parse_crawl_config(std::string_view text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::format, std::string("crawl config is not valid JSON: ") + e.what());
  }
  const auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return path.is_relative() ? base_dir / path : path;
  };
  try {
    CrawlConfig cfg;
    cfg.model_path = resolve(j.at("model").get<std::string>());
    if (j.contains("data_dir")) cfg.data_dir = resolve(j.at("data_dir").get<std::string>());
    cfg.workers = j.value("workers", std::size_t{4});
    if (j.contains("topics")) {
      const auto& t = j.at("topics");
      if (t.contains("endpoint")) cfg.topic_endpoint = t.at("endpoint").get<std::string>();
      cfg.candidates = t.value("candidates", cfg.candidates);
      cfg.topic_threshold = t.value("threshold", cfg.topic_threshold);
      const json lexicons = t.value("lexicons", json::object());
      for (const auto& [lang, path] : lexicons.items())
        cfg.lexicon_paths[lang] = resolve(path.get<std::string>());
    }
    if (j.contains("filter")) {
      const auto& f = j.at("filter");
      cfg.filter.min_words = f.value("min_words", cfg.filter.min_words);
      cfg.filter.paywall_markers = f.value("paywall_markers", cfg.filter.paywall_markers);
      cfg.filter.max_age = std::chrono::hours(24 * f.value("max_age_days", 0));
      for (const auto& l : f.value("allowed_languages", std::vector<std::string>{}))
        cfg.filter.allowed_languages.insert(l);
    }
    if (j.contains("fetch")) {
      const auto& f = j.at("fetch");
      cfg.fetch.user_agent = f.value("user_agent", cfg.fetch.user_agent);
      cfg.fetch.per_host_interval =
          std::chrono::milliseconds(f.value("per_host_interval_ms", cfg.fetch.per_host_interval.count()));
      cfg.fetch.retry_limit = f.value("retry_limit", cfg.fetch.retry_limit);
      cfg.fetch.retry_backoff =
          std::chrono::milliseconds(f.value("retry_backoff_ms", cfg.fetch.retry_backoff.count()));
      cfg.fetch.timeout = std::chrono::milliseconds(f.value("timeout_ms", cfg.fetch.timeout.count()));
    }
    for (const auto& s : j.at("sources")) cfg.sources.push_back(source_from_json(s, base_dir));
    cfg.filter.validate();
    for (const auto& s : cfg.sources) s.validate();
    return cfg;
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::format, std::string("bad crawl config: ") + e.what());
  }
}

CrawlConfig load_crawl_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::format, "cannot read crawl config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_crawl_config(ss.str(), fs::absolute(path).parent_path());
}

Annotators make_annotators(const CrawlConfig& config, std::shared_ptr<http::Transport> transport) {
  Annotators a;
  a.model = std::make_shared<const classifier::ModelFile>(classifier::load_model(config.model_path));
  a.provider = embedding::make_provider(a.model->provider, transport);
  if (config.topic_endpoint) {
    a.topic_client = std::make_shared<topics::HttpZeroShotClient>(*config.topic_endpoint, transport);
  }
  for (const auto& [lang, path] : config.lexicon_paths) a.lexicons[lang] = topics::load_lexicon(path);
  a.candidates = config.candidates;
  a.topic_threshold = config.topic_threshold;
  return a;
}

}  // namespace graded::ingestion
