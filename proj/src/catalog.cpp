#include "graded/catalog.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <nlohmann/json.hpp>
#include <sstream>

#include "graded/error.hpp"
#include "graded/hashing.hpp"
#include "graded/textproc.hpp"

namespace graded::catalog {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kDocuments = "documents.jsonl";
constexpr const char* kIndex = "index.json";
constexpr const char* kManifest = "manifest.json";
constexpr const char* kFormat = "graded.catalog";

void write_atomically(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::storage, "cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error(ErrorCode::storage, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::storage, "cannot replace " + path.string() + ": " + ec.message());
}

json topic_to_json(const topics::TopicAssignment& a) {
  return {{"topic", a.topic},
          {"confidence", a.confidence},
          {"origin", topics::to_string(a.origin)},
          {"accepted", a.accepted}};
}

json readability_to_json(const readability::ReadabilityReport& r) {
  return {{"gfi", r.gfi},
          {"ari", r.ari},
          {"fkgl", r.fkgl},
          {"stats",
           {{"sentences", r.stats.n_sentences},
            {"words", r.stats.n_words},
            {"chars", r.stats.n_chars},
            {"syllables", r.stats.n_syllables},
            {"complex_words", r.stats.n_complex_words}}}};
}

readability::ReadabilityReport readability_from_json(const json& j) {
  readability::ReadabilityReport r;
  r.gfi = j.at("gfi").get<double>();
  r.ari = j.at("ari").get<double>();
  r.fkgl = j.at("fkgl").get<double>();
  if (j.contains("stats")) {
    const auto& s = j.at("stats");
    r.stats.n_sentences = s.at("sentences").get<std::size_t>();
    r.stats.n_words = s.at("words").get<std::size_t>();
    r.stats.n_chars = s.at("chars").get<std::size_t>();
    r.stats.n_syllables = s.at("syllables").get<std::size_t>();
    r.stats.n_complex_words = s.at("complex_words").get<std::size_t>();
  }
  return r;
}

void add_terms(std::map<std::string, double>& out, std::string_view text, double weight) {
  for (auto& term : textproc::index_terms(text)) out[term] += weight;
}

}  // namespace

std::string_view to_string(Kind kind) { return kind == Kind::video ? "video" : "article"; }

Kind parse_kind(std::string_view s) {
  if (s == "article") return Kind::article;
  if (s == "video") return Kind::video;
  throw Error(ErrorCode::invalid_argument, "unknown kind '" + std::string(s) + "'");
}

bool ContentItem::has_topic(std::string_view topic) const {
  return std::any_of(topics.begin(), topics.end(),
                     [&](const topics::TopicAssignment& a) { return a.topic == topic; });
}

std::string content_id(std::string_view body_text) {
  std::string normalized;
  normalized.reserve(body_text.size());
  bool space = false;
  for (const char c : body_text) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      space = !normalized.empty();
      continue;
    }
    if (space) normalized.push_back(' ');
    space = false;
    normalized.push_back(c);
  }
  return sha256_hex(normalized);
}

json to_json(const ContentItem& item) {
  json topics_json = json::array();
  for (const auto& a : item.topics) topics_json.push_back(topic_to_json(a));
  json cues = json::array();
  for (const auto& c : item.cues)
    cues.push_back({{"start_ms", c.start_ms}, {"end_ms", c.end_ms}, {"text", c.text}});
  return {{"id", item.id},
          {"url", item.url},
          {"title", item.title},
          {"description", item.description},
          {"language", item.language},
          {"kind", to_string(item.kind)},
          {"published_at", timeutil::format_rfc3339(item.published_at)},
          {"word_count", item.word_count},
          {"authors", item.authors},
          {"topics", topics_json},
          {"difficulty",
           {{"label", item.difficulty.label},
            {"index", item.difficulty.index},
            {"probs", item.difficulty.probs}}},
          {"readability", item.readability ? readability_to_json(*item.readability) : json()},
          {"degraded", item.degraded},
          {"body_text", item.body_text},
          {"cues", cues},
          {"source_id", item.source_id},
          {"guid", item.guid}};
}

ContentItem item_from_json(const json& j) {
  try {
    ContentItem item;
    item.id = j.at("id").get<std::string>();
    item.url = j.value("url", "");
    item.title = j.value("title", "");
    item.description = j.value("description", "");
    item.language = j.value("language", "");
    item.kind = parse_kind(j.at("kind").get<std::string>());
    item.published_at = timeutil::parse_stored(j.at("published_at").get<std::string>());
    item.word_count = j.value("word_count", std::size_t{0});
    item.authors = j.value("authors", std::vector<std::string>{});
    for (const auto& t : j.value("topics", json::array())) {
      item.topics.push_back({t.at("topic").get<std::string>(), t.at("confidence").get<double>(),
                             topics::parse_origin(t.at("origin").get<std::string>()),
                             t.value("accepted", true)});
    }
    const auto& d = j.at("difficulty");
    item.difficulty.label = d.at("label").get<std::string>();
    item.difficulty.index = d.at("index").get<std::size_t>();
    item.difficulty.probs = d.at("probs").get<std::vector<double>>();
    if (j.contains("readability") && !j.at("readability").is_null())
      item.readability = readability_from_json(j.at("readability"));
    item.degraded = j.value("degraded", false);
    item.body_text = j.value("body_text", "");
    for (const auto& c : j.value("cues", json::array()))
      item.cues.push_back({c.at("start_ms").get<std::int64_t>(), c.at("end_ms").get<std::int64_t>(),
                           c.at("text").get<std::string>()});
    item.source_id = j.value("source_id", "");
    item.guid = j.value("guid", "");
    return item;
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::format, std::string("bad content item record: ") + e.what());
  }
}

std::map<std::string, double> weighted_terms(const ContentItem& item) {
  std::map<std::string, double> out;
  add_terms(out, item.title, kTitleWeight);
  add_terms(out, item.description, kDescriptionWeight);
  add_terms(out, item.body_text, kBodyWeight);
  return out;
}

Catalog::Catalog(fs::path dir, classifier::DifficultyScale scale)
    : dir_(std::move(dir)), scale_(std::move(scale)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw Error(ErrorCode::storage, "cannot create " + dir_.string() + ": " + ec.message());
  load();
}

std::shared_lock<std::shared_mutex> Catalog::read_lock() const {
  std::lock_guard gate(gate_);
  return std::shared_lock(mutex_);
}

std::unique_lock<std::shared_mutex> Catalog::write_lock() const {
  std::lock_guard gate(gate_);
  return std::unique_lock(mutex_);
}

Catalog::~Catalog() {
  try {
    flush();
  } catch (const std::exception& e) {
    spdlog::error("catalog flush on close failed: {}", e.what());
  }
}

void Catalog::validate(const ContentItem& item) const {
  if (item.id.empty()) throw Error(ErrorCode::invalid_argument, "content item without id");
  const auto index = scale_.find(item.difficulty.label);
  if (!index || *index != item.difficulty.index) {
    throw Error(ErrorCode::invalid_argument,
                "difficulty label '" + item.difficulty.label + "' not on the catalog scale");
  }
  if (item.difficulty.probs.size() != scale_.size()) {
    throw Error(ErrorCode::invalid_argument, "difficulty probabilities do not match the scale");
  }
  double sum = 0.0;
  for (const double p : item.difficulty.probs) {
    if (!std::isfinite(p) || p < 0.0) {
      throw Error(ErrorCode::invalid_argument, "difficulty probabilities must be finite and >= 0");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw Error(ErrorCode::invalid_argument, "difficulty probabilities must sum to 1");
  }
  for (const auto& t : item.topics) {
    if (t.topic.empty()) throw Error(ErrorCode::invalid_argument, "empty topic");
  }
}

void Catalog::index_locked(const ContentItem& item) {
  auto& terms = terms_by_id_[item.id];
  for (const auto& [term, weight] : weighted_terms(item)) {
    postings_[term][item.id] = weight;
    terms.push_back(term);
  }
}

void Catalog::unindex_locked(const std::string& id) {
  const auto it = terms_by_id_.find(id);
  if (it == terms_by_id_.end()) return;
  for (const auto& term : it->second) {
    const auto p = postings_.find(term);
    if (p == postings_.end()) continue;
    p->second.erase(id);
    if (p->second.empty()) postings_.erase(p);
  }
  terms_by_id_.erase(it);
}

void Catalog::append_locked(const json& record) {
  std::ofstream out(dir_ / kDocuments, std::ios::binary | std::ios::app);
  if (!out) throw Error(ErrorCode::storage, "cannot open " + (dir_ / kDocuments).string());
  out << record.dump() << '\n';
  out.flush();
  if (!out) throw Error(ErrorCode::storage, "write to document log failed");
  ++log_records_;
  dirty_ = true;
}

bool Catalog::upsert(const ContentItem& item) {
  validate(item);
  auto lock = write_lock();
  const auto existing = items_.find(item.id);
  if (existing != items_.end() && existing->second == item) return false;
  // log first: if the write fails the in-memory state is untouched and the
  // caller may retry
  append_locked({{"op", "put"}, {"item", to_json(item)}});
  const bool inserted = existing == items_.end();
  unindex_locked(item.id);
  items_[item.id] = item;
  index_locked(item);
  return inserted;
}

std::size_t Catalog::upsert_batch(const std::vector<ContentItem>& items) {
  for (const auto& item : items) validate(item);
  auto lock = write_lock();
  std::size_t inserted = 0;
  for (const auto& item : items) {
    const auto existing = items_.find(item.id);
    if (existing != items_.end() && existing->second == item) continue;
    append_locked({{"op", "put"}, {"item", to_json(item)}});
    if (existing == items_.end()) ++inserted;
    unindex_locked(item.id);
    items_[item.id] = item;
    index_locked(item);
  }
  return inserted;
}

std::optional<ContentItem> Catalog::get(const std::string& id) const {
  auto lock = read_lock();
  const auto it = items_.find(id);
  if (it == items_.end()) return std::nullopt;
  return it->second;
}

bool Catalog::remove(const std::string& id) {
  auto lock = write_lock();
  if (!items_.count(id)) return false;
  append_locked({{"op", "del"}, {"id", id}});
  unindex_locked(id);
  items_.erase(id);
  return true;
}

std::size_t Catalog::size() const {
  auto lock = read_lock();
  return items_.size();
}

std::vector<ContentItem> Catalog::snapshot() const {
  auto lock = read_lock();
  std::vector<ContentItem> out;
  out.reserve(items_.size());
  for (const auto& [id, item] : items_) out.push_back(item);
  return out;
}

double Catalog::relevance(const std::string& id, std::string_view text) const {
  auto lock = read_lock();
  double score = 0.0;
  for (const auto& term : textproc::index_terms(text)) {
    const auto p = postings_.find(term);
    if (p == postings_.end()) continue;
    const auto d = p->second.find(id);
    if (d != p->second.end()) score += d->second;
  }
  return score;
}

std::vector<ContentItem> Catalog::search(const Query& q) const {
  if (q.limit == 0) throw Error(ErrorCode::invalid_argument, "query limit must be >= 1");
  std::size_t lo = 0;
  std::size_t hi = scale_.size() - 1;
  if (q.min_label) {
    const auto i = scale_.find(*q.min_label);
    if (!i) throw Error(ErrorCode::invalid_argument, "unknown label '" + *q.min_label + "'");
    lo = *i;
  }
  if (q.max_label) {
    const auto i = scale_.find(*q.max_label);
    if (!i) throw Error(ErrorCode::invalid_argument, "unknown label '" + *q.max_label + "'");
    hi = *i;
  }
  if (lo > hi) throw Error(ErrorCode::invalid_argument, "min_label is above max_label");
  std::set<std::string> wanted_topics;
  for (const auto& t : q.topics_any) {
    auto n = topics::normalize_topic(t);
    if (!n.empty()) wanted_topics.insert(std::move(n));
  }

  std::vector<std::string> terms;
  if (q.text) {
    terms = textproc::index_terms(*q.text);
    std::sort(terms.begin(), terms.end());
  }

  auto lock = read_lock();
  std::map<std::string, double> scores;
  if (!terms.empty()) {
    // each query term counts once per occurrence in the query
    for (const auto& term : terms) {
      const auto p = postings_.find(term);
      if (p == postings_.end()) continue;
      for (const auto& [id, w] : p->second) scores[id] += w;
    }
  }

  struct Hit {
    const ContentItem* item;
    double score;
  };
  std::vector<Hit> hits;
  const auto consider = [&](const ContentItem& item, double score) {
    if (item.difficulty.index < lo || item.difficulty.index > hi) return;
    if (q.language && item.language != *q.language) return;
    if (q.kind && item.kind != *q.kind) return;
    if (!wanted_topics.empty() &&
        std::none_of(wanted_topics.begin(), wanted_topics.end(),
                     [&](const std::string& t) { return item.has_topic(t); }))
      return;
    hits.push_back({&item, score});
  };
  if (!terms.empty()) {
    for (const auto& [id, score] : scores)
      if (score > 0.0) consider(items_.at(id), score);
  } else {
    for (const auto& [id, item] : items_) consider(item, 0.0);
  }
  std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.item->published_at != b.item->published_at)
      return a.item->published_at > b.item->published_at;
    return a.item->id < b.item->id;
  });
  std::vector<ContentItem> out;
  for (std::size_t i = q.offset; i < hits.size() && out.size() < q.limit; ++i)
    out.push_back(*hits[i].item);
  return out;
}

void Catalog::load() {
  auto lock = write_lock();
  const fs::path manifest_path = dir_ / kManifest;
  std::optional<std::size_t> manifest_records;
  if (fs::exists(manifest_path)) {
    std::ifstream in(manifest_path);
    json m;
    try {
      m = json::parse(in);
    } catch (const std::exception& e) {
      throw Error(ErrorCode::storage, std::string("corrupt catalog manifest: ") + e.what());
    }
    if (m.value("format", "") != kFormat)
      throw Error(ErrorCode::storage, "not a catalog directory: " + dir_.string());
    if (m.value("version", 0) != kFormatVersion) {
      throw Error(ErrorCode::storage,
                  "unsupported catalog format version " + std::to_string(m.value("version", 0)));
    }
    const auto stored_scale = m.value("scale", std::vector<std::string>{});
    if (!stored_scale.empty() && stored_scale != scale_.labels()) {
      throw Error(ErrorCode::storage, "catalog was created with a different difficulty scale");
    }
    manifest_records = m.value("index_records", std::size_t{0});
  }

  std::ifstream in(dir_ / kDocuments, std::ios::binary);
  std::string line;
  std::size_t line_no = 0;
  while (in && std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const std::exception&) {
      // a torn final line from a crash mid-append is dropped; anything else
      // is corruption
      if (in.peek() == std::char_traits<char>::eof()) {
        spdlog::warn("catalog: dropping torn trailing record at line {}", line_no);
        break;
      }
      throw Error(ErrorCode::storage, "corrupt document log at line " + std::to_string(line_no));
    }
    ++log_records_;
    const auto op = record.value("op", "");
    if (op == "put") {
      auto item = item_from_json(record.at("item"));
      items_[item.id] = std::move(item);
    } else if (op == "del") {
      items_.erase(record.at("id").get<std::string>());
    } else {
      throw Error(ErrorCode::storage, "unknown document log op '" + op + "'");
    }
  }

  if (!(manifest_records && *manifest_records == log_records_ && load_index(log_records_))) {
    postings_.clear();
    terms_by_id_.clear();
    for (const auto& [id, item] : items_) index_locked(item);
    dirty_ = true;
  }
}

bool Catalog::load_index(std::size_t expected_records) {
  std::ifstream in(dir_ / kIndex);
  if (!in) return false;
  try {
    const auto j = json::parse(in);
    if (j.value("records", std::size_t{0}) != expected_records) return false;
    decltype(postings_) postings;
    decltype(terms_by_id_) terms_by_id;
    for (const auto& [term, plist] : j.at("postings").items()) {
      for (const auto& entry : plist) {
        const auto id = entry.at(0).get<std::string>();
        if (!items_.count(id)) return false;
        postings[term][id] = entry.at(1).get<double>();
        terms_by_id[id].push_back(term);
      }
    }
    if (terms_by_id.size() != items_.size()) return false;
    postings_ = std::move(postings);
    terms_by_id_ = std::move(terms_by_id);
    return true;
  } catch (const std::exception& e) {
    spdlog::warn("catalog: rebuilding index ({})", e.what());
    return false;
  }
}

void Catalog::write_index_locked() {
  json postings = json::object();
  std::map<std::string, const std::map<std::string, double>*> ordered;
  for (const auto& [term, plist] : postings_) ordered[term] = &plist;
  for (const auto& [term, plist] : ordered) {
    json entries = json::array();
    for (const auto& [id, w] : *plist) entries.push_back({id, w});
    postings[term] = std::move(entries);
  }
  const json j{{"records", log_records_}, {"postings", postings}};
  write_atomically(dir_ / kIndex, j.dump());
}

void Catalog::write_manifest_locked() {
  const json m{{"format", kFormat},
               {"version", kFormatVersion},
               {"scale", scale_.labels()},
               {"items", items_.size()},
               {"index_records", log_records_}};
  write_atomically(dir_ / kManifest, m.dump(2) + "\n");
}

void Catalog::flush() {
  auto lock = write_lock();
  if (!dirty_ && fs::exists(dir_ / kManifest)) return;
  write_index_locked();
  write_manifest_locked();
  dirty_ = false;
}

void Catalog::compact() {
  auto lock = write_lock();
  std::string content;
  for (const auto& [id, item] : items_)
    content += json{{"op", "put"}, {"item", to_json(item)}}.dump() + "\n";
  write_atomically(dir_ / kDocuments, content);
  log_records_ = items_.size();
  write_index_locked();
  write_manifest_locked();
  dirty_ = false;
}

}  // namespace graded::catalog
