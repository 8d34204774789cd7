#include <spdlog/spdlog.h>

#include <algorithm>
#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <cctype>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "graded/error.hpp"
#include "graded/hashing.hpp"
#include "graded/html.hpp"
#include "graded/ingestion.hpp"

namespace graded::ingestion {
namespace {

namespace pt = boost::property_tree;

constexpr auto kClockSkew = std::chrono::minutes(5);

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string child_text(const pt::ptree& node, const std::string& key) {
  const auto c = node.get_child_optional(key);
  return c ? trim(c->data()) : std::string();
}

std::string attr(const pt::ptree& node, const std::string& name) {
  return trim(node.get<std::string>("<xmlattr>." + name, ""));
}

// Feed languages come as "fr", "fr-FR" or "fr_ca"; keep the primary subtag.
std::string primary_language(std::string_view tag) {
  std::string out;
  for (const char c : tag) {
    if (c == '-' || c == '_') break;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return trim(out);
}

// "jane@example.org (Jane Doe)" -> "Jane Doe"
std::string author_name(std::string_view raw) {
  std::string s = trim(raw);
  const auto open = s.find('(');
  const auto close = s.rfind(')');
  if (s.find('@') != std::string::npos && open != std::string::npos && close > open)
    return trim(s.substr(open + 1, close - open - 1));
  return s;
}

std::string plain(std::string_view markup_or_text) {
  std::string text = html::to_text(markup_or_text);
  // collapse paragraph breaks for single-line fields
  std::string out;
  bool space = false;
  for (const char c : text) {
    if (c == '\n') {
      space = !out.empty();
      continue;
    }
    if (c == ' ') {
      space = !out.empty();
      continue;
    }
    if (space) out.push_back(' ');
    space = false;
    out.push_back(c);
  }
  return out;
}

Timestamp sanitize_date(const std::string& raw, const FeedSource& source, Timestamp now) {
  if (raw.empty()) return now;
  const auto t = timeutil::parse_any(raw);
  if (!t) {
    spdlog::debug("source {}: unparseable date '{}', using fetch time", source.id, raw);
    return now;
  }
  if (*t > now + kClockSkew) {
    spdlog::debug("source {}: future date '{}' clamped to now", source.id, raw);
    return now;
  }
  return *t;
}

struct Entry {
  RawItem item;
  std::string caption_url;
  std::string video_id;
};

Entry rss_item(const pt::ptree& node, const FeedSource& source, const std::string& language,
               const std::string& base_url, Timestamp now) {
  Entry e;
  RawItem& r = e.item;
  r.source = source;
  r.language = language;
  r.title = plain(child_text(node, "title"));
  r.url = child_text(node, "link");
  if (!r.url.empty()) r.url = resolve_url(base_url, r.url);
  r.guid = child_text(node, "guid");
  if (r.guid.empty()) r.guid = r.url;
  r.description = plain(child_text(node, "description"));
  std::string date = child_text(node, "pubDate");
  if (date.empty()) date = child_text(node, "dc:date");
  r.published_at = sanitize_date(date, source, now);
  const std::string content = child_text(node, "content:encoded");
  if (!content.empty()) {
    r.markup = content;
    r.body_text = html::to_text(content);
  }
  for (const auto& [key, child] : node) {
    if (key == "author" || key == "dc:creator") {
      auto name = author_name(child.data());
      if (!name.empty()) r.authors.push_back(std::move(name));
    } else if (key == "category") {
      auto tag = trim(child.data());
      if (!tag.empty()) r.tags.push_back(std::move(tag));
    } else if (key == "enclosure" || key == "media:subTitle") {
      const auto type = lower(attr(child, "type"));
      auto href = attr(child, "url");
      if (href.empty()) href = attr(child, "href");
      if (!href.empty() && (type == "text/vtt" || key == "media:subTitle"))
        e.caption_url = resolve_url(base_url, href);
    }
  }
  return e;
}

Entry atom_entry(const pt::ptree& node, const FeedSource& source, const std::string& language,
                 const std::string& base_url, Timestamp now) {
  Entry e;
  RawItem& r = e.item;
  r.source = source;
  r.language = language;
  const std::string entry_lang = primary_language(attr(node, "xml:lang"));
  if (!entry_lang.empty()) r.language = entry_lang;
  r.title = plain(child_text(node, "title"));
  r.guid = child_text(node, "id");
  e.video_id = child_text(node, "yt:videoId");
  std::string summary = child_text(node, "summary");
  if (summary.empty()) summary = child_text(node, "media:group.media:description");
  r.description = plain(summary);
  std::string date = child_text(node, "published");
  if (date.empty()) date = child_text(node, "updated");
  r.published_at = sanitize_date(date, source, now);
  for (const auto& [key, child] : node) {
    if (key == "link") {
      const auto rel = attr(child, "rel");
      const auto type = lower(attr(child, "type"));
      const auto href = attr(child, "href");
      if (href.empty()) continue;
      if (type == "text/vtt" || rel == "captions" || rel == "subtitles") {
        e.caption_url = resolve_url(base_url, href);
      } else if ((rel.empty() || rel == "alternate") && r.url.empty()) {
        r.url = resolve_url(base_url, href);
      }
    } else if (key == "author") {
      auto name = trim(child.get<std::string>("name", ""));
      if (!name.empty()) r.authors.push_back(std::move(name));
    } else if (key == "category") {
      auto term = attr(child, "term");
      if (term.empty()) term = trim(child.data());
      if (!term.empty()) r.tags.push_back(std::move(term));
    } else if (key == "content") {
      const auto type = lower(attr(child, "type"));
      const std::string content = trim(child.data());
      if (content.empty()) continue;
      r.markup = content;
      r.body_text = type == "text" ? content : html::to_text(content);
    }
  }
  if (r.guid.empty()) r.guid = r.url;
  return e;
}

std::vector<Entry> parse_entries(const FeedSource& source, std::string_view document,
                                 const std::string& base_url, Timestamp now) {
  pt::ptree tree;
  try {
    std::istringstream in{std::string(document)};
    pt::read_xml(in, tree);
  } catch (const pt::xml_parser_error& e) {
    throw Error(ErrorCode::feed_parse, "feed parse: source " + source.id + ": " + e.message() +
                                           " (line " + std::to_string(e.line()) + ")");
  }
  std::vector<Entry> entries;
  if (const auto rss = tree.get_child_optional("rss")) {
    const auto channel = rss->get_child_optional("channel");
    if (!channel) throw Error(ErrorCode::feed_parse, "feed parse: source " + source.id + ": rss without channel");
    std::string language = primary_language(child_text(*channel, "language"));
    if (language.empty()) language = source.language;
    for (const auto& [key, node] : *channel)
      if (key == "item") entries.push_back(rss_item(node, source, language, base_url, now));
  } else if (const auto feed = tree.get_child_optional("feed")) {
    std::string language = primary_language(attr(*feed, "xml:lang"));
    if (language.empty()) language = source.language;
    for (const auto& [key, node] : *feed)
      if (key == "entry") entries.push_back(atom_entry(node, source, language, base_url, now));
  } else {
    throw Error(ErrorCode::feed_parse,
                "feed parse: source " + source.id + ": root element is neither rss nor feed");
  }
  for (auto& e : entries) {
    if (e.item.guid.empty()) {
      // no id or link at all: fall back to a stable hash of what is there
      e.item.guid = "sha256:" + sha256_hex(e.item.title + "\n" + e.item.description + "\n" +
                                               timeutil::format_rfc3339(e.item.published_at));
    }
    if (e.caption_url.empty() && !source.caption_url_template.empty()) {
      std::string url = source.caption_url_template;
      const auto substitute = [&url](std::string_view key, const std::string& value) {
        for (auto pos = url.find(key); pos != std::string::npos; pos = url.find(key, pos + value.size()))
          url.replace(pos, key.size(), value);
      };
      substitute("{video_id}", e.video_id.empty() ? e.item.guid : e.video_id);
      substitute("{guid}", e.item.guid);
      e.caption_url = resolve_url(base_url, url);
    }
  }
  return entries;
}

std::string content_type_for(const std::string& path) {
  const auto dot = path.rfind('.');
  const std::string ext = dot == std::string::npos ? "" : lower(path.substr(dot + 1));
  if (ext == "xml" || ext == "rss" || ext == "atom") return "application/xml";
  if (ext == "html" || ext == "htm") return "text/html";
  if (ext == "vtt") return "text/vtt";
  if (ext == "json") return "application/json";
  return "text/plain";
}

bool retryable(int status) { return status == 0 || status == 429 || status >= 500; }

std::optional<std::int64_t> parse_number(std::string_view s) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

// "[hh:]mm:ss.ttt" in milliseconds
std::optional<std::int64_t> parse_cue_time(std::string_view s) {
  const auto dot = s.rfind('.');
  if (dot == std::string_view::npos || s.size() - dot != 4) return std::nullopt;
  const auto millis = parse_number(s.substr(dot + 1));
  std::vector<std::int64_t> fields;
  std::string_view clock = s.substr(0, dot);
  while (true) {
    const auto colon = clock.find(':');
    const auto v = parse_number(clock.substr(0, colon));
    if (!v) return std::nullopt;
    fields.push_back(*v);
    if (colon == std::string_view::npos) break;
    clock.remove_prefix(colon + 1);
  }
  if (!millis || fields.size() < 2 || fields.size() > 3) return std::nullopt;
  const std::int64_t h = fields.size() == 3 ? fields[0] : 0;
  const std::int64_t m = fields[fields.size() - 2];
  const std::int64_t sec = fields.back();
  if (m > 59 || sec > 59) return std::nullopt;
  return ((h * 60 + m) * 60 + sec) * 1000 + *millis;
}

}  // namespace

std::string resolve_url(const std::string& base, const std::string& ref) {
  if (ref.empty()) return base;
  if (ref.find("://") != std::string::npos) return ref;
  const auto scheme_end = base.find("://");
  if (scheme_end == std::string::npos) return ref;
  if (ref.rfind("//", 0) == 0) return base.substr(0, scheme_end + 1) + ref;
  if (ref[0] == '/') {
    if (base.compare(0, scheme_end, "file") == 0) return "file://" + ref;
    const auto host_end = base.find('/', scheme_end + 3);
    return (host_end == std::string::npos ? base : base.substr(0, host_end)) + ref;
  }
  auto dir_end = base.rfind('/');
  if (dir_end == std::string::npos || dir_end < scheme_end + 3) return base + "/" + ref;
  return base.substr(0, dir_end + 1) + ref;
}

HttpFetcher::HttpFetcher(FetchPolicy policy, std::shared_ptr<http::Transport> transport)
    : policy_(std::move(policy)), transport_(std::move(transport)) {
  if (!transport_) transport_ = http::make_transport(policy_.user_agent);
}

void HttpFetcher::wait_for_host(const std::string& host) {
  std::chrono::steady_clock::time_point slot;
  {
    std::lock_guard lock(mutex_);
    const auto now = std::chrono::steady_clock::now();
    auto& next = next_slot_[host];
    slot = std::max(now, next);
    next = slot + policy_.per_host_interval;
  }
  std::this_thread::sleep_until(slot);
}

FetchResult HttpFetcher::fetch(const std::string& url) {
  FetchResult result;
  if (url.rfind("file://", 0) == 0) {
    const std::string path = url.substr(7);
    std::ifstream in(path, std::ios::binary);
    if (!in) {
      result.status = 404;
      result.error = "cannot read " + path;
      return result;
    }
    std::stringstream ss;
    ss << in.rdbuf();
    result.status = 200;
    result.body = ss.str();
    result.content_type = content_type_for(path);
    return result;
  }
  http::UrlParts parts;
  try {
    parts = http::parse_url(url);
  } catch (const std::exception& e) {
    result.error = e.what();
    return result;
  }
  auto backoff = policy_.retry_backoff;
  for (int attempt = 0;; ++attempt) {
    wait_for_host(parts.host);
    http::Request request;
    request.method = "GET";
    request.url = url;
    request.timeout = policy_.timeout;
    request.headers.emplace_back("User-Agent", policy_.user_agent);
    const auto response = transport_->send(request);
    result.status = response.status;
    result.body = response.body;
    result.content_type = response.content_type;
    result.error = response.error;
    if (!retryable(response.status) || attempt >= policy_.retry_limit) return result;
    spdlog::debug("fetch {} failed with status {}, retrying in {} ms", url, response.status,
                  backoff.count());
    std::this_thread::sleep_for(backoff);
    backoff *= 2;
  }
}

std::vector<catalog::Cue> parse_webvtt(std::string_view text) {
  std::string doc(text);
  if (doc.rfind("\xEF\xBB\xBF", 0) == 0) doc.erase(0, 3);
  std::vector<std::string> lines;
  {
    std::istringstream in(doc);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      lines.push_back(line);
    }
  }
  if (lines.empty() || lines[0].rfind("WEBVTT", 0) != 0)
    throw Error(ErrorCode::format, "caption track is not WebVTT");

  const auto strip_tags = [](const std::string& s) {
    std::string out;
    bool in_tag = false;
    for (const char c : s) {
      if (c == '<') {
        in_tag = true;
      } else if (c == '>' && in_tag) {
        in_tag = false;
      } else if (!in_tag) {
        out.push_back(c);
      }
    }
    return html::decode_entities(out);
  };

  std::vector<catalog::Cue> cues;
  std::size_t i = 1;
  while (i < lines.size()) {
    // skip blank lines between blocks
    while (i < lines.size() && trim(lines[i]).empty()) ++i;
    if (i >= lines.size()) break;
    std::size_t block_end = i;
    while (block_end < lines.size() && !trim(lines[block_end]).empty()) ++block_end;
    std::size_t timing = i;
    if (lines[timing].find("-->") == std::string::npos) ++timing;  // cue identifier line
    if (timing < block_end && lines[timing].find("-->") != std::string::npos &&
        lines[i].rfind("NOTE", 0) != 0 && lines[i].rfind("STYLE", 0) != 0 &&
        lines[i].rfind("REGION", 0) != 0) {
      const std::string& tl = lines[timing];
      const auto arrow = tl.find("-->");
      const std::string start = trim(tl.substr(0, arrow));
      std::string rest = trim(tl.substr(arrow + 3));
      const auto space = rest.find_first_of(" \t");
      const std::string end = space == std::string::npos ? rest : rest.substr(0, space);
      const auto s = parse_cue_time(start);
      const auto e = parse_cue_time(end);
      if (!s || !e) throw Error(ErrorCode::format, "bad WebVTT timing line '" + tl + "'");
      std::string text;
      for (std::size_t k = timing + 1; k < block_end; ++k) {
        const std::string line = trim(strip_tags(lines[k]));
        if (line.empty()) continue;
        if (!text.empty()) text.push_back(' ');
        text += line;
      }
      if (!text.empty()) cues.push_back({*s, *e, std::move(text)});
    }
    i = block_end;
  }
  return cues;
}

std::string join_cues(const std::vector<catalog::Cue>& cues) {
  std::string out;
  const std::string* previous = nullptr;
  for (const auto& cue : cues) {
    if (previous && *previous == cue.text) continue;
    if (!out.empty()) out.push_back(' ');
    out += cue.text;
    previous = &cue.text;
  }
  return out;
}

std::vector<RawItem> parse_feed(const FeedSource& source, std::string_view document,
                                const std::string& base_url, Timestamp now) {
  std::vector<RawItem> out;
  for (auto& e : parse_entries(source, document, base_url, now)) out.push_back(std::move(e.item));
  return out;
}

PollResult poll_feed(const FeedSource& source, Fetcher& fetcher, const SeenStore* seen,
                     Timestamp now) {
  if (!source.enabled) {
    throw Error(ErrorCode::invalid_argument, "source " + source.id + " is disabled");
  }
  PollResult result;
  const auto doc = fetcher.fetch(source.url);
  if (!doc.ok()) {
    result.skipped = true;
    result.error = "fetch failed with status " + std::to_string(doc.status) +
                   (doc.error.empty() ? "" : ": " + doc.error);
    spdlog::warn("source {}: skipping this pass, {}", source.id, result.error);
    return result;
  }
  auto entries = parse_entries(source, doc.body, source.url, now);
  result.in_feed = entries.size();
  std::set<std::string> in_document;
  for (auto& e : entries) {
    if (!in_document.insert(e.item.guid).second) continue;
    if (seen && seen->contains(source.id, e.item.guid)) continue;
    RawItem& item = e.item;
    if (source.kind == SourceKind::video_channel) {
      if (e.caption_url.empty()) {
        spdlog::info("source {}: video {} has no caption track", source.id, item.guid);
      } else {
        const auto captions = fetcher.fetch(e.caption_url);
        if (!captions.ok()) {
          spdlog::warn("source {}: caption fetch for {} failed (status {})", source.id, item.guid,
                       captions.status);
        } else {
          try {
            item.cues = parse_webvtt(captions.body);
            item.body_text = join_cues(item.cues);
          } catch (const Error& err) {
            spdlog::warn("source {}: caption track for {}: {}", source.id, item.guid, err.what());
          }
        }
      }
    } else if (item.body_text.empty()) {
      if (!item.url.empty()) {
        const auto page = fetcher.fetch(item.url);
        if (page.ok()) {
          item.markup = page.body;
          item.body_text = html::main_content(page.body);
        } else {
          spdlog::info("source {}: page fetch for {} failed (status {}), using description",
                       source.id, item.guid, page.status);
        }
      }
      if (item.body_text.empty()) item.body_text = item.description;
    }
    result.items.push_back(std::move(item));
  }
  return result;
}

}  // namespace graded::ingestion
