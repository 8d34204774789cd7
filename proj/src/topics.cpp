#include "graded/topics.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "graded/error.hpp"
#include "graded/textproc.hpp"
#include "graded/utf8.hpp"

namespace graded::topics {
namespace {

using json = nlohmann::json;

std::string match_key(std::string_view word) {
  auto terms = textproc::index_terms(word);
  std::string out;
  for (const auto& t : terms) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

}  // namespace

std::string_view to_string(Origin origin) {
  switch (origin) {
    case Origin::classifier: return "classifier";
    case Origin::pretagged: return "pretagged";
    case Origin::keyword: return "keyword";
  }
  return "classifier";
}

Origin parse_origin(std::string_view s) {
  if (s == "pretagged") return Origin::pretagged;
  if (s == "keyword") return Origin::keyword;
  if (s == "classifier") return Origin::classifier;
  throw Error(ErrorCode::format, "unknown topic origin '" + std::string(s) + "'");
}

std::string normalize_topic(std::string_view topic) {
  const std::string lower = utf8::to_lower(topic);
  std::string out;
  bool pending_space = false;
  for (const auto& cp : utf8::decode(lower)) {
    if (utf8::is_space(cp.value)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    utf8::append(out, cp.value);
  }
  return out;
}

const std::vector<std::string>& default_candidates() {
  static const std::vector<std::string> kTopics{
      "politics", "sports", "technology", "science", "culture", "economy",
      "health",   "travel", "food",       "music",   "movies",  "environment"};
  return kTopics;
}

Lexicon parse_lexicon(std::string_view text) {
  Lexicon lexicon;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    const std::string topic = normalize_topic(fields[0]);
    if (topic.empty()) continue;
    auto& words = lexicon[topic];
    for (std::size_t i = 1; i < fields.size(); ++i) {
      const std::string key = match_key(fields[i]);
      if (!key.empty()) words.insert(key);
    }
  }
  return lexicon;
}

Lexicon load_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::format, "cannot open lexicon " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_lexicon(ss.str());
}

HttpZeroShotClient::HttpZeroShotClient(std::string endpoint,
                                       std::shared_ptr<http::Transport> transport,
                                       std::chrono::milliseconds timeout,
                                       std::ptrdiff_t max_in_flight)
    : endpoint_(std::move(endpoint)),
      transport_(std::move(transport)),
      timeout_(timeout),
      in_flight_(std::clamp<std::ptrdiff_t>(max_in_flight, 1, 64)) {
  if (!transport_) transport_ = http::make_transport();
}

std::map<std::string, double> HttpZeroShotClient::classify(
    const std::string& text, const std::vector<std::string>& labels) {
  http::Request request;
  request.method = "POST";
  request.url = endpoint_;
  request.timeout = timeout_;
  request.body = json{{"text", text}, {"candidate_labels", labels}}.dump();
  in_flight_.acquire();
  http::Response response;
  try {
    response = transport_->send(request);
  } catch (...) {
    in_flight_.release();
    throw;
  }
  in_flight_.release();
  if (!http::ok(response)) {
    throw ProviderError(ErrorCode::provider_unavailable,
                        "provider unavailable: zero-shot endpoint status " +
                            std::to_string(response.status),
                        response.status);
  }
  try {
    const auto body = json::parse(response.body);
    const auto out_labels = body.at("labels").get<std::vector<std::string>>();
    const auto scores = body.at("scores").get<std::vector<double>>();
    if (out_labels.size() != scores.size()) throw Error(ErrorCode::format, "length mismatch");
    std::map<std::string, double> out;
    for (std::size_t i = 0; i < scores.size(); ++i) out[out_labels[i]] = scores[i];
    return out;
  } catch (const std::exception& e) {
    throw ProviderError(ErrorCode::provider_contract_violation,
                        std::string("provider contract violation: zero-shot response: ") + e.what(),
                        response.status);
  }
}

std::vector<TopicAssignment> keyword_fallback(std::string_view text, const Lexicon& lexicon,
                                              double threshold) {
  if (lexicon.empty()) throw Error(ErrorCode::invalid_argument, "keyword lexicon is empty");
  const auto terms = textproc::index_terms(text);
  const std::set<std::string> present(terms.begin(), terms.end());
  std::vector<TopicAssignment> out;
  for (const auto& [topic, words] : lexicon) {
    std::set<std::string> keys;
    for (const auto& w : words) {
      auto key = match_key(w);
      if (!key.empty()) keys.insert(std::move(key));
    }
    std::size_t hits = 0;
    for (const auto& k : keys) hits += present.count(k);
    const double confidence =
        keys.empty() ? 0.0
                     : std::clamp(static_cast<double>(hits) / static_cast<double>(keys.size()),
                                  0.0, 1.0);
    out.push_back({topic, confidence, Origin::keyword, confidence >= threshold});
  }
  return out;
}

TopicResult classify_topics(std::string_view text, const std::vector<std::string>& candidates,
                            ZeroShotClient* client, const Lexicon& fallback_lexicon,
                            double threshold) {
  if (candidates.empty()) {
    throw Error(ErrorCode::invalid_argument, "classify_topics needs at least one candidate");
  }
  if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) {
    throw Error(ErrorCode::invalid_argument, "classify_topics needs non-empty text");
  }
  std::vector<std::string> normalized;
  for (const auto& c : candidates) normalized.push_back(normalize_topic(c));

  TopicResult result;
  if (client != nullptr) {
    try {
      const auto scores = client->classify(std::string(text), normalized);
      std::map<std::string, double> by_topic;
      for (const auto& [label, score] : scores) by_topic[normalize_topic(label)] = score;
      for (const auto& topic : normalized) {
        const auto it = by_topic.find(topic);
        const double c = it == by_topic.end() ? 0.0 : std::clamp(it->second, 0.0, 1.0);
        result.assignments.push_back({topic, c, Origin::classifier, c >= threshold});
      }
      return result;
    } catch (const std::exception& e) {
      spdlog::warn("topic classifier degraded to keyword fallback: {}", e.what());
    }
  }
  result.degraded = true;
  Lexicon subset;
  for (const auto& topic : normalized) {
    const auto it = fallback_lexicon.find(topic);
    subset[topic] = it == fallback_lexicon.end() ? std::set<std::string>{} : it->second;
  }
  const auto fallback = keyword_fallback(text, subset, threshold);
  for (const auto& topic : normalized) {
    const auto it = std::find_if(fallback.begin(), fallback.end(),
                                 [&](const TopicAssignment& a) { return a.topic == topic; });
    result.assignments.push_back(*it);
  }
  return result;
}

std::vector<TopicAssignment> merge_topics(const std::vector<std::string>& pretagged,
                                          const std::vector<TopicAssignment>& predicted) {
  std::map<std::string, TopicAssignment> merged;
  const auto add = [&](TopicAssignment a) {
    a.topic = normalize_topic(a.topic);
    if (a.topic.empty()) return;
    auto [it, inserted] = merged.emplace(a.topic, a);
    if (inserted) return;
    auto& cur = it->second;
    // keep the max confidence; pretagged wins ties so its origin survives
    if (a.confidence > cur.confidence ||
        (a.confidence == cur.confidence && a.origin == Origin::pretagged)) {
      cur = a;
    } else if (a.confidence == cur.confidence && cur.origin != Origin::pretagged &&
               to_string(a.origin) < to_string(cur.origin)) {
      cur.origin = a.origin;  // order-independent choice between equal scores
    }
  };
  for (const auto& tag : pretagged) add({tag, 1.0, Origin::pretagged, true});
  for (const auto& p : predicted) add(p);
  std::vector<TopicAssignment> out;
  out.reserve(merged.size());
  for (auto& [topic, a] : merged) out.push_back(std::move(a));
  return out;
}

}  // namespace graded::topics
