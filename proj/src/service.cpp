#include "graded/service.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "graded/error.hpp"
#include "graded/utf8.hpp"

namespace graded::service {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Thrown inside handlers and turned into an ApiError body.
struct ApiFailure {
  int status;
  std::string code;
  std::string message;
};

[[noreturn]] void fail(int status, std::string code, std::string message) {
  throw ApiFailure{status, std::move(code), std::move(message)};
}

ApiResponse json_response(int status, const json& body) {
  ApiResponse r;
  r.status = status;
  r.body = body.dump();
  return r;
}

ApiResponse error_response(int status, const std::string& code, const std::string& message) {
  return json_response(status,
                       {{"error", {{"status", status}, {"code", code}, {"message", message}}}});
}

json parse_body(const ApiRequest& request) {
  json body = json::parse(request.body, nullptr, false);
  if (body.is_discarded() || !body.is_object()) fail(400, "bad_request", "body must be a JSON object");
  return body;
}

std::vector<std::string> string_list(const json& body, const char* field) {
  if (!body.contains(field)) return {};
  const json& v = body.at(field);
  if (!v.is_array()) fail(400, "bad_request", std::string(field) + " must be an array of strings");
  std::vector<std::string> out;
  for (const auto& e : v) {
    if (!e.is_string()) fail(400, "bad_request", std::string(field) + " must be an array of strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

std::string required_string(const json& body, const char* field, int status = 400) {
  if (!body.contains(field) || !body.at(field).is_string())
    fail(status, status == 422 ? "invalid_field" : "bad_request",
         std::string("missing string field ") + field);
  return body.at(field).get<std::string>();
}

std::size_t parse_count(const std::string& name, const std::string& value) {
  if (value.empty() || !std::all_of(value.begin(), value.end(),
                                    [](unsigned char c) { return std::isdigit(c); }))
    fail(400, "bad_request", name + " must be a non-negative integer");
  try {
    return static_cast<std::size_t>(std::stoull(value));
  } catch (const std::exception&) {
    fail(400, "bad_request", name + " is out of range");
  }
}

std::optional<std::string> param(const ApiRequest& request, const std::string& name) {
  auto it = request.query.find(name);
  if (it == request.query.end() || it->second.empty()) return std::nullopt;
  return it->second;
}

std::vector<std::string> split_path(std::string_view path) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (start <= path.size()) {
    auto end = path.find('/', start);
    if (end == std::string_view::npos) end = path.size();
    if (end > start) parts.emplace_back(path.substr(start, end - start));
    start = end + 1;
  }
  return parts;
}

std::string checked_user(const std::string& id) {
  if (!recommender::valid_user_id(id)) fail(400, "bad_request", "invalid user id: " + id);
  return id;
}

json profile_json(const recommender::LearnerProfile& p, const classifier::DifficultyScale& scale) {
  const auto nearest = static_cast<std::size_t>(std::clamp(
      std::lround(p.level_estimate), 0L, static_cast<long>(scale.size()) - 1));
  return {{"user_id", p.user_id},
          {"interests", p.interests},
          {"non_interests", p.non_interests},
          {"level_estimate", p.level_estimate},
          {"level_label", scale.label(nearest)},
          {"seen_count", p.seen_item_ids.size()},
          {"feedback_count", p.feedback_log.size()}};
}

}  // namespace

std::optional<std::string> ApiRequest::header(std::string_view name) const {
  const auto wanted = lower_ascii(name);
  for (const auto& [k, v] : headers)
    if (lower_ascii(k) == wanted) return v;
  return std::nullopt;
}

json ApiResponse::json() const { return nlohmann::json::parse(body); }

Translation StubTranslator::translate(const std::string& text, const std::string& source_lang,
                                      const std::string& target_lang) {
  std::u32string cps;
  for (const auto& cp : utf8::decode(text)) cps.push_back(cp.value);
  std::reverse(cps.begin(), cps.end());
  Translation t;
  t.translation = "[" + target_lang + "] " + utf8::encode(cps);
  t.pronunciation_url = "stub://tts/" + source_lang + "/" + std::to_string(text.size());
  return t;
}

HttpTranslator::HttpTranslator(std::string endpoint, std::shared_ptr<http::Transport> transport)
    : endpoint_(std::move(endpoint)),
      transport_(transport ? std::move(transport) : http::make_transport()) {}

Translation HttpTranslator::translate(const std::string& text, const std::string& source_lang,
                                      const std::string& target_lang) {
  http::Request req;
  req.method = "POST";
  req.url = endpoint_;
  req.body = json{{"text", text}, {"source_lang", source_lang}, {"target_lang", target_lang}}.dump();
  const auto resp = transport_->send(req);
  if (!http::ok(resp)) {
    throw Error(ErrorCode::provider_unavailable,
                "translator returned " + std::to_string(resp.status) +
                    (resp.error.empty() ? "" : ": " + resp.error));
  }
  const json body = json::parse(resp.body, nullptr, false);
  if (body.is_discarded() || !body.is_object() || !body.contains("translation") ||
      !body.at("translation").is_string()) {
    throw Error(ErrorCode::provider_contract_violation, "translator response lacks translation");
  }
  Translation t;
  t.translation = body.at("translation").get<std::string>();
  if (body.contains("pronunciation_url") && body.at("pronunciation_url").is_string())
    t.pronunciation_url = body.at("pronunciation_url").get<std::string>();
  return t;
}

json summary_json(const catalog::ContentItem& item) {
  json j = catalog::to_json(item);
  for (const char* field : {"body_text", "cues", "source_id", "guid"}) j.erase(field);
  return j;
}

Service::Service(catalog::Catalog& catalog, recommender::ProfileStore& profiles,
                 std::shared_ptr<Translator> translator, ServiceConfig config)
    : catalog_(catalog),
      profiles_(profiles),
      translator_(translator ? std::move(translator) : std::make_shared<StubTranslator>()),
      config_(std::move(config)) {
  config_.recommender.validate();
  if (config_.default_limit == 0 || config_.default_limit > config_.max_limit)
    throw Error(ErrorCode::invalid_argument, "default limit must be in [1, max_limit]");
}

ApiResponse Service::handle(const ApiRequest& request) const {
  const auto started = std::chrono::steady_clock::now();
  ApiResponse response;
  try {
    response = route(request);
  } catch (const ApiFailure& f) {
    response = error_response(f.status, f.code, f.message);
  } catch (const Error& e) {
    switch (e.code()) {
      case ErrorCode::not_found: response = error_response(404, "not_found", e.what()); break;
      case ErrorCode::conflict: response = error_response(409, "conflict", e.what()); break;
      case ErrorCode::invalid_argument:
        response = error_response(422, "invalid_argument", e.what());
        break;
      default: response = error_response(500, "internal", e.what()); break;
    }
  } catch (const std::exception& e) {
    response = error_response(500, "internal", e.what());
  }
  response.headers["X-Schema-Version"] = std::string(kSchemaVersion);
  const auto ms = std::chrono::duration_cast<std::chrono::microseconds>(
                      std::chrono::steady_clock::now() - started)
                      .count() /
                  1000.0;
  spdlog::info(R"({{"event":"request","method":"{}","path":{},"status":{},"duration_ms":{:.3f}}})",
               request.method, json(request.path).dump(), response.status, ms);
  return response;
}

ApiResponse Service::route(const ApiRequest& request) const {
  const auto parts = split_path(request.path);
  const std::string& m = request.method;

  if (parts.size() == 1 && parts[0] == "healthz" && m == "GET") return healthz();
  if (parts.empty() || parts[0] != "api") fail(404, "not_found", "no route for " + request.path);

  if (!config_.bearer_token.empty()) {
    const auto auth = request.header("Authorization");
    if (!auth || *auth != "Bearer " + config_.bearer_token)
      fail(401, "unauthorized", "missing or invalid bearer token");
  }

  if (parts.size() == 2 && parts[1] == "search" && m == "GET") return search(request);
  if (parts.size() == 2 && parts[1] == "translate" && m == "POST") return translate(request);
  if (parts.size() == 3 && parts[1] == "items" && m == "GET") return get_item(parts[2]);
  if (parts.size() >= 3 && parts[1] == "users") {
    const std::string user = checked_user(parts[2]);
    if (parts.size() == 3 && m == "GET") return get_user(user);
    if (parts.size() == 4 && parts[3] == "feed" && m == "GET") return feed(user, request);
    if (parts.size() == 4 && parts[3] == "interests" && m == "PUT")
      return put_interests(user, request);
    if (parts.size() == 4 && parts[3] == "feedback" && m == "POST")
      return post_feedback(user, request);
  }
  fail(404, "not_found", "no route for " + m + " " + request.path);
}

ApiResponse Service::healthz() const {
  return json_response(200, {{"status", "ok"}, {"items", catalog_.size()}});
}

ApiResponse Service::search(const ApiRequest& request) const {
  catalog::Query q;
  q.text = param(request, "q");
  if (auto topics = param(request, "topics")) {
    std::stringstream ss(*topics);
    std::string t;
    while (std::getline(ss, t, ',')) {
      auto norm = topics::normalize_topic(t);
      if (!norm.empty()) q.topics_any.insert(norm);
    }
  }
  const auto& scale = catalog_.scale();
  q.min_label = param(request, "min_level");
  q.max_label = param(request, "max_level");
  for (const auto& label : {q.min_label, q.max_label})
    if (label && !scale.contains(*label)) fail(422, "invalid_label", "unknown level label: " + *label);
  if (q.min_label && q.max_label && scale.index(*q.min_label) > scale.index(*q.max_label))
    fail(422, "invalid_range", "min_level is above max_level");
  if (auto kind = param(request, "kind")) {
    try {
      q.kind = catalog::parse_kind(*kind);
    } catch (const Error&) {
      fail(422, "invalid_kind", "unknown kind: " + *kind);
    }
  }
  q.language = param(request, "language");
  q.limit = config_.default_limit;
  if (auto limit = param(request, "limit")) q.limit = parse_count("limit", *limit);
  if (q.limit == 0 || q.limit > config_.max_limit)
    fail(422, "invalid_limit", "limit must be in [1, " + std::to_string(config_.max_limit) + "]");
  if (auto offset = param(request, "offset")) q.offset = parse_count("offset", *offset);

  json items = json::array();
  for (const auto& item : catalog_.search(q)) items.push_back(summary_json(item));
  return json_response(200, {{"items", items}, {"limit", q.limit}, {"offset", q.offset}});
}

ApiResponse Service::feed(const std::string& user, const ApiRequest& request) const {
  std::size_t limit = config_.default_limit;
  if (auto l = param(request, "limit")) limit = parse_count("limit", *l);
  if (limit == 0 || limit > config_.max_limit)
    fail(422, "invalid_limit", "limit must be in [1, " + std::to_string(config_.max_limit) + "]");
  const auto profile = profiles_.get(user);
  if (!profile) fail(404, "not_found", "unknown user: " + user);
  json items = json::array();
  for (const auto& item :
       recommender::recommend(*profile, catalog_, limit, clock(), config_.recommender))
    items.push_back(summary_json(item));
  return json_response(200, {{"items", items}});
}

ApiResponse Service::get_user(const std::string& user) const {
  const auto profile = profiles_.get(user);
  if (!profile) fail(404, "not_found", "unknown user: " + user);
  return json_response(200, profile_json(*profile, catalog_.scale()));
}

ApiResponse Service::put_interests(const std::string& user, const ApiRequest& request) const {
  const json body = parse_body(request);
  const auto interests = string_list(body, "interests");
  const auto non_interests = string_list(body, "non_interests");
  profiles_.update(
      user, [&](recommender::LearnerProfile& p) { recommender::set_interests(p, interests, non_interests); },
      /*create=*/true);
  ApiResponse r;
  r.status = 204;
  return r;
}

ApiResponse Service::post_feedback(const std::string& user, const ApiRequest& request) const {
  const json body = parse_body(request);
  const auto item_id = required_string(body, "item_id");
  const auto verdict_text = required_string(body, "verdict", 422);
  recommender::Verdict verdict;
  try {
    verdict = recommender::parse_verdict(verdict_text);
  } catch (const Error&) {
    fail(422, "invalid_verdict", "verdict must be too_easy, ok or too_hard");
  }
  if (!profiles_.exists(user)) fail(404, "not_found", "unknown user: " + user);
  const auto now = clock();
  const auto updated = profiles_.update(user, [&](recommender::LearnerProfile& p) {
    p = recommender::apply_feedback(std::move(p), item_id, verdict, catalog_, now,
                                    config_.recommender);
  });
  return json_response(200, {{"level_estimate", updated.level_estimate}});
}

ApiResponse Service::get_item(const std::string& id) const {
  const auto item = catalog_.get(id);
  if (!item) fail(404, "not_found", "unknown item: " + id);
  return json_response(200, catalog::to_json(*item));
}

ApiResponse Service::translate(const ApiRequest& request) const {
  const json body = parse_body(request);
  const auto text = required_string(body, "text", 422);
  const auto source = required_string(body, "source_lang", 422);
  const auto target = required_string(body, "target_lang", 422);
  const auto n = utf8::length(text);
  if (n == 0 || n > config_.max_translate_chars)
    fail(422, "text_length",
         "text must be 1 to " + std::to_string(config_.max_translate_chars) + " characters");
  Translation t;
  try {
    t = translator_->translate(text, source, target);
  } catch (const std::exception& e) {
    fail(502, "upstream_failed", e.what());
  }
  json out{{"translation", t.translation}};
  if (t.pronunciation_url) out["pronunciation_url"] = *t.pronunciation_url;
  return json_response(200, out);
}

struct HttpServer::Impl {
  explicit Impl(const Service& s) : service(s) {}
  const Service& service;
  httplib::Server server;
};

HttpServer::HttpServer(const Service& service, std::string host, int port)
    : impl_(std::make_unique<Impl>(service)), host_(std::move(host)), port_(port) {
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    ApiRequest request;
    request.method = req.method;
    request.path = req.path;
    for (const auto& [k, v] : req.params) request.query.emplace(k, v);
    for (const auto& [k, v] : req.headers) request.headers.emplace(k, v);
    request.body = req.body;
    const auto response = impl_->service.handle(request);
    res.status = response.status;
    for (const auto& [k, v] : response.headers) res.set_header(k, v);
    if (response.status != 204) res.set_content(response.body, response.content_type);
  };
  // SO_REUSEADDR only: the library default also sets SO_REUSEPORT, which
  // would let a second instance share the port instead of failing.
  impl_->server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
  });
  impl_->server.Get(".*", handler);
  impl_->server.Post(".*", handler);
  impl_->server.Put(".*", handler);
  impl_->server.Delete(".*", handler);
}

HttpServer::~HttpServer() { stop(); }

bool HttpServer::bind() {
  if (port_ == 0) {
    const int p = impl_->server.bind_to_any_port(host_);
    if (p < 0) return false;
    port_ = p;
    return true;
  }
  return impl_->server.bind_to_port(host_, port_);
}

void HttpServer::serve() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

ServeSettings parse_serve_settings(std::string_view text, const fs::path& base_dir) {
  const json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw Error(ErrorCode::format, "serve config must be a JSON object");
  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  ServeSettings s;
  try {
    s.host = j.value("host", s.host);
    s.port = j.value("port", s.port);
    if (!j.contains("data_dir") || !j.contains("model"))
      throw Error(ErrorCode::format, "serve config needs data_dir and model");
    s.data_dir = resolve(j.at("data_dir").get<std::string>());
    s.model_path = resolve(j.at("model").get<std::string>());
    if (j.contains("translator") && j.at("translator").contains("endpoint"))
      s.translator_endpoint = j.at("translator").at("endpoint").get<std::string>();
    s.initial_level = j.value("initial_level", s.initial_level);
    s.service.bearer_token = j.value("token", std::string());
    s.service.default_limit = j.value("default_limit", s.service.default_limit);
    s.service.max_limit = j.value("max_limit", s.service.max_limit);
    if (j.contains("recommender")) {
      const json& r = j.at("recommender");
      auto& c = s.service.recommender;
      c.w_topic = r.value("w_topic", c.w_topic);
      c.w_difficulty = r.value("w_difficulty", c.w_difficulty);
      c.w_freshness = r.value("w_freshness", c.w_freshness);
      c.stretch = r.value("stretch", c.stretch);
      c.alpha = r.value("alpha", c.alpha);
      c.half_life = std::chrono::hours(r.value("half_life_hours", c.half_life.count()));
      c.epsilon = r.value("epsilon", c.epsilon);
      c.seed = r.value("seed", c.seed);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::format, std::string("serve config: ") + e.what());
  }
  if (s.port < 0 || s.port > 65535) throw Error(ErrorCode::format, "serve config: port out of range");
  s.service.recommender.validate();
  return s;
}

ServeSettings load_serve_settings(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::not_found, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_serve_settings(ss.str(), path.parent_path());
}

}  // namespace graded::service
