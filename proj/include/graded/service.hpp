#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json_fwd.hpp>

#include "graded/catalog.hpp"
#include "graded/http.hpp"
#include "graded/recommender.hpp"

namespace graded::service {

// Sent as X-Schema-Version on every response.
inline constexpr std::string_view kSchemaVersion = "1";

struct ApiRequest {
  std::string method = "GET";
  std::string path;
  std::map<std::string, std::string> query;  // already percent-decoded
  std::map<std::string, std::string> headers;  // names matched case-insensitively
  std::string body;

  std::optional<std::string> header(std::string_view name) const;
};

struct ApiResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
  std::map<std::string, std::string> headers;

  nlohmann::json json() const;
};

struct Translation {
  std::string translation;
  std::optional<std::string> pronunciation_url;
};

class Translator {
 public:
  virtual ~Translator() = default;
  // Throws on upstream failure.
  virtual Translation translate(const std::string& text, const std::string& source_lang,
                                const std::string& target_lang) = 0;
};

// Deterministic offline translator: "[<target>] " followed by the text with
// its code points reversed.
class StubTranslator final : public Translator {
 public:
  Translation translate(const std::string& text, const std::string& source_lang,
                        const std::string& target_lang) override;
};

// POST {text, source_lang, target_lang} -> {translation, pronunciation_url?}
class HttpTranslator final : public Translator {
 public:
  HttpTranslator(std::string endpoint, std::shared_ptr<http::Transport> transport = {});
  Translation translate(const std::string& text, const std::string& source_lang,
                        const std::string& target_lang) override;

 private:
  std::string endpoint_;
  std::shared_ptr<http::Transport> transport_;
};

struct ServiceConfig {
  std::string bearer_token;  // empty: no authentication
  std::size_t default_limit = 20;
  std::size_t max_limit = 100;
  std::size_t max_translate_chars = 200;
  recommender::RecommenderConfig recommender;
};

// The JSON API over a catalog and a profile store. handle() is safe to call
// from many threads at once.
class Service {
 public:
  Service(catalog::Catalog& catalog, recommender::ProfileStore& profiles,
          std::shared_ptr<Translator> translator, ServiceConfig config = {});

  ApiResponse handle(const ApiRequest& request) const;

  // Injectable for tests; defaults to the system clock.
  std::function<timeutil::Timestamp()> clock = [] { return timeutil::now(); };

 private:
  ApiResponse route(const ApiRequest& request) const;
  ApiResponse search(const ApiRequest& request) const;
  ApiResponse feed(const std::string& user, const ApiRequest& request) const;
  ApiResponse get_user(const std::string& user) const;
  ApiResponse put_interests(const std::string& user, const ApiRequest& request) const;
  ApiResponse post_feedback(const std::string& user, const ApiRequest& request) const;
  ApiResponse get_item(const std::string& id) const;
  ApiResponse translate(const ApiRequest& request) const;
  ApiResponse healthz() const;

  catalog::Catalog& catalog_;
  recommender::ProfileStore& profiles_;
  std::shared_ptr<Translator> translator_;
  ServiceConfig config_;
};

// Compact listing form used by search and feed responses.
nlohmann::json summary_json(const catalog::ContentItem& item);

// Serves a Service over HTTP.
class HttpServer {
 public:
  HttpServer(const Service& service, std::string host, int port);
  ~HttpServer();

  // Returns false when the address cannot be bound (port in use).
  bool bind();
  // Blocks until stop() is called.
  void serve();
  void stop();
  int port() const noexcept { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::string host_;
  int port_;
};

// serve --config file.
struct ServeSettings {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path data_dir;
  std::filesystem::path model_path;  // supplies the difficulty scale
  std::optional<std::string> translator_endpoint;  // absent: stub translator
  double initial_level = -1.0;  // < 0: middle of the scale, rounded down
  ServiceConfig service;
};

ServeSettings parse_serve_settings(std::string_view text, const std::filesystem::path& base_dir);
ServeSettings load_serve_settings(const std::filesystem::path& path);

}  // namespace graded::service
