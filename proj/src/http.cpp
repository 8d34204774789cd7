#include "graded/http.hpp"

#include <httplib.h>

#include <regex>

#include "graded/error.hpp"

namespace graded::http {

UrlParts parse_url(const std::string& url) {
  static const std::regex kUrl(R"(^([a-zA-Z][a-zA-Z0-9+.-]*)://([^/:?#]*)(?::(\d+))?([^#]*))");
  std::smatch m;
  if (!std::regex_search(url, m, kUrl)) {
    throw Error(ErrorCode::invalid_argument, "malformed url: " + url);
  }
  UrlParts parts;
  parts.scheme = m[1].str();
  for (auto& c : parts.scheme) c = static_cast<char>(std::tolower(c));
  parts.host = m[2].str();
  parts.path = m[4].str();
  if (parts.path.empty()) parts.path = "/";
  if (m[3].matched) {
    parts.port = std::stoi(m[3].str());
  } else if (parts.scheme == "https") {
    parts.port = 443;
  } else if (parts.scheme == "http") {
    parts.port = 80;
  }
  if (parts.scheme != "file" && parts.host.empty()) {
    throw Error(ErrorCode::invalid_argument, "malformed url: " + url);
  }
  return parts;
}

namespace {

class HttplibTransport final : public Transport {
 public:
  explicit HttplibTransport(std::string user_agent)
      : user_agent_(std::move(user_agent)) {}

  Response send(const Request& request) override {
    Response out;
    UrlParts parts;
    try {
      parts = parse_url(request.url);
    } catch (const Error& e) {
      out.error = e.what();
      return out;
    }
    if (parts.scheme != "http" && parts.scheme != "https") {
      out.error = "unsupported scheme: " + parts.scheme;
      return out;
    }
    const std::string origin =
        parts.scheme + "://" + parts.host + ":" + std::to_string(parts.port);
    httplib::Client client(origin);
    const auto seconds =
        std::chrono::duration_cast<std::chrono::seconds>(request.timeout);
    const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(
        request.timeout - seconds);
    client.set_connection_timeout(seconds.count(), micros.count());
    client.set_read_timeout(seconds.count(), micros.count());
    client.set_write_timeout(seconds.count(), micros.count());
    client.set_follow_location(true);
    httplib::Headers headers{{"User-Agent", user_agent_}};
    for (const auto& [k, v] : request.headers) headers.emplace(k, v);

    httplib::Result result = request.method == "POST"
                                 ? client.Post(parts.path, headers, request.body,
                                               request.content_type)
                                 : client.Get(parts.path, headers);
    if (!result) {
      out.error = httplib::to_string(result.error());
      return out;
    }
    out.status = result->status;
    out.body = result->body;
    out.content_type = result->get_header_value("Content-Type");
    return out;
  }

 private:
  std::string user_agent_;
};

}  // namespace

std::shared_ptr<Transport> make_transport(std::string user_agent) {
  return std::make_shared<HttplibTransport>(std::move(user_agent));
}

}  // namespace graded::http
