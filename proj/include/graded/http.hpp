#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace graded::http {

struct Request {
  std::string method = "GET";
  std::string url;
  std::vector<std::pair<std::string, std::string>> headers;
  std::string body;
  std::string content_type = "application/json";
  std::chrono::milliseconds timeout{30000};
};

struct Response {
  int status = 0;  // 0: no response (connection or timeout failure)
  std::string body;
  std::string content_type;
  std::string error;  // transport-level failure description
};

inline bool ok(const Response& r) { return r.status >= 200 && r.status < 300; }

// Blocking client transport. Implementations never throw for network
// failures; they report status 0 with an error string.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual Response send(const Request& request) = 0;
};

struct UrlParts {
  std::string scheme;  // "http", "https" or "file"
  std::string host;
  int port = 0;
  std::string path;  // includes query
};

// Throws Error(invalid_argument) on malformed URLs.
UrlParts parse_url(const std::string& url);

std::shared_ptr<Transport> make_transport(std::string user_agent = "graded/0.3");

}  // namespace graded::http
