#include <doctest.h>

#include <httplib.h>

#include <cmath>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <set>
#include <thread>

#include "graded/embedding.hpp"
#include "graded/error.hpp"
#include "graded/utf8.hpp"
#include "stub_transport.hpp"

using namespace graded;
using namespace graded::embedding;
using graded::testing::json_response;
using graded::testing::StubTransport;
using nlohmann::json;

namespace {

double l2(const EmbeddingVector& v) {
  double s = 0.0;
  for (double x : v.values) s += x * x;
  return std::sqrt(s);
}

std::set<std::u32string> ngrams(const std::string& word) {
  std::u32string padded = U" ";
  for (const auto& cp : utf8::decode(word)) padded.push_back(cp.value);
  padded.push_back(U' ');
  std::set<std::u32string> out;
  for (std::size_t n = 3; n <= 5; ++n) {
    for (std::size_t i = 0; i + n <= padded.size(); ++i) out.insert(padded.substr(i, n));
  }
  return out;
}

std::size_t shared(const std::string& a, const std::string& b) {
  const auto x = ngrams(a), y = ngrams(b);
  std::size_t n = 0;
  for (const auto& g : x) n += y.count(g);
  return n;
}

ProviderConfig remote_config(std::size_t dim) {
  ProviderConfig cfg;
  cfg.provider_id = "remote-test";
  cfg.endpoint = "http://embeddings.invalid/v1/embeddings";
  cfg.model = "text-embed";
  cfg.dim = dim;
  cfg.batch_size = 2;
  cfg.retry_limit = 2;
  cfg.retry_backoff = std::chrono::milliseconds(0);
  return cfg;
}

http::Response echo_embeddings(const http::Request& r, std::size_t dim) {
  const auto body = json::parse(r.body);
  json data = json::array();
  for (const auto& text : body["input"]) {
    std::vector<double> v(dim, 0.0);
    v[0] = static_cast<double>(text.get<std::string>().size());
    data.push_back({{"embedding", v}});
  }
  return json_response(200, json{{"data", data}}.dump());
}

}  // namespace

TEST_SUITE("embedding") {
  TEST_CASE("local-hash shape and determinism") {
    ProviderConfig cfg;
    cfg.dim = 256;
    const std::vector<std::string> texts{"a", "b"};
    const auto out = embed_batch(texts, cfg);
    REQUIRE(out.size() == 2);
    for (const auto& v : out) {
      CHECK(v.dim() == 256);
      CHECK(std::abs(l2(v) - 1.0) < 1e-9);
      CHECK(v.provider_id == "local-hash");
    }
    CHECK(hash_embed("chat", 256, 42).values == hash_embed("chat", 256, 42).values);
    CHECK(hash_embed("chat", 256, 42).values != hash_embed("chat", 256, 43).values);
  }

  TEST_CASE("similar words are closer than unrelated ones") {
    // the n-gram oracle confirms the expected ordering first
    CHECK(shared("chatons", "chaton") > shared("chatons", "xylophone"));
    const auto a = hash_embed("chatons", 256, 42);
    const auto b = hash_embed("chaton", 256, 42);
    const auto c = hash_embed("xylophone", 256, 42);
    CHECK(cosine(a, b) > cosine(a, c));
  }

  TEST_CASE("zero guard and argument checks") {
    const auto v = hash_embed("", 64, 1);
    CHECK(v.values[0] == 1.0);
    CHECK(std::count(v.values.begin(), v.values.end(), 0.0) == 63);
    CHECK(hash_embed("   ", 64, 1).values == v.values);
    CHECK_THROWS_AS(hash_embed("x", 4, 1), Error);
    ProviderConfig cfg;
    CHECK_THROWS_AS(embed_batch(std::vector<std::string>{}, cfg), Error);
    CHECK_THROWS_AS(embed_batch(std::vector<std::string>{"ok", "  "}, cfg), Error);
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
  }

  TEST_CASE("hash embeddings are finite unit vectors for arbitrary input") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 200; ++trial) {
      std::string s;
      const int n = static_cast<int>(rng() % 40);
      for (int i = 0; i < n; ++i) s.push_back(static_cast<char>(rng() % 256));
      const auto v = hash_embed(s, 32, rng());
      for (double x : v.values) CHECK(std::isfinite(x));
      CHECK(std::abs(l2(v) - 1.0) < 1e-9);
    }
  }

  TEST_CASE("truncate_words keeps the first N words") {
    CHECK(truncate_words("un deux trois quatre", 2) == "un deux ");
    CHECK(truncate_words("un deux", 5) == "un deux");
    CHECK(truncate_words("l'école est là", 2) == "l'école ");
  }

  TEST_CASE("remote provider wire contract and order preservation") {
    auto stub = std::make_shared<StubTransport>(
        [](const http::Request& r) { return echo_embeddings(r, 4); });
    RemoteProvider provider(remote_config(4), stub);
    const std::vector<std::string> texts{"a", "bb", "ccc", "dddd", "eeeee"};
    const auto out = provider.embed_batch(texts);
    REQUIRE(out.size() == 5);
    for (std::size_t i = 0; i < texts.size(); ++i) {
      CHECK(out[i].values[0] == static_cast<double>(texts[i].size()));
      CHECK(out[i].provider_id == "remote-test");
    }
    REQUIRE(stub->requests.size() == 3);  // batch_size 2
    const auto first = json::parse(stub->requests[0].body);
    CHECK(first["model"] == "text-embed");
    CHECK(first["input"] == json::array({"a", "bb"}));
    CHECK(stub->requests[0].method == "POST");
  }

  TEST_CASE("remote provider rejects a wrong dimension") {
    auto stub = std::make_shared<StubTransport>(
        [](const http::Request& r) { return echo_embeddings(r, 3); });
    RemoteProvider provider(remote_config(4), stub);
    try {
      provider.embed_batch(std::vector<std::string>{"x"});
      FAIL("expected contract violation");
    } catch (const ProviderError& e) {
      CHECK(e.code() == ErrorCode::provider_contract_violation);
      CHECK(std::string(e.what()).rfind("provider contract violation", 0) == 0);
    }
  }

  TEST_CASE("remote provider rejects NaN and malformed responses") {
    auto nan_stub = std::make_shared<StubTransport>([](const http::Request&) {
      return json_response(200, R"({"data":[{"embedding":[1, 2, "x", 4]}]})");
    });
    RemoteProvider p1(remote_config(4), nan_stub);
    CHECK_THROWS_AS(p1.embed_batch(std::vector<std::string>{"x"}), ProviderError);
    auto junk = std::make_shared<StubTransport>(
        [](const http::Request&) { return json_response(200, "<html>"); });
    RemoteProvider p2(remote_config(4), junk);
    CHECK_THROWS_AS(p2.embed_batch(std::vector<std::string>{"x"}), ProviderError);
  }

  TEST_CASE("remote failures retry then surface the status") {
    int calls = 0;
    auto stub = std::make_shared<StubTransport>([&](const http::Request&) {
      ++calls;
      return json_response(503, "{}");
    });
    RemoteProvider provider(remote_config(4), stub);
    try {
      provider.embed_batch(std::vector<std::string>{"x"});
      FAIL("expected provider unavailable");
    } catch (const ProviderError& e) {
      CHECK(e.code() == ErrorCode::provider_unavailable);
      CHECK(e.status() == 503);
      CHECK(std::string(e.what()).rfind("provider unavailable", 0) == 0);
    }
    CHECK(calls == 3);  // first attempt + retry_limit

    int flaky_calls = 0;
    auto flaky = std::make_shared<StubTransport>([&](const http::Request& r) {
      return ++flaky_calls == 1 ? json_response(0, "") : echo_embeddings(r, 4);
    });
    RemoteProvider recovering(remote_config(4), flaky);
    CHECK(recovering.embed_batch(std::vector<std::string>{"x"}).size() == 1);

    int rejected = 0;
    auto unauthorized = std::make_shared<StubTransport>([&](const http::Request&) {
      ++rejected;
      return json_response(401, "{}");
    });
    RemoteProvider no_retry(remote_config(4), unauthorized);
    CHECK_THROWS_AS(no_retry.embed_batch(std::vector<std::string>{"x"}), ProviderError);
    CHECK(rejected == 1);
  }

  TEST_CASE("api key from the environment becomes a bearer header") {
    auto stub = std::make_shared<StubTransport>(
        [](const http::Request& r) { return echo_embeddings(r, 4); });
    auto cfg = remote_config(4);
    cfg.api_key_env = "GRADED_TEST_EMBED_KEY";
    ::setenv("GRADED_TEST_EMBED_KEY", "sekrit", 1);
    RemoteProvider provider(cfg, stub);
    provider.embed_batch(std::vector<std::string>{"x"});
    ::unsetenv("GRADED_TEST_EMBED_KEY");
    REQUIRE(stub->requests.size() == 1);
    bool found = false;
    for (const auto& [k, v] : stub->requests[0].headers) {
      found |= k == "Authorization" && v == "Bearer sekrit";
    }
    CHECK(found);
  }

  TEST_CASE("cache files are content addressed and skip the network") {
    const auto dir = std::filesystem::temp_directory_path() / "graded_embed_cache_test";
    std::filesystem::remove_all(dir);
    auto cache = std::make_shared<EmbeddingCache>(dir);
    EmbeddingVector v{{0.5, -0.25, 1.0, 2.0}, "remote-test"};
    cache->put("remote-test", "bonjour", v);
    const auto path = cache->path_for("remote-test", "bonjour");
    REQUIRE(std::filesystem::exists(path));
    CHECK(std::filesystem::file_size(path) == 4 + 4 * 4);
    std::ifstream in(path, std::ios::binary);
    unsigned char header[4];
    in.read(reinterpret_cast<char*>(header), 4);
    CHECK(header[0] == 4);
    CHECK(header[1] == 0);
    const auto back = cache->get("remote-test", "bonjour");
    REQUIRE(back.has_value());
    CHECK(back->values == v.values);
    CHECK_FALSE(cache->get("remote-test", "au revoir").has_value());

    int calls = 0;
    auto stub = std::make_shared<StubTransport>([&](const http::Request& r) {
      ++calls;
      return echo_embeddings(r, 4);
    });
    CachedProvider cached(std::make_shared<RemoteProvider>(remote_config(4), stub), cache);
    const std::vector<std::string> texts{"bonjour", "salut"};
    const auto first = cached.embed_batch(texts);
    CHECK(first[0].values == v.values);
    CHECK(first[1].values[0] == 5.0);
    CHECK(calls == 1);
    cached.embed_batch(texts);
    CHECK(calls == 1);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("remote provider over a loopback HTTP server") {
    httplib::Server server;
    server.Post("/v1/embeddings", [](const httplib::Request& req, httplib::Response& res) {
      http::Request r;
      r.body = req.body;
      res.set_content(echo_embeddings(r, 4).body, "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    auto cfg = remote_config(4);
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/embeddings";
    const auto out = embed_batch(std::vector<std::string>{"abc", "de"}, cfg);
    server.stop();
    t.join();
    REQUIRE(out.size() == 2);
    CHECK(out[0].values[0] == 3.0);
    CHECK(out[1].values[0] == 2.0);
  }
}
