#include "graded/embedding.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <mutex>
#include <nlohmann/json.hpp>
#include <thread>

#include "graded/error.hpp"
#include "graded/hashing.hpp"
#include "graded/textproc.hpp"
#include "graded/utf8.hpp"

namespace graded::embedding {
namespace {

using json = nlohmann::json;

void check_finite(const EmbeddingVector& v) {
  for (double x : v.values) {
    if (!std::isfinite(x)) {
      throw ProviderError(ErrorCode::provider_contract_violation,
                          "provider contract violation: non-finite value from '" +
                              v.provider_id + "'",
                          0);
    }
  }
}

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isspace(c) != 0;
  });
}

std::string sanitize_component(const std::string& s) {
  std::string out;
  for (char c : s) {
    const bool safe = std::isalnum(static_cast<unsigned char>(c)) || c == '-' ||
                      c == '_' || c == '.';
    out.push_back(safe ? c : '_');
  }
  return out.empty() ? std::string("_") : out;
}

}  // namespace

void ProviderConfig::validate() const {
  if (dim == 0) throw Error(ErrorCode::invalid_argument, "provider dim must be > 0");
  if (batch_size == 0) {
    throw Error(ErrorCode::invalid_argument, "provider batch_size must be >= 1");
  }
  if (provider_id.empty()) {
    throw Error(ErrorCode::invalid_argument, "provider_id must be non-empty");
  }
  if (is_local() && dim < 8) {
    throw Error(ErrorCode::invalid_argument, "local-hash dim must be >= 8");
  }
}

EmbeddingVector hash_embed(std::string_view text, std::size_t dim,
                           std::uint64_t seed, std::string provider_id) {
  if (dim < 8) throw Error(ErrorCode::invalid_argument, "hash_embed dim must be >= 8");
  EmbeddingVector out{std::vector<double>(dim, 0.0), std::move(provider_id)};

  // lowercase, collapse whitespace, pad with one space on each side
  std::u32string norm{U' '};
  for (const auto& cp : utf8::decode(text)) {
    if (utf8::is_space(cp.value)) {
      if (norm.back() != U' ') norm.push_back(U' ');
    } else {
      norm.push_back(utf8::to_lower(cp.value));
    }
  }
  if (norm.back() != U' ') norm.push_back(U' ');

  const std::uint64_t basis = 0xcbf29ce484222325ULL ^ splitmix64(seed);
  if (norm.size() > 2) {
    for (std::size_t n = 3; n <= 5; ++n) {
      if (norm.size() < n) break;
      for (std::size_t i = 0; i + n <= norm.size(); ++i) {
        const std::string gram = utf8::encode(norm.substr(i, n));
        const std::uint64_t h = splitmix64(fnv1a64(gram, basis));
        const double sign = (h & 1u) != 0 ? 1.0 : -1.0;
        out.values[(h >> 1) % dim] += sign;
      }
    }
  }
  double norm2 = 0.0;
  for (double x : out.values) norm2 += x * x;
  if (norm2 == 0.0) {
    out.values[0] = 1.0;
    return out;
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (double& x : out.values) x *= inv;
  return out;
}

std::string truncate_words(std::string_view text, std::size_t max_words) {
  std::size_t seen = 0;
  for (const auto& token : textproc::tokenize(text)) {
    if (!token.is_word) continue;
    if (seen == max_words) return std::string(text.substr(0, token.offset));
    ++seen;
  }
  return std::string(text);
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorCode::embedding_contract, "embedding contract: dim mismatch");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

LocalHashProvider::LocalHashProvider(ProviderConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
}

std::vector<EmbeddingVector> LocalHashProvider::embed_batch(
    std::span<const std::string> texts) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    out.push_back(hash_embed(t, cfg_.dim, cfg_.seed, cfg_.provider_id));
  }
  return out;
}

RemoteProvider::RemoteProvider(ProviderConfig cfg,
                               std::shared_ptr<http::Transport> transport)
    : cfg_(std::move(cfg)),
      transport_(std::move(transport)),
      in_flight_(static_cast<std::ptrdiff_t>(
          std::clamp<std::size_t>(cfg_.max_in_flight, 1, 64))) {
  cfg_.validate();
  if (!transport_) transport_ = http::make_transport();
}

std::vector<EmbeddingVector> RemoteProvider::embed_batch(
    std::span<const std::string> texts) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (std::size_t i = 0; i < texts.size(); i += cfg_.batch_size) {
    const std::size_t n = std::min(cfg_.batch_size, texts.size() - i);
    auto part = send_chunk(texts.subspan(i, n));
    std::move(part.begin(), part.end(), std::back_inserter(out));
  }
  return out;
}

std::vector<EmbeddingVector> RemoteProvider::send_chunk(
    std::span<const std::string> texts) {
  http::Request request;
  request.method = "POST";
  request.url = cfg_.endpoint;
  request.timeout = cfg_.timeout;
  request.body =
      json{{"model", cfg_.model}, {"input", std::vector<std::string>(texts.begin(), texts.end())}}
          .dump();
  if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key) {
    request.headers.emplace_back("Authorization", std::string("Bearer ") + key);
  }

  http::Response response;
  auto backoff = cfg_.retry_backoff;
  for (std::size_t attempt = 0;; ++attempt) {
    {
      in_flight_.acquire();
      struct Release {
        std::counting_semaphore<64>& s;
        ~Release() { s.release(); }
      } release{in_flight_};
      response = transport_->send(request);
    }
    if (http::ok(response)) break;
    const bool retriable = response.status == 0 || response.status == 429 ||
                           response.status >= 500;
    if (!retriable || attempt >= cfg_.retry_limit) {
      throw ProviderError(
          ErrorCode::provider_unavailable,
          "provider unavailable: '" + cfg_.provider_id + "' status " +
              std::to_string(response.status) +
              (response.error.empty() ? "" : " (" + response.error + ")"),
          response.status);
    }
    spdlog::warn("embedding provider {} attempt {} failed with status {}",
                 cfg_.provider_id, attempt + 1, response.status);
    if (backoff.count() > 0) std::this_thread::sleep_for(backoff);
    backoff *= 2;
  }

  const auto violation = [&](const std::string& what) {
    return ProviderError(ErrorCode::provider_contract_violation,
                         "provider contract violation: " + what, response.status);
  };
  json body;
  try {
    body = json::parse(response.body);
  } catch (const json::exception&) {
    throw violation("response is not JSON");
  }
  if (!body.contains("data") || !body["data"].is_array()) {
    throw violation("missing data array");
  }
  const auto& data = body["data"];
  if (data.size() != texts.size()) {
    throw violation("expected " + std::to_string(texts.size()) + " embeddings, got " +
                    std::to_string(data.size()));
  }
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& entry : data) {
    if (!entry.contains("embedding") || !entry["embedding"].is_array()) {
      throw violation("entry without embedding");
    }
    const auto& values = entry["embedding"];
    if (values.size() != cfg_.dim) {
      throw violation("dimension " + std::to_string(values.size()) +
                      ", expected " + std::to_string(cfg_.dim));
    }
    EmbeddingVector v{{}, cfg_.provider_id};
    v.values.reserve(cfg_.dim);
    for (const auto& x : values) {
      if (!x.is_number()) throw violation("non-numeric embedding value");
      v.values.push_back(x.get<double>());
    }
    check_finite(v);
    out.push_back(std::move(v));
  }
  return out;
}

EmbeddingCache::EmbeddingCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path EmbeddingCache::path_for(const std::string& provider_id,
                                               std::string_view text) const {
  return dir_ / sanitize_component(provider_id) / (sha256_hex(text) + ".vec");
}

std::optional<EmbeddingVector> EmbeddingCache::get(const std::string& provider_id,
                                                   std::string_view text) const {
  const auto path = path_for(provider_id, text);
  std::shared_lock lock(mutex_);
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  unsigned char header[4];
  if (!in.read(reinterpret_cast<char*>(header), 4)) return std::nullopt;
  const std::uint32_t dim = header[0] | (header[1] << 8) | (header[2] << 16) |
                            (static_cast<std::uint32_t>(header[3]) << 24);
  EmbeddingVector v{std::vector<double>(dim), provider_id};
  for (std::uint32_t i = 0; i < dim; ++i) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) return std::nullopt;
    const std::uint32_t bits = b[0] | (b[1] << 8) | (b[2] << 16) |
                               (static_cast<std::uint32_t>(b[3]) << 24);
    v.values[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
  return v;
}

void EmbeddingCache::put(const std::string& provider_id, std::string_view text,
                         const EmbeddingVector& v) {
  const auto path = path_for(provider_id, text);
  std::string bytes;
  bytes.reserve(4 + 4 * v.dim());
  const auto push32 = [&](std::uint32_t x) {
    for (int k = 0; k < 4; ++k) bytes.push_back(static_cast<char>((x >> (8 * k)) & 0xFF));
  };
  push32(static_cast<std::uint32_t>(v.dim()));
  for (double x : v.values) push32(std::bit_cast<std::uint32_t>(static_cast<float>(x)));

  std::unique_lock lock(mutex_);
  std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::storage, "cannot write cache file " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

CachedProvider::CachedProvider(std::shared_ptr<EmbeddingProvider> inner,
                               std::shared_ptr<EmbeddingCache> cache)
    : inner_(std::move(inner)), cache_(std::move(cache)) {}

std::vector<EmbeddingVector> CachedProvider::embed_batch(
    std::span<const std::string> texts) {
  std::vector<std::optional<EmbeddingVector>> found(texts.size());
  std::vector<std::string> missing;
  std::vector<std::size_t> missing_at;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    found[i] = cache_->get(inner_->id(), texts[i]);
    if (found[i] && found[i]->dim() != inner_->dim()) found[i].reset();
    if (!found[i]) {
      missing.push_back(texts[i]);
      missing_at.push_back(i);
    }
  }
  if (!missing.empty()) {
    auto fresh = inner_->embed_batch(missing);
    for (std::size_t k = 0; k < fresh.size(); ++k) {
      cache_->put(inner_->id(), missing[k], fresh[k]);
      found[missing_at[k]] = std::move(fresh[k]);
    }
  }
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (auto& v : found) out.push_back(std::move(*v));
  return out;
}

std::shared_ptr<EmbeddingProvider> make_provider(
    const ProviderConfig& cfg, std::shared_ptr<http::Transport> transport) {
  cfg.validate();
  if (cfg.is_local()) return std::make_shared<LocalHashProvider>(cfg);
  std::shared_ptr<EmbeddingProvider> remote =
      std::make_shared<RemoteProvider>(cfg, std::move(transport));
  if (cfg.cache_dir) {
    return std::make_shared<CachedProvider>(
        remote, std::make_shared<EmbeddingCache>(*cfg.cache_dir));
  }
  return remote;
}

std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts,
                                         EmbeddingProvider& provider,
                                         std::size_t max_words) {
  if (texts.empty()) {
    throw Error(ErrorCode::invalid_argument, "embed_batch needs at least one text");
  }
  std::vector<std::string> prepared;
  prepared.reserve(texts.size());
  for (const auto& t : texts) {
    if (is_blank(t)) throw Error(ErrorCode::invalid_argument, "embed_batch got a blank text");
    prepared.push_back(truncate_words(t, max_words));
  }
  auto out = provider.embed_batch(prepared);
  if (out.size() != texts.size()) {
    throw ProviderError(ErrorCode::provider_contract_violation,
                        "provider contract violation: wrong number of vectors", 0);
  }
  for (const auto& v : out) {
    if (v.dim() != provider.dim()) {
      throw ProviderError(ErrorCode::provider_contract_violation,
                          "provider contract violation: wrong dimension", 0);
    }
    check_finite(v);
  }
  return out;
}

std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts,
                                         const ProviderConfig& cfg) {
  auto provider = make_provider(cfg);
  return embed_batch(texts, *provider, cfg.max_words);
}

}  // namespace graded::embedding
