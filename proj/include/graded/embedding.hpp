#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <semaphore>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "graded/http.hpp"

namespace graded::embedding {

inline constexpr std::string_view kLocalHashEndpoint = "local-hash";

struct EmbeddingVector {
  std::vector<double> values;
  std::string provider_id;

  std::size_t dim() const noexcept { return values.size(); }
};

struct ProviderConfig {
  std::string provider_id = "local-hash";
  std::string endpoint = std::string(kLocalHashEndpoint);  // or an http(s) URL
  std::string model;  // remote model name sent in the request
  std::size_t dim = 256;
  std::size_t batch_size = 32;
  std::chrono::milliseconds timeout{30000};
  std::size_t retry_limit = 3;
  std::chrono::milliseconds retry_backoff{200};  // doubled per retry
  std::size_t max_in_flight = 4;
  std::uint64_t seed = 42;         // local-hash only
  std::size_t max_words = 2000;    // documents are cut to their first N words
  std::string api_key_env = "GRADED_EMBEDDING_API_KEY";
  std::optional<std::filesystem::path> cache_dir;

  bool is_local() const { return endpoint == kLocalHashEndpoint; }
  void validate() const;
};

// Signed feature hashing of character 3/4/5-grams of the lowercased,
// whitespace-collapsed text, L2-normalized. Empty text yields e_0.
EmbeddingVector hash_embed(std::string_view text, std::size_t dim,
                           std::uint64_t seed,
                           std::string provider_id = "local-hash");

// Keeps the first max_words word tokens (and everything between them).
std::string truncate_words(std::string_view text, std::size_t max_words);

double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual const std::string& id() const = 0;
  virtual std::size_t dim() const = 0;
  // One vector per input, same order.
  virtual std::vector<EmbeddingVector> embed_batch(
      std::span<const std::string> texts) = 0;
};

class LocalHashProvider final : public EmbeddingProvider {
 public:
  explicit LocalHashProvider(ProviderConfig cfg);
  const std::string& id() const override { return cfg_.provider_id; }
  std::size_t dim() const override { return cfg_.dim; }
  std::vector<EmbeddingVector> embed_batch(
      std::span<const std::string> texts) override;

 private:
  ProviderConfig cfg_;
};

// Wire contract: POST {model, input:[string]} -> {data:[{embedding:[number]}]}
class RemoteProvider final : public EmbeddingProvider {
 public:
  RemoteProvider(ProviderConfig cfg, std::shared_ptr<http::Transport> transport);
  const std::string& id() const override { return cfg_.provider_id; }
  std::size_t dim() const override { return cfg_.dim; }
  std::vector<EmbeddingVector> embed_batch(
      std::span<const std::string> texts) override;

 private:
  std::vector<EmbeddingVector> send_chunk(std::span<const std::string> texts);

  ProviderConfig cfg_;
  std::shared_ptr<http::Transport> transport_;
  std::counting_semaphore<64> in_flight_;
};

// Content-addressed vector files: <dir>/<provider>/<sha256(text)>.vec holding
// a little-endian uint32 dim followed by dim float32 values.
class EmbeddingCache {
 public:
  explicit EmbeddingCache(std::filesystem::path dir);

  std::optional<EmbeddingVector> get(const std::string& provider_id,
                                     std::string_view text) const;
  void put(const std::string& provider_id, std::string_view text,
           const EmbeddingVector& v);

  std::filesystem::path path_for(const std::string& provider_id,
                                 std::string_view text) const;

 private:
  std::filesystem::path dir_;
  mutable std::shared_mutex mutex_;
};

class CachedProvider final : public EmbeddingProvider {
 public:
  CachedProvider(std::shared_ptr<EmbeddingProvider> inner,
                 std::shared_ptr<EmbeddingCache> cache);
  const std::string& id() const override { return inner_->id(); }
  std::size_t dim() const override { return inner_->dim(); }
  std::vector<EmbeddingVector> embed_batch(
      std::span<const std::string> texts) override;

 private:
  std::shared_ptr<EmbeddingProvider> inner_;
  std::shared_ptr<EmbeddingCache> cache_;
};

// Local configs get a LocalHashProvider. Remote configs get a RemoteProvider
// over `transport` (a default HTTP transport when null), wrapped in a cache
// when cfg.cache_dir is set.
std::shared_ptr<EmbeddingProvider> make_provider(
    const ProviderConfig& cfg,
    std::shared_ptr<http::Transport> transport = nullptr);

// Validates the inputs (non-empty list, no blank text), truncates to
// cfg.max_words and embeds through make_provider(cfg).
std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts,
                                         const ProviderConfig& cfg);

// Same, through an existing provider.
std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts,
                                         EmbeddingProvider& provider,
                                         std::size_t max_words = 2000);

}  // namespace graded::embedding
