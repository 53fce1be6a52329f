#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "arr/http.hpp"

namespace arr {

/// Fixed-dimension vector of finite floats.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  // Throws kInvalidArgument on an empty or non-finite input.
  explicit EmbeddingVector(std::vector<float> values);

  static EmbeddingVector zeros(std::size_t dim);

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const float> values() const noexcept { return values_; }
  float operator[](std::size_t i) const { return values_[i]; }

  double norm() const;

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

 private:
  std::vector<float> values_;
};

struct EmbedderConfig {
  std::size_t dim = 64;
  bool normalize = true;
  // Remote backend only.
  std::optional<std::string> endpoint;
  std::string model = "multilingual-e5-large";
  std::size_t batch_size = 32;
  std::size_t max_concurrency = 4;
  http::RetryPolicy retry;
  std::chrono::milliseconds timeout{30'000};

  void validate() const;
};

class Embedder {
 public:
  virtual ~Embedder() = default;

  virtual std::size_t dim() const = 0;
  virtual EmbeddingVector embed(std::string_view text) const = 0;
  // Default implementation embeds one text at a time.
  virtual std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) const;
  // Identifies backend and settings; recorded alongside banks.
  virtual std::string tag() const = 0;
};

std::uint64_t fnv1a64(std::string_view bytes);

/// Character-bigram feature hashing. Each overlapping pair of Unicode scalars
/// is hashed (64-bit FNV-1a over its UTF-8 bytes) into bucket hash % dim with
/// sign +1 when bit 63 is clear, -1 otherwise. Returns raw counts.
std::vector<float> hash_features(std::string_view text, std::size_t dim);

/// hash_features followed by L2 normalization (skipped for the zero vector).
EmbeddingVector hash_embed(std::string_view text, std::size_t dim);

class HashEmbedder final : public Embedder {
 public:
  explicit HashEmbedder(std::size_t dim, bool normalize = true);

  std::size_t dim() const override { return dim_; }
  EmbeddingVector embed(std::string_view text) const override;
  std::string tag() const override;

 private:
  std::size_t dim_;
  bool normalize_;
};

/// Client for a remote embedding service.
///
/// Request:  POST {endpoint}/embeddings  {"input": [...], "model": "..."}
/// Response: {"data": [{"index": i, "embedding": [...]}, ...]}
///
/// Inputs are split into batch_size chunks; up to max_concurrency chunks are
/// in flight at once and results are reassembled by index.
class RemoteEmbedder final : public Embedder {
 public:
  RemoteEmbedder(EmbedderConfig config, std::shared_ptr<const http::Transport> transport);

  std::size_t dim() const override { return config_.dim; }
  EmbeddingVector embed(std::string_view text) const override;
  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) const override;
  std::string tag() const override;

  void set_sleeper(http::Sleeper sleeper) { sleeper_ = std::move(sleeper); }

 private:
  std::vector<EmbeddingVector> embed_chunk(std::span<const std::string> texts) const;

  EmbedderConfig config_;
  std::shared_ptr<const http::Transport> transport_;
  http::Sleeper sleeper_ = http::default_sleep;
};

std::vector<EmbeddingVector> remote_embed(std::span<const std::string> texts,
                                          const EmbedderConfig& config);

/// Hash backend unless config.endpoint is set.
std::unique_ptr<Embedder> make_embedder(const EmbedderConfig& config,
                                        std::optional<std::string> api_key = std::nullopt);

EmbeddingVector embed(std::string_view text, const EmbedderConfig& config);

void l2_normalize(std::vector<float>& values);

}  // namespace arr
