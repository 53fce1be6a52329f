#include "arr/embedder.hpp"

#include <algorithm>
#include <cmath>
#include <future>

#include <nlohmann/json.hpp>

#include "arr/error.hpp"
#include "arr/utf8.hpp"

namespace arr {

using json = nlohmann::json;

EmbeddingVector::EmbeddingVector(std::vector<float> values) : values_(std::move(values)) {
  if (values_.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "embedding must have dim >= 1");
  }
  for (float v : values_) {
    if (!std::isfinite(v)) {
      throw Error(ErrorKind::kInvalidArgument, "embedding contains a non-finite value");
    }
  }
}

EmbeddingVector EmbeddingVector::zeros(std::size_t dim) {
  return EmbeddingVector(std::vector<float>(dim, 0.0f));
}

double EmbeddingVector::norm() const {
  double sum = 0.0;
  for (float v : values_) sum += static_cast<double>(v) * v;
  return std::sqrt(sum);
}

void EmbedderConfig::validate() const {
  if (dim == 0) throw Error(ErrorKind::kConfig, "embedder dim must be >= 1");
  if (batch_size == 0) throw Error(ErrorKind::kConfig, "embedder batch_size must be >= 1");
  if (max_concurrency == 0) throw Error(ErrorKind::kConfig, "embedder max_concurrency must be >= 1");
}

std::vector<EmbeddingVector> Embedder::embed_batch(std::span<const std::string> texts) const {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed(t));
  return out;
}

void l2_normalize(std::vector<float>& values) {
  double sum = 0.0;
  for (float v : values) sum += static_cast<double>(v) * v;
  if (sum == 0.0) return;
  const double inv = 1.0 / std::sqrt(sum);
  for (float& v : values) v = static_cast<float>(v * inv);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t hash = 14695981039346656037ULL;
  for (char c : bytes) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 1099511628211ULL;
  }
  return hash;
}

std::vector<float> hash_features(std::string_view text, std::size_t dim) {
  if (dim == 0) throw Error(ErrorKind::kInvalidArgument, "hash embedding dim must be >= 1");
  std::vector<float> values(dim, 0.0f);
  const auto scalars = utf8::decode(text);
  for (std::size_t i = 0; i + 1 < scalars.size(); ++i) {
    const auto begin = scalars[i].offset;
    const auto end = scalars[i + 1].offset + scalars[i + 1].length;
    const std::uint64_t h = fnv1a64(text.substr(begin, end - begin));
    const float sign = (h >> 63) == 0 ? 1.0f : -1.0f;
    values[h % dim] += sign;
  }
  return values;
}

EmbeddingVector hash_embed(std::string_view text, std::size_t dim) {
  auto values = hash_features(text, dim);
  l2_normalize(values);
  return EmbeddingVector(std::move(values));
}

HashEmbedder::HashEmbedder(std::size_t dim, bool normalize) : dim_(dim), normalize_(normalize) {
  if (dim_ == 0) throw Error(ErrorKind::kConfig, "embedder dim must be >= 1");
}

EmbeddingVector HashEmbedder::embed(std::string_view text) const {
  auto values = hash_features(text, dim_);
  if (normalize_) l2_normalize(values);
  return EmbeddingVector(std::move(values));
}

std::string HashEmbedder::tag() const {
  return "hash-bigram-fnv1a:dim=" + std::to_string(dim_) + ":normalize=" + (normalize_ ? "1" : "0");
}

RemoteEmbedder::RemoteEmbedder(EmbedderConfig config, std::shared_ptr<const http::Transport> transport)
    : config_(std::move(config)), transport_(std::move(transport)) {
  config_.validate();
  if (!transport_) throw Error(ErrorKind::kConfig, "remote embedder requires a transport");
}

EmbeddingVector RemoteEmbedder::embed(std::string_view text) const {
  const std::string owned(text);
  auto out = embed_batch(std::span<const std::string>(&owned, 1));
  return std::move(out.front());
}

std::vector<EmbeddingVector> RemoteEmbedder::embed_chunk(std::span<const std::string> texts) const {
  const json request = {{"input", json(std::vector<std::string>(texts.begin(), texts.end()))},
                        {"model", config_.model}};
  const auto response = http::post_with_retry(*transport_, "/embeddings", request.dump(), config_.retry, sleeper_);

  json body;
  try {
    body = json::parse(response.body);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::kMalformedResponse, std::string("embedding response is not JSON: ") + e.what());
  }
  if (!body.is_object() || !body.contains("data") || !body["data"].is_array()) {
    throw Error(ErrorKind::kMalformedResponse, "embedding response lacks a \"data\" array");
  }
  const auto& data = body["data"];
  if (data.size() != texts.size()) {
    throw Error(ErrorKind::kCountMismatch, "embedding service returned " + std::to_string(data.size()) +
                                               " vectors for " + std::to_string(texts.size()) + " inputs");
  }

  std::vector<std::optional<EmbeddingVector>> slots(texts.size());
  for (const auto& item : data) {
    if (!item.is_object() || !item.contains("index") || !item["index"].is_number_integer() ||
        !item.contains("embedding") || !item["embedding"].is_array()) {
      throw Error(ErrorKind::kMalformedResponse, "embedding entry lacks \"index\" or \"embedding\"");
    }
    const auto index = item["index"].get<long long>();
    if (index < 0 || static_cast<std::size_t>(index) >= slots.size() || slots[index]) {
      throw Error(ErrorKind::kMalformedResponse, "embedding entry has invalid index " + std::to_string(index));
    }
    std::vector<float> values;
    try {
      values = item["embedding"].get<std::vector<float>>();
    } catch (const json::exception&) {
      throw Error(ErrorKind::kMalformedResponse, "embedding values must be numbers");
    }
    if (values.size() != config_.dim) {
      throw Error(ErrorKind::kDimensionMismatch, "embedding service returned dim " + std::to_string(values.size()) +
                                                     ", expected " + std::to_string(config_.dim));
    }
    if (std::any_of(values.begin(), values.end(), [](float v) { return !std::isfinite(v); })) {
      throw Error(ErrorKind::kMalformedResponse, "embedding contains a non-finite value");
    }
    if (config_.normalize) l2_normalize(values);
    slots[index] = EmbeddingVector(std::move(values));
  }

  std::vector<EmbeddingVector> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

std::vector<EmbeddingVector> RemoteEmbedder::embed_batch(std::span<const std::string> texts) const {
  std::vector<EmbeddingVector> out;
  if (texts.empty()) return out;
  out.reserve(texts.size());

  std::vector<std::span<const std::string>> chunks;
  for (std::size_t i = 0; i < texts.size(); i += config_.batch_size) {
    chunks.push_back(texts.subspan(i, std::min(config_.batch_size, texts.size() - i)));
  }

  for (std::size_t wave = 0; wave < chunks.size(); wave += config_.max_concurrency) {
    const std::size_t wave_end = std::min(chunks.size(), wave + config_.max_concurrency);
    if (wave_end - wave == 1) {
      auto part = embed_chunk(chunks[wave]);
      std::move(part.begin(), part.end(), std::back_inserter(out));
      continue;
    }
    std::vector<std::future<std::vector<EmbeddingVector>>> pending;
    for (std::size_t c = wave; c < wave_end; ++c) {
      pending.push_back(std::async(std::launch::async, [this, chunk = chunks[c]] { return embed_chunk(chunk); }));
    }
    // Futures are drained in chunk order so output order follows input order.
    for (auto& f : pending) {
      auto part = f.get();
      std::move(part.begin(), part.end(), std::back_inserter(out));
    }
  }
  return out;
}

std::string RemoteEmbedder::tag() const {
  return "remote:" + config_.model + ":dim=" + std::to_string(config_.dim) +
         ":normalize=" + (config_.normalize ? "1" : "0");
}

std::unique_ptr<Embedder> make_embedder(const EmbedderConfig& config, std::optional<std::string> api_key) {
  config.validate();
  if (!config.endpoint) {
    return std::make_unique<HashEmbedder>(config.dim, config.normalize);
  }
  std::shared_ptr<const http::Transport> transport =
      http::make_transport(*config.endpoint, {config.timeout, std::move(api_key)});
  return std::make_unique<RemoteEmbedder>(config, std::move(transport));
}

std::vector<EmbeddingVector> remote_embed(std::span<const std::string> texts, const EmbedderConfig& config) {
  if (!config.endpoint) throw Error(ErrorKind::kConfig, "remote_embed requires an endpoint");
  if (texts.empty()) return {};
  return make_embedder(config)->embed_batch(texts);
}

EmbeddingVector embed(std::string_view text, const EmbedderConfig& config) {
  return make_embedder(config)->embed(text);
}

}  // namespace arr
