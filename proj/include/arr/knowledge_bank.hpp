#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "arr/embedder.hpp"

namespace arr {

using ParagraphId = std::uint32_t;

struct Paragraph {
  ParagraphId id = 0;
  std::string title;
  std::string body;
  std::string source;

  // Text that is embedded to form the paragraph's key.
  std::string key_text() const { return title + "\n" + body; }

  friend bool operator==(const Paragraph&, const Paragraph&) = default;
};

nlohmann::json to_json(const Paragraph& p);

struct RetrievalHit {
  ParagraphId paragraph_id = 0;
  double distance = 0.0;
  std::size_t rank = 0;  // 1-based

  friend bool operator==(const RetrievalHit&, const RetrievalHit&) = default;
};

/// Reads a JSON Lines corpus: {"id"?, "title", "body", "source"?} per line.
/// Records without an id receive their 0-based record position. Blank lines
/// are skipped.
std::vector<Paragraph> ingest_corpus(const std::filesystem::path& path);
std::vector<Paragraph> parse_corpus(std::string_view content, std::string_view origin = "<memory>");

void write_corpus(const std::filesystem::path& path, std::span<const Paragraph> paragraphs);

/// The key-value memory: row-major packed keys plus paragraph values, stored
/// in ascending id order. Immutable after construction, so concurrent knn()
/// calls are safe.
class KnowledgeBank {
 public:
  // Validates dimensions, non-emptiness and strictly increasing ids.
  KnowledgeBank(std::size_t dim, std::vector<float> keys, std::vector<Paragraph> paragraphs,
                std::string embedder_tag);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return paragraphs_.size(); }
  const std::string& embedder_tag() const noexcept { return embedder_tag_; }

  std::span<const float> key(std::size_t index) const {
    return std::span<const float>(keys_).subspan(index * dim_, dim_);
  }
  std::span<const float> packed_keys() const noexcept { return keys_; }
  const Paragraph& paragraph(std::size_t index) const { return paragraphs_[index]; }
  std::span<const Paragraph> paragraphs() const noexcept { return paragraphs_; }

  // Throws kInvalidArgument for an unknown id.
  const Paragraph& find(ParagraphId id) const;

  /// Exact k nearest neighbours under L2 distance, ordered by
  /// (distance, id). Returns min(k, size()) hits.
  std::vector<RetrievalHit> knn(std::span<const float> query, std::size_t k) const;
  std::vector<RetrievalHit> knn(const EmbeddingVector& query, std::size_t k) const {
    return knn(query.values(), k);
  }

  friend bool operator==(const KnowledgeBank&, const KnowledgeBank&) = default;

 private:
  std::size_t dim_;
  std::vector<float> keys_;
  std::vector<Paragraph> paragraphs_;
  std::string embedder_tag_;
};

/// Embeds title + "\n" + body of every paragraph. Paragraphs are stored in
/// ascending id order regardless of input order.
KnowledgeBank build_bank(std::span<const Paragraph> paragraphs, const Embedder& embedder);

/// Companion files written next to the vector file.
std::filesystem::path sidecar_path(const std::filesystem::path& bank_path);
std::filesystem::path meta_path(const std::filesystem::path& bank_path);

/// Vector file layout (little-endian):
///   "ARRKB01\n" | u32 dim | u64 count | count x (u32 id | dim x f32)
/// Paragraphs go to <bank>.jsonl in corpus format; the embedder tag goes to
/// <bank>.meta.json.
void save_bank(const KnowledgeBank& bank, const std::filesystem::path& path);
KnowledgeBank load_bank(const std::filesystem::path& path);

}  // namespace arr
