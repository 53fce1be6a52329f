#include "arr/knowledge_bank.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <queue>
#include <sstream>
#include <unordered_set>

#include "arr/error.hpp"

namespace arr {

using json = nlohmann::json;

namespace {

constexpr char kMagic[8] = {'A', 'R', 'R', 'K', 'B', '0', '1', '\n'};
constexpr std::size_t kHeaderBytes = 8 + 4 + 8;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw Error(ErrorKind::kIo, "failed reading '" + path.string() + "'");
  return std::move(buf).str();
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(std::string_view in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::string_view in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

std::string printable(std::string_view bytes) {
  std::string out;
  for (char c : bytes) {
    const auto u = static_cast<unsigned char>(c);
    if (u >= 0x20 && u < 0x7F) {
      out.push_back(c);
    } else {
      static constexpr char kHex[] = "0123456789abcdef";
      out += "\\x";
      out.push_back(kHex[u >> 4]);
      out.push_back(kHex[u & 0xF]);
    }
  }
  return out;
}

Paragraph parse_record(const json& obj, std::size_t record_index, const std::string& where) {
  if (!obj.is_object()) throw Error(ErrorKind::kMalformedRecord, where + ": record is not a JSON object");
  Paragraph p;
  if (auto it = obj.find("id"); it != obj.end() && !it->is_null()) {
    if (!it->is_number_integer() || it->get<long long>() < 0 ||
        it->get<unsigned long long>() > std::numeric_limits<ParagraphId>::max()) {
      throw Error(ErrorKind::kMalformedRecord, where + ": \"id\" must be an integer in [0, 2^32)");
    }
    p.id = it->get<ParagraphId>();
  } else {
    if (record_index > std::numeric_limits<ParagraphId>::max()) {
      throw Error(ErrorKind::kMalformedRecord, where + ": too many records for sequential ids");
    }
    p.id = static_cast<ParagraphId>(record_index);
  }
  auto it = obj.find("title");
  if (it == obj.end() || !it->is_string()) {
    throw Error(ErrorKind::kMalformedRecord, where + ": \"title\" must be a string");
  }
  p.title = it->get<std::string>();
  it = obj.find("body");
  if (it == obj.end() || !it->is_string() || it->get_ref<const std::string&>().empty()) {
    throw Error(ErrorKind::kMalformedRecord, where + ": \"body\" must be a nonempty string");
  }
  p.body = it->get<std::string>();
  if (it = obj.find("source"); it != obj.end() && !it->is_null()) {
    if (!it->is_string()) throw Error(ErrorKind::kMalformedRecord, where + ": \"source\" must be a string");
    p.source = it->get<std::string>();
  }
  return p;
}

}  // namespace

json to_json(const Paragraph& p) {
  return json{{"id", p.id}, {"title", p.title}, {"body", p.body}, {"source", p.source}};
}

std::vector<Paragraph> parse_corpus(std::string_view content, std::string_view origin) {
  std::vector<Paragraph> out;
  std::unordered_set<ParagraphId> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < content.size()) {
    auto eol = content.find('\n', pos);
    if (eol == std::string_view::npos) eol = content.size();
    std::string_view line = content.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

    const std::string where = std::string(origin) + ":" + std::to_string(line_no);
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::kMalformedRecord, where + ": invalid JSON (" + e.what() + ")");
    }
    Paragraph p = parse_record(obj, out.size(), where);
    if (!seen.insert(p.id).second) {
      throw Error(ErrorKind::kDuplicateId, where + ": duplicate id " + std::to_string(p.id));
    }
    out.push_back(std::move(p));
  }
  if (out.empty()) throw Error(ErrorKind::kEmptyCorpus, std::string(origin) + ": empty corpus");
  return out;
}

std::vector<Paragraph> ingest_corpus(const std::filesystem::path& path) {
  return parse_corpus(read_file(path), path.string());
}

void write_corpus(const std::filesystem::path& path, std::span<const Paragraph> paragraphs) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write '" + path.string() + "'");
  for (const auto& p : paragraphs) out << to_json(p).dump() << '\n';
  if (!out) throw Error(ErrorKind::kIo, "failed writing '" + path.string() + "'");
}

KnowledgeBank::KnowledgeBank(std::size_t dim, std::vector<float> keys, std::vector<Paragraph> paragraphs,
                             std::string embedder_tag)
    : dim_(dim), keys_(std::move(keys)), paragraphs_(std::move(paragraphs)), embedder_tag_(std::move(embedder_tag)) {
  if (dim_ == 0 || dim_ > std::numeric_limits<std::uint32_t>::max()) {
    throw Error(ErrorKind::kInvalidArgument, "bank dim must be in [1, 2^32)");
  }
  if (paragraphs_.empty()) throw Error(ErrorKind::kEmptyCorpus, "knowledge bank has no entries");
  if (keys_.size() != paragraphs_.size() * dim_) {
    throw Error(ErrorKind::kDimensionMismatch, "key storage does not match " + std::to_string(paragraphs_.size()) +
                                                   " entries of dim " + std::to_string(dim_));
  }
  for (std::size_t i = 1; i < paragraphs_.size(); ++i) {
    if (paragraphs_[i].id <= paragraphs_[i - 1].id) {
      throw Error(ErrorKind::kConsistency, "bank ids must be strictly increasing (id " +
                                               std::to_string(paragraphs_[i].id) + " follows " +
                                               std::to_string(paragraphs_[i - 1].id) + ")");
    }
  }
}

const Paragraph& KnowledgeBank::find(ParagraphId id) const {
  auto it = std::lower_bound(paragraphs_.begin(), paragraphs_.end(), id,
                             [](const Paragraph& p, ParagraphId v) { return p.id < v; });
  if (it == paragraphs_.end() || it->id != id) {
    throw Error(ErrorKind::kInvalidArgument, "no paragraph with id " + std::to_string(id));
  }
  return *it;
}

std::vector<RetrievalHit> KnowledgeBank::knn(std::span<const float> query, std::size_t k) const {
  if (query.size() != dim_) {
    throw Error(ErrorKind::kDimensionMismatch, "query dim " + std::to_string(query.size()) +
                                                   " does not match bank dim " + std::to_string(dim_));
  }
  if (k == 0) throw Error(ErrorKind::kInvalidArgument, "k must be >= 1");
  k = std::min(k, size());

  // Max-heap on (squared distance, index); index order equals id order.
  using Candidate = std::pair<double, std::size_t>;
  std::priority_queue<Candidate> heap;
  const float* row = keys_.data();
  for (std::size_t i = 0; i < size(); ++i, row += dim_) {
    double sq = 0.0;
    for (std::size_t d = 0; d < dim_; ++d) {
      const double diff = static_cast<double>(query[d]) - static_cast<double>(row[d]);
      sq += diff * diff;
    }
    if (heap.size() < k) {
      heap.emplace(sq, i);
    } else if (Candidate{sq, i} < heap.top()) {
      heap.pop();
      heap.emplace(sq, i);
    }
  }

  std::vector<RetrievalHit> hits(heap.size());
  for (std::size_t pos = heap.size(); pos-- > 0;) {
    const auto [sq, index] = heap.top();
    heap.pop();
    hits[pos] = RetrievalHit{paragraphs_[index].id, std::sqrt(sq), pos + 1};
  }
  return hits;
}

KnowledgeBank build_bank(std::span<const Paragraph> paragraphs, const Embedder& embedder) {
  if (paragraphs.empty()) throw Error(ErrorKind::kEmptyCorpus, "cannot build a bank from an empty corpus");

  std::vector<Paragraph> sorted(paragraphs.begin(), paragraphs.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const Paragraph& a, const Paragraph& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i].id == sorted[i - 1].id) {
      throw Error(ErrorKind::kDuplicateId, "duplicate id " + std::to_string(sorted[i].id));
    }
  }

  std::vector<std::string> texts;
  texts.reserve(sorted.size());
  for (const auto& p : sorted) texts.push_back(p.key_text());

  std::vector<EmbeddingVector> keys;
  try {
    keys = embedder.embed_batch(texts);
  } catch (const Error& e) {
    // Batch failures cannot name a single paragraph; retry one by one to find it.
    for (std::size_t i = 0; i < texts.size(); ++i) {
      try {
        (void)embedder.embed(texts[i]);
      } catch (const Error& inner) {
        throw Error(inner.kind(), "embedding paragraph id " + std::to_string(sorted[i].id) + ": " + inner.what());
      }
    }
    throw;
  }
  if (keys.size() != sorted.size()) {
    throw Error(ErrorKind::kCountMismatch, "embedder returned " + std::to_string(keys.size()) + " keys for " +
                                               std::to_string(sorted.size()) + " paragraphs");
  }

  const std::size_t dim = keys.front().dim();
  std::vector<float> packed;
  packed.reserve(dim * keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (keys[i].dim() != dim) {
      throw Error(ErrorKind::kDimensionMismatch, "paragraph id " + std::to_string(sorted[i].id) + " embedded to dim " +
                                                     std::to_string(keys[i].dim()) + ", expected " + std::to_string(dim));
    }
    const auto v = keys[i].values();
    packed.insert(packed.end(), v.begin(), v.end());
  }
  return KnowledgeBank(dim, std::move(packed), std::move(sorted), embedder.tag());
}

std::filesystem::path sidecar_path(const std::filesystem::path& bank_path) {
  auto p = bank_path;
  p += ".jsonl";
  return p;
}

std::filesystem::path meta_path(const std::filesystem::path& bank_path) {
  auto p = bank_path;
  p += ".meta.json";
  return p;
}

void save_bank(const KnowledgeBank& bank, const std::filesystem::path& path) {
  std::string bytes;
  bytes.reserve(kHeaderBytes + bank.size() * (4 + 4 * bank.dim()));
  bytes.append(kMagic, sizeof(kMagic));
  put_u32(bytes, static_cast<std::uint32_t>(bank.dim()));
  put_u64(bytes, bank.size());
  for (std::size_t i = 0; i < bank.size(); ++i) {
    put_u32(bytes, bank.paragraph(i).id);
    for (float v : bank.key(i)) put_u32(bytes, std::bit_cast<std::uint32_t>(v));
  }

  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::kIo, "cannot write '" + path.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::kIo, "failed writing '" + path.string() + "'");
  }
  write_corpus(sidecar_path(path), bank.paragraphs());

  std::ofstream meta(meta_path(path), std::ios::binary | std::ios::trunc);
  if (!meta) throw Error(ErrorKind::kIo, "cannot write '" + meta_path(path).string() + "'");
  meta << json{{"embedder_tag", bank.embedder_tag()}, {"dim", bank.dim()}, {"count", bank.size()}}.dump(2) << '\n';
}

KnowledgeBank load_bank(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  const std::string name = path.string();
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorKind::kBadMagic, "'" + name + "' has bad magic \"" +
                                          printable(std::string_view(bytes).substr(0, sizeof(kMagic))) +
                                          "\", expected \"ARRKB01\\n\"");
  }
  if (bytes.size() < kHeaderBytes) throw Error(ErrorKind::kTruncated, "'" + name + "' is truncated inside the header");

  const std::uint32_t dim = get_u32(bytes, 8);
  const std::uint64_t count = get_u64(bytes, 12);
  if (dim == 0) throw Error(ErrorKind::kConsistency, "'" + name + "' declares dim 0");
  const std::uint64_t record_bytes = 4 + 4ULL * dim;
  const std::uint64_t payload = bytes.size() - kHeaderBytes;
  if (count == 0 || payload / record_bytes != count || payload % record_bytes != 0) {
    throw Error(ErrorKind::kTruncated, "'" + name + "' declares " + std::to_string(count) + " records of " +
                                           std::to_string(record_bytes) + " bytes but holds " +
                                           std::to_string(payload) + " payload bytes");
  }

  std::vector<ParagraphId> ids(count);
  std::vector<float> keys(count * dim);
  std::size_t at = kHeaderBytes;
  for (std::uint64_t r = 0; r < count; ++r) {
    ids[r] = get_u32(bytes, at);
    at += 4;
    for (std::uint32_t d = 0; d < dim; ++d, at += 4) {
      keys[r * dim + d] = std::bit_cast<float>(get_u32(bytes, at));
    }
  }

  std::vector<Paragraph> paragraphs;
  const auto side = sidecar_path(path);
  if (!std::filesystem::exists(side)) {
    throw Error(ErrorKind::kConsistency, "sidecar '" + side.string() + "' is missing");
  }
  paragraphs = ingest_corpus(side);
  if (paragraphs.size() != count) {
    throw Error(ErrorKind::kConsistency, "vector file declares " + std::to_string(count) + " records but sidecar '" +
                                             side.string() + "' holds " + std::to_string(paragraphs.size()) +
                                             " paragraphs");
  }
  for (std::size_t i = 0; i < paragraphs.size(); ++i) {
    if (paragraphs[i].id != ids[i]) {
      throw Error(ErrorKind::kConsistency, "record " + std::to_string(i) + " has vector id " + std::to_string(ids[i]) +
                                               " but sidecar id " + std::to_string(paragraphs[i].id));
    }
  }

  std::string tag;
  if (const auto mp = meta_path(path); std::filesystem::exists(mp)) {
    try {
      const auto meta = json::parse(read_file(mp));
      tag = meta.value("embedder_tag", "");
    } catch (const json::exception& e) {
      throw Error(ErrorKind::kConsistency, "bad bank metadata '" + mp.string() + "': " + e.what());
    }
  }
  return KnowledgeBank(dim, std::move(keys), std::move(paragraphs), std::move(tag));
}

}  // namespace arr
