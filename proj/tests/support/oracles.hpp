#pragma once

// Reference implementations used only by tests. They are written from the
// textbook definitions and deliberately share no code with src/.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace arr::oracle {

struct Neighbor {
  std::uint32_t id;
  double distance;
};

// Full scan: every distance computed, then the whole list sorted.
inline std::vector<Neighbor> brute_force_knn(const std::vector<std::vector<float>>& keys,
                                             const std::vector<std::uint32_t>& ids, const std::vector<float>& query,
                                             std::size_t k) {
  std::vector<Neighbor> all;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    double s = 0;
    for (std::size_t d = 0; d < query.size(); ++d) {
      const double diff = double(query[d]) - double(keys[i][d]);
      s += diff * diff;
    }
    all.push_back({ids[i], std::sqrt(s)});
  }
  std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
  });
  all.resize(std::min(k, all.size()));
  return all;
}

// Splits valid UTF-8 into characters by lead-byte detection.
inline std::vector<std::string> utf8_chars(const std::string& s) {
  std::vector<std::string> out;
  for (unsigned char c : s) {
    if ((c & 0xC0) != 0x80 || out.empty()) {
      out.emplace_back(1, static_cast<char>(c));
    } else {
      out.back().push_back(static_cast<char>(c));
    }
  }
  return out;
}

inline std::uint64_t fnv1a(const std::string& bytes) {
  const std::uint64_t prime = 0x100000001b3ULL;
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    h = (h ^ std::uint64_t(static_cast<std::uint8_t>(bytes[i]))) * prime;
  }
  return h;
}

// Raw (unnormalized) bigram feature counts.
inline std::vector<double> bigram_counts(const std::string& text, std::size_t dim) {
  std::vector<double> v(dim, 0.0);
  const auto chars = utf8_chars(text);
  for (std::size_t i = 1; i < chars.size(); ++i) {
    const std::uint64_t h = fnv1a(chars[i - 1] + chars[i]);
    v[h % dim] += (h & 0x8000000000000000ULL) ? -1.0 : 1.0;
  }
  return v;
}

inline std::vector<double> bigram_embedding(const std::string& text, std::size_t dim) {
  auto v = bigram_counts(text, dim);
  double n = 0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (n > 0) {
    for (double& x : v) x /= n;
  }
  return v;
}

inline std::string encode_utf8(char32_t cp) {
  std::string s;
  if (cp <= 0x7F) {
    s += char(cp);
  } else if (cp <= 0x7FF) {
    s += char(0xC0 | (cp >> 6));
    s += char(0x80 | (cp & 0x3F));
  } else if (cp <= 0xFFFF) {
    s += char(0xE0 | (cp >> 12));
    s += char(0x80 | ((cp >> 6) & 0x3F));
    s += char(0x80 | (cp & 0x3F));
  } else {
    s += char(0xF0 | (cp >> 18));
    s += char(0x80 | ((cp >> 12) & 0x3F));
    s += char(0x80 | ((cp >> 6) & 0x3F));
    s += char(0x80 | (cp & 0x3F));
  }
  return s;
}

// Random valid UTF-8 drawn from ASCII, Latin-1, Greek, CJK, kana and emoji.
inline std::string random_unicode(std::mt19937_64& rng, std::size_t max_len) {
  static const std::pair<char32_t, char32_t> kRanges[] = {
      {0x20, 0x7E}, {0xA0, 0xFF}, {0x391, 0x3C9}, {0x4E00, 0x9FFF}, {0x3040, 0x30FF}, {0x1F600, 0x1F64F}};
  std::uniform_int_distribution<std::size_t> len_dist(0, max_len);
  std::uniform_int_distribution<std::size_t> range_dist(0, std::size(kRanges) - 1);
  std::string s;
  const std::size_t len = len_dist(rng);
  for (std::size_t i = 0; i < len; ++i) {
    const auto [lo, hi] = kRanges[range_dist(rng)];
    std::uniform_int_distribution<std::uint32_t> cp_dist(lo, hi);
    s += encode_utf8(static_cast<char32_t>(cp_dist(rng)));
  }
  return s;
}

// Precision at every cutoff, straight from the definition.
inline double precision_at(const std::vector<std::int64_t>& ranked, const std::set<std::int64_t>& relevant,
                           std::size_t k) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < k && i < ranked.size(); ++i) {
    if (relevant.count(ranked[i])) ++hits;
  }
  return double(hits) / double(k);
}

inline double average_precision(const std::vector<std::int64_t>& ranked, const std::set<std::int64_t>& relevant) {
  double sum = 0;
  for (std::size_t r = 1; r <= ranked.size(); ++r) {
    if (relevant.count(ranked[r - 1])) sum += precision_at(ranked, relevant, r);
  }
  return sum / double(relevant.size());
}

}  // namespace arr::oracle
