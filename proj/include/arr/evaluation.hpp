#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace arr {

enum class TitleMatch {
  kNormalized,  // NFKC + whitespace collapse on both sides
  kRaw,         // plain byte substring
};

/// NFKC, then runs of Unicode whitespace become one ASCII space; leading and
/// trailing whitespace is removed.
std::string normalize_for_matching(std::string_view text);

/// Catalog of known titles with their match keys precomputed.
class TitleCatalog {
 public:
  // Throws kInvalidArgument on an empty catalog.
  explicit TitleCatalog(const std::set<std::string>& titles, TitleMatch mode = TitleMatch::kNormalized);

  // Catalog titles (original spelling) contained in the answer.
  std::set<std::string> extract(std::string_view answer) const;

  std::string key(std::string_view text) const;
  TitleMatch mode() const noexcept { return mode_; }
  std::size_t size() const noexcept { return entries_.size(); }

 private:
  TitleMatch mode_;
  std::vector<std::pair<std::string, std::string>> entries_;  // (key, title)
};

std::set<std::string> extract_titles(std::string_view answer, const std::set<std::string>& catalog,
                                     TitleMatch mode = TitleMatch::kNormalized);

struct EvalExample {
  nlohmann::json id;
  std::string query;
  std::set<std::string> gold_titles;
};

struct TitleScores {
  double micro_precision = 0.0;
  double micro_recall = 0.0;
  double micro_f1 = 0.0;
  // Fraction of examples with at least one gold title predicted.
  double example_hit_rate = 0.0;
  std::size_t true_positives = 0;
  std::size_t predicted = 0;
  std::size_t gold = 0;
  std::size_t n_examples = 0;
};

struct ExampleScore {
  std::set<std::string> predicted;
  std::size_t true_positives = 0;
};

/// Title-inclusion micro P/R/F1. Zero denominators yield 0.
TitleScores micro_f1(std::span<const EvalExample> examples, std::span<const std::string> answers,
                     const TitleCatalog& catalog, std::vector<ExampleScore>* per_example = nullptr);
TitleScores micro_f1(std::span<const EvalExample> examples, std::span<const std::string> answers,
                     const std::set<std::string>& catalog, TitleMatch mode = TitleMatch::kNormalized);

using CandidateId = std::int64_t;

struct RankedRun {
  nlohmann::json query_id;
  std::vector<CandidateId> ranked_ids;
  std::set<CandidateId> relevant_ids;

  // Throws kInvalidArgument if ranked_ids has duplicates.
  void validate() const;
};

/// Fraction of runs with a relevant id among the first k.
double recall_at_k(std::span<const RankedRun> runs, std::size_t k);

/// |relevant ∩ top-k| / k.
double precision_at_k(const RankedRun& run, std::size_t k);
double mean_precision_at_k(std::span<const RankedRun> runs, std::size_t k);

/// Sum of precision@r over ranks r holding a relevant id, divided by
/// |relevant_ids|. Requires a nonempty relevant set.
double average_precision(const RankedRun& run);
double mean_average_precision(std::span<const RankedRun> runs);

/// Option-letter set of an answer: tokens (split on non-letters, after NFKC)
/// made only of uppercase ASCII letters contribute their letters.
std::set<char> option_letters(std::string_view answer);

/// Exact-match accuracy over option-letter sets. A lower bound for tasks
/// that were judged by humans.
double exact_match_accuracy(std::span<const std::string> gold, std::span<const std::string> predicted);

struct MetricsReport {
  std::optional<TitleScores> titles;
  std::map<std::size_t, double> recall_at_k;
  std::map<std::size_t, double> precision_at_k;
  std::optional<double> map_score;
  std::optional<double> accuracy;
  std::size_t n_examples = 0;
};

nlohmann::json to_json(const MetricsReport& report);

}  // namespace arr
