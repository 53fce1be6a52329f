#include "arr/evaluation.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <algorithm>
#include <unordered_set>

#include "arr/error.hpp"
#include "arr/utf8.hpp"

namespace arr {

using json = nlohmann::json;

std::string normalize_for_matching(std::string_view text) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfkc = icu::Normalizer2::getNFKCInstance(status);
  if (U_FAILURE(status)) throw Error(ErrorKind::kConfig, std::string("ICU NFKC unavailable: ") + u_errorName(status));
  const auto source = icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  const icu::UnicodeString normalized = nfkc->normalize(source, status);
  if (U_FAILURE(status)) throw Error(ErrorKind::kInvalidArgument, std::string("NFKC failed: ") + u_errorName(status));
  std::string utf8_text;
  normalized.toUTF8String(utf8_text);

  std::string out;
  out.reserve(utf8_text.size());
  bool pending_space = false;
  for (const auto& s : utf8::decode(utf8_text)) {
    if (u_isUWhiteSpace(static_cast<UChar32>(s.code_point))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.append(utf8_text, s.offset, s.length);
  }
  return out;
}

TitleCatalog::TitleCatalog(const std::set<std::string>& titles, TitleMatch mode) : mode_(mode) {
  if (titles.empty()) throw Error(ErrorKind::kInvalidArgument, "title catalog must be nonempty");
  entries_.reserve(titles.size());
  for (const auto& t : titles) {
    auto k = key(t);
    // An empty key would be contained in every answer.
    if (!k.empty()) entries_.emplace_back(std::move(k), t);
  }
}

std::string TitleCatalog::key(std::string_view text) const {
  return mode_ == TitleMatch::kNormalized ? normalize_for_matching(text) : std::string(text);
}

std::set<std::string> TitleCatalog::extract(std::string_view answer) const {
  const std::string haystack = key(answer);
  std::set<std::string> out;
  for (const auto& [k, title] : entries_) {
    if (haystack.find(k) != std::string::npos) out.insert(title);
  }
  return out;
}

std::set<std::string> extract_titles(std::string_view answer, const std::set<std::string>& catalog, TitleMatch mode) {
  return TitleCatalog(catalog, mode).extract(answer);
}

TitleScores micro_f1(std::span<const EvalExample> examples, std::span<const std::string> answers,
                     const TitleCatalog& catalog, std::vector<ExampleScore>* per_example) {
  if (examples.size() != answers.size()) {
    throw Error(ErrorKind::kInvalidArgument, "micro_f1 needs aligned inputs: " + std::to_string(examples.size()) +
                                                 " examples vs " + std::to_string(answers.size()) + " answers");
  }
  TitleScores s;
  s.n_examples = examples.size();
  std::size_t hits = 0;
  if (per_example) per_example->clear();
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (examples[i].gold_titles.empty()) {
      throw Error(ErrorKind::kInvalidArgument, "example " + examples[i].id.dump() + " has no gold titles");
    }
    ExampleScore row;
    row.predicted = catalog.extract(answers[i]);
    std::set<std::string> gold_keys;
    for (const auto& g : examples[i].gold_titles) gold_keys.insert(catalog.key(g));
    std::set<std::string> predicted_keys;
    for (const auto& p : row.predicted) predicted_keys.insert(catalog.key(p));
    for (const auto& p : predicted_keys) row.true_positives += gold_keys.count(p);

    s.true_positives += row.true_positives;
    s.predicted += predicted_keys.size();
    s.gold += gold_keys.size();
    hits += row.true_positives > 0 ? 1 : 0;
    if (per_example) per_example->push_back(std::move(row));
  }
  const auto ratio = [](std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  s.micro_precision = ratio(s.true_positives, s.predicted);
  s.micro_recall = ratio(s.true_positives, s.gold);
  const double sum = s.micro_precision + s.micro_recall;
  s.micro_f1 = sum == 0.0 ? 0.0 : 2.0 * s.micro_precision * s.micro_recall / sum;
  s.example_hit_rate = ratio(hits, s.n_examples);
  return s;
}

TitleScores micro_f1(std::span<const EvalExample> examples, std::span<const std::string> answers,
                     const std::set<std::string>& catalog, TitleMatch mode) {
  return micro_f1(examples, answers, TitleCatalog(catalog, mode));
}

void RankedRun::validate() const {
  std::unordered_set<CandidateId> seen;
  for (auto id : ranked_ids) {
    if (!seen.insert(id).second) {
      throw Error(ErrorKind::kInvalidArgument, "run " + query_id.dump() + " ranks id " + std::to_string(id) + " twice");
    }
  }
}

namespace {

void require_k(std::size_t k) {
  if (k == 0) throw Error(ErrorKind::kInvalidArgument, "k must be >= 1");
}

void require_runs(std::span<const RankedRun> runs) {
  if (runs.empty()) throw Error(ErrorKind::kInvalidArgument, "no runs");
}

}  // namespace

double recall_at_k(std::span<const RankedRun> runs, std::size_t k) {
  require_k(k);
  require_runs(runs);
  std::size_t found = 0;
  for (const auto& run : runs) {
    run.validate();
    const auto end = run.ranked_ids.begin() + static_cast<std::ptrdiff_t>(std::min(k, run.ranked_ids.size()));
    if (std::any_of(run.ranked_ids.begin(), end, [&](CandidateId id) { return run.relevant_ids.count(id) > 0; })) {
      ++found;
    }
  }
  return static_cast<double>(found) / static_cast<double>(runs.size());
}

double precision_at_k(const RankedRun& run, std::size_t k) {
  require_k(k);
  run.validate();
  std::size_t relevant = 0;
  for (std::size_t i = 0; i < std::min(k, run.ranked_ids.size()); ++i) {
    relevant += run.relevant_ids.count(run.ranked_ids[i]);
  }
  return static_cast<double>(relevant) / static_cast<double>(k);
}

double mean_precision_at_k(std::span<const RankedRun> runs, std::size_t k) {
  require_runs(runs);
  double sum = 0.0;
  for (const auto& run : runs) sum += precision_at_k(run, k);
  return sum / static_cast<double>(runs.size());
}

double average_precision(const RankedRun& run) {
  run.validate();
  if (run.relevant_ids.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "run " + run.query_id.dump() + " has no relevant ids");
  }
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < run.ranked_ids.size(); ++i) {
    if (run.relevant_ids.count(run.ranked_ids[i])) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  return sum / static_cast<double>(run.relevant_ids.size());
}

double mean_average_precision(std::span<const RankedRun> runs) {
  require_runs(runs);
  double sum = 0.0;
  for (const auto& run : runs) sum += average_precision(run);
  return sum / static_cast<double>(runs.size());
}

std::set<char> option_letters(std::string_view answer) {
  const std::string text = normalize_for_matching(answer);
  std::set<char> out;
  std::string token;
  const auto flush = [&] {
    if (!token.empty() && std::all_of(token.begin(), token.end(), [](char c) { return c >= 'A' && c <= 'Z'; })) {
      out.insert(token.begin(), token.end());
    }
    token.clear();
  };
  for (char c : text) {
    if ((c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z')) {
      token.push_back(c);
    } else {
      flush();
    }
  }
  flush();
  return out;
}

double exact_match_accuracy(std::span<const std::string> gold, std::span<const std::string> predicted) {
  if (gold.size() != predicted.size()) {
    throw Error(ErrorKind::kInvalidArgument, "accuracy needs aligned gold and predicted answers");
  }
  if (gold.empty()) throw Error(ErrorKind::kInvalidArgument, "accuracy needs at least one example");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto g = option_letters(gold[i]);
    if (!g.empty() && g == option_letters(predicted[i])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(gold.size());
}

json to_json(const MetricsReport& report) {
  json out = {{"n_examples", report.n_examples}};
  if (report.titles) {
    const auto& t = *report.titles;
    out["micro_precision"] = t.micro_precision;
    out["micro_recall"] = t.micro_recall;
    out["micro_f1"] = t.micro_f1;
    out["example_hit_rate"] = t.example_hit_rate;
    out["true_positives"] = t.true_positives;
    out["predicted_titles"] = t.predicted;
    out["gold_titles"] = t.gold;
  }
  if (!report.recall_at_k.empty()) {
    json r = json::object();
    for (const auto& [k, v] : report.recall_at_k) r[std::to_string(k)] = v;
    out["recall_at_k"] = std::move(r);
  }
  if (!report.precision_at_k.empty()) {
    json p = json::object();
    for (const auto& [k, v] : report.precision_at_k) p[std::to_string(k)] = v;
    out["precision_at_k"] = std::move(p);
  }
  if (report.map_score) out["map"] = *report.map_score;
  if (report.accuracy) {
    out["accuracy"] = *report.accuracy;
    out["accuracy_is_lower_bound"] = true;
  }
  out["conventions"] = {{"precision_without_predictions", 0.0}, {"average_precision_without_hits", 0.0}};
  return out;
}

}  // namespace arr
