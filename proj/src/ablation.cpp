#include "arr/ablation.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

namespace arr {

using json = nlohmann::json;

namespace {

std::vector<CandidateId> ranked(const KnowledgeBank& bank, const Embedder& embedder, const std::string& text,
                                std::size_t k) {
  std::vector<CandidateId> ids;
  for (const auto& hit : bank.knn(embedder.embed(text), k)) ids.push_back(hit.paragraph_id);
  return ids;
}

ModeScores score(std::span<const RankedRun> runs, std::size_t max_k) {
  ModeScores s;
  if (runs.empty()) return s;
  for (std::size_t k = 1; k <= max_k; ++k) {
    s.recall_at_k.push_back(recall_at_k(runs, k));
    s.precision_at_k.push_back(mean_precision_at_k(runs, k));
  }
  s.map_score = mean_average_precision(runs);
  return s;
}

json to_json(const ModeScores& s) {
  return {{"recall_at_k", s.recall_at_k}, {"precision_at_k", s.precision_at_k}, {"map", s.map_score}};
}

}  // namespace

AblationResult run_ablation(std::span<const AblationQuery> queries, const KnowledgeBank& bank,
                            const Embedder& embedder, const ModelGateway& draft_gateway, std::size_t max_k,
                            std::size_t concurrency) {
  if (max_k == 0) throw Error(ErrorKind::kInvalidArgument, "max_k must be >= 1");
  if (concurrency == 0) throw Error(ErrorKind::kInvalidArgument, "concurrency must be >= 1");

  struct Slot {
    std::optional<RankedRun> by_query;
    std::optional<RankedRun> by_answer;
    std::string draft;
    std::optional<std::string> error;
  };
  std::vector<Slot> slots(queries.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < queries.size(); i = next++) {
      const auto& q = queries[i];
      try {
        if (q.relevant_ids.empty()) {
          throw Error(ErrorKind::kInvalidArgument, "query has no relevant ids");
        }
        slots[i].draft = draft_gateway.generate_draft(q.query);
        slots[i].by_query = RankedRun{q.id, ranked(bank, embedder, q.query, max_k), q.relevant_ids};
        slots[i].by_answer = RankedRun{q.id, ranked(bank, embedder, slots[i].draft, max_k), q.relevant_ids};
      } catch (const std::exception& e) {
        slots[i].error = e.what();
      }
    }
  };
  const std::size_t threads = std::min(concurrency, queries.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  AblationResult result;
  result.max_k = max_k;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].error) {
      result.failures.emplace_back(queries[i].id, *slots[i].error);
      continue;
    }
    result.query_runs.push_back(std::move(*slots[i].by_query));
    result.answer_runs.push_back(std::move(*slots[i].by_answer));
    result.drafts.push_back(std::move(slots[i].draft));
  }
  result.n_queries = result.query_runs.size();
  result.query_based = score(result.query_runs, max_k);
  result.answer_based = score(result.answer_runs, max_k);
  return result;
}

json to_json(const AblationResult& result) {
  std::vector<std::size_t> ks(result.max_k);
  for (std::size_t k = 1; k <= result.max_k; ++k) ks[k - 1] = k;
  json failures = json::array();
  for (const auto& [id, message] : result.failures) failures.push_back({{"id", id}, {"error", message}});
  return {{"ks", ks},
          {"n_queries", result.n_queries},
          {"query_based", to_json(result.query_based)},
          {"answer_based", to_json(result.answer_based)},
          {"failures", std::move(failures)}};
}

std::set<CandidateId> ids_for_titles(const KnowledgeBank& bank, const std::set<std::string>& titles) {
  std::set<std::string> keys;
  for (const auto& t : titles) keys.insert(normalize_for_matching(t));
  std::set<CandidateId> ids;
  for (const auto& p : bank.paragraphs()) {
    if (keys.count(normalize_for_matching(p.title))) ids.insert(p.id);
  }
  return ids;
}

}  // namespace arr
