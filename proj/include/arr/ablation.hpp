#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "arr/embedder.hpp"
#include "arr/evaluation.hpp"
#include "arr/knowledge_bank.hpp"
#include "arr/llm_gateway.hpp"
#include "arr/pipeline.hpp"

namespace arr {

struct AblationQuery {
  nlohmann::json id;
  std::string query;
  std::set<CandidateId> relevant_ids;
};

struct ModeScores {
  std::vector<double> recall_at_k;     // index i holds k = i + 1
  std::vector<double> precision_at_k;  // index i holds k = i + 1
  double map_score = 0.0;
};

struct AblationResult {
  std::size_t max_k = 0;
  std::size_t n_queries = 0;  // successful queries only
  ModeScores query_based;
  ModeScores answer_based;
  std::vector<RankedRun> query_runs;
  std::vector<RankedRun> answer_runs;
  std::vector<std::string> drafts;
  // (query id, message) for queries whose draft or retrieval failed.
  std::vector<std::pair<nlohmann::json, std::string>> failures;
};

/// Retrieves the top max_k paragraphs for each query twice: once embedding
/// the query itself and once embedding the draft answer. Both modes share
/// the bank and embedder, so the retrieval text is the only difference.
/// Failed queries are excluded from the scores and listed in failures.
AblationResult run_ablation(std::span<const AblationQuery> queries, const KnowledgeBank& bank,
                            const Embedder& embedder, const ModelGateway& draft_gateway, std::size_t max_k,
                            std::size_t concurrency);

nlohmann::json to_json(const AblationResult& result);

// Paragraph ids whose title matches one of the gold titles under the
// normalized match key.
std::set<CandidateId> ids_for_titles(const KnowledgeBank& bank, const std::set<std::string>& titles);

}  // namespace arr
