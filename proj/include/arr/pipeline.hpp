#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "arr/embedder.hpp"
#include "arr/error.hpp"
#include "arr/knowledge_bank.hpp"
#include "arr/llm_gateway.hpp"
#include "arr/tokens.hpp"

namespace arr {

enum class RetrievalMode { kQueryBased, kAnswerBased };

std::string_view to_string(RetrievalMode mode);
// Accepts "query", "query_based", "answer", "answer_based".
RetrievalMode parse_retrieval_mode(std::string_view text);

inline constexpr std::string_view kDefaultRevisionInstruction =
    "Revise the draft answer to the query using the evidence candidates. Correct statements the evidence "
    "contradicts and cite the supporting law clauses by title.";

struct PipelineConfig {
  RetrievalMode mode = RetrievalMode::kAnswerBased;
  std::size_t k = 5;
  std::size_t iterations = 1;
  std::string instruction{kDefaultRevisionInstruction};
  // Defaults to the reviser's max_input_tokens.
  std::optional<std::size_t> token_budget;

  void validate() const;
};

struct Evidence {
  RetrievalHit hit;
  Paragraph paragraph;
};

struct IterationTrace {
  std::string retrieval_text;
  std::vector<Evidence> evidence;
  // Leading evidence entries that survived budget truncation.
  std::size_t evidence_in_prompt = 0;
  std::string prompt;
  std::string revised;
};

struct PipelineRecord {
  nlohmann::json id;
  std::string query;
  std::string draft;
  std::vector<IterationTrace> iterations;
  std::string final_answer;
  // Set only on records produced by run_batch for failed queries.
  std::optional<std::string> error;
  std::optional<std::string> failed_stage;

  bool ok() const noexcept { return !error.has_value(); }
};

/// Error raised by run_query, annotated with where it happened. round is 0
/// for the draft stage and 1-based for revision rounds.
class PipelineError : public Error {
 public:
  PipelineError(const Error& cause, std::string stage, std::size_t round);

  const std::string& stage() const noexcept { return stage_; }
  std::size_t round() const noexcept { return round_; }

 private:
  std::string stage_;
  std::size_t round_;
};

struct Gateways {
  const ModelGateway& draft;
  const ModelGateway& reviser;
};

inline constexpr std::string_view kInstructionHeader = "### INSTRUCTION";
inline constexpr std::string_view kQueryHeader = "### QUERY";
inline constexpr std::string_view kDraftHeader = "### DRAFT ANSWER";
inline constexpr std::string_view kEvidenceHeader = "### EVIDENCE";

struct RevisionPrompt {
  std::string text;
  std::size_t evidence_count = 0;
};

/// Renders the four labeled sections (instruction, query, draft answer,
/// evidence numbered [1]..[n] in rank order). Evidence is dropped from the
/// last rank upward until estimate_tokens(text) <= budget. The instruction,
/// query and draft are never truncated; kBudgetExceeded if they alone do
/// not fit.
RevisionPrompt assemble_revision_prompt(std::string_view instruction, std::string_view query, std::string_view draft,
                                        std::span<const Paragraph> evidence, std::size_t budget);

std::string render_revision_prompt(std::string_view instruction, std::string_view query, std::string_view draft,
                                   std::span<const Paragraph> evidence);

PipelineRecord run_query(std::string_view query, const KnowledgeBank& bank, const Embedder& embedder,
                         const Gateways& gateways, const PipelineConfig& config);

struct QueryItem {
  nlohmann::json id;
  std::string query;
};

/// Runs queries on up to `concurrency` threads. Output order follows input
/// order; a failing query yields a record with error set and never aborts
/// the batch.
std::vector<PipelineRecord> run_batch(std::span<const QueryItem> queries, const KnowledgeBank& bank,
                                      const Embedder& embedder, const Gateways& gateways,
                                      const PipelineConfig& config, std::size_t concurrency);

// JSONL {"id": ..., "query": "..."}; a missing id becomes the line position.
std::vector<QueryItem> read_queries(const std::filesystem::path& path);

nlohmann::json to_json(const PipelineRecord& record);

}  // namespace arr
