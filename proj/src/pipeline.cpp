#include "arr/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <thread>

namespace arr {

using json = nlohmann::json;

std::string_view to_string(RetrievalMode mode) {
  return mode == RetrievalMode::kQueryBased ? "query_based" : "answer_based";
}

RetrievalMode parse_retrieval_mode(std::string_view text) {
  if (text == "query" || text == "query_based") return RetrievalMode::kQueryBased;
  if (text == "answer" || text == "answer_based") return RetrievalMode::kAnswerBased;
  throw Error(ErrorKind::kConfig, "unknown retrieval mode '" + std::string(text) + "' (expected query or answer)");
}

void PipelineConfig::validate() const {
  if (iterations >= 1 && k == 0) throw Error(ErrorKind::kConfig, "k must be >= 1 when iterations >= 1");
  if (token_budget && *token_budget == 0) throw Error(ErrorKind::kConfig, "token_budget must be >= 1");
}

PipelineError::PipelineError(const Error& cause, std::string stage, std::size_t round)
    : Error(cause.kind(), "stage '" + stage + "' (round " + std::to_string(round) + "): " + cause.what()),
      stage_(std::move(stage)),
      round_(round) {}

std::string render_revision_prompt(std::string_view instruction, std::string_view query, std::string_view draft,
                                   std::span<const Paragraph> evidence) {
  std::string out;
  out.reserve(instruction.size() + query.size() + draft.size() + 128);
  out.append(kInstructionHeader).append("\n").append(instruction).append("\n\n");
  out.append(kQueryHeader).append("\n").append(query).append("\n\n");
  out.append(kDraftHeader).append("\n").append(draft).append("\n\n");
  out.append(kEvidenceHeader).append("\n");
  for (std::size_t i = 0; i < evidence.size(); ++i) {
    if (i > 0) out.append("\n");
    out.append("[").append(std::to_string(i + 1)).append("] ").append(evidence[i].title).append("\n");
    out.append(evidence[i].body).append("\n");
  }
  return out;
}

RevisionPrompt assemble_revision_prompt(std::string_view instruction, std::string_view query, std::string_view draft,
                                        std::span<const Paragraph> evidence, std::size_t budget) {
  // estimate_tokens is not additive (the ceil term), so each candidate
  // prompt is measured whole.
  for (std::size_t n = evidence.size() + 1; n-- > 0;) {
    std::string text = render_revision_prompt(instruction, query, draft, evidence.first(n));
    if (estimate_tokens(text) <= budget) return RevisionPrompt{std::move(text), n};
  }
  const auto core = estimate_tokens(render_revision_prompt(instruction, query, draft, {}));
  throw Error(ErrorKind::kBudgetExceeded, "instruction, query and draft need " + std::to_string(core) +
                                              " estimated tokens but the budget is " + std::to_string(budget));
}

namespace {

template <typename F>
auto in_stage(std::string_view stage, std::size_t round, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const PipelineError&) {
    throw;
  } catch (const Error& e) {
    throw PipelineError(e, std::string(stage), round);
  } catch (const std::exception& e) {
    throw PipelineError(Error(ErrorKind::kInvalidArgument, e.what()), std::string(stage), round);
  }
}

}  // namespace

PipelineRecord run_query(std::string_view query, const KnowledgeBank& bank, const Embedder& embedder,
                         const Gateways& gateways, const PipelineConfig& config) {
  config.validate();
  if (query.empty()) throw Error(ErrorKind::kInvalidArgument, "query must be nonempty");
  const std::size_t budget = config.token_budget.value_or(gateways.reviser.config().max_input_tokens);

  PipelineRecord record;
  record.query = std::string(query);
  record.draft = in_stage("draft", 0, [&] { return gateways.draft.generate_draft(query); });

  std::string previous = record.draft;
  for (std::size_t round = 1; round <= config.iterations; ++round) {
    IterationTrace trace;
    if (round == 1) {
      trace.retrieval_text = config.mode == RetrievalMode::kAnswerBased ? record.draft : record.query;
    } else {
      trace.retrieval_text = previous;
    }

    const auto key = in_stage("embed", round, [&] { return embedder.embed(trace.retrieval_text); });
    const auto hits = in_stage("retrieve", round, [&] { return bank.knn(key, config.k); });

    std::vector<Paragraph> paragraphs;
    paragraphs.reserve(hits.size());
    for (const auto& hit : hits) {
      const Paragraph& p = bank.find(hit.paragraph_id);
      trace.evidence.push_back({hit, p});
      paragraphs.push_back(p);
    }

    auto prompt = in_stage("assemble", round, [&] {
      return assemble_revision_prompt(config.instruction, record.query, record.draft, paragraphs, budget);
    });
    trace.prompt = std::move(prompt.text);
    trace.evidence_in_prompt = prompt.evidence_count;
    trace.revised = in_stage("revise", round, [&] { return gateways.reviser.revise(trace.prompt); });

    previous = trace.revised;
    record.iterations.push_back(std::move(trace));
  }
  record.final_answer = config.iterations == 0 ? record.draft : previous;
  return record;
}

std::vector<PipelineRecord> run_batch(std::span<const QueryItem> queries, const KnowledgeBank& bank,
                                      const Embedder& embedder, const Gateways& gateways,
                                      const PipelineConfig& config, std::size_t concurrency) {
  if (concurrency == 0) throw Error(ErrorKind::kInvalidArgument, "concurrency must be >= 1");
  std::vector<PipelineRecord> records(queries.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < queries.size(); i = next++) {
      const auto& item = queries[i];
      try {
        records[i] = run_query(item.query, bank, embedder, gateways, config);
      } catch (const PipelineError& e) {
        records[i].error = e.what();
        records[i].failed_stage = e.stage();
      } catch (const std::exception& e) {
        records[i].error = e.what();
        records[i].failed_stage = "input";
      }
      records[i].id = item.id;
      records[i].query = item.query;
    }
  };

  const std::size_t threads = std::min(concurrency, queries.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  return records;
}

std::vector<QueryItem> read_queries(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open '" + path.string() + "'");
  std::vector<QueryItem> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::kMalformedRecord, where + ": invalid JSON (" + e.what() + ")");
    }
    if (!obj.is_object() || !obj.contains("query") || !obj["query"].is_string()) {
      throw Error(ErrorKind::kMalformedRecord, where + ": \"query\" must be a string");
    }
    QueryItem item;
    item.id = obj.contains("id") ? obj["id"] : json(out.size());
    item.query = obj["query"].get<std::string>();
    out.push_back(std::move(item));
  }
  return out;
}

json to_json(const PipelineRecord& record) {
  json iterations = json::array();
  for (std::size_t r = 0; r < record.iterations.size(); ++r) {
    const auto& t = record.iterations[r];
    json evidence = json::array();
    for (const auto& e : t.evidence) {
      evidence.push_back({{"rank", e.hit.rank},
                          {"id", e.hit.paragraph_id},
                          {"title", e.paragraph.title},
                          {"distance", e.hit.distance}});
    }
    iterations.push_back({{"round", r + 1},
                          {"retrieval_text", t.retrieval_text},
                          {"evidence", std::move(evidence)},
                          {"evidence_in_prompt", t.evidence_in_prompt},
                          {"prompt", t.prompt},
                          {"revised", t.revised}});
  }
  json out = {{"id", record.id}, {"query", record.query}, {"iterations", std::move(iterations)}};
  if (record.ok()) {
    out["status"] = "ok";
    out["draft"] = record.draft;
    out["final"] = record.final_answer;
  } else {
    out["status"] = "failed";
    out["error"] = *record.error;
    out["stage"] = record.failed_stage.value_or("");
    out["draft"] = nullptr;
    out["final"] = nullptr;
  }
  return out;
}

}  // namespace arr
