#include "arr/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "arr/ablation.hpp"
#include "arr/error.hpp"
#include "arr/evaluation.hpp"
#include "arr/knowledge_bank.hpp"
#include "arr/pipeline.hpp"
#include "arr/run_config.hpp"

namespace arr::cli {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Flags {
  std::optional<std::string> config;
  std::optional<std::string> bank;
  std::optional<std::string> corpus;
  std::optional<std::string> text;
  std::optional<std::string> file;
  std::optional<std::string> queries;
  std::optional<std::string> gold;
  std::optional<std::string> predictions;
  std::optional<std::string> catalog;
  std::optional<std::string> out;
  std::optional<std::string> csv;
  std::optional<std::string> mode;
  std::optional<std::string> title_match;
  std::optional<std::string> ks;
  std::optional<std::size_t> k;
  std::optional<std::size_t> iterations;
  std::optional<std::size_t> concurrency;
  std::optional<std::size_t> dim;
  std::optional<std::size_t> round;
};

void add_common(CLI::App& cmd, Flags& f) {
  cmd.add_option("--config", f.config, "JSON run configuration");
  cmd.add_option("--bank", f.bank, "Bank vector file (sidecar at <bank>.jsonl)");
  cmd.add_option("--k", f.k, "Number of neighbours")->check(CLI::PositiveNumber);
  cmd.add_option("--mode", f.mode, "Retrieval mode: query or answer");
  cmd.add_option("--iterations", f.iterations, "Revision rounds");
  cmd.add_option("--concurrency", f.concurrency, "Queries in flight")->check(CLI::PositiveNumber);
  cmd.add_option("--out", f.out, "Output path (default stdout)");
  cmd.add_option("--dim", f.dim, "Hash embedder dimension")->check(CLI::PositiveNumber);
}

std::vector<std::size_t> parse_ks(const std::string& text) {
  std::vector<std::size_t> ks;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size() || v <= 0) throw std::invalid_argument(item);
      ks.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw UsageError("--ks expects comma-separated positive integers, got '" + text + "'");
    }
  }
  if (ks.empty()) throw UsageError("--ks must list at least one k");
  return ks;
}

RunConfig resolve(const Flags& f) {
  RunConfig c;
  if (f.config) {
    if (!fs::exists(*f.config)) throw UsageError("config file '" + *f.config + "' does not exist");
    c = load_run_config(*f.config);
  }
  if (f.bank) c.bank_path = *f.bank;
  if (f.corpus) c.corpus_path = *f.corpus;
  if (f.queries) c.queries_path = *f.queries;
  if (f.gold) c.gold_path = *f.gold;
  if (f.predictions) c.predictions_path = *f.predictions;
  if (f.catalog) c.catalog_path = *f.catalog;
  if (f.out) c.out_path = *f.out;
  if (f.csv) c.csv_path = *f.csv;
  if (f.mode) {
    try {
      c.pipeline.mode = parse_retrieval_mode(*f.mode);
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
  }
  if (f.k) c.pipeline.k = *f.k;
  if (f.iterations) c.pipeline.iterations = *f.iterations;
  if (f.concurrency) c.concurrency = *f.concurrency;
  if (f.round) c.eval_round = *f.round;
  if (f.ks) c.ks = parse_ks(*f.ks);
  if (f.dim) {
    c.embedder.dim = *f.dim;
    c.embedder_dim_explicit = true;
  }
  if (f.title_match) {
    if (*f.title_match == "normalized") {
      c.title_match = TitleMatch::kNormalized;
    } else if (*f.title_match == "raw") {
      c.title_match = TitleMatch::kRaw;
    } else {
      throw UsageError("--title-match must be normalized or raw");
    }
  }
  c.pipeline.validate();
  return c;
}

fs::path require_input(const fs::path& path, const std::string& what) {
  if (path.empty()) throw UsageError("missing " + what);
  if (!fs::exists(path)) throw UsageError(what + " '" + path.string() + "' does not exist");
  return path;
}

// Writes to the configured file, or to `out` when no path is set.
void emit(const fs::path& path, const std::string& content, std::ostream& out) {
  if (path.empty()) {
    out << content;
    out.flush();
    return;
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw Error(ErrorKind::kIo, "cannot write '" + path.string() + "'");
  file << content;
  if (!file) throw Error(ErrorKind::kIo, "failed writing '" + path.string() + "'");
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open '" + path.string() + "'");
  std::vector<json> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::kMalformedRecord,
                  path.string() + ":" + std::to_string(line_no) + ": invalid JSON (" + e.what() + ")");
    }
    if (!rows.back().is_object()) {
      throw Error(ErrorKind::kMalformedRecord, path.string() + ":" + std::to_string(line_no) + ": expected an object");
    }
  }
  return rows;
}

std::unique_ptr<Embedder> embedder_for_bank(RunConfig& c, const KnowledgeBank& bank, std::ostream& err) {
  if (!c.embedder_dim_explicit) c.embedder.dim = bank.dim();
  auto embedder = make_embedder(c.embedder, api_key_from_env());
  if (embedder->dim() != bank.dim()) {
    throw Error(ErrorKind::kDimensionMismatch, "embedder dim " + std::to_string(embedder->dim()) +
                                                   " does not match bank dim " + std::to_string(bank.dim()));
  }
  if (!bank.embedder_tag().empty() && bank.embedder_tag() != embedder->tag()) {
    err << "warning: bank was built with '" << bank.embedder_tag() << "' but querying with '" << embedder->tag()
        << "'\n";
  }
  return embedder;
}

int cmd_build_bank(const Flags& f, std::ostream& out, std::ostream&) {
  RunConfig c = resolve(f);
  require_input(c.corpus_path, "corpus path (--corpus)");
  if (c.bank_path.empty()) c.bank_path = c.out_path;
  if (c.bank_path.empty()) throw UsageError("missing bank output path (--bank or --out)");
  const auto paragraphs = ingest_corpus(c.corpus_path);
  const auto embedder = make_embedder(c.embedder, api_key_from_env());
  const auto bank = build_bank(paragraphs, *embedder);
  save_bank(bank, c.bank_path);
  out << bank.size() << " entries, dim " << bank.dim() << "\n";
  return kExitOk;
}

int cmd_retrieve(const Flags& f, std::ostream& out, std::ostream& err) {
  RunConfig c = resolve(f);
  require_input(c.bank_path, "bank path (--bank)");
  if (f.text.has_value() == f.file.has_value()) throw UsageError("retrieve needs exactly one of --text or --file");
  const auto bank = load_bank(c.bank_path);
  const auto embedder = embedder_for_bank(c, bank, err);

  std::vector<QueryItem> items;
  if (f.text) {
    items.push_back({json(), *f.text});
  } else {
    items = read_queries(require_input(*f.file, "query file (--file)"));
  }

  std::string buffer;
  for (const auto& item : items) {
    for (const auto& hit : bank.knn(embedder->embed(item.query), c.pipeline.k)) {
      json line = {{"rank", hit.rank},
                   {"id", hit.paragraph_id},
                   {"title", bank.find(hit.paragraph_id).title},
                   {"distance", hit.distance}};
      if (f.file) line["query_id"] = item.id;
      buffer += line.dump() + "\n";
    }
  }
  emit(c.out_path, buffer, out);
  return kExitOk;
}

int cmd_pipeline(const Flags& f, std::ostream& out, std::ostream& err) {
  RunConfig c = resolve(f);
  require_input(c.bank_path, "bank path (--bank)");
  require_input(c.queries_path, "query file (--queries)");
  const auto bank = load_bank(c.bank_path);
  const auto embedder = embedder_for_bank(c, bank, err);
  const auto key = api_key_from_env();
  const auto draft = make_gateway(c.draft, key);
  const auto reviser = make_gateway(c.reviser, key);
  const auto queries = read_queries(c.queries_path);

  const auto records = run_batch(queries, bank, *embedder, Gateways{draft, reviser}, c.pipeline, c.concurrency);
  std::string buffer;
  std::size_t failed = 0;
  for (const auto& r : records) {
    buffer += to_json(r).dump() + "\n";
    if (!r.ok()) {
      ++failed;
      err << "query " << r.id.dump() << " failed: " << *r.error << "\n";
    }
  }
  emit(c.out_path, buffer, out);
  if (failed > 0) {
    err << failed << " of " << records.size() << " queries failed\n";
    return kExitFailure;
  }
  return kExitOk;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) {
    if (ch == '"') q += '"';
    q += ch;
  }
  return q + "\"";
}

int cmd_eval(const Flags& f, std::ostream& out, std::ostream& err) {
  RunConfig c = resolve(f);
  require_input(c.gold_path, "gold file (--gold)");
  require_input(c.predictions_path, "prediction file (--predictions)");
  if (c.eval_round == 0) throw UsageError("--round must be >= 1");

  const auto gold_rows = read_jsonl(c.gold_path);
  if (gold_rows.empty()) throw Error(ErrorKind::kEmptyCorpus, "gold file '" + c.gold_path.string() + "' is empty");
  std::map<std::string, json> predictions;
  for (auto& row : read_jsonl(c.predictions_path)) {
    if (!row.contains("id")) throw Error(ErrorKind::kMalformedRecord, "prediction record without \"id\"");
    predictions.emplace(row["id"].dump(), std::move(row));
  }

  std::vector<EvalExample> title_examples;
  std::vector<std::string> title_answers;
  std::vector<RankedRun> runs;
  std::vector<std::string> gold_options, predicted_options;
  std::size_t failed = 0;

  for (const auto& g : gold_rows) {
    if (!g.contains("id")) throw Error(ErrorKind::kMalformedRecord, "gold record without \"id\"");
    auto it = predictions.find(g["id"].dump());
    if (it == predictions.end()) {
      throw Error(ErrorKind::kConsistency, "no prediction for gold id " + g["id"].dump());
    }
    const json& p = it->second;
    const bool ok = p.value("status", "ok") == "ok";
    if (!ok) ++failed;

    std::string answer;
    if (ok && p.contains("final") && p["final"].is_string()) {
      answer = p["final"].get<std::string>();
    } else if (ok && p.contains("answer") && p["answer"].is_string()) {
      answer = p["answer"].get<std::string>();
    }

    if (g.contains("gold_titles")) {
      EvalExample ex;
      ex.id = g["id"];
      ex.query = g.value("query", "");
      ex.gold_titles = g["gold_titles"].get<std::set<std::string>>();
      title_examples.push_back(std::move(ex));
      title_answers.push_back(answer);
    }
    if (g.contains("relevant_ids")) {
      RankedRun run;
      run.query_id = g["id"];
      for (const auto& id : g["relevant_ids"]) run.relevant_ids.insert(id.get<CandidateId>());
      if (p.contains("ranked_ids")) {
        run.ranked_ids = p["ranked_ids"].get<std::vector<CandidateId>>();
      } else if (ok && p.contains("iterations") && p["iterations"].size() >= c.eval_round) {
        for (const auto& e : p["iterations"][c.eval_round - 1]["evidence"]) run.ranked_ids.push_back(e["id"].get<CandidateId>());
      }
      runs.push_back(std::move(run));
    }
    if (g.contains("gold_answer")) {
      gold_options.push_back(g["gold_answer"].get<std::string>());
      predicted_options.push_back(answer);
    }
  }

  MetricsReport report;
  report.n_examples = gold_rows.size();
  std::vector<ExampleScore> per_example;
  if (!title_examples.empty()) {
    fs::path catalog_path = c.catalog_path;
    if (catalog_path.empty() && !c.bank_path.empty()) catalog_path = sidecar_path(c.bank_path);
    require_input(catalog_path, "title catalog (--catalog or --bank)");
    std::set<std::string> titles;
    for (const auto& para : ingest_corpus(catalog_path)) titles.insert(para.title);
    const TitleCatalog catalog(titles, c.title_match);
    report.titles = micro_f1(title_examples, title_answers, catalog, &per_example);
  }
  if (!runs.empty()) {
    for (auto k : c.ks) {
      report.recall_at_k[k] = recall_at_k(runs, k);
      report.precision_at_k[k] = mean_precision_at_k(runs, k);
    }
    report.map_score = mean_average_precision(runs);
  }
  if (!gold_options.empty()) report.accuracy = exact_match_accuracy(gold_options, predicted_options);

  json doc = to_json(report);
  doc["config"] = {{"ks", c.ks},
                   {"title_match", c.title_match == TitleMatch::kRaw ? "raw" : "normalized"},
                   {"round", c.eval_round},
                   {"failed_predictions", failed}};
  emit(c.out_path, doc.dump(2) + "\n", out);

  if (!c.csv_path.empty()) {
    std::string csv = "id,gold_titles,predicted_titles,true_positives\n";
    for (std::size_t i = 0; i < per_example.size(); ++i) {
      std::string gold_joined, pred_joined;
      for (const auto& t : title_examples[i].gold_titles) gold_joined += (gold_joined.empty() ? "" : ";") + t;
      for (const auto& t : per_example[i].predicted) pred_joined += (pred_joined.empty() ? "" : ";") + t;
      const std::string id = title_examples[i].id.is_string() ? title_examples[i].id.get<std::string>()
                                                              : title_examples[i].id.dump();
      csv += csv_field(id) + "," + csv_field(gold_joined) + "," + csv_field(pred_joined) + "," +
             std::to_string(per_example[i].true_positives) + "\n";
    }
    emit(c.csv_path, csv, out);
  }

  if (failed > 0) {
    err << failed << " of " << gold_rows.size() << " prediction records failed\n";
    return kExitFailure;
  }
  return kExitOk;
}

int cmd_ablate(const Flags& f, std::ostream& out, std::ostream& err) {
  RunConfig c = resolve(f);
  require_input(c.bank_path, "bank path (--bank)");
  require_input(c.queries_path, "query file (--queries)");
  require_input(c.gold_path, "gold file (--gold)");
  const std::size_t max_k = f.k.value_or(10);

  const auto bank = load_bank(c.bank_path);
  const auto embedder = embedder_for_bank(c, bank, err);
  const auto draft = make_gateway(c.draft, api_key_from_env());

  std::map<std::string, json> gold;
  for (auto& row : read_jsonl(c.gold_path)) {
    if (!row.contains("id")) throw Error(ErrorKind::kMalformedRecord, "gold record without \"id\"");
    gold.emplace(row["id"].dump(), std::move(row));
  }
  std::vector<AblationQuery> queries;
  for (auto& q : read_queries(c.queries_path)) {
    auto it = gold.find(q.id.dump());
    if (it == gold.end()) throw Error(ErrorKind::kConsistency, "no gold entry for query id " + q.id.dump());
    AblationQuery aq{q.id, q.query, {}};
    if (it->second.contains("relevant_ids")) {
      for (const auto& id : it->second["relevant_ids"]) aq.relevant_ids.insert(id.get<CandidateId>());
    } else if (it->second.contains("gold_titles")) {
      aq.relevant_ids = ids_for_titles(bank, it->second["gold_titles"].get<std::set<std::string>>());
    }
    queries.push_back(std::move(aq));
  }

  const auto result = run_ablation(queries, bank, *embedder, draft, max_k, c.concurrency);
  const json doc = to_json(result);
  if (c.out_path.empty()) {
    out << doc.dump(2) << "\n";
  } else {
    emit(c.out_path, doc.dump(2) + "\n", out);
    std::ostringstream table;
    table << "k\tquery_based\tanswer_based\n";
    for (std::size_t k = 1; k <= max_k && k <= result.query_based.recall_at_k.size(); ++k) {
      table << k << "\t" << result.query_based.recall_at_k[k - 1] << "\t" << result.answer_based.recall_at_k[k - 1]
            << "\n";
    }
    out << table.str();
  }
  if (!c.csv_path.empty()) {
    std::ostringstream csv;
    csv << "k,query_based_recall,answer_based_recall,query_based_precision,answer_based_precision\n";
    for (std::size_t k = 1; k <= result.query_based.recall_at_k.size(); ++k) {
      csv << k << "," << result.query_based.recall_at_k[k - 1] << "," << result.answer_based.recall_at_k[k - 1] << ","
          << result.query_based.precision_at_k[k - 1] << "," << result.answer_based.precision_at_k[k - 1] << "\n";
    }
    emit(c.csv_path, csv.str(), out);
  }
  for (const auto& [id, message] : result.failures) err << "query " << id.dump() << " failed: " << message << "\n";
  if (!result.failures.empty()) {
    err << result.failures.size() << " of " << queries.size() << " queries failed\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"adapt-retrieve-revise toolkit", args.empty() ? "arr" : args.front()};
  app.require_subcommand(1);

  Flags flags;
  auto* build = app.add_subcommand("build-bank", "Embed a JSONL corpus into a knowledge bank");
  add_common(*build, flags);
  build->add_option("--corpus", flags.corpus, "Corpus JSONL");

  auto* retrieve = app.add_subcommand("retrieve", "Print the k nearest paragraphs for text");
  add_common(*retrieve, flags);
  retrieve->add_option("--text", flags.text, "Query text");
  retrieve->add_option("--file", flags.file, "Query JSONL ({\"id\", \"query\"})");

  auto* pipeline = app.add_subcommand("pipeline", "Draft, retrieve and revise every query");
  add_common(*pipeline, flags);
  pipeline->add_option("--queries", flags.queries, "Query JSONL");

  auto* eval = app.add_subcommand("eval", "Score predictions against a gold file");
  add_common(*eval, flags);
  eval->add_option("--gold", flags.gold, "Gold JSONL");
  eval->add_option("--predictions", flags.predictions, "Prediction JSONL (pipeline output)");
  eval->add_option("--catalog", flags.catalog, "Corpus JSONL whose titles form the catalog");
  eval->add_option("--csv", flags.csv, "Per-example CSV output");
  eval->add_option("--ks", flags.ks, "Comma-separated k values");
  eval->add_option("--title-match", flags.title_match, "normalized or raw");
  eval->add_option("--round", flags.round, "Revision round whose evidence is scored (1-based)");

  auto* ablate = app.add_subcommand("ablate", "Compare query-based and answer-based retrieval");
  add_common(*ablate, flags);
  ablate->add_option("--queries", flags.queries, "Query JSONL");
  ablate->add_option("--gold", flags.gold, "Gold JSONL (relevant_ids or gold_titles)");
  ablate->add_option("--csv", flags.csv, "Recall/precision table as CSV");

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (build->parsed()) return cmd_build_bank(flags, out, err);
    if (retrieve->parsed()) return cmd_retrieve(flags, out, err);
    if (pipeline->parsed()) return cmd_pipeline(flags, out, err);
    if (eval->parsed()) return cmd_eval(flags, out, err);
    if (ablate->parsed()) return cmd_ablate(flags, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error [" << to_string(e.kind()) << "]: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace arr::cli
