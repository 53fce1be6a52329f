#include "arr/run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "arr/error.hpp"

namespace arr {

using json = nlohmann::json;

namespace {

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw Error(ErrorKind::kConfig, where + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw Error(ErrorKind::kConfig, "unknown config key '" + where + "." + key + "'");
  }
}

template <typename T>
void read(const json& obj, const char* key, T& target, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return;
  try {
    target = it->get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::kConfig, "config key '" + where + "." + key + "' has the wrong type");
  }
}

void read_path(const json& obj, const char* key, std::filesystem::path& target, const std::filesystem::path& base) {
  std::string value;
  read(obj, key, value, "config");
  if (value.empty()) return;
  std::filesystem::path p(value);
  target = p.is_absolute() ? p : base / p;
}

void read_gateway(const json& obj, GatewaySettings& g, const std::string& where) {
  check_keys(obj,
             {"backend", "base_url", "model_name", "max_input_tokens", "temperature", "max_output_tokens",
              "timeout_s", "max_retries", "initial_backoff_ms", "max_backoff_ms", "max_in_flight",
              "instruction_suffix", "rules", "default_response"},
             where);
  std::string backend;
  read(obj, "backend", backend, where);
  if (backend == "http") {
    g.backend = GatewaySettings::Backend::kHttp;
  } else if (backend == "scripted") {
    g.backend = GatewaySettings::Backend::kScripted;
  } else if (!backend.empty()) {
    throw Error(ErrorKind::kConfig, where + ".backend must be \"http\" or \"scripted\"");
  }
  auto& e = g.endpoint;
  read(obj, "base_url", e.base_url, where);
  read(obj, "model_name", e.model_name, where);
  read(obj, "max_input_tokens", e.max_input_tokens, where);
  read(obj, "temperature", e.temperature, where);
  if (obj.contains("max_output_tokens") && !obj["max_output_tokens"].is_null()) {
    std::size_t v = 0;
    read(obj, "max_output_tokens", v, where);
    e.max_output_tokens = v;
  }
  double timeout_s = static_cast<double>(e.timeout.count()) / 1000.0;
  read(obj, "timeout_s", timeout_s, where);
  e.timeout = std::chrono::milliseconds(static_cast<long long>(timeout_s * 1000.0));
  read(obj, "max_retries", e.retry.max_retries, where);
  long long backoff = e.retry.initial_backoff.count();
  read(obj, "initial_backoff_ms", backoff, where);
  e.retry.initial_backoff = std::chrono::milliseconds(backoff);
  backoff = e.retry.max_backoff.count();
  read(obj, "max_backoff_ms", backoff, where);
  e.retry.max_backoff = std::chrono::milliseconds(backoff);
  read(obj, "max_in_flight", e.max_in_flight, where);
  read(obj, "instruction_suffix", e.instruction_suffix, where);
  read(obj, "default_response", g.default_response, where);
  if (auto it = obj.find("rules"); it != obj.end()) {
    if (!it->is_array()) throw Error(ErrorKind::kConfig, where + ".rules must be an array");
    g.rules.clear();
    for (const auto& r : *it) {
      check_keys(r, {"pattern", "response"}, where + ".rules[]");
      ScriptedResponder::Rule rule;
      read(r, "pattern", rule.pattern, where + ".rules[]");
      read(r, "response", rule.response, where + ".rules[]");
      g.rules.push_back(std::move(rule));
    }
  }
}

}  // namespace

void apply_config_json(RunConfig& config, const json& doc, const std::filesystem::path& base_dir) {
  check_keys(doc,
             {"corpus_path", "bank_path", "queries_path", "gold_path", "predictions_path", "catalog_path",
              "out_path", "csv_path", "embedder", "draft", "reviser", "pipeline", "concurrency", "ks",
              "title_match", "eval_round"},
             "config");
  read_path(doc, "corpus_path", config.corpus_path, base_dir);
  read_path(doc, "bank_path", config.bank_path, base_dir);
  read_path(doc, "queries_path", config.queries_path, base_dir);
  read_path(doc, "gold_path", config.gold_path, base_dir);
  read_path(doc, "predictions_path", config.predictions_path, base_dir);
  read_path(doc, "catalog_path", config.catalog_path, base_dir);
  read_path(doc, "out_path", config.out_path, base_dir);
  read_path(doc, "csv_path", config.csv_path, base_dir);
  read(doc, "concurrency", config.concurrency, "config");
  read(doc, "ks", config.ks, "config");
  read(doc, "eval_round", config.eval_round, "config");

  std::string match;
  read(doc, "title_match", match, "config");
  if (match == "normalized") {
    config.title_match = TitleMatch::kNormalized;
  } else if (match == "raw") {
    config.title_match = TitleMatch::kRaw;
  } else if (!match.empty()) {
    throw Error(ErrorKind::kConfig, "config.title_match must be \"normalized\" or \"raw\"");
  }

  if (auto it = doc.find("embedder"); it != doc.end()) {
    const auto& e = *it;
    check_keys(e,
               {"backend", "dim", "normalize", "endpoint", "model", "batch_size", "max_concurrency", "timeout_s",
                "max_retries"},
               "embedder");
    auto& c = config.embedder;
    std::string backend;
    read(e, "backend", backend, "embedder");
    if (e.contains("dim")) {
      read(e, "dim", c.dim, "embedder");
      config.embedder_dim_explicit = true;
    }
    read(e, "normalize", c.normalize, "embedder");
    std::string endpoint;
    read(e, "endpoint", endpoint, "embedder");
    if (backend == "hash") {
      c.endpoint.reset();
    } else if (backend == "remote" || (backend.empty() && !endpoint.empty())) {
      if (endpoint.empty()) throw Error(ErrorKind::kConfig, "embedder.backend \"remote\" needs embedder.endpoint");
      c.endpoint = endpoint;
    } else if (!backend.empty()) {
      throw Error(ErrorKind::kConfig, "embedder.backend must be \"hash\" or \"remote\"");
    }
    read(e, "model", c.model, "embedder");
    read(e, "batch_size", c.batch_size, "embedder");
    read(e, "max_concurrency", c.max_concurrency, "embedder");
    double timeout_s = static_cast<double>(c.timeout.count()) / 1000.0;
    read(e, "timeout_s", timeout_s, "embedder");
    c.timeout = std::chrono::milliseconds(static_cast<long long>(timeout_s * 1000.0));
    read(e, "max_retries", c.retry.max_retries, "embedder");
  }
  if (auto it = doc.find("draft"); it != doc.end()) read_gateway(*it, config.draft, "draft");
  if (auto it = doc.find("reviser"); it != doc.end()) read_gateway(*it, config.reviser, "reviser");

  if (auto it = doc.find("pipeline"); it != doc.end()) {
    const auto& p = *it;
    check_keys(p, {"mode", "k", "iterations", "instruction", "token_budget"}, "pipeline");
    std::string mode;
    read(p, "mode", mode, "pipeline");
    if (!mode.empty()) config.pipeline.mode = parse_retrieval_mode(mode);
    read(p, "k", config.pipeline.k, "pipeline");
    read(p, "iterations", config.pipeline.iterations, "pipeline");
    read(p, "instruction", config.pipeline.instruction, "pipeline");
    if (p.contains("token_budget") && !p["token_budget"].is_null()) {
      std::size_t budget = 0;
      read(p, "token_budget", budget, "pipeline");
      config.pipeline.token_budget = budget;
    }
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open config '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::kConfig, "config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  RunConfig config;
  apply_config_json(config, doc, path.parent_path());
  return config;
}

ModelGateway make_gateway(const GatewaySettings& settings, std::optional<std::string> api_key) {
  if (settings.backend == GatewaySettings::Backend::kScripted) {
    return ModelGateway(settings.endpoint, std::make_shared<ScriptedResponder>(settings.rules, settings.default_response));
  }
  if (settings.endpoint.base_url.empty()) {
    throw Error(ErrorKind::kConfig, "http gateway needs base_url");
  }
  return make_http_gateway(settings.endpoint, std::move(api_key));
}

std::optional<std::string> api_key_from_env() {
  const char* key = std::getenv("ARR_API_KEY");
  if (key == nullptr || *key == '\0') return std::nullopt;
  return std::string(key);
}

}  // namespace arr
