#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "arr/embedder.hpp"
#include "arr/evaluation.hpp"
#include "arr/llm_gateway.hpp"
#include "arr/pipeline.hpp"

namespace arr {

struct GatewaySettings {
  enum class Backend { kHttp, kScripted };

  Backend backend = Backend::kHttp;
  ModelEndpointConfig endpoint;
  std::vector<ScriptedResponder::Rule> rules;
  std::string default_response;
};

/// Everything a CLI run needs. Resolution order: built-in defaults, then the
/// config file, then command-line flags.
struct RunConfig {
  std::filesystem::path corpus_path;
  std::filesystem::path bank_path;
  std::filesystem::path queries_path;
  std::filesystem::path gold_path;
  std::filesystem::path predictions_path;
  std::filesystem::path catalog_path;
  std::filesystem::path out_path;
  std::filesystem::path csv_path;

  EmbedderConfig embedder;
  // True once dim came from the file or a flag; otherwise a loaded bank's
  // dim is adopted.
  bool embedder_dim_explicit = false;
  GatewaySettings draft;
  GatewaySettings reviser;
  PipelineConfig pipeline;
  std::size_t concurrency = 4;
  std::vector<std::size_t> ks = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  TitleMatch title_match = TitleMatch::kNormalized;
  std::size_t eval_round = 1;
};

/// Applies a config document on top of `config`. Relative paths resolve
/// against base_dir. Unknown keys are rejected with kConfig.
void apply_config_json(RunConfig& config, const nlohmann::json& doc, const std::filesystem::path& base_dir);

RunConfig load_run_config(const std::filesystem::path& path);

ModelGateway make_gateway(const GatewaySettings& settings, std::optional<std::string> api_key);

// ARR_API_KEY from the environment, if set and nonempty.
std::optional<std::string> api_key_from_env();

}  // namespace arr
