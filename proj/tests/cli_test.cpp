#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "arr/cli.hpp"

namespace arr {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

const fs::path kFixtures = ARR_FIXTURES_DIR;

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    std::random_device rd;
    dir_ = fs::temp_directory_path() / ("arr_cli_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(std::vector<std::string> args) {
    args.insert(args.begin(), "arr");
    out_.str("");
    err_.str("");
    return cli::run(args, out_, err_);
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void write(const std::string& name, const std::string& content) const {
    std::ofstream(dir_ / name, std::ios::binary) << content;
  }

  std::vector<json> stdout_lines() const {
    std::vector<json> rows;
    std::istringstream in(out_.str());
    std::string line;
    while (std::getline(in, line)) rows.push_back(json::parse(line));
    return rows;
  }

  std::string build_fixture_bank() {
    EXPECT_EQ(run({"build-bank", "--corpus", (kFixtures / "corpus.jsonl").string(), "--bank", path("kb.bin")}), 0)
        << err_.str();
    return path("kb.bin");
  }

  fs::path dir_;
  std::ostringstream out_;
  std::ostringstream err_;
};

TEST_F(CliTest, NoSubcommandIsUsageError) { EXPECT_EQ(run({}), 2); }

TEST_F(CliTest, UnknownFlagIsUsageError) { EXPECT_EQ(run({"retrieve", "--bogus"}), 2); }

TEST_F(CliTest, MissingCorpusIsUsageError) {
  EXPECT_EQ(run({"build-bank", "--corpus", path("nope.jsonl"), "--bank", path("kb.bin")}), 2);
  EXPECT_NE(err_.str().find("does not exist"), std::string::npos);
}

TEST_F(CliTest, BadModeIsUsageError) {
  const auto bank = build_fixture_bank();
  EXPECT_EQ(run({"retrieve", "--bank", bank, "--text", "x", "--mode", "hybrid"}), 2);
}

TEST_F(CliTest, MalformedCorpusIsRuntimeError) {
  write("bad.jsonl", "{\"title\": \"a\", \"body\": \"b\"}\nnot json\n");
  EXPECT_EQ(run({"build-bank", "--corpus", path("bad.jsonl"), "--bank", path("kb.bin")}), 1);
  EXPECT_NE(err_.str().find(":2"), std::string::npos) << err_.str();
}

TEST_F(CliTest, BuildBankReportsSize) {
  std::string corpus;
  for (int i = 0; i < 100; ++i) {
    corpus += json{{"id", i}, {"title", "Article " + std::to_string(i)}, {"body", "clause text " + std::to_string(i * 7)}}
                  .dump() +
              "\n";
  }
  write("c.jsonl", corpus);
  EXPECT_EQ(run({"build-bank", "--corpus", path("c.jsonl"), "--out", path("kb.bin")}), 0) << err_.str();
  EXPECT_EQ(out_.str(), "100 entries, dim 64\n");
  EXPECT_TRUE(fs::exists(path("kb.bin.jsonl")));

  EXPECT_EQ(run({"retrieve", "--bank", path("kb.bin"), "--text", "Article 42\nclause text 294", "--k", "3"}), 0);
  const auto hits = stdout_lines();
  ASSERT_EQ(hits.size(), 3u);
  EXPECT_EQ(hits[0]["id"], 42);
  EXPECT_NEAR(hits[0]["distance"].get<double>(), 0.0, 1e-6);
  for (std::size_t i = 0; i < hits.size(); ++i) {
    EXPECT_EQ(hits[i]["rank"], i + 1);
    if (i > 0) EXPECT_LE(hits[i - 1]["distance"].get<double>(), hits[i]["distance"].get<double>());
  }
}

TEST_F(CliTest, RetrieveClampsK) {
  const auto bank = build_fixture_bank();
  EXPECT_EQ(run({"retrieve", "--bank", bank, "--text", "theft", "--k", "50"}), 0);
  EXPECT_EQ(stdout_lines().size(), 8u);
}

TEST_F(CliTest, RetrieveNeedsExactlyOneInput) {
  const auto bank = build_fixture_bank();
  EXPECT_EQ(run({"retrieve", "--bank", bank}), 2);
  EXPECT_EQ(run({"retrieve", "--bank", bank, "--text", "a", "--file", path("q.jsonl")}), 2);
}

TEST_F(CliTest, RetrieveFromFileTagsQueryIds) {
  const auto bank = build_fixture_bank();
  EXPECT_EQ(run({"retrieve", "--bank", bank, "--file", (kFixtures / "queries.jsonl").string(), "--k", "2"}), 0);
  const auto rows = stdout_lines();
  ASSERT_EQ(rows.size(), 10u);
  EXPECT_EQ(rows[0]["query_id"], "q1");
  EXPECT_EQ(rows[9]["query_id"], "q5");
}

TEST_F(CliTest, PipelineThenEval) {
  const auto bank = build_fixture_bank();
  const auto config = (kFixtures / "config.json").string();
  ASSERT_EQ(run({"pipeline", "--config", config, "--bank", bank, "--out", path("pred.jsonl")}), 0) << err_.str();

  std::ifstream in(path("pred.jsonl"));
  std::string line;
  std::vector<json> records;
  while (std::getline(in, line)) records.push_back(json::parse(line));
  ASSERT_EQ(records.size(), 5u);
  EXPECT_EQ(records[0]["id"], "q1");
  EXPECT_EQ(records[0]["status"], "ok");
  EXPECT_EQ(records[0]["iterations"].size(), 1u);
  EXPECT_EQ(records[0]["iterations"][0]["evidence"].size(), 3u);

  ASSERT_EQ(run({"eval", "--config", config, "--bank", bank, "--predictions", path("pred.jsonl"), "--csv",
                 path("per_example.csv")}),
            0)
      << err_.str();
  const auto report = json::parse(out_.str());
  // Four of five revisions cite the right title; q5 cites 264 instead of 266.
  EXPECT_EQ(report["true_positives"], 4);
  EXPECT_EQ(report["predicted_titles"], 5);
  EXPECT_EQ(report["gold_titles"], 6);
  EXPECT_TRUE(report.contains("recall_at_k"));
  EXPECT_TRUE(report.contains("map"));
  EXPECT_TRUE(fs::exists(path("per_example.csv")));
}

TEST_F(CliTest, EvalFrozenF1) {
  write("catalog.jsonl",
        "{\"title\": \"Law A\", \"body\": \"a\"}\n{\"title\": \"Law B\", \"body\": \"b\"}\n"
        "{\"title\": \"Law C\", \"body\": \"c\"}\n{\"title\": \"Law D\", \"body\": \"d\"}\n");
  write("gold.jsonl", "{\"id\": 1, \"gold_titles\": [\"Law A\", \"Law B\"]}\n");
  write("pred.jsonl", "{\"id\": 1, \"answer\": \"Law A, Law C and Law D apply.\"}\n");
  ASSERT_EQ(run({"eval", "--gold", path("gold.jsonl"), "--predictions", path("pred.jsonl"), "--catalog",
                 path("catalog.jsonl")}),
            0)
      << err_.str();
  const auto report = json::parse(out_.str());
  EXPECT_NEAR(report["micro_precision"].get<double>(), 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(report["micro_recall"].get<double>(), 0.5, 1e-12);
  EXPECT_NEAR(report["micro_f1"].get<double>(), 0.4, 1e-12);
}

TEST_F(CliTest, EvalMissingPredictionIsError) {
  write("catalog.jsonl", "{\"title\": \"Law A\", \"body\": \"a\"}\n");
  write("gold.jsonl", "{\"id\": 1, \"gold_titles\": [\"Law A\"]}\n");
  write("pred.jsonl", "{\"id\": 2, \"answer\": \"Law A\"}\n");
  EXPECT_EQ(run({"eval", "--gold", path("gold.jsonl"), "--predictions", path("pred.jsonl"), "--catalog",
                 path("catalog.jsonl")}),
            1);
}

TEST_F(CliTest, FlagsOverrideConfigFile) {
  const auto bank = build_fixture_bank();
  const auto config = (kFixtures / "config.json").string();
  ASSERT_EQ(run({"pipeline", "--config", config, "--bank", bank, "--k", "1", "--iterations", "2", "--mode", "query"}),
            0)
      << err_.str();
  const auto rows = stdout_lines();
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0]["iterations"].size(), 2u);
  EXPECT_EQ(rows[0]["iterations"][0]["evidence"].size(), 1u);
  EXPECT_EQ(rows[0]["iterations"][0]["retrieval_text"], rows[0]["query"]);
}

TEST_F(CliTest, ConfigRejectsUnknownKeys) {
  write("cfg.json", "{\"embeder\": {}}");
  EXPECT_EQ(run({"retrieve", "--config", path("cfg.json"), "--text", "x"}), 1);
  EXPECT_NE(err_.str().find("embeder"), std::string::npos);
}

TEST_F(CliTest, PipelineFailureExitsNonzeroButWritesAll) {
  const auto bank = build_fixture_bank();
  write("q.jsonl", "{\"id\": 1, \"query\": \"bicycle\"}\n{\"id\": 2, \"query\": \"\"}\n");
  EXPECT_EQ(run({"pipeline", "--config", (kFixtures / "config.json").string(), "--bank", bank, "--queries",
                 path("q.jsonl")}),
            1);
  const auto rows = stdout_lines();
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0]["status"], "ok");
  EXPECT_EQ(rows[1]["status"], "failed");
}

TEST_F(CliTest, Ablate) {
  const auto bank = build_fixture_bank();
  ASSERT_EQ(run({"ablate", "--config", (kFixtures / "config.json").string(), "--bank", bank, "--k", "5"}), 0)
      << err_.str();
  const auto doc = json::parse(out_.str());
  EXPECT_EQ(doc["n_queries"], 5);
}

}  // namespace
}  // namespace arr
