// Copyright 2026 The lunatc Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// End-to-end runs of the command-line tool on the bundled benchmark with the
// small smoke settings.

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "lunatc/baselines.hpp"
#include "lunatc/config.hpp"
#include "lunatc/corpus.hpp"
#include "lunatc/env.hpp"
#include "lunatc/io.hpp"
#include "lunatc/oracle.hpp"

namespace lunatc {
namespace {

namespace fs = std::filesystem;

const fs::path kSmoke = fs::path(LUNATC_TEST_DATA_DIR) / "smoke.config";

int run(const std::string& args) {
  const std::string cmd = std::string(LUNATC_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p =
      fs::temp_directory_path() / ("lunatc_cli_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) { return io::read_file(p); }

// Every command of the pipeline, in order.
std::vector<std::string> pipeline() {
  return {"train-oracle",
          "prepare",
          "train-policy",
          "train-policy --method genfooler-tf",
          "attack",
          "attack --method genfooler-tf",
          "baseline",
          "baseline --method greedy-tf",
          "evaluate",
          "report",
          "sweep --method lunatc"};
}

void run_pipeline(const fs::path& out) {
  for (const auto& step : pipeline()) {
    ASSERT_EQ(run(step + " --config " + kSmoke.string() + " --out " + out.string()), 0) << step;
  }
}

class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    out_ = new fs::path(scratch_dir("main"));
    run_pipeline(*out_);
  }
  static void TearDownTestSuite() {
    fs::remove_all(*out_);
    delete out_;
  }
  static fs::path* out_;
};
fs::path* Pipeline::out_ = nullptr;

TEST_F(Pipeline, WritesEveryArtifactWithAFrozenConfig) {
  const fs::path& o = *out_;
  for (const char* rel :
       {"oracle.json", "split.jsonl", "policies/lunatc-seed0.json", "policies/lunatc-seed1.json",
        "policies/lunatc-seed0.train_log.csv", "policies/genfooler-tf-seed0.json",
        "outcomes/lunatc-seed1.jsonl", "outcomes/genfooler-tf-seed1.jsonl",
        "outcomes/simple-search-seed2.jsonl", "outcomes/greedy-tf-seed0.jsonl",
        "eval/eval.csv", "eval/access.csv", "eval/curves.csv", "report/report.csv",
        "report/success_vs_threshold.svg", "eval/sweep-lunatc.csv",
        "report/training_size-lunatc.svg"}) {
    EXPECT_TRUE(fs::exists(o / rel)) << rel;
  }
  for (const char* rel : {"oracle.config", "split.config", "policies/lunatc-seed0.config",
                          "outcomes/greedy-tf-seed0.config", "eval/eval.config",
                          "report/report.config"}) {
    ASSERT_TRUE(fs::exists(o / rel)) << rel;
  }
  const auto frozen = Config::parse(slurp(o / "outcomes/lunatc-seed1.config"));
  EXPECT_EQ(frozen.values().at("run.command"), "attack");
  EXPECT_EQ(frozen.values().at("run.method"), "lunatc");
  EXPECT_EQ(frozen.values().at("seed"), "1");
  EXPECT_EQ(frozen.values().at("agent.num_rounds"), "60");
  EXPECT_EQ(frozen.values().at("synonym.word_threshold"), "0.7");
}

TEST_F(Pipeline, TableHeaders) {
  const auto first_line = [](const std::string& s) { return s.substr(0, s.find('\n')); };
  EXPECT_EQ(first_line(slurp(*out_ / "eval/eval.csv")),
            "method,seed,threshold,success_rate,mean_similarity,mean_label_queries,"
            "mean_logit_queries,n_texts");
  EXPECT_EQ(first_line(slurp(*out_ / "policies/lunatc-seed0.train_log.csv")),
            "round,text_id,cum_reward,success,epsilon,loss_mean");
  std::istringstream in(slurp(*out_ / "outcomes/lunatc-seed0.jsonl"));
  std::string line;
  ASSERT_TRUE(std::getline(in, line));
  const auto j = nlohmann::json::parse(line);
  for (const char* k : {"doc_id", "success", "similarity", "actions", "final_text",
                        "label_queries", "logit_queries", "method", "seed"}) {
    EXPECT_TRUE(j.contains(k)) << k;
  }
}

TEST_F(Pipeline, ReportMatchesGolden) {
  EXPECT_EQ(slurp(*out_ / "report/report.csv"),
            slurp(fs::path(LUNATC_TEST_DATA_DIR) / "smoke_report.csv"));
}

TEST_F(Pipeline, OutcomesLoadAndCoverTheTestSet) {
  const auto split = load_split(*out_ / "split.jsonl");
  const auto outcomes = load_outcomes(*out_ / "outcomes/simple-search-seed0.jsonl");
  EXPECT_EQ(outcomes.size(), std::min<std::size_t>(25, split.test.size()));
  for (const auto& o : outcomes) {
    EXPECT_EQ(o.method, "simple-search");
    if (!o.success) {
      EXPECT_EQ(o.score(), 0.0);
    }
  }
  for (const auto& o : load_outcomes(*out_ / "outcomes/lunatc-seed0.jsonl")) {
    EXPECT_EQ(o.ordering_queries.logit_queries, 0u);
  }
}

// The filter attack really does flip every training document.
TEST_F(Pipeline, TrainingTextsAreGreedyAttackable) {
  WordVectorStore store = load_vectors(fs::path(LUNATC_DATA_DIR) / "vectors.txt");
  auto embedder = std::make_shared<MeanVectorEmbedder>(store);
  SynonymConfig sc;
  sc.stopwords = load_stopwords(fs::path(LUNATC_DATA_DIR) / "stopwords.txt");
  SearchSpace space(store, *embedder, sc,
                    load_pos_lexicon(fs::path(LUNATC_DATA_DIR) / "pos_lexicon.txt"));
  ClassifierHandle oracle(std::make_shared<MlpClassifier>(
      nn::mlp_from_json(nlohmann::json::parse(slurp(*out_ / "oracle.json"))), embedder));
  const auto split = load_split(*out_ / "split.jsonl");
  ASSERT_FALSE(split.train.empty());
  ASSERT_FALSE(split.test.empty());
  for (const auto& s : split.train) {
    const auto t = tokenize(s.doc);
    EXPECT_EQ(oracle.predict_label(t), 1u) << s.doc.id;
    EXPECT_TRUE(per_text_greedy_attack(t, oracle, space, tf_importance()).success) << s.doc.id;
  }
}

TEST_F(Pipeline, FrozenConfigReproducesTheArtifact) {
  const auto again = scratch_dir("frozen");
  ASSERT_EQ(run("train-oracle --config " + (*out_ / "oracle.config").string() + " --out " +
                again.string()),
            0);
  EXPECT_EQ(slurp(again / "oracle.json"), slurp(*out_ / "oracle.json"));
  fs::remove_all(again);
}

// Identical config and seeds give identical bytes in every output file.
TEST_F(Pipeline, RerunIsByteIdentical) {
  const auto again = scratch_dir("rerun");
  run_pipeline(again);
  std::size_t compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(*out_)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), *out_);
    ASSERT_TRUE(fs::exists(again / rel)) << rel;
    EXPECT_EQ(slurp(e.path()), slurp(again / rel)) << rel;
    ++compared;
  }
  EXPECT_GT(compared, 20u);
  fs::remove_all(again);
}

TEST(ExitCodes, UnknownMethod) {
  const auto out = scratch_dir("nosuch");
  EXPECT_EQ(run("attack --method nosuch --config " + kSmoke.string() + " --out " + out.string()),
            3);
  EXPECT_EQ(run("baseline --method lunatc --config " + kSmoke.string() + " --out " +
                out.string()),
            3);
  fs::remove_all(out);
}

TEST(ExitCodes, MissingArtifacts) {
  const auto out = scratch_dir("missing");
  EXPECT_EQ(run("prepare --config " + kSmoke.string() + " --out " + out.string()), 4);
  ASSERT_EQ(run("train-oracle --config " + kSmoke.string() + " --out " + out.string()), 0);
  EXPECT_EQ(run("train-policy --config " + kSmoke.string() + " --out " + out.string()), 4);
  EXPECT_EQ(run("evaluate --config " + kSmoke.string() + " --out " + out.string()), 4);
  fs::remove_all(out);
}

TEST(ExitCodes, BadConfigs) {
  const auto dir = scratch_dir("configs");
  const std::string base = slurp(kSmoke);
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream(dir / name) << text;
    return (dir / name).string();
  };
  // Paths in the copies must still resolve: point them at the data directory.
  std::string fixed = base;
  for (std::size_t p; (p = fixed.find("../../data/")) != std::string::npos;) {
    fixed.replace(p, 11, std::string(LUNATC_DATA_DIR) + "/");
  }
  const std::string out = " --out " + (dir / "out").string();
  std::string no_vectors = fixed;
  no_vectors.replace(no_vectors.find("vectors.txt"), 11, "nothere.txt");
  EXPECT_EQ(run("train-oracle --config " + write("a.config", no_vectors) + out), 2);
  EXPECT_EQ(run("train-oracle --config " + write("b.config", fixed + "agent.lrr = 1\n") + out), 2);
  EXPECT_EQ(run("train-oracle --config " + write("c.config", fixed + "garbage line\n") + out), 2);
  EXPECT_EQ(run("train-oracle --config " + write("d.config", fixed + "agent.gamma = 2\n") + out),
            2);
  EXPECT_EQ(run("train-oracle --config " + (dir / "none.config").string() + out), 2);
  EXPECT_EQ(run("train-oracle --config " + write("e.config", fixed) + out), 0);
  EXPECT_EQ(run(""), 2);
  fs::remove_all(dir);
}

TEST(ExitCodes, CorruptCheckpoint) {
  const auto out = scratch_dir("corrupt");
  std::ofstream(out / "oracle.json") << "{not json";
  EXPECT_EQ(run("prepare --config " + kSmoke.string() + " --out " + out.string()), 5);
  fs::remove_all(out);
}

}  // namespace
}  // namespace lunatc
