// tests/test_cli.cpp

// Copyright 2026  The comoe Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "comoe/checkpoint.hpp"
#include "json.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "comoe");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Result r;
  r.code = comoe::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

// Small corpus and fast train configs shared by the tests below.
class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(comoe::testing::scratch_dir("cli"));
    write(*dir_ / "spec.txt",
          "vocab_size_cn = 6\nvocab_size_en = 6\nd_feat = 8\ntokens_min = 2\ntokens_max = 5\n"
          "train_counts = 12,12,12\ndev_counts = 5,5,5\ntest_counts = 6,6,6\nseed = 3\n");
    ASSERT_EQ(run({"gen-data", "--spec", (*dir_ / "spec.txt").string(), "--out", corpus()}).code, 0);
  }
  static void TearDownTestSuite() {
    fs::remove_all(*dir_);
    delete dir_;
  }

  static std::string corpus() { return (*dir_ / "corpus").string(); }
  static fs::path dir() { return *dir_; }

  // A train config with the given extra lines.
  static std::string train_config(const std::string& name, const std::string& extra) {
    const fs::path p = *dir_ / (name + ".cfg");
    write(p, "d_model = 16\nn_heads = 2\nd_ffn = 32\nnum_shared_layers = 1\nnum_moe_layers = 1\n"
             "batch_size = 4\nmax_steps = 6\nwarmup_steps = 2\n"
             "corpus_path = " + corpus() + "\ncheckpoint_path = " + (*dir_ / (name + ".ckpt")).string() +
                 "\nlog_path = " + (*dir_ / (name + ".jsonl")).string() + "\n" + extra);
    return p.string();
  }

  static fs::path* dir_;
};

fs::path* CliTest::dir_ = nullptr;

}  // namespace

TEST_F(CliTest, GenDataWritesSplitsDeterministically) {
  for (const char* f : {"train.jsonl", "dev.jsonl", "test.jsonl", "manifest.json"}) EXPECT_TRUE(fs::exists(fs::path(corpus()) / f));
  const std::string again = (dir() / "again").string();
  ASSERT_EQ(run({"gen-data", "--spec", (dir() / "spec.txt").string(), "--out", again}).code, 0);
  for (const char* f : {"train.jsonl", "dev.jsonl", "test.jsonl", "manifest.json"})
    EXPECT_EQ(slurp(fs::path(corpus()) / f), slurp(fs::path(again) / f)) << f;
}

TEST_F(CliTest, InvalidSpecNamesTheField) {
  write(dir() / "bad_spec.txt", "frames_per_token_min = 1\n");
  const Result r = run({"gen-data", "--spec", (dir() / "bad_spec.txt").string(), "--out", (dir() / "x").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("frames_per_token_min"), std::string::npos) << r.err;
}

TEST_F(CliTest, UsageErrorsExitOne) {
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"train"}).code, 1);
  EXPECT_EQ(run({"bogus"}).code, 1);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST_F(CliTest, TrainEvalRoundTrip) {
  const std::string cfg = train_config("collab", "");
  const Result t = run({"train", "--config", cfg});
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_EQ(count_lines(slurp(dir() / "collab.jsonl")), 6u);
  const auto log_line = nlohmann::json::parse(slurp(dir() / "collab.jsonl").substr(0, slurp(dir() / "collab.jsonl").find('\n')));
  EXPECT_TRUE(log_line.contains("routing"));
  EXPECT_TRUE(log_line.contains("lid_scale"));

  const Result e1 = run({"eval", "--checkpoint", (dir() / "collab.ckpt").string(), "--corpus", corpus()});
  const Result e2 = run({"eval", "--checkpoint", (dir() / "collab.ckpt").string(), "--corpus", corpus()});
  ASSERT_EQ(e1.code, 0) << e1.err;
  EXPECT_EQ(e1.out, e2.out);
  const auto report = nlohmann::json::parse(e1.out.substr(0, e1.out.find('\n')));
  EXPECT_EQ(report.at("utterances"), 18);
  EXPECT_FALSE(report.at("lid_accuracy").is_null());
}

TEST_F(CliTest, ResumeAppendsToTheLog) {
  const std::string cfg = train_config("resume", "");
  ASSERT_EQ(run({"train", "--config", cfg}).code, 0);
  fs::copy_file(dir() / "resume.ckpt", dir() / "resume_at6.ckpt");
  const std::string longer = train_config("resume", "max_steps = 9\n");
  // Rewriting the config changes max_steps only; the checkpoint must accept it.
  std::string text = slurp(longer);
  text.replace(text.find("max_steps = 6\n"), 14, "");
  write(longer, text);
  const Result r = run({"train", "--config", longer, "--resume", (dir() / "resume_at6.ckpt").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_lines(slurp(dir() / "resume.jsonl")), 9u);
  EXPECT_EQ(comoe::read_checkpoint(dir() / "resume.ckpt").state.at("step"), 9);
}

TEST_F(CliTest, EvalWithoutCsGroup) {
  const std::string cfg = train_config("nocs", "group_spec = 2,2,0\n");
  ASSERT_EQ(run({"train", "--config", cfg}).code, 0);
  const Result e = run({"eval", "--checkpoint", (dir() / "nocs.ckpt").string(), "--corpus", corpus()});
  EXPECT_EQ(e.code, 0) << e.err;
}

TEST_F(CliTest, VocabMismatchIsAStructuredError) {
  const std::string cfg = train_config("mismatch", "");
  ASSERT_EQ(run({"train", "--config", cfg}).code, 0);
  write(dir() / "spec7.txt", "vocab_size_cn = 7\nvocab_size_en = 6\nd_feat = 8\ntrain_counts = 3,3,3\nseed = 3\n");
  ASSERT_EQ(run({"gen-data", "--spec", (dir() / "spec7.txt").string(), "--out", (dir() / "c7").string()}).code, 0);
  const Result e = run({"eval", "--checkpoint", (dir() / "mismatch.ckpt").string(), "--corpus", (dir() / "c7").string()});
  EXPECT_EQ(e.code, 1);
  EXPECT_NE(e.err.find("vocab_size"), std::string::npos) << e.err;
  // A config that pins a different vocabulary is refused at train time too.
  const std::string pinned = train_config("pinned", "vocab_size = 30\n");
  EXPECT_EQ(run({"train", "--config", pinned}).code, 1);
}

TEST_F(CliTest, GradCheckExitCodes) {
  const Result ok = run({"grad-check"});
  EXPECT_EQ(ok.code, 0) << ok.out << ok.err;
  EXPECT_TRUE(nlohmann::json::parse(ok.out).at("pass").get<bool>());
  const Result bad = run({"grad-check", "--corrupt"});
  EXPECT_EQ(bad.code, 2);
  EXPECT_EQ(nlohmann::json::parse(bad.out).at("worst_parameter"), "ctc_head.bias");
}

TEST_F(CliTest, FlopsFullScale) {
  const Result r = run({"flops", "--full-scale"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::map<std::string, std::uint64_t> total;
  std::istringstream lines(r.out);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty() || line[0] != '{') continue;
    const auto j = nlohmann::json::parse(line);
    total[j.at("variant")] = j.at("flops_total");
  }
  ASSERT_EQ(total.size(), 5u);
  EXPECT_LT(total["baseline"], total["collaborative"]);
  EXPECT_LT(total["collaborative"], total["dense_moe"]);
  EXPECT_LT(total["dense_moe"], total["bi_encoder"]);
  EXPECT_EQ(run({"flops"}).code, 1);
}

TEST_F(CliTest, CompareEmitsOneRowPerConfigAndIsRepeatable) {
  const std::string a = train_config("cmp_collab", "");
  const std::string b = train_config("cmp_dense", "variant = dense_moe\n");
  const Result r1 = run({"compare", "--config", a, "--config", b, "--seeds", "1,2"});
  ASSERT_EQ(r1.code, 0) << r1.err;
  std::size_t json_lines = 0, collab_rows = 0, dense_rows = 0;
  std::istringstream lines(r1.out);
  std::string line;
  while (std::getline(lines, line)) {
    if (!line.empty() && line[0] == '{') {
      ++json_lines;
      continue;
    }
    if (line.rfind("cmp_collab", 0) == 0) ++collab_rows;
    if (line.rfind("cmp_dense", 0) == 0) ++dense_rows;
  }
  EXPECT_EQ(json_lines, 4u);  // configs x seeds
  // One row per config in the error table and one in the params/FLOPs table.
  EXPECT_EQ(collab_rows, 2u);
  EXPECT_EQ(dense_rows, 2u);
  EXPECT_EQ(run({"compare", "--config", a, "--config", b, "--seeds", "1,2"}).out, r1.out);
  // Compare never writes checkpoints.
  EXPECT_FALSE(fs::exists(dir() / "cmp_collab.ckpt"));
}
