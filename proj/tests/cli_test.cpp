// Copyright 2026 The softprompt Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "cli.hpp"
#include "doctest.h"
#include "softprompt/evalkit.hpp"
#include "softprompt/textio.hpp"

using namespace softprompt;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

// One small toy dataset shared by every case.
struct Workspace {
  fs::path root;

  Workspace() {
    root = fs::temp_directory_path() / ("softprompt_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(root);
    const Result r = invoke({"make-toy", "--out", (root / "toy").string(), "--clusters", "8",
                             "--per-cluster", "8", "--triplets", "64", "--pairs", "40",
                             "--dense-queries", "20"});
    REQUIRE(r.code == 0);
  }
  ~Workspace() { fs::remove_all(root); }

  std::string toy(const std::string& name) const { return (root / "toy" / name).string(); }
  std::string path(const std::string& name) const { return (root / name).string(); }

  Result train_unsup(const std::string& out, std::vector<std::string> extra = {}) const {
    std::vector<std::string> args = {"train-unsup", "--corpus", toy("corpus.txt"), "--dev",
                                     toy("sts_dev.tsv"), "--out", path(out), "--dim", "8",
                                     "--ffn-dim", "16", "--prompt-len", "2", "--batch-size", "8",
                                     "--eval-every", "3"};
    args.insert(args.end(), extra.begin(), extra.end());
    return invoke(args);
  }
};

Workspace& workspace() {
  static Workspace w;
  return w;
}

}  // namespace

TEST_CASE("make-toy reports the files it wrote") {
  const Workspace& w = workspace();
  for (const char* f : {"corpus.txt", "triplets.tsv", "sts_dev.tsv", "sts_test.tsv", "dense.tsv"})
    CHECK(fs::exists(w.toy(f)));
  CHECK(load_corpus(w.toy("corpus.txt")).size() == 64);
}

TEST_CASE("train-unsup twice with the same seed gives identical run directories") {
  const Workspace& w = workspace();
  REQUIRE(w.train_unsup("a").code == 0);
  REQUIRE(w.train_unsup("b").code == 0);
  for (const char* f : {"config.json", "runlog.jsonl", "best.ckpt", "final.ckpt"}) {
    CAPTURE(f);
    CHECK(slurp(w.path("a") + "/" + f) == slurp(w.path("b") + "/" + f));
  }
  REQUIRE(w.train_unsup("c", {"--seed", "7"}).code == 0);
  CHECK(slurp(w.path("a") + "/final.ckpt") != slurp(w.path("c") + "/final.ckpt"));
}

TEST_CASE("eval-sts prints one tab-separated row per file, x100 with two decimals") {
  const Workspace& w = workspace();
  REQUIRE(w.train_unsup("run").code == 0);
  const Result r = invoke({"eval-sts", "--ckpt", w.path("run/best.ckpt"), "--pairs",
                           w.toy("sts_dev.tsv"), w.toy("sts_test.tsv")});
  REQUIRE(r.code == 0);
  const std::regex shape(
      "dataset\tspearman\nsts_dev\t-?[0-9]+\\.[0-9]{2}\nsts_test\t-?[0-9]+\\.[0-9]{2}\n"
      "avg\t-?[0-9]+\\.[0-9]{2}\n");
  CHECK(std::regex_match(r.out, shape));

  const Checkpoint ck = load_checkpoint(w.path("run/best.ckpt"));
  const ScoredLists s = score_pairs(ck.state, ck.vocab, load_pairs(w.toy("sts_test.tsv")),
                                    ck.eval_head.value_or(true), kDefaultMaxLength);
  char expected[32];
  std::snprintf(expected, sizeof expected, "sts_test\t%.2f\n", spearman(s.gold, s.predicted) * 100);
  CHECK(r.out.find(expected) != std::string::npos);
}

TEST_CASE("embed output re-scores to the eval-sts Spearman") {
  const Workspace& w = workspace();
  REQUIRE(w.train_unsup("emb").code == 0);
  const std::vector<ScoredPair> pairs = load_pairs(w.toy("sts_test.tsv"));
  std::string lines;
  for (const ScoredPair& p : pairs) lines += p.sentence_a + "\n";
  for (const ScoredPair& p : pairs) lines += p.sentence_b + "\n";
  spit(w.path("both.txt"), lines);

  const std::vector<std::string> args = {"embed", "--ckpt", w.path("emb/best.ckpt"), "--corpus",
                                         w.path("both.txt"), "--out", w.path("e1.tsv")};
  REQUIRE(invoke(args).code == 0);
  std::vector<std::string> again = args;
  again.back() = w.path("e2.tsv");
  REQUIRE(invoke(again).code == 0);
  CHECK(slurp(w.path("e1.tsv")) == slurp(w.path("e2.tsv")));

  std::vector<std::vector<double>> rows;
  std::ifstream in(w.path("e1.tsv"));
  for (std::string line; std::getline(in, line);) {
    std::istringstream fields(line);
    std::size_t id = 0;
    fields >> id;
    CHECK(id == rows.size());
    std::vector<double> v;
    for (double x; fields >> x;) v.push_back(x);
    rows.push_back(v);
  }
  REQUIRE(rows.size() == 2 * pairs.size());
  std::vector<double> gold, predicted;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& a = rows[i];
    const auto& b = rows[i + pairs.size()];
    double dot = 0, na = 0, nb = 0;
    for (std::size_t j = 0; j < a.size(); ++j) {
      dot += a[j] * b[j];
      na += a[j] * a[j];
      nb += b[j] * b[j];
    }
    gold.push_back(pairs[i].score);
    predicted.push_back(dot / std::sqrt(na * nb));
  }

  const Checkpoint ck = load_checkpoint(w.path("emb/best.ckpt"));
  const ScoredLists direct =
      score_pairs(ck.state, ck.vocab, pairs, ck.eval_head.value_or(true), kDefaultMaxLength);
  CHECK(std::abs(spearman(gold, predicted) - spearman(direct.gold, direct.predicted)) < 1e-12);
}

TEST_CASE("config file values apply unless the command line sets them") {
  const Workspace& w = workspace();
  spit(w.path("cfg.ini"), "# toy settings\ntau = 0.1\nepochs = 2\nbatch_size = 16\n");
  REQUIRE(w.train_unsup("cfg1", {"--config", w.path("cfg.ini")}).code == 0);
  const std::string c1 = slurp(w.path("cfg1/config.json"));
  CHECK(c1.find("\"temperature\": 0.1") != std::string::npos);
  CHECK(c1.find("\"epochs\": 2") != std::string::npos);
  CHECK(c1.find("\"batch_size\": 8") != std::string::npos);

  REQUIRE(w.train_unsup("cfg2", {"--config", w.path("cfg.ini"), "--tau", "0.07"}).code == 0);
  const std::string c2 = slurp(w.path("cfg2/config.json"));
  CHECK(c2.find("\"temperature\": 0.07") != std::string::npos);
  CHECK(c2.find("\"epochs\": 2") != std::string::npos);

  spit(w.path("bad.ini"), "no_such_flag = 3\n");
  CHECK(w.train_unsup("cfg3", {"--config", w.path("bad.ini")}).code == cli::kExitValidation);
}

TEST_CASE("exit codes") {
  const Workspace& w = workspace();
  CHECK(invoke({}).code == cli::kExitValidation);
  const Result unknown = invoke({"eval-sts", "--bogus"});
  CHECK(unknown.code == cli::kExitValidation);
  CHECK_FALSE(unknown.err.empty());
  CHECK(invoke({"eval-sts", "--ckpt", w.path("missing.ckpt"), "--pairs", w.toy("sts_dev.tsv")}).code ==
        cli::kExitValidation);
  CHECK(w.train_unsup("bad_tau", {"--tau", "0"}).code == cli::kExitValidation);
  CHECK(invoke({"--help"}).code == cli::kExitOk);

  REQUIRE(w.train_unsup("rt").code == 0);
  spit(w.path("flat.tsv"), "3\ta b\tc d\n3\te f\tg h\n3\tt0_0\tt1_1\n");
  CHECK(invoke({"eval-sts", "--ckpt", w.path("rt/best.ckpt"), "--pairs", w.path("flat.tsv")}).code ==
        cli::kExitRuntime);
}

TEST_CASE("value lists expand progressions") {
  CHECK(cli::expand_values("1,4,8,16") == std::vector<std::string>{"1", "4", "8", "16"});
  CHECK(cli::expand_values("0,0.05,...,0.4") ==
        std::vector<std::string>{"0", "0.05", "0.1", "0.15", "0.2", "0.25", "0.3", "0.35", "0.4"});
  CHECK(cli::expand_values("multilayer, shared") == std::vector<std::string>{"multilayer", "shared"});
  CHECK_THROWS(cli::expand_values("0,...,1"));
  CHECK_THROWS(cli::expand_values("0,0.3,...,1"));
}

TEST_CASE("margin sweep emits a w/o row then one row per margin") {
  const Workspace& w = workspace();
  const Result r = invoke({"sweep", "--param", "margin", "--values", "0,0.2,...,0.4", "--triplets",
                           w.toy("triplets.tsv"), "--dev", w.toy("sts_dev.tsv"), "--test",
                           w.toy("sts_test.tsv"), "--dim", "8", "--ffn-dim", "16", "--prompt-len",
                           "2", "--batch-size", "16", "--epochs", "1"});
  REQUIRE(r.code == 0);
  const std::regex shape("m\tavg_sts\nw/o\t-?[0-9.]+\n0\t-?[0-9.]+\n0.2\t-?[0-9.]+\n0.4\t-?[0-9.]+\n");
  CHECK(std::regex_match(r.out, shape));
}
