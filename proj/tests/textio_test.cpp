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

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "softprompt/errors.hpp"
#include "softprompt/textio.hpp"

using namespace softprompt;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& content) {
  const fs::path dir = fs::temp_directory_path() / "softprompt_textio_test";
  fs::create_directories(dir);
  const fs::path p = dir / name;
  std::ofstream(p, std::ios::binary) << content;
  return p;
}

}  // namespace

TEST_CASE("build_vocab ranks by frequency then lexicographically") {
  const auto corpus = write_temp("ab.txt", "a b\na\n");
  Vocab v = build_vocab(corpus, 10);
  REQUIRE(v.size() == 6);
  CHECK(v.token(0) == "[PAD]");
  CHECK(v.token(3) == "[SEP]");
  CHECK(v.token(4) == "a");
  CHECK(v.token(5) == "b");

  const std::vector<std::string> ties{"zeta alpha Mid", "mid"};
  Vocab t = Vocab::build(ties, 100);
  CHECK(t.token(4) == "mid");  // count 2
  CHECK(t.token(5) == "alpha");
  CHECK(t.token(6) == "zeta");
}

TEST_CASE("vocab cap equal to the specials maps everything to [UNK]") {
  const auto corpus = write_temp("ab4.txt", "a b\na\n");
  Vocab v = build_vocab(corpus, 4);
  CHECK(v.size() == 4);
  auto s = tokenize("a b", v);
  CHECK(s.ids == std::vector<std::size_t>{kClsId, kUnkId, kUnkId, kSepId});
  CHECK_THROWS_AS(build_vocab(corpus, 3), ConfigError);
}

TEST_CASE("vocabulary rebuild is deterministic") {
  const auto corpus = write_temp("det.txt", "the cat sat\nthe dog ran\nA cat ran fast\n");
  CHECK(build_vocab(corpus, 50) == build_vocab(corpus, 50));
}

TEST_CASE("empty corpus is an ingestion error") {
  const auto corpus = write_temp("empty.txt", "\n  \n");
  CHECK_THROWS_AS(build_vocab(corpus, 10), IngestionError);
  CHECK_THROWS_AS(load_corpus(fs::temp_directory_path() / "definitely_missing_file.txt"),
                  IngestionError);
}

TEST_CASE("tokenize") {
  const std::vector<std::string> text{"a b c"};
  Vocab v = Vocab::build(text, 100);
  SUBCASE("basic") {
    auto s = tokenize("a b", v);
    CHECK(s.ids == std::vector<std::size_t>{kClsId, v.id_of("a"), v.id_of("b"), kSepId});
    CHECK(s.real_length() == 4);
  }
  SUBCASE("truncation keeps [SEP] last") {
    std::string long_text;
    for (int i = 0; i < 100; ++i) long_text += "a ";
    auto s = tokenize(long_text, v, 32);
    CHECK(s.length() == 32);
    CHECK(s.ids.front() == kClsId);
    CHECK(s.ids.back() == kSepId);
  }
  SUBCASE("unknown token") {
    auto s = tokenize("a zebra c", v);
    CHECK(s.ids[2] == kUnkId);
  }
  SUBCASE("empty text") {
    auto s = tokenize("", v);
    CHECK(s.ids == std::vector<std::size_t>{kClsId, kSepId});
  }
  SUBCASE("padding") {
    auto s = pad_to(tokenize("a", v), 6);
    CHECK(s.length() == 6);
    CHECK(s.real_length() == 3);
    CHECK(s.ids.back() == kPadId);
  }
}

TEST_CASE("tokenize then detokenize round-trips in-vocabulary text") {
  std::mt19937_64 gen(4);
  const std::vector<std::string> words{"alpha", "beta", "gamma", "delta", "eps", "zeta"};
  const std::vector<std::string> corpus{"alpha beta gamma delta eps zeta"};
  Vocab v = Vocab::build(corpus, 100);
  std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1), len(0, 20);
  for (int trial = 0; trial < 100; ++trial) {
    std::string text, normalised;
    const std::size_t n = len(gen);
    for (std::size_t i = 0; i < n; ++i) {
      const std::string& w = words[pick(gen)];
      text += (i % 3 == 0 ? "  " : " ") + w + (i % 4 == 0 ? "\t" : "");
      if (!normalised.empty()) normalised += " ";
      normalised += w;
    }
    CHECK(detokenize(tokenize(text, v, 64), v) == normalised);
  }
}

TEST_CASE("loaders") {
  SUBCASE("triplets") {
    auto p = write_temp("trip.tsv", "s0\ts1\tneg\nA b\tC d\te F\n");
    auto rows = load_triplets(p);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].premise == "s0");
    CHECK(rows[0].entailment == "s1");
    CHECK(rows[0].contradiction == "neg");
    CHECK(load_triplets(p).size() == rows.size());
  }
  SUBCASE("bad triplet line names its line number") {
    auto p = write_temp("bad.tsv", "s0\ts1\tneg\nbad\n");
    try {
      load_triplets(p);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
      CHECK(std::string(e.what()).find(":2:") != std::string::npos);
    }
  }
  SUBCASE("scored pairs") {
    auto p = write_temp("sts.tsv", "4.2\tA\tB\n0\tx y\tz\r\n");
    auto rows = load_pairs(p);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].score == 4.2);
    CHECK(rows[0].sentence_a == "A");
    CHECK(rows[0].sentence_b == "B");
    CHECK(rows[1].sentence_b == "z");
  }
  SUBCASE("score outside [0,5] is a validation error") {
    auto p = write_temp("sts_bad.tsv", "5.5\tA\tB\n");
    CHECK_THROWS_AS(load_pairs(p), ValidationError);
    auto q = write_temp("sts_nan.tsv", "high\tA\tB\n");
    CHECK_THROWS_AS(load_pairs(q), ParseError);
  }
  SUBCASE("dense ratings") {
    auto p = write_temp("dense.tsv", "q1\ti1\t3.5\ta\tb\nq1\ti2\t1\ta\tc\n");
    auto rows = load_dense_ratings(p);
    REQUIRE(rows.size() == 2);
    CHECK(rows[1].item_id == "i2");
    CHECK(rows[1].score == 1.0);
    CHECK_THROWS_AS(load_dense_ratings(write_temp("dense_bad.tsv", "q1\ti1\t3\ta\n")), ParseError);
  }
  SUBCASE("invalid utf-8 is rejected") {
    auto p = write_temp("latin1.txt", std::string("caf\xe9\n"));
    CHECK_THROWS_AS(load_corpus(p), ParseError);
    CHECK(is_valid_utf8("caf\xc3\xa9"));
    CHECK_FALSE(is_valid_utf8("\xc3"));
    CHECK_FALSE(is_valid_utf8("\xed\xa0\x80"));  // surrogate
  }
}
