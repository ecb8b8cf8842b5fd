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

#include "softprompt/toydata.hpp"

#include <cstdio>
#include <fstream>
#include <random>

#include "softprompt/errors.hpp"
#include "softprompt/rng.hpp"

namespace softprompt {

namespace {

constexpr std::uint64_t kStreamCorpus = 11;
constexpr std::uint64_t kStreamTriplets = 12;
constexpr std::uint64_t kStreamDev = 13;
constexpr std::uint64_t kStreamTest = 14;
constexpr std::uint64_t kStreamDense = 15;

class Generator {
 public:
  Generator(const ToyDataConfig& config, std::uint64_t stream)
      : cfg_(config), gen_(rng::derive({config.seed, stream})) {}

  std::string sentence(std::size_t cluster) {
    std::vector<std::size_t> topic(cfg_.cluster_words);
    for (std::size_t i = 0; i < topic.size(); ++i) topic[i] = i;
    rng::shuffle(topic, gen_);
    std::vector<std::string> words;
    for (std::size_t i = 0; i < cfg_.topic_words; ++i)
      words.push_back("t" + std::to_string(cluster) + "_" + std::to_string(topic[i]));
    const std::size_t fill = cfg_.min_fill + index(cfg_.max_fill - cfg_.min_fill + 1);
    for (std::size_t i = 0; i < fill; ++i) words.push_back("f" + std::to_string(index(cfg_.fillers)));
    rng::shuffle(words, gen_);
    std::string out;
    for (const std::string& w : words) {
      if (!out.empty()) out += ' ';
      out += w;
    }
    return out;
  }

  std::size_t index(std::size_t n) { return rng::uniform_index(gen_, n); }

  // Two distinct clusters.
  std::pair<std::size_t, std::size_t> distinct_pair() {
    const std::size_t a = index(cfg_.clusters);
    std::size_t b = index(cfg_.clusters - 1);
    if (b >= a) ++b;
    return {a, b};
  }

  std::vector<ScoredPair> split() {
    std::vector<ScoredPair> out;
    for (std::size_t i = 0; i < cfg_.pairs_per_split / 2; ++i) {
      const std::size_t c = index(cfg_.clusters);
      out.push_back({sentence(c), sentence(c), 5.0});
      const auto [a, b] = distinct_pair();
      out.push_back({sentence(a), sentence(b), 0.0});
    }
    return out;
  }

 private:
  const ToyDataConfig& cfg_;
  std::mt19937_64 gen_;
};

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IngestionError("cannot write " + path.string());
  return out;
}

std::string score_text(double score) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", score);
  return buf;
}

}  // namespace

void ToyDataConfig::validate() const {
  if (clusters < 2 || clusters % 2 != 0) throw ConfigError("clusters must be an even number >= 2");
  if (topic_words == 0 || topic_words > cluster_words)
    throw ConfigError("topic_words must lie in [1, cluster_words]");
  if (min_fill > max_fill) throw ConfigError("min_fill exceeds max_fill");
  if (max_fill > 0 && fillers == 0) throw ConfigError("filler tokens requested but fillers == 0");
  if (topic_words + max_fill + 2 > kDefaultMaxLength)
    throw ConfigError("sentences could exceed the default max length");
  if (dense_items == 0) throw ConfigError("dense_items must be positive");
}

std::size_t partner_cluster(std::size_t cluster) { return cluster ^ 1U; }

ToyDataset make_toy_dataset(const ToyDataConfig& config) {
  config.validate();
  ToyDataset data;

  Generator corpus(config, kStreamCorpus);
  for (std::size_t c = 0; c < config.clusters; ++c)
    for (std::size_t i = 0; i < config.sentences_per_cluster; ++i) {
      data.corpus.push_back(corpus.sentence(c));
      data.corpus_clusters.push_back(c);
    }

  Generator triplets(config, kStreamTriplets);
  for (std::size_t i = 0; i < config.triplets; ++i) {
    const std::size_t c = triplets.index(config.clusters);
    data.triplets.push_back(
        {triplets.sentence(c), triplets.sentence(c), triplets.sentence(partner_cluster(c))});
    data.triplet_clusters.push_back(c);
  }

  data.dev = Generator(config, kStreamDev).split();
  data.test = Generator(config, kStreamTest).split();

  // Each query is rated against a paraphrase (5), its partner cluster (1) and
  // unrelated clusters (0); the item kind per slot is drawn at random.
  Generator dense(config, kStreamDense);
  for (std::size_t q = 0; q < config.dense_queries; ++q) {
    const std::size_t c = dense.index(config.clusters);
    const std::string query = dense.sentence(c);
    for (std::size_t i = 0; i < config.dense_items; ++i) {
      const std::size_t kind = dense.index(3);
      std::size_t other = c;
      double gold = 5.0;
      if (kind == 1) {
        other = partner_cluster(c);
        gold = 1.0;
      } else if (kind == 2) {
        other = dense.index(config.clusters - 1);
        if (other >= c) ++other;
        gold = other == partner_cluster(c) ? 1.0 : 0.0;
      }
      data.dense.push_back({"q" + std::to_string(q), "i" + std::to_string(i), gold, query,
                            dense.sentence(other)});
    }
  }
  return data;
}

void write_toy_dataset(const ToyDataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    auto out = open_for_write(dir / "corpus.txt");
    for (const std::string& s : data.corpus) out << s << '\n';
  }
  {
    auto out = open_for_write(dir / "triplets.tsv");
    for (const TripletRecord& t : data.triplets)
      out << t.premise << '\t' << t.entailment << '\t' << t.contradiction << '\n';
  }
  for (const auto& [name, pairs] : {std::pair{"sts_dev.tsv", &data.dev}, std::pair{"sts_test.tsv", &data.test}}) {
    auto out = open_for_write(dir / name);
    for (const ScoredPair& p : *pairs)
      out << score_text(p.score) << '\t' << p.sentence_a << '\t' << p.sentence_b << '\n';
  }
  {
    auto out = open_for_write(dir / "dense.tsv");
    for (const DenseRating& r : data.dense)
      out << r.query_id << '\t' << r.item_id << '\t' << score_text(r.score) << '\t' << r.sentence_a
          << '\t' << r.sentence_b << '\n';
  }
}

}  // namespace softprompt
