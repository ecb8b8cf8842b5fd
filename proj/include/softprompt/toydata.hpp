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

// Synthetic paraphrase-cluster data for desk-scale training runs.
//
// Cluster c owns `cluster_words` topic tokens "t<c>_<i>". A sentence of
// cluster c draws `topic_words` of them without replacement, adds a random
// number of shared filler tokens, and is shuffled. Clusters 2c and 2c+1 are
// partners; triplet hard negatives come from the partner cluster.

#ifndef SOFTPROMPT_TOYDATA_HPP_
#define SOFTPROMPT_TOYDATA_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "softprompt/textio.hpp"

namespace softprompt {

struct ToyDataConfig {
  std::size_t clusters = 50;
  std::size_t cluster_words = 4;
  std::size_t topic_words = 4;
  std::size_t fillers = 3;
  std::size_t min_fill = 0;
  std::size_t max_fill = 14;
  std::size_t sentences_per_cluster = 40;
  std::size_t triplets = 2000;
  // Pairs per split; half within-cluster (gold 5), half cross-cluster (gold 0).
  std::size_t pairs_per_split = 500;
  std::size_t dense_queries = 200;
  std::size_t dense_items = 3;
  std::uint64_t seed = 42;

  void validate() const;
};

struct ToyDataset {
  std::vector<std::string> corpus;
  std::vector<std::size_t> corpus_clusters;
  std::vector<TripletRecord> triplets;
  std::vector<std::size_t> triplet_clusters;  // cluster of premise and entailment
  std::vector<ScoredPair> dev;
  std::vector<ScoredPair> test;
  std::vector<DenseRating> dense;
};

std::size_t partner_cluster(std::size_t cluster);

ToyDataset make_toy_dataset(const ToyDataConfig& config);

// corpus.txt, triplets.tsv, sts_dev.tsv, sts_test.tsv, dense.tsv
void write_toy_dataset(const ToyDataset& data, const std::filesystem::path& dir);

}  // namespace softprompt

#endif  // SOFTPROMPT_TOYDATA_HPP_
