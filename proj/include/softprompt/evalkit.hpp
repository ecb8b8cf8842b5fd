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

// Evaluation maths: rank correlation, query-subsampled bootstrap correlation,
// alignment / uniformity and per-band similarity histograms.

#ifndef SOFTPROMPT_EVALKIT_HPP_
#define SOFTPROMPT_EVALKIT_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "softprompt/encoder.hpp"
#include "softprompt/tensor.hpp"
#include "softprompt/textio.hpp"

namespace softprompt {

// Average ranks (1-based); tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

double pearson(std::span<const double> x, std::span<const double> y);

// Pearson correlation of average-rank vectors. DegenerateInputError when
// either side is constant.
double spearman(std::span<const double> x, std::span<const double> y);

// Eval-mode embeddings of raw texts as a detached [n x d] tensor.
Tensor embed_texts(const EncoderState& state, const Vocab& vocab,
                   std::span<const std::string> texts, bool use_head,
                   std::size_t max_length = kDefaultMaxLength, std::size_t chunk = 64);

// Row-wise cosine between two [n x d] embedding tables.
std::vector<double> paired_cosines(const Tensor& a, const Tensor& b);

struct ScoredLists {
  std::vector<double> gold;
  std::vector<double> predicted;
};

ScoredLists score_pairs(const EncoderState& state, const Vocab& vocab,
                        std::span<const ScoredPair> pairs, bool use_head,
                        std::size_t max_length = kDefaultMaxLength);

struct BootstrapConfig {
  std::size_t resamples = 1000;
  double query_fraction = 0.5;
  std::uint64_t seed = 42;
  // Redraws allowed per resample before giving up on a degenerate sample.
  std::size_t max_retries = 100;

  void validate() const;
};

struct BootstrapResult {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single resample
  std::vector<double> values;
};

// Bootstrap over queries given one predicted score per rating.
BootstrapResult bootstrap_spearman(std::span<const DenseRating> ratings,
                                   std::span<const double> predicted,
                                   const BootstrapConfig& config);

BootstrapResult bootstrap_spearman(const EncoderState& state, const Vocab& vocab,
                                   std::span<const DenseRating> ratings, bool use_head,
                                   const BootstrapConfig& config,
                                   std::size_t max_length = kDefaultMaxLength);

// Mean squared distance between normalised rows a_i and b_i.
double alignment(const Tensor& a, const Tensor& b);
// log mean over distinct pairs i < j of exp(-2 ||u_i - u_j||^2), rows normalised.
double uniformity(const Tensor& embeddings);

double alignment(const EncoderState& state, const Vocab& vocab,
                 std::span<const std::string> first, std::span<const std::string> second,
                 bool use_head, std::size_t max_length = kDefaultMaxLength);
double uniformity(const EncoderState& state, const Vocab& vocab,
                  std::span<const std::string> sentences, bool use_head,
                  std::size_t max_length = kDefaultMaxLength);

inline constexpr std::size_t kNumBands = 5;

// Gold scores binned into [0,1), [1,2), [2,3), [3,4), [4,5]; predicted cosines
// into equal-width bins over [-1, 1] (the last bin is closed).
struct DensityHistogram {
  std::size_t bins = 0;
  std::array<std::vector<std::size_t>, kNumBands> counts;

  double bin_lo(std::size_t bin) const;
  double bin_hi(std::size_t bin) const;
  std::size_t band_total(std::size_t band) const;
};

std::size_t gold_band(double gold);
std::size_t cosine_bin(double cosine, std::size_t bins);
std::string band_label(std::size_t band);

DensityHistogram density_histogram(std::span<const double> gold,
                                   std::span<const double> predicted, std::size_t bins);

// CSV with header band,bin_lo,bin_hi,count and one row per (band, bin).
std::string density_csv(const DensityHistogram& histogram);

}  // namespace softprompt

#endif  // SOFTPROMPT_EVALKIT_HPP_
