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

#include "softprompt/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "softprompt/errors.hpp"
#include "softprompt/rng.hpp"

namespace softprompt {

namespace {

void require_pairable(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw DimensionError("correlation inputs differ in length: " + std::to_string(x.size()) +
                         " vs " + std::to_string(y.size()));
  if (x.size() < 2) throw DegenerateInputError("correlation needs at least two points");
}

std::vector<double> unit_row(const Tensor& m, std::size_t r) {
  const std::size_t d = m.cols();
  std::vector<double> u(m.values().begin() + r * d, m.values().begin() + (r + 1) * d);
  double norm = 0.0;
  for (double v : u) norm += v * v;
  norm = std::sqrt(norm);
  if (norm == 0.0) throw DegenerateInputError("zero-norm embedding in row " + std::to_string(r));
  for (double& v : u) v /= norm;
  return u;
}

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return acc;
}

double sample_std(std::span<const double> values, double mean) {
  if (values.size() < 2) return 0.0;
  double acc = 0.0;
  for (double v : values) acc += (v - mean) * (v - mean);
  return std::sqrt(acc / static_cast<double>(values.size() - 1));
}

}  // namespace

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of i+1 .. j
    for (std::size_t t = i; t < j; ++t) ranks[order[t]] = rank;
    i = j;
  }
  return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  require_pairable(x, y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw DegenerateInputError("correlation of a constant sequence");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman(std::span<const double> x, std::span<const double> y) {
  require_pairable(x, y);
  for (double v : x)
    if (std::isnan(v)) throw NumericError("NaN in correlation input");
  for (double v : y)
    if (std::isnan(v)) throw NumericError("NaN in correlation input");
  const std::vector<double> rx = average_ranks(x);
  const std::vector<double> ry = average_ranks(y);
  return pearson(rx, ry);
}

Tensor embed_texts(const EncoderState& state, const Vocab& vocab,
                   std::span<const std::string> texts, bool use_head, std::size_t max_length,
                   std::size_t chunk) {
  if (texts.empty()) throw UsageError("no sentences to embed");
  const std::size_t d = state.config.dim;
  std::vector<double> flat;
  flat.reserve(texts.size() * d);
  std::vector<TokenizedSentence> batch;
  for (std::size_t begin = 0; begin < texts.size(); begin += chunk) {
    const std::size_t end = std::min(texts.size(), begin + chunk);
    batch.clear();
    for (std::size_t i = begin; i < end; ++i) batch.push_back(tokenize(texts[i], vocab, max_length));
    const Tensor e = embed(state, batch, ForwardMode::eval(), use_head);
    flat.insert(flat.end(), e.values().begin(), e.values().end());
  }
  return Tensor::matrix(texts.size(), d, std::move(flat));
}

std::vector<double> paired_cosines(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || a.rank() != 2)
    throw DimensionError("paired cosines: " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  std::vector<double> out(a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const std::vector<double> u = unit_row(a, r), v = unit_row(b, r);
    double dot = 0.0;
    for (std::size_t c = 0; c < u.size(); ++c) dot += u[c] * v[c];
    out[r] = dot;
  }
  return out;
}

ScoredLists score_pairs(const EncoderState& state, const Vocab& vocab,
                        std::span<const ScoredPair> pairs, bool use_head, std::size_t max_length) {
  if (pairs.empty()) throw UsageError("no pairs to score");
  std::vector<std::string> left, right;
  ScoredLists out;
  for (const ScoredPair& p : pairs) {
    left.push_back(p.sentence_a);
    right.push_back(p.sentence_b);
    out.gold.push_back(p.score);
  }
  out.predicted = paired_cosines(embed_texts(state, vocab, left, use_head, max_length),
                                 embed_texts(state, vocab, right, use_head, max_length));
  return out;
}

void BootstrapConfig::validate() const {
  if (resamples == 0) throw ConfigError("resamples must be at least 1");
  if (!(query_fraction > 0.0 && query_fraction <= 1.0))
    throw ConfigError("query fraction must lie in (0, 1]");
}

BootstrapResult bootstrap_spearman(std::span<const DenseRating> ratings,
                                   std::span<const double> predicted,
                                   const BootstrapConfig& config) {
  config.validate();
  if (ratings.size() != predicted.size())
    throw DimensionError("one predicted score per rating is required");
  // Queries in order of first appearance.
  std::vector<std::vector<std::size_t>> groups;
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < ratings.size(); ++i) {
    const auto [it, fresh] = index.emplace(ratings[i].query_id, groups.size());
    if (fresh) groups.emplace_back();
    groups[it->second].push_back(i);
  }
  const std::size_t take =
      static_cast<std::size_t>(std::floor(config.query_fraction * static_cast<double>(groups.size())));
  if (take < 2)
    throw DegenerateInputError("query fraction selects " + std::to_string(take) +
                               " queries; at least two are needed");

  BootstrapResult result;
  result.values.reserve(config.resamples);
  std::vector<std::size_t> queries(groups.size());
  std::vector<double> gold(take), pred(take);
  for (std::size_t r = 0; r < config.resamples; ++r) {
    bool drawn = false;
    for (std::size_t attempt = 0; attempt <= config.max_retries && !drawn; ++attempt) {
      std::mt19937_64 gen(rng::derive({config.seed, r, attempt}));
      std::iota(queries.begin(), queries.end(), 0);
      // Partial Fisher-Yates: the first `take` slots are a uniform subset.
      for (std::size_t i = 0; i < take; ++i)
        std::swap(queries[i], queries[i + rng::uniform_index(gen, queries.size() - i)]);
      for (std::size_t i = 0; i < take; ++i) {
        const auto& items = groups[queries[i]];
        const std::size_t pick = items[rng::uniform_index(gen, items.size())];
        gold[i] = ratings[pick].score;
        pred[i] = predicted[pick];
      }
      try {
        result.values.push_back(spearman(gold, pred));
        drawn = true;
      } catch (const DegenerateInputError&) {
      }
    }
    if (!drawn)
      throw DegenerateInputError("resample " + std::to_string(r) + " stayed degenerate after " +
                                 std::to_string(config.max_retries) + " redraws");
  }
  result.mean = std::accumulate(result.values.begin(), result.values.end(), 0.0) /
                static_cast<double>(result.values.size());
  result.std = sample_std(result.values, result.mean);
  return result;
}

BootstrapResult bootstrap_spearman(const EncoderState& state, const Vocab& vocab,
                                   std::span<const DenseRating> ratings, bool use_head,
                                   const BootstrapConfig& config, std::size_t max_length) {
  if (ratings.empty()) throw UsageError("no dense ratings");
  std::vector<std::string> left, right;
  for (const DenseRating& r : ratings) {
    left.push_back(r.sentence_a);
    right.push_back(r.sentence_b);
  }
  const std::vector<double> predicted =
      paired_cosines(embed_texts(state, vocab, left, use_head, max_length),
                     embed_texts(state, vocab, right, use_head, max_length));
  return bootstrap_spearman(ratings, predicted, config);
}

double alignment(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || a.rank() != 2)
    throw DimensionError("alignment: " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  double acc = 0.0;
  for (std::size_t r = 0; r < a.rows(); ++r) acc += squared_distance(unit_row(a, r), unit_row(b, r));
  return acc / static_cast<double>(a.rows());
}

double uniformity(const Tensor& embeddings) {
  if (embeddings.rank() != 2 || embeddings.rows() < 2)
    throw DegenerateInputError("uniformity needs at least two embeddings");
  std::vector<std::vector<double>> units;
  for (std::size_t r = 0; r < embeddings.rows(); ++r) units.push_back(unit_row(embeddings, r));
  // Terms lie in [e^-8, 1], so a plain sum is safe.
  double acc = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < units.size(); ++i)
    for (std::size_t j = i + 1; j < units.size(); ++j, ++pairs)
      acc += std::exp(-2.0 * squared_distance(units[i], units[j]));
  return std::log(acc / static_cast<double>(pairs));
}

double alignment(const EncoderState& state, const Vocab& vocab,
                 std::span<const std::string> first, std::span<const std::string> second,
                 bool use_head, std::size_t max_length) {
  if (first.size() != second.size()) throw DimensionError("alignment needs paired sentence lists");
  return alignment(embed_texts(state, vocab, first, use_head, max_length),
                   embed_texts(state, vocab, second, use_head, max_length));
}

double uniformity(const EncoderState& state, const Vocab& vocab,
                  std::span<const std::string> sentences, bool use_head, std::size_t max_length) {
  return uniformity(embed_texts(state, vocab, sentences, use_head, max_length));
}

double DensityHistogram::bin_lo(std::size_t bin) const {
  return -1.0 + 2.0 * static_cast<double>(bin) / static_cast<double>(bins);
}

double DensityHistogram::bin_hi(std::size_t bin) const {
  return -1.0 + 2.0 * static_cast<double>(bin + 1) / static_cast<double>(bins);
}

std::size_t DensityHistogram::band_total(std::size_t band) const {
  return std::accumulate(counts.at(band).begin(), counts.at(band).end(), std::size_t{0});
}

std::size_t gold_band(double gold) {
  if (!(gold >= 0.0 && gold <= 5.0))
    throw ValidationError("gold score " + std::to_string(gold) + " outside [0, 5]");
  return std::min<std::size_t>(static_cast<std::size_t>(gold), kNumBands - 1);
}

std::size_t cosine_bin(double cosine, std::size_t bins) {
  if (std::isnan(cosine)) throw NumericError("NaN cosine");
  const double clamped = std::clamp(cosine, -1.0, 1.0);
  const auto bin = static_cast<std::size_t>((clamped + 1.0) / 2.0 * static_cast<double>(bins));
  return std::min(bin, bins - 1);
}

std::string band_label(std::size_t band) {
  return std::to_string(band) + "-" + std::to_string(band + 1);
}

DensityHistogram density_histogram(std::span<const double> gold,
                                   std::span<const double> predicted, std::size_t bins) {
  if (bins == 0) throw ConfigError("histogram needs at least one bin");
  if (gold.size() != predicted.size()) throw DimensionError("gold and predicted lengths differ");
  DensityHistogram h;
  h.bins = bins;
  for (auto& band : h.counts) band.assign(bins, 0);
  for (std::size_t i = 0; i < gold.size(); ++i)
    ++h.counts[gold_band(gold[i])][cosine_bin(predicted[i], bins)];
  return h;
}

std::string density_csv(const DensityHistogram& histogram) {
  std::ostringstream out;
  out << "band,bin_lo,bin_hi,count\n";
  char lo[32], hi[32];
  for (std::size_t band = 0; band < kNumBands; ++band) {
    for (std::size_t bin = 0; bin < histogram.bins; ++bin) {
      std::snprintf(lo, sizeof lo, "%.4f", histogram.bin_lo(bin));
      std::snprintf(hi, sizeof hi, "%.4f", histogram.bin_hi(bin));
      out << band_label(band) << ',' << lo << ',' << hi << ',' << histogram.counts[band][bin] << '\n';
    }
  }
  return out.str();
}

}  // namespace softprompt
