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

#include "softprompt/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "softprompt/errors.hpp"

namespace softprompt {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.rank() != 2 || a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

void require_temperature(double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw ConfigError("temperature must be positive and finite");
}

std::vector<std::size_t> diagonal(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return idx;
}

Tensor supervised_sims(const Tensor& anchors, const Tensor& positives, const Tensor& negatives) {
  require_same_shape(anchors, positives, "positives");
  require_same_shape(anchors, negatives, "negatives");
  const Tensor parts[] = {positives, negatives};
  return cosine_matrix(anchors, concat_rows(parts));
}

double log_sum_exp_scaled(std::span<const double> energies, double beta) {
  if (energies.empty()) throw UsageError("free energy of an empty candidate set");
  if (!(beta > 0.0)) throw ConfigError("beta must be positive");
  double peak = -std::numeric_limits<double>::infinity();
  for (double e : energies) peak = std::max(peak, -beta * e);
  double acc = 0.0;
  for (double e : energies) acc += std::exp(-beta * e - peak);
  return peak + std::log(acc);
}

}  // namespace

void LossConfig::validate() const {
  require_temperature(temperature);
  if (!(margin >= 0.0)) throw ConfigError("margin must be non-negative");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  if (!(beta >= 0.0)) throw ConfigError("beta must be positive (or 0 for 1/temperature)");
}

CandidateRole candidate_role(std::size_t anchor, std::size_t candidate, std::size_t batch) {
  if (candidate == anchor) return CandidateRole::kPositive;
  if (candidate < batch) return CandidateRole::kInBatchNegative;
  if (candidate == batch + anchor) return CandidateRole::kOwnHardNegative;
  return CandidateRole::kHardNegative;
}

Tensor nt_xent_terms(const Tensor& sims, double temperature) {
  require_temperature(temperature);
  if (sims.rank() != 2 || sims.cols() < sims.rows())
    throw DimensionError("similarity matrix must be [B x N] with N >= B, got " +
                         shape_to_string(sims.shape()));
  const Tensor logits = scale(sims, 1.0 / temperature);
  return sub(logsumexp_rows(logits), pick(logits, diagonal(sims.rows())));
}

Tensor nt_xent_unsup(const Tensor& anchors, const Tensor& positives, double temperature) {
  require_same_shape(anchors, positives, "positives");
  return mean(nt_xent_terms(cosine_matrix(anchors, positives), temperature));
}

Tensor nt_xent_sup(const Tensor& anchors, const Tensor& positives, const Tensor& negatives,
                   double temperature) {
  return mean(nt_xent_terms(supervised_sims(anchors, positives, negatives), temperature));
}

std::size_t most_offending(std::span<const double> sims, std::optional<std::size_t> exclude) {
  std::optional<std::size_t> best;
  for (std::size_t j = 0; j < sims.size(); ++j) {
    if (exclude && *exclude == j) continue;
    if (!best || sims[j] > sims[*best]) best = j;
  }
  if (!best) throw UsageError("no incorrect candidate left after exclusion");
  return *best;
}

std::vector<std::size_t> most_offending_columns(const Tensor& sims) {
  if (sims.rank() != 2 || sims.cols() != 2 * sims.rows())
    throw DimensionError("expected a B x 2B similarity matrix, got " + shape_to_string(sims.shape()));
  const std::size_t n = sims.cols();
  std::vector<std::size_t> out(sims.rows());
  for (std::size_t i = 0; i < sims.rows(); ++i)
    out[i] = most_offending(sims.values().subspan(i * n, n), i);
  return out;
}

Tensor eh_loss(const Tensor& anchors, const Tensor& positives, const Tensor& negatives,
               double margin) {
  if (!(margin >= 0.0)) throw ConfigError("margin must be non-negative");
  const Tensor sims = supervised_sims(anchors, positives, negatives);
  const Tensor hardest = pick(sims, most_offending_columns(sims));
  const Tensor own = pick(sims, diagonal(sims.rows()));
  return mean(relu(add_scalar(sub(hardest, own), margin)));
}

LossParts total_loss(const Tensor& anchors, const Tensor& positives, const Tensor& negatives,
                     const LossConfig& config) {
  config.validate();
  LossParts parts;
  parts.contrastive = nt_xent_sup(anchors, positives, negatives, config.temperature);
  if (config.lambda == 0.0) {
    parts.total = parts.contrastive;
    return parts;
  }
  parts.hinge = eh_loss(anchors, positives, negatives, config.margin);
  parts.total = add(parts.contrastive, scale(parts.hinge, config.lambda));
  return parts;
}

Tensor energy(const Tensor& fx, const Tensor& fy) { return scale(cosine(fx, fy), -1.0); }

double free_energy(std::span<const double> energies, double beta) {
  return log_sum_exp_scaled(energies, beta) / beta;
}

double ebm_nll(std::span<const double> energies, std::size_t target, double beta) {
  if (target >= energies.size())
    throw UsageError("target " + std::to_string(target) + " outside " +
                     std::to_string(energies.size()) + " energies");
  return beta * energies[target] + log_sum_exp_scaled(energies, beta);
}

}  // namespace softprompt
