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

// Contrastive and energy-based training objectives.
//
// Similarities are cosines between anchor rows and candidate rows. For the
// supervised losses the candidate matrix is [positives; hard negatives], so
// row i of the B x 2B similarity matrix holds the anchor's own positive at
// column i and its own hard negative at column B + i.

#ifndef SOFTPROMPT_OBJECTIVES_HPP_
#define SOFTPROMPT_OBJECTIVES_HPP_

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "softprompt/tensor.hpp"

namespace softprompt {

struct LossConfig {
  double temperature = 0.05;
  double margin = 0.2;
  double lambda = 10.0;
  // EBM inverse temperature; 0 selects 1 / temperature.
  double beta = 0.0;

  void validate() const;
  double effective_beta() const { return beta > 0.0 ? beta : 1.0 / temperature; }
};

enum class CandidateRole { kPositive, kInBatchNegative, kHardNegative, kOwnHardNegative };

// Role of column `candidate` for anchor `anchor` in a B x B (unsupervised) or
// B x 2B (supervised) similarity matrix.
CandidateRole candidate_role(std::size_t anchor, std::size_t candidate, std::size_t batch);

// Per-anchor cross-entropy terms -log softmax(sims / tau)[i, i]: [B x N] -> [B].
Tensor nt_xent_terms(const Tensor& sims, double temperature);

Tensor nt_xent_unsup(const Tensor& anchors, const Tensor& positives, double temperature);
Tensor nt_xent_sup(const Tensor& anchors, const Tensor& positives, const Tensor& negatives,
                   double temperature);

// Index of the largest similarity, skipping `exclude`; ties go to the lowest
// index. UsageError when nothing remains.
std::size_t most_offending(std::span<const double> sims, std::optional<std::size_t> exclude);

// Most offending column of every row of a B x 2B similarity matrix.
std::vector<std::size_t> most_offending_columns(const Tensor& sims);

// mean_i [m + s(i, most_offending(i)) - s(i, i)]_+ ; the selection is constant
// under differentiation.
Tensor eh_loss(const Tensor& anchors, const Tensor& positives, const Tensor& negatives,
               double margin);

struct LossParts {
  Tensor contrastive;
  Tensor hinge;  // undefined when lambda == 0
  Tensor total;
};

// nt_xent_sup + lambda * eh_loss. With lambda == 0 the total is the
// contrastive tensor itself.
LossParts total_loss(const Tensor& anchors, const Tensor& positives, const Tensor& negatives,
                     const LossConfig& config);

// -cos(fx, fy); differentiable scalar.
Tensor energy(const Tensor& fx, const Tensor& fy);

// (1 / beta) log sum_y exp(-beta E_y).
double free_energy(std::span<const double> energies, double beta);

// -log( exp(-beta E_t) / sum_y exp(-beta E_y) ).
double ebm_nll(std::span<const double> energies, std::size_t target, double beta);

}  // namespace softprompt

#endif  // SOFTPROMPT_OBJECTIVES_HPP_
