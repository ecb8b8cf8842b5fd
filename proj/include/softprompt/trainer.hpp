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

// Training loop: Adam over the prompt bank and head, linear decay, periodic
// dev evaluation with best-checkpoint retention.

#ifndef SOFTPROMPT_TRAINER_HPP_
#define SOFTPROMPT_TRAINER_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "softprompt/encoder.hpp"
#include "softprompt/objectives.hpp"
#include "softprompt/textio.hpp"

namespace softprompt {

enum class TrainMode { kUnsupervised, kSupervised, kSupervisedEh };

std::string_view train_mode_name(TrainMode mode);

struct TrainConfig {
  TrainMode mode = TrainMode::kUnsupervised;
  std::size_t batch_size = 32;
  std::size_t epochs = 1;
  double learning_rate = 3e-2;
  LossConfig loss;
  std::size_t eval_every = 125;
  std::uint64_t seed = 42;
  std::size_t max_length = kDefaultMaxLength;

  void validate() const;
  // Unsupervised evaluation drops the head; supervised evaluation keeps it.
  bool eval_uses_head() const { return mode != TrainMode::kUnsupervised; }
  bool uses_hinge() const { return mode == TrainMode::kSupervisedEh && loss.lambda > 0.0; }
};

// base * (1 - step / total), floored at 0.
double lr_at(std::size_t step, std::size_t total, double base);

// Deterministic per-epoch shuffle of [0, n) keyed by (seed, epoch), cut into
// batches. A trailing batch with fewer than two items is dropped and counted
// in `dropped`.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size,
                                                   std::uint64_t seed, std::size_t epoch,
                                                   std::size_t* dropped = nullptr);

class Adam {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  // Throws UsageError for tensors that do not require gradients.
  explicit Adam(std::vector<Tensor> params);

  // Applies one update with learning rate `lr`; tensors without a gradient
  // are skipped. Gradients are cleared afterwards.
  void step(double lr);

  std::size_t steps() const { return steps_; }
  std::size_t num_tracked() const { return params_.size(); }
  bool tracks(const Tensor& t) const;

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
  std::size_t steps_ = 0;
};

struct TokenizedTriplet {
  TokenizedSentence premise;
  TokenizedSentence entailment;
  TokenizedSentence contradiction;
};

struct TrainData {
  std::vector<TokenizedSentence> sentences;  // unsupervised
  std::vector<TokenizedTriplet> triplets;    // supervised

  std::size_t size(TrainMode mode) const {
    return mode == TrainMode::kUnsupervised ? sentences.size() : triplets.size();
  }
};

TrainData tokenize_corpus(std::span<const std::string> corpus, const Vocab& vocab,
                          std::size_t max_length);
TrainData tokenize_triplets(std::span<const TripletRecord> triplets, const Vocab& vocab,
                            std::size_t max_length);

struct DevSet {
  std::vector<TokenizedSentence> first;
  std::vector<TokenizedSentence> second;
  std::vector<double> gold;
};

DevSet tokenize_dev(std::span<const ScoredPair> pairs, const Vocab& vocab, std::size_t max_length);
double dev_spearman(const EncoderState& state, const DevSet& dev, bool use_head);

struct StepLosses {
  double contrastive = 0.0;
  double hinge = 0.0;
  double total = 0.0;
  double lr = 0.0;
};

// One optimisation step on `batch` (indices into data). `step` is the 0-based
// global step used for the learning rate and the dropout seed.
StepLosses train_step(EncoderState& state, const TrainData& data,
                      std::span<const std::size_t> batch, const TrainConfig& config, Adam& opt,
                      std::size_t step, std::size_t total_steps);

struct LogRecord {
  std::size_t step = 0;
  std::optional<StepLosses> losses;
  std::optional<double> dev_spearman;
};

struct RunLog {
  std::vector<LogRecord> records;
  std::size_t best_step = 0;
  double best_dev_spearman = 0.0;
  std::size_t dropped_items = 0;

  // One JSON object per line: step rows carry l_cl, l_eh, l_total, lr; eval
  // rows carry dev_spearman.
  std::string to_jsonl() const;
};

struct FitResult {
  EncoderState best;
  EncoderState final_state;
  RunLog log;
};

// Called after every logged record; may be empty.
using FitObserver = std::function<void(const LogRecord&)>;

FitResult fit(const EncoderState& init, const TrainConfig& config, const TrainData& data,
              const DevSet& dev, const FitObserver& observer = {});

// Fraction of triplets whose positive beats the most offending incorrect
// candidate by at least `margin`, scored in eval mode with the head over
// consecutive batches of `batch_size` in data order. Candidates follow the
// B x 2B layout of the supervised loss. `is_correct(anchor, candidate)` marks
// additional candidates that are acceptable answers (for example in-batch
// paraphrases with known labels); the anchor's own positive is always one.
// Both arguments are dataset indices: a candidate c < n is the entailment of
// triplet c, otherwise the contradiction of triplet c - n.
using CandidateFilter = std::function<bool(std::size_t anchor, std::size_t candidate)>;

double margin_satisfaction(const EncoderState& state, const TrainData& data,
                           std::size_t batch_size, double margin,
                           const CandidateFilter& is_correct = {});

std::string train_config_to_json(const TrainConfig& config);

// config.json, runlog.jsonl, best.ckpt, final.ckpt
void write_run_directory(const std::filesystem::path& dir, const FitResult& result,
                         const TrainConfig& config, const Vocab& vocab, bool include_backbone);

}  // namespace softprompt

#endif  // SOFTPROMPT_TRAINER_HPP_
