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

#include "softprompt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "json.hpp"
#include "softprompt/errors.hpp"
#include "softprompt/evalkit.hpp"
#include "softprompt/rng.hpp"

namespace softprompt {

namespace {

constexpr std::uint64_t kStreamShuffle = 21;
constexpr std::uint64_t kStreamDropout = 22;

std::string format_matrix(const Tensor& m) {
  std::ostringstream out;
  char buf[32];
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%s%.6g", c ? " " : "", m.at(r, c));
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

[[noreturn]] void abort_non_finite(const StepLosses& losses, const Tensor& sims, std::size_t step) {
  std::ostringstream msg;
  msg << "non-finite loss at step " << step << " (cl=" << losses.contrastive
      << " eh=" << losses.hinge << " total=" << losses.total << ")\nsimilarity matrix:\n"
      << format_matrix(sims);
  throw NumericError(msg.str());
}

std::vector<TokenizedSentence> gather(std::span<const std::size_t> batch,
                                      const std::vector<TokenizedSentence>& pool) {
  std::vector<TokenizedSentence> out;
  out.reserve(batch.size());
  for (std::size_t i : batch) out.push_back(pool.at(i));
  return out;
}

}  // namespace

std::string_view train_mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::kUnsupervised:
      return "unsupervised";
    case TrainMode::kSupervised:
      return "supervised";
    case TrainMode::kSupervisedEh:
      return "supervised+eh";
  }
  return "unknown";
}

void TrainConfig::validate() const {
  if (batch_size < 2) throw ConfigError("batch size must be at least 2 (in-batch negatives)");
  if (eval_every == 0) throw ConfigError("eval-every must be at least 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("learning rate must be finite and non-negative");
  if (max_length < 2) throw ConfigError("max length must be at least 2");
  loss.validate();
}

double lr_at(std::size_t step, std::size_t total, double base) {
  if (total == 0) throw ConfigError("learning-rate schedule needs at least one step");
  if (step > total) throw UsageError("step beyond the schedule");
  return std::max(0.0, base * (1.0 - static_cast<double>(step) / static_cast<double>(total)));
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size,
                                                   std::uint64_t seed, std::size_t epoch,
                                                   std::size_t* dropped) {
  if (n == 0) throw UsageError("no training items");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 gen(rng::derive({seed, epoch, kStreamShuffle}));
  rng::shuffle(order, gen);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t begin = 0; begin < n; begin += batch_size) {
    const std::size_t end = std::min(n, begin + batch_size);
    if (end - begin < 2) {
      if (dropped) *dropped += end - begin;
      continue;
    }
    batches.emplace_back(order.begin() + begin, order.begin() + end);
  }
  return batches;
}

Adam::Adam(std::vector<Tensor> params) : params_(std::move(params)) {
  for (const Tensor& p : params_) {
    if (!p.requires_grad() || !p.is_leaf())
      throw UsageError("optimiser given a tensor that is not a trainable leaf");
    first_.emplace_back(p.numel(), 0.0);
    second_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::step(double lr) {
  ++steps_;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(steps_));
  for (std::size_t t = 0; t < params_.size(); ++t) {
    Tensor& p = params_[t];
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    auto values = p.mutable_values();
    auto& m = first_[t];
    auto& v = second_[t];
    for (std::size_t i = 0; i < values.size(); ++i) {
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
      values[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + kEpsilon);
    }
    p.zero_grad();
  }
}

bool Adam::tracks(const Tensor& t) const {
  return std::any_of(params_.begin(), params_.end(),
                     [&](const Tensor& p) { return p.node_ptr() == t.node_ptr(); });
}

TrainData tokenize_corpus(std::span<const std::string> corpus, const Vocab& vocab,
                          std::size_t max_length) {
  TrainData data;
  for (const std::string& s : corpus) data.sentences.push_back(tokenize(s, vocab, max_length));
  return data;
}

TrainData tokenize_triplets(std::span<const TripletRecord> triplets, const Vocab& vocab,
                            std::size_t max_length) {
  TrainData data;
  for (const TripletRecord& t : triplets)
    data.triplets.push_back({tokenize(t.premise, vocab, max_length),
                             tokenize(t.entailment, vocab, max_length),
                             tokenize(t.contradiction, vocab, max_length)});
  return data;
}

DevSet tokenize_dev(std::span<const ScoredPair> pairs, const Vocab& vocab, std::size_t max_length) {
  DevSet dev;
  for (const ScoredPair& p : pairs) {
    dev.first.push_back(tokenize(p.sentence_a, vocab, max_length));
    dev.second.push_back(tokenize(p.sentence_b, vocab, max_length));
    dev.gold.push_back(p.score);
  }
  return dev;
}

double dev_spearman(const EncoderState& state, const DevSet& dev, bool use_head) {
  if (dev.gold.size() < 2) throw UsageError("dev set needs at least two pairs");
  constexpr std::size_t kChunk = 64;
  std::vector<double> predicted;
  predicted.reserve(dev.gold.size());
  for (std::size_t begin = 0; begin < dev.gold.size(); begin += kChunk) {
    const std::size_t n = std::min(kChunk, dev.gold.size() - begin);
    const auto a = std::span(dev.first).subspan(begin, n);
    const auto b = std::span(dev.second).subspan(begin, n);
    const std::vector<double> c = paired_cosines(embed(state, a, ForwardMode::eval(), use_head),
                                                 embed(state, b, ForwardMode::eval(), use_head));
    predicted.insert(predicted.end(), c.begin(), c.end());
  }
  return spearman(dev.gold, predicted);
}

StepLosses train_step(EncoderState& state, const TrainData& data,
                      std::span<const std::size_t> batch, const TrainConfig& config, Adam& opt,
                      std::size_t step, std::size_t total_steps) {
  if (batch.size() < 2) throw UsageError("a training batch needs at least two items");
  StepLosses out;
  out.lr = lr_at(step, total_steps, config.learning_rate);
  const std::uint64_t seed = rng::derive({config.seed, step, kStreamDropout});

  Tensor total;
  Tensor anchors, positives, negatives;
  if (config.mode == TrainMode::kUnsupervised) {
    const std::vector<TokenizedSentence> sentences = gather(batch, data.sentences);
    const DualViews views = dual_encode(state, sentences, seed);
    anchors = views.first;
    positives = views.second;
    total = nt_xent_unsup(anchors, positives, config.loss.temperature);
    out.contrastive = total.item();
  } else {
    std::vector<TokenizedSentence> p, e, c;
    for (std::size_t i : batch) {
      const TokenizedTriplet& t = data.triplets.at(i);
      p.push_back(t.premise);
      e.push_back(t.entailment);
      c.push_back(t.contradiction);
    }
    anchors = embed(state, p, ForwardMode::training(seed, 0), true);
    positives = embed(state, e, ForwardMode::training(seed, 1), true);
    negatives = embed(state, c, ForwardMode::training(seed, 2), true);
    LossConfig loss = config.loss;
    if (!config.uses_hinge()) loss.lambda = 0.0;
    const LossParts parts = total_loss(anchors, positives, negatives, loss);
    total = parts.total;
    out.contrastive = parts.contrastive.item();
    out.hinge = parts.hinge.defined() ? parts.hinge.item() : 0.0;
  }
  out.total = total.item();
  if (!std::isfinite(out.total)) {
    Tensor candidates = positives;
    if (negatives.defined()) {
      const Tensor both[] = {positives.detach(), negatives.detach()};
      candidates = concat_rows(both);
    }
    abort_non_finite(out, cosine_matrix(anchors.detach(), candidates.detach()), step);
  }
  backward(total);
  opt.step(out.lr);
  return out;
}

std::string RunLog::to_jsonl() const {
  std::string out;
  for (const LogRecord& r : records) {
    nlohmann::ordered_json j;
    j["step"] = r.step;
    if (r.losses) {
      j["l_cl"] = r.losses->contrastive;
      j["l_eh"] = r.losses->hinge;
      j["l_total"] = r.losses->total;
      j["lr"] = r.losses->lr;
    }
    if (r.dev_spearman) j["dev_spearman"] = *r.dev_spearman;
    out += j.dump();
    out += '\n';
  }
  return out;
}

FitResult fit(const EncoderState& init, const TrainConfig& config, const TrainData& data,
              const DevSet& dev, const FitObserver& observer) {
  config.validate();
  const std::size_t n = data.size(config.mode);
  if (n < 2) throw UsageError("need at least two training items");

  FitResult result{init.snapshot(), init.snapshot(), {}};
  EncoderState& state = result.final_state;
  RunLog& log = result.log;
  Adam opt([&] {
    std::vector<Tensor> params;
    for (const NamedTensor& nt : state.trainable_parameters()) params.push_back(nt.tensor);
    return params;
  }());

  auto record = [&](LogRecord r) {
    log.records.push_back(r);
    if (observer) observer(log.records.back());
  };
  auto evaluate = [&](std::size_t step) {
    const double rho = dev_spearman(state, dev, config.eval_uses_head());
    if (log.records.empty() || rho > log.best_dev_spearman) {
      log.best_dev_spearman = rho;
      log.best_step = step;
      result.best = state.snapshot();
    }
    record({step, std::nullopt, rho});
  };

  evaluate(0);
  std::vector<std::vector<std::vector<std::size_t>>> epochs;
  std::size_t total_steps = 0;
  for (std::size_t e = 0; e < config.epochs; ++e) {
    epochs.push_back(make_batches(n, config.batch_size, config.seed, e, &log.dropped_items));
    total_steps += epochs.back().size();
  }

  std::size_t step = 0;
  for (const auto& batches : epochs) {
    for (const auto& batch : batches) {
      const StepLosses losses = train_step(state, data, batch, config, opt, step, total_steps);
      ++step;
      record({step, losses, std::nullopt});
      if (step % config.eval_every == 0 || step == total_steps) evaluate(step);
    }
  }
  if (compute_backbone_hash(state) != init.backbone_hash)
    throw Error("backbone changed during training");
  return result;
}

double margin_satisfaction(const EncoderState& state, const TrainData& data,
                           std::size_t batch_size, double margin,
                           const CandidateFilter& is_correct) {
  const std::size_t n = data.triplets.size();
  if (n == 0) throw UsageError("no triplets to score");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  std::size_t satisfied = 0;
  for (std::size_t begin = 0; begin < n; begin += batch_size) {
    const std::size_t b = std::min(batch_size, n - begin);
    std::vector<TokenizedSentence> p, e, c;
    for (std::size_t i = begin; i < begin + b; ++i) {
      p.push_back(data.triplets[i].premise);
      e.push_back(data.triplets[i].entailment);
      c.push_back(data.triplets[i].contradiction);
    }
    const Tensor candidates[] = {embed(state, e, ForwardMode::eval(), true),
                                 embed(state, c, ForwardMode::eval(), true)};
    const Tensor sims =
        cosine_matrix(embed(state, p, ForwardMode::eval(), true), concat_rows(candidates));
    for (std::size_t i = 0; i < b; ++i) {
      std::vector<double> row(sims.values().begin() + i * 2 * b,
                              sims.values().begin() + (i + 1) * 2 * b);
      bool any = false;
      for (std::size_t j = 0; j < row.size(); ++j) {
        if (j != i && is_correct && is_correct(begin + i, j < b ? begin + j : n + begin + j - b)) {
          row[j] = -std::numeric_limits<double>::infinity();
        } else if (j != i) {
          any = true;
        }
      }
      if (!any) {
        ++satisfied;  // nothing incorrect to beat
        continue;
      }
      const std::size_t hardest = most_offending(row, i);
      if (row[i] - row[hardest] >= margin) ++satisfied;
    }
  }
  return static_cast<double>(satisfied) / static_cast<double>(n);
}

std::string train_config_to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["mode"] = std::string(train_mode_name(c.mode));
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["learning_rate"] = c.learning_rate;
  j["temperature"] = c.loss.temperature;
  j["margin"] = c.loss.margin;
  j["lambda"] = c.loss.lambda;
  j["beta"] = c.loss.effective_beta();
  j["eval_every"] = c.eval_every;
  j["seed"] = c.seed;
  j["max_length"] = c.max_length;
  return j.dump(2);
}

void write_run_directory(const std::filesystem::path& dir, const FitResult& result,
                         const TrainConfig& config, const Vocab& vocab, bool include_backbone) {
  std::filesystem::create_directories(dir);
  auto write_text = [&](const std::string& name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::trunc | std::ios::binary);
    if (!out) throw IngestionError("cannot write " + (dir / name).string());
    out << text;
  };
  nlohmann::ordered_json snapshot;
  snapshot["train"] = nlohmann::ordered_json::parse(train_config_to_json(config));
  snapshot["encoder"] = nlohmann::ordered_json::parse(config_to_json(result.best.config));
  snapshot["backbone_hash"] = result.best.backbone_hash;
  snapshot["best_step"] = result.log.best_step;
  snapshot["best_dev_spearman"] = result.log.best_dev_spearman;
  write_text("config.json", snapshot.dump(2) + "\n");
  write_text("runlog.jsonl", result.log.to_jsonl());
  save_checkpoint(dir / "best.ckpt", result.best, vocab, include_backbone, config.eval_uses_head());
  save_checkpoint(dir / "final.ckpt", result.final_state, vocab, include_backbone,
                  config.eval_uses_head());
}

}  // namespace softprompt
