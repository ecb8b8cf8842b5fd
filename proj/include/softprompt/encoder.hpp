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

// Transformer sentence encoder with trainable per-layer prefix prompts over a
// frozen, seeded backbone.
//
// Hidden-state recurrence for prompt length k and L blocks:
//   h^0_i = LN(tok_i + pos_i)                  for token positions i > k
//   h^j_i = P^j_i                              for prompt positions i <= k
//   h^j_i = Block_j(h^{j-1})_i                 otherwise
// Prompt rows are written into the sequence entering every block, so the
// transformer never sees its own output at prompt positions (multilayer
// prompts). The sentence embedding is the final hidden state at the [CLS]
// position, optionally passed through a tanh head.

#ifndef SOFTPROMPT_ENCODER_HPP_
#define SOFTPROMPT_ENCODER_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "softprompt/tensor.hpp"
#include "softprompt/textio.hpp"

namespace softprompt {

enum class PromptType {
  kMultilayer,  // a separate k x d matrix for every block input
  kShared,      // one k x d matrix reused at every block input
  kInputOnly,   // prompts enter before block 0 and then evolve
};

std::string_view prompt_type_name(PromptType type);
PromptType parse_prompt_type(std::string_view name);

struct EncoderConfig {
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t dim = 32;
  std::size_t ffn_dim = 64;
  std::size_t vocab_size = 0;
  // Upper bound on prompt_length + tokens; also the position table size.
  std::size_t max_positions = 64;
  std::size_t prompt_length = 8;
  double dropout = 0.1;
  std::uint64_t seed = 42;
  PromptType prompt_type = PromptType::kMultilayer;
  // Std of every sampled weight except the attention value/output projections.
  double init_std = 0.02;
  // Std of the value/output projections; 0 selects 1/sqrt(dim).
  double mixing_std = 0.0;

  void validate() const;
  double effective_mixing_std() const;
};

struct LayerWeights {
  Tensor query_weight, query_bias;
  Tensor key_weight, key_bias;
  Tensor value_weight, value_bias;
  Tensor output_weight, output_bias;
  Tensor attention_ln_gain, attention_ln_bias;
  Tensor ffn_in_weight, ffn_in_bias;
  Tensor ffn_out_weight, ffn_out_bias;
  Tensor ffn_ln_gain, ffn_ln_bias;
};

struct Backbone {
  Tensor token_embedding;     // vocab x d
  Tensor position_embedding;  // max_positions x d
  Tensor embedding_ln_gain, embedding_ln_bias;
  std::vector<LayerWeights> layers;
};

struct PromptBank {
  // One matrix per block for kMultilayer, a single matrix otherwise; empty
  // when prompt_length == 0.
  std::vector<Tensor> matrices;
};

struct MlpHead {
  Tensor weight;  // d x d
  Tensor bias;    // d
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct EncoderState {
  EncoderConfig config;
  Backbone backbone;
  PromptBank prompts;
  MlpHead head;
  std::string backbone_hash;

  // Backbone tensors in their canonical (hash / blob) order.
  std::vector<NamedTensor> backbone_parameters() const;
  // PromptBank followed by the head; everything the optimiser may touch.
  std::vector<NamedTensor> trainable_parameters() const;
  // Copy whose trainable tensors are independent; backbone storage is shared.
  EncoderState snapshot() const;
  // Prompt matrix that enters block `layer`, if any.
  std::optional<Tensor> prompt_for_layer(std::size_t layer) const;
};

// Seeded N(0, init_std) sampling of backbone, prompts and head; layer-norm
// gains start at 1 and every bias at 0.
EncoderState init_encoder(const EncoderConfig& config);

// FNV-1a over backbone shapes and values, as 16 hex digits.
std::string compute_backbone_hash(const EncoderState& state);

struct ForwardMode {
  bool train = false;
  std::uint64_t seed = 0;
  std::uint64_t tag = 0;

  static ForwardMode eval() { return {}; }
  static ForwardMode training(std::uint64_t seed, std::uint64_t tag) { return {true, seed, tag}; }
};

// Hidden sequences h^0..h^L for each sentence, each (k + T) x d.
std::vector<std::vector<Tensor>> forward_hidden(const EncoderState& state,
                                                std::span<const TokenizedSentence> batch,
                                                const ForwardMode& mode);

// [B x d] sentence embeddings from the final [CLS] state.
Tensor embed(const EncoderState& state, std::span<const TokenizedSentence> batch,
             const ForwardMode& mode, bool use_head);

struct DualViews {
  Tensor first;
  Tensor second;
  // True when dropout is disabled and both views are the same computation.
  bool identical = false;
};

// Two training-mode embeddings of the same batch with dropout tags 0 and 1.
DualViews dual_encode(const EncoderState& state, std::span<const TokenizedSentence> batch,
                      std::uint64_t seed);

// Replaces the backbone with raw little-endian float64 values laid out in
// canonical order; the value count must match the config exactly.
void import_backbone_blob(EncoderState& state, const std::filesystem::path& path);
void export_backbone_blob(const EncoderState& state, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Checkpoints
//
//   magic "SOFTPCKP" | version u8 | count u32 |
//   count x ( name_len u32 | name | dtype u8 | rank u32 | dims u64[rank] | raw )
//
// dtype 0 = float64, 1 = bytes. Integers are little-endian. Entries: "config"
// (JSON bytes), "vocab" (newline-joined tokens), "backbone_hash", "prompt.<j>",
// "head.weight", "head.bias", optionally "eval_head" ("0" or "1": whether
// evaluation applies the head) and, when requested, every "backbone.*" tensor.

inline constexpr std::string_view kCheckpointMagic = "SOFTPCKP";
inline constexpr std::uint8_t kCheckpointVersion = 1;

struct Checkpoint {
  EncoderState state;
  Vocab vocab;
  std::optional<bool> eval_head;
};

void save_checkpoint(const std::filesystem::path& path, const EncoderState& state,
                     const Vocab& vocab, bool include_backbone,
                     std::optional<bool> eval_head = std::nullopt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string config_to_json(const EncoderConfig& config);
EncoderConfig config_from_json(std::string_view json);

}  // namespace softprompt

#endif  // SOFTPROMPT_ENCODER_HPP_
