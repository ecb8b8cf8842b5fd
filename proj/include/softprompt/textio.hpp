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

// Whitespace tokenizer, frequency-ranked vocabulary and the TSV/plain-text
// loaders for training and evaluation data.

#ifndef SOFTPROMPT_TEXTIO_HPP_
#define SOFTPROMPT_TEXTIO_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace softprompt {

inline constexpr std::size_t kPadId = 0;
inline constexpr std::size_t kUnkId = 1;
inline constexpr std::size_t kClsId = 2;
inline constexpr std::size_t kSepId = 3;
inline constexpr std::size_t kNumSpecials = 4;
inline constexpr std::size_t kDefaultMaxLength = 32;

class Vocab {
 public:
  // Lowercased whitespace tokens ranked by descending frequency, ties broken
  // lexicographically, truncated so that size() <= size_cap. Specials always
  // occupy ids 0-3.
  static Vocab build(std::span<const std::string> sentences, std::size_t size_cap);
  // Rebuilds a vocabulary from its id-ordered token list (specials included).
  static Vocab from_tokens(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  std::size_t id_of(std::string_view token) const;
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct TokenizedSentence {
  std::vector<std::size_t> ids;
  std::vector<std::uint8_t> attention_mask;  // 1 = real token, 0 = [PAD]

  std::size_t length() const { return ids.size(); }
  // Number of non-padding positions.
  std::size_t real_length() const;
};

struct TripletRecord {
  std::string premise;
  std::string entailment;
  std::string contradiction;
};

struct ScoredPair {
  std::string sentence_a;
  std::string sentence_b;
  double score = 0.0;
};

// One rated item of a densely annotated query set.
struct DenseRating {
  std::string query_id;
  std::string item_id;
  double score = 0.0;
  std::string sentence_a;
  std::string sentence_b;
};

// Lowercases ASCII letters and splits on ASCII whitespace.
std::vector<std::string> split_tokens(std::string_view text);

// [CLS] + ids + [SEP], truncated to max_length with [SEP] kept last.
TokenizedSentence tokenize(std::string_view text, const Vocab& vocab,
                           std::size_t max_length = kDefaultMaxLength);

// Space-joined tokens without specials or padding.
std::string detokenize(const TokenizedSentence& sentence, const Vocab& vocab);

// Right-pads with [PAD] / mask 0 to `length`.
TokenizedSentence pad_to(const TokenizedSentence& sentence, std::size_t length);

Vocab build_vocab(const std::filesystem::path& corpus, std::size_t size_cap);

std::vector<std::string> load_corpus(const std::filesystem::path& path);
// sent0 \t sent1 \t hard_neg
std::vector<TripletRecord> load_triplets(const std::filesystem::path& path);
// score \t sentence1 \t sentence2, score in [0, 5]
std::vector<ScoredPair> load_pairs(const std::filesystem::path& path);
// query-id \t item-id \t score \t sentence-A \t sentence-B
std::vector<DenseRating> load_dense_ratings(const std::filesystem::path& path);

bool is_valid_utf8(std::string_view text);

}  // namespace softprompt

#endif  // SOFTPROMPT_TEXTIO_HPP_
