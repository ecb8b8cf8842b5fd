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

#include "softprompt/textio.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>

#include "softprompt/errors.hpp"

namespace softprompt {
namespace {

const std::vector<std::string>& special_tokens() {
  static const std::vector<std::string> specials{"[PAD]", "[UNK]", "[CLS]", "[SEP]"};
  return specials;
}

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

// Reads `path` line by line, stripping a trailing CR. Each line must be UTF-8.
template <typename Fn>
void for_each_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + path.string());
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!is_valid_utf8(line)) throw ParseError(path.string(), number, "invalid UTF-8");
    fn(number, line);
  }
}

bool is_blank(std::string_view line) {
  return std::all_of(line.begin(), line.end(), is_space);
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cols;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    cols.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return cols;
}

double parse_score(const std::string& text, const std::string& path, std::size_t line) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = text.data() + text.size();
  while (begin != end && is_space(*begin)) ++begin;
  while (end != begin && is_space(*(end - 1))) --end;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || begin == end) {
    throw ParseError(path, line, "score '" + text + "' is not a number");
  }
  if (!(value >= 0.0 && value <= 5.0)) {
    throw ValidationError(path + ":" + std::to_string(line) + ": score " + text +
                          " outside [0, 5]");
  }
  return value;
}

}  // namespace

bool is_valid_utf8(std::string_view text) {
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    std::size_t extra = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      extra = 1;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      extra = 2;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      extra = 3;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + extra >= text.size()) return false;
    for (std::size_t k = 1; k <= extra; ++k) {
      const auto cc = static_cast<unsigned char>(text[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    // Overlong encodings, surrogates and out-of-range code points.
    if ((extra == 1 && cp < 0x80) || (extra == 2 && cp < 0x800) || (extra == 3 && cp < 0x10000) ||
        (cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF) {
      return false;
    }
    i += extra + 1;
  }
  return true;
}

std::vector<std::string> split_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : text) {
    if (is_space(c)) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back((c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c);
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

Vocab Vocab::build(std::span<const std::string> sentences, std::size_t size_cap) {
  if (size_cap < kNumSpecials) {
    throw ConfigError("vocabulary cap " + std::to_string(size_cap) + " cannot hold the " +
                      std::to_string(kNumSpecials) + " special tokens");
  }
  std::map<std::string, std::size_t> counts;
  for (const std::string& s : sentences) {
    for (std::string& t : split_tokens(s)) ++counts[std::move(t)];
  }
  for (const std::string& sp : special_tokens()) counts.erase(sp);
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  // std::map iteration is already lexicographic; a stable sort keeps that for ties.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens = special_tokens();
  for (auto& [tok, n] : ranked) {
    if (tokens.size() >= size_cap) break;
    tokens.push_back(tok);
  }
  return from_tokens(std::move(tokens));
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < kNumSpecials ||
      !std::equal(special_tokens().begin(), special_tokens().end(), tokens.begin())) {
    throw ValidationError("vocabulary must start with [PAD] [UNK] [CLS] [SEP]");
  }
  Vocab v;
  v.tokens_ = std::move(tokens);
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    if (!v.index_.emplace(v.tokens_[i], i).second) {
      throw ValidationError("duplicate vocabulary entry '" + v.tokens_[i] + "'");
    }
  }
  return v;
}

std::size_t Vocab::id_of(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnkId : it->second;
}

std::size_t TokenizedSentence::real_length() const {
  return static_cast<std::size_t>(std::count(attention_mask.begin(), attention_mask.end(), 1));
}

TokenizedSentence tokenize(std::string_view text, const Vocab& vocab, std::size_t max_length) {
  if (max_length < 2) throw ConfigError("max length must leave room for [CLS] and [SEP]");
  TokenizedSentence out;
  out.ids.push_back(kClsId);
  for (const std::string& t : split_tokens(text)) {
    if (out.ids.size() + 1 >= max_length) break;
    out.ids.push_back(vocab.id_of(t));
  }
  out.ids.push_back(kSepId);
  out.attention_mask.assign(out.ids.size(), 1);
  return out;
}

std::string detokenize(const TokenizedSentence& sentence, const Vocab& vocab) {
  std::string out;
  for (std::size_t i = 0; i < sentence.ids.size(); ++i) {
    const std::size_t id = sentence.ids[i];
    if (sentence.attention_mask[i] == 0 || id == kClsId || id == kSepId || id == kPadId) continue;
    if (!out.empty()) out.push_back(' ');
    out += vocab.token(id);
  }
  return out;
}

TokenizedSentence pad_to(const TokenizedSentence& sentence, std::size_t length) {
  if (length < sentence.length()) throw LengthError("pad_to would truncate the sentence");
  TokenizedSentence out = sentence;
  out.ids.resize(length, kPadId);
  out.attention_mask.resize(length, 0);
  return out;
}

std::vector<std::string> load_corpus(const std::filesystem::path& path) {
  std::vector<std::string> lines;
  for_each_line(path, [&](std::size_t, const std::string& line) {
    if (!is_blank(line)) lines.push_back(line);
  });
  if (lines.empty()) throw IngestionError("corpus " + path.string() + " has no sentences");
  return lines;
}

Vocab build_vocab(const std::filesystem::path& corpus, std::size_t size_cap) {
  const auto lines = load_corpus(corpus);
  return Vocab::build(lines, size_cap);
}

std::vector<TripletRecord> load_triplets(const std::filesystem::path& path) {
  std::vector<TripletRecord> records;
  for_each_line(path, [&](std::size_t number, const std::string& line) {
    if (is_blank(line)) return;
    auto cols = split_tabs(line);
    if (cols.size() != 3) {
      throw ParseError(path.string(), number,
                       "expected 3 tab-separated columns, found " + std::to_string(cols.size()));
    }
    for (const auto& c : cols) {
      if (is_blank(c)) throw ParseError(path.string(), number, "empty sentence in triplet");
    }
    records.push_back({std::move(cols[0]), std::move(cols[1]), std::move(cols[2])});
  });
  if (records.empty()) throw IngestionError("triplet file " + path.string() + " is empty");
  return records;
}

std::vector<ScoredPair> load_pairs(const std::filesystem::path& path) {
  std::vector<ScoredPair> pairs;
  for_each_line(path, [&](std::size_t number, const std::string& line) {
    if (is_blank(line)) return;
    auto cols = split_tabs(line);
    if (cols.size() != 3) {
      throw ParseError(path.string(), number,
                       "expected 3 tab-separated columns, found " + std::to_string(cols.size()));
    }
    const double score = parse_score(cols[0], path.string(), number);
    pairs.push_back({std::move(cols[1]), std::move(cols[2]), score});
  });
  if (pairs.empty()) throw IngestionError("pair file " + path.string() + " is empty");
  return pairs;
}

std::vector<DenseRating> load_dense_ratings(const std::filesystem::path& path) {
  std::vector<DenseRating> ratings;
  for_each_line(path, [&](std::size_t number, const std::string& line) {
    if (is_blank(line)) return;
    auto cols = split_tabs(line);
    if (cols.size() != 5) {
      throw ParseError(path.string(), number,
                       "expected 5 tab-separated columns, found " + std::to_string(cols.size()));
    }
    const double score = parse_score(cols[2], path.string(), number);
    ratings.push_back(
        {std::move(cols[0]), std::move(cols[1]), score, std::move(cols[3]), std::move(cols[4])});
  });
  if (ratings.empty()) throw IngestionError("dense rating file " + path.string() + " is empty");
  return ratings;
}

}  // namespace softprompt
