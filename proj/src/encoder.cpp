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

#include "softprompt/encoder.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "json.hpp"
#include "softprompt/errors.hpp"
#include "softprompt/rng.hpp"

namespace softprompt {

static_assert(std::endian::native == std::endian::little,
              "checkpoint and blob I/O assume a little-endian host");

namespace {

// Dropout sites inside a block.
constexpr std::uint64_t kSiteAttention = 1;
constexpr std::uint64_t kSiteFeedForward = 2;

// Independent initialisation streams.
constexpr std::uint64_t kStreamBackbone = 1;
constexpr std::uint64_t kStreamPrompts = 2;
constexpr std::uint64_t kStreamHead = 3;

// std::normal_distribution is implementation-defined, so the Box-Muller step
// is spelled out to keep initial weights identical across standard libraries.
class NormalSampler {
 public:
  explicit NormalSampler(std::uint64_t key) : engine_(key) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 == 0.0) u1 = rng::to_unit(engine_());
    const double u2 = rng::to_unit(engine_());
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  Tensor sample(Shape shape, double std_dev, bool requires_grad) {
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) v = std_dev * next();
    return Tensor::from(std::move(shape), std::move(values), requires_grad);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

Tensor frozen_zeros(Shape shape) { return Tensor::zeros(std::move(shape), false); }
Tensor frozen_ones(Shape shape) { return Tensor::full(std::move(shape), 1.0, false); }

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  return add_row_bias(matmul(x, weight), bias);
}

// Additive key mask: 0 for visible columns, -inf for [PAD] keys. Prompt
// columns are always visible. Returns an undefined tensor when nothing is
// masked.
Tensor key_mask(const TokenizedSentence& sentence, std::size_t prompt_length) {
  const std::size_t n = prompt_length + sentence.length();
  std::vector<double> row(n, 0.0);
  bool any = false;
  for (std::size_t t = 0; t < sentence.length(); ++t) {
    if (sentence.attention_mask[t] == 0) {
      row[prompt_length + t] = -std::numeric_limits<double>::infinity();
      any = true;
    }
  }
  if (!any) return {};
  std::vector<double> full;
  full.reserve(n * n);
  for (std::size_t r = 0; r < n; ++r) full.insert(full.end(), row.begin(), row.end());
  return Tensor::matrix(n, n, std::move(full));
}

struct SiteDropout {
  const ForwardMode& mode;
  double p;
  std::uint64_t sentence;

  Tensor operator()(const Tensor& x, std::size_t layer, std::uint64_t site) const {
    if (!mode.train || p == 0.0) return x;
    return dropout(x, p, mode.seed, rng::derive({mode.tag, sentence, layer, site}));
  }
};

Tensor transformer_block(const EncoderConfig& cfg, const LayerWeights& w, const Tensor& h,
                         const Tensor& mask, std::size_t layer, const SiteDropout& drop) {
  const std::size_t head_dim = cfg.dim / cfg.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  const Tensor q = linear(h, w.query_weight, w.query_bias);
  const Tensor k = linear(h, w.key_weight, w.key_bias);
  const Tensor v = linear(h, w.value_weight, w.value_bias);
  std::vector<Tensor> contexts;
  contexts.reserve(cfg.heads);
  for (std::size_t a = 0; a < cfg.heads; ++a) {
    const std::size_t off = a * head_dim;
    Tensor scores = scale(matmul_nt(slice_cols(q, off, head_dim), slice_cols(k, off, head_dim)),
                          inv_sqrt);
    if (mask.defined()) scores = add(scores, mask);
    contexts.push_back(matmul(softmax_rows(scores), slice_cols(v, off, head_dim)));
  }
  const Tensor context = cfg.heads == 1 ? contexts.front() : concat_cols(contexts);
  const Tensor attended = drop(linear(context, w.output_weight, w.output_bias), layer,
                               kSiteAttention);
  const Tensor h1 = layer_norm(add(h, attended), w.attention_ln_gain, w.attention_ln_bias);
  const Tensor ff = linear(gelu(linear(h1, w.ffn_in_weight, w.ffn_in_bias)), w.ffn_out_weight,
                           w.ffn_out_bias);
  return layer_norm(add(h1, drop(ff, layer, kSiteFeedForward)), w.ffn_ln_gain, w.ffn_ln_bias);
}

std::vector<Tensor> forward_sentence(const EncoderState& state, const TokenizedSentence& sentence,
                                     const SiteDropout& drop) {
  const EncoderConfig& cfg = state.config;
  const std::size_t k = cfg.prompt_length;
  const std::size_t length = sentence.length();
  if (length == 0) throw LengthError("cannot encode an empty token sequence");
  if (sentence.attention_mask.size() != length)
    throw DimensionError("attention mask length differs from token count");
  if (k + length > cfg.max_positions) {
    throw LengthError("sequence of " + std::to_string(length) + " tokens plus " +
                      std::to_string(k) + " prompts exceeds max_positions " +
                      std::to_string(cfg.max_positions));
  }
  for (std::size_t id : sentence.ids) {
    if (id >= cfg.vocab_size)
      throw ValidationError("token id " + std::to_string(id) + " outside vocabulary of size " +
                            std::to_string(cfg.vocab_size));
  }
  std::vector<std::size_t> positions(length);
  for (std::size_t t = 0; t < length; ++t) positions[t] = t;

  const Backbone& bb = state.backbone;
  Tensor tokens = layer_norm(add(gather_rows(bb.token_embedding, sentence.ids),
                                 gather_rows(bb.position_embedding, positions)),
                             bb.embedding_ln_gain, bb.embedding_ln_bias);
  const Tensor mask = key_mask(sentence, k);

  std::vector<Tensor> hidden;
  hidden.reserve(cfg.layers + 1);
  Tensor previous;  // full output of the previous block
  for (std::size_t j = 0; j < cfg.layers; ++j) {
    Tensor h;
    const std::optional<Tensor> prompt = state.prompt_for_layer(j);
    if (prompt) {
      const Tensor body = j == 0 ? tokens : slice_rows(previous, k, length);
      const Tensor parts[] = {*prompt, body};
      h = concat_rows(parts);
    } else if (j == 0) {
      h = tokens;  // k == 0
    } else {
      h = previous;
    }
    hidden.push_back(h);
    previous = transformer_block(cfg, bb.layers[j], h, mask, j, drop);
  }
  hidden.push_back(previous);
  return hidden;
}

void check_batch(std::span<const TokenizedSentence> batch) {
  if (batch.empty()) throw UsageError("cannot encode an empty batch");
}

}  // namespace

std::string_view prompt_type_name(PromptType type) {
  switch (type) {
    case PromptType::kMultilayer:
      return "multilayer";
    case PromptType::kShared:
      return "shared";
    case PromptType::kInputOnly:
      return "input-only";
  }
  return "unknown";
}

PromptType parse_prompt_type(std::string_view name) {
  if (name == "multilayer") return PromptType::kMultilayer;
  if (name == "shared") return PromptType::kShared;
  if (name == "input-only") return PromptType::kInputOnly;
  throw ConfigError("unknown prompt type '" + std::string(name) +
                    "' (expected multilayer, shared or input-only)");
}

void EncoderConfig::validate() const {
  if (layers == 0) throw ConfigError("layers must be positive");
  if (heads == 0 || dim == 0) throw ConfigError("heads and dim must be positive");
  if (dim % heads != 0)
    throw ConfigError("dim " + std::to_string(dim) + " is not divisible by heads " +
                      std::to_string(heads));
  if (ffn_dim == 0) throw ConfigError("ffn_dim must be positive");
  if (vocab_size < kNumSpecials)
    throw ConfigError("vocab_size must cover the " + std::to_string(kNumSpecials) +
                      " special tokens");
  if (max_positions <= prompt_length + 1)
    throw ConfigError("max_positions must exceed prompt_length + 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(init_std > 0.0) || !std::isfinite(init_std)) throw ConfigError("init_std must be positive");
  if (!(mixing_std >= 0.0) || !std::isfinite(mixing_std))
    throw ConfigError("mixing_std must be non-negative");
}

double EncoderConfig::effective_mixing_std() const {
  return mixing_std > 0.0 ? mixing_std : 1.0 / std::sqrt(static_cast<double>(dim));
}

namespace {

// Canonical backbone order shared by hashing, blobs and checkpoints.
std::vector<std::pair<std::string, Tensor*>> backbone_slots(Backbone& bb) {
  std::vector<std::pair<std::string, Tensor*>> out = {
      {"backbone.token_embedding", &bb.token_embedding},
      {"backbone.position_embedding", &bb.position_embedding},
      {"backbone.embedding_ln.gain", &bb.embedding_ln_gain},
      {"backbone.embedding_ln.bias", &bb.embedding_ln_bias},
  };
  for (std::size_t j = 0; j < bb.layers.size(); ++j) {
    LayerWeights& w = bb.layers[j];
    const std::string p = "backbone.layer" + std::to_string(j) + ".";
    out.insert(out.end(), {
                              {p + "query.weight", &w.query_weight},
                              {p + "query.bias", &w.query_bias},
                              {p + "key.weight", &w.key_weight},
                              {p + "key.bias", &w.key_bias},
                              {p + "value.weight", &w.value_weight},
                              {p + "value.bias", &w.value_bias},
                              {p + "output.weight", &w.output_weight},
                              {p + "output.bias", &w.output_bias},
                              {p + "attention_ln.gain", &w.attention_ln_gain},
                              {p + "attention_ln.bias", &w.attention_ln_bias},
                              {p + "ffn_in.weight", &w.ffn_in_weight},
                              {p + "ffn_in.bias", &w.ffn_in_bias},
                              {p + "ffn_out.weight", &w.ffn_out_weight},
                              {p + "ffn_out.bias", &w.ffn_out_bias},
                              {p + "ffn_ln.gain", &w.ffn_ln_gain},
                              {p + "ffn_ln.bias", &w.ffn_ln_bias},
                          });
  }
  return out;
}

}  // namespace

std::vector<NamedTensor> EncoderState::backbone_parameters() const {
  std::vector<NamedTensor> out;
  for (const auto& [name, slot] : backbone_slots(const_cast<Backbone&>(backbone)))
    out.push_back({name, *slot});
  return out;
}

std::vector<NamedTensor> EncoderState::trainable_parameters() const {
  std::vector<NamedTensor> out;
  for (std::size_t j = 0; j < prompts.matrices.size(); ++j)
    out.push_back({"prompt." + std::to_string(j), prompts.matrices[j]});
  out.push_back({"head.weight", head.weight});
  out.push_back({"head.bias", head.bias});
  return out;
}

EncoderState EncoderState::snapshot() const {
  EncoderState copy = *this;
  for (Tensor& p : copy.prompts.matrices) p = p.clone();
  copy.head.weight = head.weight.clone();
  copy.head.bias = head.bias.clone();
  return copy;
}

std::optional<Tensor> EncoderState::prompt_for_layer(std::size_t layer) const {
  if (prompts.matrices.empty()) return std::nullopt;
  switch (config.prompt_type) {
    case PromptType::kMultilayer:
      return prompts.matrices.at(layer);
    case PromptType::kShared:
      return prompts.matrices.front();
    case PromptType::kInputOnly:
      if (layer == 0) return prompts.matrices.front();
      return std::nullopt;
  }
  return std::nullopt;
}

EncoderState init_encoder(const EncoderConfig& config) {
  config.validate();
  EncoderState state;
  state.config = config;
  const std::size_t d = config.dim;
  const double s = config.init_std;
  const double mix = config.effective_mixing_std();

  NormalSampler bb(rng::derive({config.seed, kStreamBackbone}));
  Backbone& b = state.backbone;
  b.token_embedding = bb.sample({config.vocab_size, d}, s, false);
  b.position_embedding = bb.sample({config.max_positions, d}, s, false);
  b.embedding_ln_gain = frozen_ones({d});
  b.embedding_ln_bias = frozen_zeros({d});
  for (std::size_t j = 0; j < config.layers; ++j) {
    LayerWeights w;
    w.query_weight = bb.sample({d, d}, s, false);
    w.query_bias = frozen_zeros({d});
    w.key_weight = bb.sample({d, d}, s, false);
    w.key_bias = frozen_zeros({d});
    w.value_weight = bb.sample({d, d}, mix, false);
    w.value_bias = frozen_zeros({d});
    w.output_weight = bb.sample({d, d}, mix, false);
    w.output_bias = frozen_zeros({d});
    w.attention_ln_gain = frozen_ones({d});
    w.attention_ln_bias = frozen_zeros({d});
    w.ffn_in_weight = bb.sample({d, config.ffn_dim}, s, false);
    w.ffn_in_bias = frozen_zeros({config.ffn_dim});
    w.ffn_out_weight = bb.sample({config.ffn_dim, d}, s, false);
    w.ffn_out_bias = frozen_zeros({d});
    w.ffn_ln_gain = frozen_ones({d});
    w.ffn_ln_bias = frozen_zeros({d});
    b.layers.push_back(std::move(w));
  }

  if (config.prompt_length > 0) {
    NormalSampler ps(rng::derive({config.seed, kStreamPrompts}));
    const std::size_t count = config.prompt_type == PromptType::kMultilayer ? config.layers : 1;
    for (std::size_t j = 0; j < count; ++j)
      state.prompts.matrices.push_back(ps.sample({config.prompt_length, d}, s, true));
  }
  NormalSampler hs(rng::derive({config.seed, kStreamHead}));
  state.head.weight = hs.sample({d, d}, s, true);
  state.head.bias = Tensor::zeros({d}, true);
  state.backbone_hash = compute_backbone_hash(state);
  return state;
}

std::string compute_backbone_hash(const EncoderState& state) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const NamedTensor& nt : state.backbone_parameters()) {
    for (std::size_t extent : nt.tensor.shape()) {
      const std::uint64_t e = extent;
      feed(&e, sizeof e);
    }
    const auto values = nt.tensor.values();
    feed(values.data(), values.size_bytes());
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::vector<Tensor>> forward_hidden(const EncoderState& state,
                                                std::span<const TokenizedSentence> batch,
                                                const ForwardMode& mode) {
  check_batch(batch);
  std::vector<std::vector<Tensor>> out;
  out.reserve(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const SiteDropout drop{mode, state.config.dropout, b};
    out.push_back(forward_sentence(state, batch[b], drop));
  }
  return out;
}

Tensor embed(const EncoderState& state, std::span<const TokenizedSentence> batch,
             const ForwardMode& mode, bool use_head) {
  check_batch(batch);
  const std::size_t k = state.config.prompt_length;
  std::vector<Tensor> rows;
  rows.reserve(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const SiteDropout drop{mode, state.config.dropout, b};
    const std::vector<Tensor> hidden = forward_sentence(state, batch[b], drop);
    rows.push_back(slice_rows(hidden.back(), k, 1));
  }
  Tensor cls = rows.size() == 1 ? rows.front() : concat_rows(rows);
  if (!use_head) return cls;
  return tanh(linear(cls, state.head.weight, state.head.bias));
}

DualViews dual_encode(const EncoderState& state, std::span<const TokenizedSentence> batch,
                      std::uint64_t seed) {
  DualViews views;
  views.identical = state.config.dropout == 0.0;
  views.first = embed(state, batch, ForwardMode::training(seed, 0), true);
  views.second = embed(state, batch, ForwardMode::training(seed, 1), true);
  return views;
}

void import_backbone_blob(EncoderState& state, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open backbone blob " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t expected = 0;
  for (const NamedTensor& nt : state.backbone_parameters()) expected += nt.tensor.numel();
  if (bytes.size() != expected * sizeof(double)) {
    throw ValidationError("backbone blob " + path.string() + " holds " +
                          std::to_string(bytes.size()) + " bytes; config requires " +
                          std::to_string(expected * sizeof(double)));
  }
  // Fresh tensors, so snapshots that share the old backbone are unaffected.
  std::size_t offset = 0;
  for (auto& [name, slot] : backbone_slots(state.backbone)) {
    std::vector<double> values(slot->numel());
    std::memcpy(values.data(), bytes.data() + offset, values.size() * sizeof(double));
    offset += values.size() * sizeof(double);
    for (double v : values) {
      if (!std::isfinite(v)) throw ValidationError("non-finite value in " + name);
    }
    *slot = Tensor::from(slot->shape(), std::move(values), false);
  }
  state.backbone_hash = compute_backbone_hash(state);
}

void export_backbone_blob(const EncoderState& state, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IngestionError("cannot write backbone blob " + path.string());
  for (const NamedTensor& nt : state.backbone_parameters()) {
    const auto values = nt.tensor.values();
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size_bytes()));
  }
  if (!out) throw IngestionError("short write to " + path.string());
}

// ---------------------------------------------------------------------------
// Checkpoints

std::string config_to_json(const EncoderConfig& c) {
  nlohmann::json j = {
      {"layers", c.layers},
      {"heads", c.heads},
      {"dim", c.dim},
      {"ffn_dim", c.ffn_dim},
      {"vocab_size", c.vocab_size},
      {"max_positions", c.max_positions},
      {"prompt_length", c.prompt_length},
      {"dropout", c.dropout},
      {"seed", c.seed},
      {"prompt_type", std::string(prompt_type_name(c.prompt_type))},
      {"init_std", c.init_std},
      {"mixing_std", c.mixing_std},
  };
  return j.dump();
}

EncoderConfig config_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed encoder config: ") + e.what());
  }
  EncoderConfig c;
  try {
    c.layers = j.at("layers").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.dim = j.at("dim").get<std::size_t>();
    c.ffn_dim = j.at("ffn_dim").get<std::size_t>();
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.max_positions = j.at("max_positions").get<std::size_t>();
    c.prompt_length = j.at("prompt_length").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.prompt_type = parse_prompt_type(j.at("prompt_type").get<std::string>());
    c.init_std = j.at("init_std").get<double>();
    c.mixing_std = j.at("mixing_std").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("incomplete encoder config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

enum class DType : std::uint8_t { kFloat64 = 0, kBytes = 1 };

struct Entry {
  DType dtype = DType::kFloat64;
  Shape shape;
  std::vector<double> values;
  std::string bytes;
};

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  template <typename T>
  void put(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void raw(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  }
  void name(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void tensor(const std::string& n, const Tensor& t) {
    name(n);
    put(static_cast<std::uint8_t>(DType::kFloat64));
    put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) put<std::uint64_t>(e);
    raw(t.values().data(), t.values().size_bytes());
  }
  void bytes(const std::string& n, const std::string& payload) {
    name(n);
    put(static_cast<std::uint8_t>(DType::kBytes));
    put<std::uint32_t>(1);
    put<std::uint64_t>(payload.size());
    raw(payload.data(), payload.size());
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::vector<char> data, std::string source)
      : data_(std::move(data)), source_(std::move(source)) {}

  void need(std::size_t n) const {
    if (data_.size() - pos_ < n)
      throw ValidationError("truncated checkpoint " + source_ + " at byte " + std::to_string(pos_));
  }
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof v);
    pos_ += sizeof v;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(data_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  std::vector<char> data_;
  std::string source_;
  std::size_t pos_ = 0;
};

std::map<std::string, Entry> read_entries(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open checkpoint " + path.string());
  Reader r(std::vector<char>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()),
           path.string());
  if (r.str(kCheckpointMagic.size()) != kCheckpointMagic)
    throw ValidationError(path.string() + " is not a checkpoint (bad magic)");
  const auto version = r.get<std::uint8_t>();
  if (version != kCheckpointVersion)
    throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  std::map<std::string, Entry> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str(r.get<std::uint32_t>());
    Entry e;
    const auto tag = r.get<std::uint8_t>();
    if (tag > static_cast<std::uint8_t>(DType::kBytes))
      throw ValidationError("unknown dtype tag " + std::to_string(tag) + " for " + name);
    e.dtype = static_cast<DType>(tag);
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw ValidationError("implausible rank for " + name);
    for (std::uint32_t a = 0; a < rank; ++a) e.shape.push_back(r.get<std::uint64_t>());
    const std::size_t n = shape_numel(e.shape);
    if (e.dtype == DType::kBytes) {
      e.bytes = r.str(n);
    } else {
      r.need(n * sizeof(double));
      e.values.resize(n);
      for (double& v : e.values) v = r.get<double>();
    }
    if (!entries.emplace(name, std::move(e)).second)
      throw ValidationError("duplicate checkpoint entry " + name);
  }
  if (!r.done()) throw ValidationError("trailing bytes in checkpoint " + path.string());
  return entries;
}

const Entry& require(const std::map<std::string, Entry>& entries, const std::string& name,
                     DType dtype) {
  const auto it = entries.find(name);
  if (it == entries.end()) throw ValidationError("checkpoint lacks entry " + name);
  if (it->second.dtype != dtype) throw ValidationError("checkpoint entry " + name + " has wrong dtype");
  return it->second;
}

void restore(Tensor& target, const Entry& e, const std::string& name) {
  if (e.shape != target.shape())
    throw ValidationError("checkpoint entry " + name + " has shape " + shape_to_string(e.shape) +
                          ", config expects " + shape_to_string(target.shape()));
  std::copy(e.values.begin(), e.values.end(), target.mutable_values().begin());
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const EncoderState& state,
                     const Vocab& vocab, bool include_backbone, std::optional<bool> eval_head) {
  std::string vocab_text;
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    if (i > 0) vocab_text += '\n';
    vocab_text += vocab.token(i);
  }
  const std::vector<NamedTensor> trainable = state.trainable_parameters();
  const std::vector<NamedTensor> backbone =
      include_backbone ? state.backbone_parameters() : std::vector<NamedTensor>{};

  std::ostringstream buffer(std::ios::binary);
  Writer w(buffer);
  w.raw(kCheckpointMagic.data(), kCheckpointMagic.size());
  w.put(kCheckpointVersion);
  const std::size_t count = 3 + (eval_head ? 1 : 0) + trainable.size() + backbone.size();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(count));
  w.bytes("config", config_to_json(state.config));
  w.bytes("vocab", vocab_text);
  w.bytes("backbone_hash", state.backbone_hash);
  if (eval_head) w.bytes("eval_head", *eval_head ? "1" : "0");
  for (const NamedTensor& nt : trainable) w.tensor(nt.name, nt.tensor);
  for (const NamedTensor& nt : backbone) w.tensor(nt.name, nt.tensor);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IngestionError("cannot write checkpoint " + path.string());
  const std::string data = buffer.str();
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IngestionError("short write to " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::map<std::string, Entry> entries = read_entries(path);
  const EncoderConfig config = config_from_json(require(entries, "config", DType::kBytes).bytes);

  std::vector<std::string> tokens;
  {
    std::istringstream in(require(entries, "vocab", DType::kBytes).bytes);
    for (std::string line; std::getline(in, line);) tokens.push_back(line);
  }
  Vocab vocab = Vocab::from_tokens(std::move(tokens));
  if (vocab.size() != config.vocab_size)
    throw ValidationError("checkpoint vocab has " + std::to_string(vocab.size()) +
                          " tokens, config says " + std::to_string(config.vocab_size));

  EncoderState state = init_encoder(config);
  const std::string stored_hash = require(entries, "backbone_hash", DType::kBytes).bytes;
  const bool has_backbone = entries.contains("backbone.token_embedding");
  if (has_backbone) {
    for (auto& [name, slot] : backbone_slots(state.backbone))
      restore(*slot, require(entries, name, DType::kFloat64), name);
    state.backbone_hash = compute_backbone_hash(state);
  }
  if (state.backbone_hash != stored_hash) {
    throw ValidationError("backbone hash mismatch: checkpoint records " + stored_hash +
                          ", reconstructed backbone hashes to " + state.backbone_hash +
                          (has_backbone ? "" : " (checkpoint stores no backbone)"));
  }
  for (NamedTensor& nt : state.trainable_parameters())
    restore(nt.tensor, require(entries, nt.name, DType::kFloat64), nt.name);
  std::optional<bool> eval_head;
  if (entries.contains("eval_head")) {
    const std::string& flag = require(entries, "eval_head", DType::kBytes).bytes;
    if (flag != "0" && flag != "1") throw ValidationError("malformed eval_head entry");
    eval_head = flag == "1";
  }
  return {std::move(state), std::move(vocab), eval_head};
}

}  // namespace softprompt
