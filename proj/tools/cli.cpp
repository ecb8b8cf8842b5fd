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

#include "cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "softprompt/encoder.hpp"
#include "softprompt/errors.hpp"
#include "softprompt/evalkit.hpp"
#include "softprompt/textio.hpp"
#include "softprompt/toydata.hpp"
#include "softprompt/trainer.hpp"

namespace softprompt::cli {

namespace {

namespace fs = std::filesystem;

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string shortest(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

double parse_double(const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || text.empty()) throw ConfigError("not a number: '" + text + "'");
  return v;
}

std::size_t parse_count(const std::string& text) {
  const double v = parse_double(text);
  if (v < 0 || v != std::floor(v)) throw ConfigError("not a non-negative integer: '" + text + "'");
  return static_cast<std::size_t>(v);
}

constexpr double kSupervisedLearningRate = 1e-2;
constexpr std::size_t kSupervisedEpochs = 10;

// ---------------------------------------------------------------------------
// Shared flag groups

struct EncoderFlags {
  EncoderConfig config;
  std::string prompt_type = "multilayer";
  std::optional<std::uint64_t> backbone_seed;
  std::string backbone_blob;
  std::size_t vocab_cap = 30000;
  bool save_backbone = false;

  void add(CLI::App* app) {
    app->add_option("--layers", config.layers, "transformer blocks")->capture_default_str();
    app->add_option("--heads", config.heads, "attention heads")->capture_default_str();
    app->add_option("--dim", config.dim, "model width")->capture_default_str();
    app->add_option("--ffn-dim", config.ffn_dim, "feed-forward width")->capture_default_str();
    app->add_option("--max-positions", config.max_positions, "limit on prompts + tokens")
        ->capture_default_str();
    app->add_option("--prompt-len", config.prompt_length, "soft prompt length k")
        ->capture_default_str();
    app->add_option("--prompt-type", prompt_type, "multilayer, shared or input-only")
        ->check(CLI::IsMember({"multilayer", "shared", "input-only"}))
        ->capture_default_str();
    app->add_option("--dropout", config.dropout, "dropout probability")->capture_default_str();
    app->add_option("--init-std", config.init_std, "std of sampled weights")->capture_default_str();
    app->add_option("--mixing-std", config.mixing_std,
                    "std of attention value/output projections (0 = 1/sqrt(dim))")
        ->capture_default_str();
    app->add_option("--backbone-seed", backbone_seed, "backbone seed (defaults to --seed)");
    app->add_option("--backbone-blob", backbone_blob, "raw float64 backbone weights")
        ->check(CLI::ExistingFile);
    app->add_option("--vocab-cap", vocab_cap, "vocabulary size including specials")
        ->capture_default_str();
    app->add_flag("--save-backbone", save_backbone, "store backbone tensors in checkpoints");
  }

  EncoderState build(std::size_t vocab_size, std::uint64_t seed) const {
    EncoderConfig c = config;
    c.vocab_size = vocab_size;
    c.prompt_type = parse_prompt_type(prompt_type);
    c.seed = backbone_seed.value_or(seed);
    EncoderState state = init_encoder(c);
    if (!backbone_blob.empty()) import_backbone_blob(state, backbone_blob);
    return state;
  }

  bool store_backbone() const { return save_backbone || !backbone_blob.empty(); }
};

struct TrainFlags {
  TrainConfig config;
  CLI::Option* lr_option = nullptr;
  CLI::Option* epochs_option = nullptr;

  void add(CLI::App* app) {
    app->add_option("--batch-size", config.batch_size)->capture_default_str();
    epochs_option = app->add_option("--epochs", config.epochs)->capture_default_str();
    lr_option = app->add_option("--lr", config.learning_rate, "initial learning rate")->capture_default_str();
    app->add_option("--tau", config.loss.temperature, "NT-Xent temperature")->capture_default_str();
    app->add_option("--margin", config.loss.margin, "hinge margin m")->capture_default_str();
    app->add_option("--lambda", config.loss.lambda, "hinge weight")->capture_default_str();
    app->add_option("--eval-every", config.eval_every, "steps between dev evaluations")
        ->capture_default_str();
    app->add_option("--max-len", config.max_length, "token limit per sentence")
        ->capture_default_str();
  }
};

struct HeadFlag {
  std::string mode = "auto";

  void add(CLI::App* app) {
    app->add_option("--head", mode, "apply the MLP head: auto (as trained), on, off")
        ->check(CLI::IsMember({"auto", "on", "off"}))
        ->capture_default_str();
  }

  bool resolve(const Checkpoint& ck) const {
    if (mode == "on") return true;
    if (mode == "off") return false;
    return ck.eval_head.value_or(true);
  }
};

void add_config_file(CLI::App* app, std::string& path) {
  app->add_option("--config", path, "key=value file; command-line flags win")
      ->check(CLI::ExistingFile);
}

// Turns a key=value file into "--key=value" tokens. Blank lines, "#" and ";"
// comments and [section] headers are skipped.
std::vector<std::string> read_config_tokens(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  std::vector<std::string> tokens;
  std::size_t line_no = 0;
  auto trim = [](const std::string& t) {
    const auto b = t.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    return t.substr(b, t.find_last_not_of(" \t\r") - b + 1);
  };
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';' || line[0] == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    while (!key.empty() && key[0] == '-') key.erase(0, 1);
    for (char& c : key) c = c == '_' ? '-' : c;
    if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') && value.back() == value.front())
      value = value.substr(1, value.size() - 2);
    if (key.empty() || key == "config")
      throw ConfigError(path + ":" + std::to_string(line_no) + ": bad key");
    tokens.push_back("--" + key + "=" + value);
  }
  return tokens;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IngestionError("cannot write " + path.string());
  out << text;
  if (!out) throw IngestionError("short write to " + path.string());
}

std::vector<std::string> triplet_texts(const std::vector<TripletRecord>& triplets) {
  std::vector<std::string> texts;
  for (const TripletRecord& t : triplets) {
    texts.push_back(t.premise);
    texts.push_back(t.entailment);
    texts.push_back(t.contradiction);
  }
  return texts;
}

struct Progress {
  std::ostream& err;

  void operator()(const LogRecord& r) const {
    if (r.dev_spearman) err << "step " << r.step << "\tdev_spearman " << fixed2(*r.dev_spearman * 100) << '\n';
  }
};

void report_fit(std::ostream& out, const FitResult& r, const fs::path& dir) {
  std::size_t steps = 0;
  for (const LogRecord& rec : r.log.records) steps += rec.losses.has_value();
  out << "run\tsteps\tbest_step\tbest_dev_spearman\n";
  out << dir.string() << '\t' << steps << '\t' << r.log.best_step << '\t'
      << fixed2(r.log.best_dev_spearman * 100) << '\n';
}

double test_spearman(const EncoderState& state, const Vocab& vocab,
                     const std::vector<ScoredPair>& test, bool head, std::size_t max_len) {
  const ScoredLists s = score_pairs(state, vocab, test, head, max_len);
  return spearman(s.gold, s.predicted);
}

// ---------------------------------------------------------------------------
// Commands

struct Context {
  std::ostream& out;
  std::ostream& err;
  std::uint64_t seed = 42;
};

struct TrainCommand {
  std::string config;
  EncoderFlags encoder;
  TrainFlags train;
  std::string corpus, triplets, dev, out_dir;
  bool no_eh = false;
  bool supervised = false;

  CLI::App* add(CLI::App& app, bool sup) {
    supervised = sup;
    if (sup) {
      train.config.mode = TrainMode::kSupervisedEh;
      train.config.epochs = kSupervisedEpochs;
      train.config.learning_rate = kSupervisedLearningRate;
    }
    CLI::App* cmd = sup ? app.add_subcommand("train-sup", "supervised training on NLI-style triplets")
                        : app.add_subcommand("train-unsup", "unsupervised training with dropout positives");
    if (sup) {
      cmd->add_option("--triplets", triplets, "premise<TAB>entailment<TAB>contradiction")
          ->required()
          ->check(CLI::ExistingFile);
      cmd->add_flag("--no-eh", no_eh, "train with the contrastive loss only");
    } else {
      cmd->add_option("--corpus", corpus, "one sentence per line")->required()->check(CLI::ExistingFile);
    }
    cmd->add_option("--dev", dev, "scored pairs for checkpoint selection")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", out_dir, "run directory")->required();
    encoder.add(cmd);
    train.add(cmd);
    add_config_file(cmd, config);
    return cmd;
  }

  void run(Context& ctx) {
    TrainConfig tc = train.config;
    tc.seed = ctx.seed;
    if (supervised && no_eh) tc.mode = TrainMode::kSupervised;
    tc.validate();
    std::vector<std::string> texts;
    std::vector<TripletRecord> records;
    if (supervised) {
      records = load_triplets(triplets);
      texts = triplet_texts(records);
    } else {
      texts = load_corpus(corpus);
    }
    const Vocab vocab = Vocab::build(texts, encoder.vocab_cap);
    const EncoderState init = encoder.build(vocab.size(), ctx.seed);
    const TrainData data = supervised ? tokenize_triplets(records, vocab, tc.max_length)
                                      : tokenize_corpus(texts, vocab, tc.max_length);
    const DevSet dev_set = tokenize_dev(load_pairs(dev), vocab, tc.max_length);
    const FitResult result = fit(init, tc, data, dev_set, Progress{ctx.err});
    if (result.log.dropped_items > 0)
      ctx.err << "dropped " << result.log.dropped_items << " items in singleton batches\n";
    write_run_directory(out_dir, result, tc, vocab, encoder.store_backbone());
    report_fit(ctx.out, result, out_dir);
  }
};

struct EmbedCommand {
  std::string config;
  std::string ckpt, corpus, out_path;
  HeadFlag head;
  std::size_t max_len = kDefaultMaxLength;

  CLI::App* add(CLI::App& app) {
    CLI::App* cmd = app.add_subcommand("embed", "write eval-mode sentence embeddings");
    cmd->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);
    cmd->add_option("--corpus", corpus, "one sentence per line")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", out_path, "output TSV: id then d values")->required();
    cmd->add_option("--max-len", max_len)->capture_default_str();
    head.add(cmd);
    add_config_file(cmd, config);
    return cmd;
  }

  void run(Context& ctx) {
    const Checkpoint ck = load_checkpoint(ckpt);
    const std::vector<std::string> texts = load_corpus(corpus);
    const Tensor e = embed_texts(ck.state, ck.vocab, texts, head.resolve(ck), max_len);
    std::string text;
    char buf[40];
    for (std::size_t r = 0; r < e.rows(); ++r) {
      text += std::to_string(r);
      for (std::size_t c = 0; c < e.cols(); ++c) {
        std::snprintf(buf, sizeof buf, "\t%.17g", e.at(r, c));
        text += buf;
      }
      text += '\n';
    }
    write_file(out_path, text);
    ctx.out << "sentences\tdim\tout\n" << e.rows() << '\t' << e.cols() << '\t' << out_path << '\n';
  }
};

struct EvalStsCommand {
  std::string config;
  std::string ckpt;
  std::vector<std::string> pairs;
  HeadFlag head;
  std::size_t max_len = kDefaultMaxLength;

  CLI::App* add(CLI::App& app) {
    CLI::App* cmd = app.add_subcommand("eval-sts", "Spearman correlation on scored pairs");
    cmd->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);
    cmd->add_option("--pairs", pairs, "score<TAB>sentence1<TAB>sentence2 files")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--max-len", max_len)->capture_default_str();
    head.add(cmd);
    add_config_file(cmd, config);
    return cmd;
  }

  void run(Context& ctx) {
    const Checkpoint ck = load_checkpoint(ckpt);
    const bool use_head = head.resolve(ck);
    ctx.out << "dataset\tspearman\n";
    double total = 0.0;
    for (const std::string& p : pairs) {
      const double rho = test_spearman(ck.state, ck.vocab, load_pairs(p), use_head, max_len);
      total += rho;
      ctx.out << fs::path(p).stem().string() << '\t' << fixed2(rho * 100) << '\n';
    }
    if (pairs.size() > 1) ctx.out << "avg\t" << fixed2(total / pairs.size() * 100) << '\n';
  }
};

struct EvalBootstrapCommand {
  std::string config;
  std::string ckpt, dense;
  BootstrapConfig boot;
  HeadFlag head;
  std::size_t max_len = kDefaultMaxLength;

  CLI::App* add(CLI::App& app) {
    CLI::App* cmd = app.add_subcommand("eval-bootstrap", "query-subsampled bootstrap Spearman");
    cmd->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);
    cmd->add_option("--dense", dense, "query<TAB>item<TAB>score<TAB>sentence1<TAB>sentence2")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--resamples", boot.resamples)->capture_default_str();
    cmd->add_option("--fraction", boot.query_fraction, "share of queries per resample")
        ->capture_default_str();
    cmd->add_option("--max-len", max_len)->capture_default_str();
    head.add(cmd);
    add_config_file(cmd, config);
    return cmd;
  }

  void run(Context& ctx) {
    const Checkpoint ck = load_checkpoint(ckpt);
    BootstrapConfig cfg = boot;
    cfg.seed = ctx.seed;
    const BootstrapResult r =
        bootstrap_spearman(ck.state, ck.vocab, load_dense_ratings(dense), head.resolve(ck), cfg, max_len);
    ctx.out << "dataset\tmean\tstd\n"
            << fs::path(dense).stem().string() << '\t' << fixed2(r.mean * 100) << '\t'
            << fixed2(r.std * 100) << '\n';
  }
};

struct AnalyzeCommand {
  std::string config;
  std::string ckpt, pairs, density_out;
  std::size_t bins = 20;
  double positive_threshold = 4.0;
  HeadFlag head;
  std::size_t max_len = kDefaultMaxLength;

  CLI::App* add(CLI::App& app) {
    CLI::App* cmd = app.add_subcommand("analyze", "alignment, uniformity and similarity density");
    cmd->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);
    cmd->add_option("--pairs", pairs, "scored pairs")->required()->check(CLI::ExistingFile);
    cmd->add_option("--bins", bins, "histogram bins over [-1, 1]")->capture_default_str();
    cmd->add_option("--positive-threshold", positive_threshold,
                    "gold score at or above which a pair counts as positive")
        ->capture_default_str();
    cmd->add_option("--density-out", density_out, "density CSV path (stdout when omitted)");
    cmd->add_option("--max-len", max_len)->capture_default_str();
    head.add(cmd);
    add_config_file(cmd, config);
    return cmd;
  }

  void run(Context& ctx) {
    const Checkpoint ck = load_checkpoint(ckpt);
    const bool use_head = head.resolve(ck);
    const std::vector<ScoredPair> data = load_pairs(pairs);
    std::vector<std::string> left, right;
    for (const ScoredPair& p : data) {
      left.push_back(p.sentence_a);
      right.push_back(p.sentence_b);
    }
    const Tensor a = embed_texts(ck.state, ck.vocab, left, use_head, max_len);
    const Tensor b = embed_texts(ck.state, ck.vocab, right, use_head, max_len);
    const std::vector<double> predicted = paired_cosines(a, b);

    std::vector<std::size_t> positive;
    for (std::size_t i = 0; i < data.size(); ++i)
      if (data[i].score >= positive_threshold) positive.push_back(i);
    if (positive.empty()) throw ValidationError("no pair reaches the positive threshold");
    auto rows = [](const Tensor& m, const std::vector<std::size_t>& idx) {
      return gather_rows(m, idx).detach();
    };
    const double align = alignment(rows(a, positive), rows(b, positive));
    const Tensor both[] = {a, b};
    const double unif = uniformity(concat_rows(both));
    std::vector<double> gold;
    for (const ScoredPair& p : data) gold.push_back(p.score);
    const DensityHistogram hist = density_histogram(gold, predicted, bins);

    ctx.out << "metric\tvalue\n";
    ctx.out << "alignment\t" << shortest(align) << '\n';
    ctx.out << "uniformity\t" << shortest(unif) << '\n';
    ctx.out << "spearman\t" << fixed2(spearman(gold, predicted) * 100) << '\n';
    if (density_out.empty()) {
      ctx.out << '\n' << density_csv(hist);
    } else {
      write_file(density_out, density_csv(hist));
    }
  }
};

struct SweepCommand {
  std::string config;
  EncoderFlags encoder;
  TrainFlags train;
  std::string param, values, mode = "auto";
  std::string corpus, triplets, dev, test, dense;
  std::size_t resamples = 1000;

  CLI::App* add(CLI::App& app) {
    CLI::App* cmd = app.add_subcommand("sweep", "train and test across one hyperparameter");
    cmd->add_option("--param", param, "margin, prompt-len or prompt-type")
        ->required()
        ->check(CLI::IsMember({"margin", "prompt-len", "prompt-type"}));
    cmd->add_option("--values", values, "comma list; a,b,...,c expands a progression")->required();
    cmd->add_option("--mode", mode, "auto, unsup, sup or sup-eh")
        ->check(CLI::IsMember({"auto", "unsup", "sup", "sup-eh"}))
        ->capture_default_str();
    cmd->add_option("--corpus", corpus, "unsupervised training corpus")->check(CLI::ExistingFile);
    cmd->add_option("--triplets", triplets, "supervised training triplets")->check(CLI::ExistingFile);
    cmd->add_option("--dev", dev)->required()->check(CLI::ExistingFile);
    cmd->add_option("--test", test)->required()->check(CLI::ExistingFile);
    cmd->add_option("--dense", dense, "dense ratings for the bootstrap column")
        ->check(CLI::ExistingFile);
    cmd->add_option("--resamples", resamples, "bootstrap resamples")->capture_default_str();
    encoder.add(cmd);
    train.add(cmd);
    add_config_file(cmd, config);
    return cmd;
  }

  TrainMode resolve_mode() const {
    if (mode == "unsup") return TrainMode::kUnsupervised;
    if (mode == "sup") return TrainMode::kSupervised;
    if (mode == "sup-eh") return TrainMode::kSupervisedEh;
    return param == "margin" ? TrainMode::kSupervisedEh : TrainMode::kUnsupervised;
  }

  void run(Context& ctx) {
    const TrainMode base_mode = resolve_mode();
    const bool supervised = base_mode != TrainMode::kUnsupervised;
    if (param == "margin" && !supervised) throw ConfigError("a margin sweep needs supervised training");
    if (supervised && triplets.empty()) throw ConfigError("--triplets is required for supervised sweeps");
    if (!supervised && corpus.empty()) throw ConfigError("--corpus is required for unsupervised sweeps");

    const std::vector<std::string> points = expand_values(values);
    std::vector<TripletRecord> records;
    std::vector<std::string> texts;
    if (supervised) {
      records = load_triplets(triplets);
      texts = triplet_texts(records);
    } else {
      texts = load_corpus(corpus);
    }
    const Vocab vocab = Vocab::build(texts, encoder.vocab_cap);
    const std::size_t max_len = train.config.max_length;
    const TrainData data = supervised ? tokenize_triplets(records, vocab, max_len)
                                      : tokenize_corpus(texts, vocab, max_len);
    const DevSet dev_set = tokenize_dev(load_pairs(dev), vocab, max_len);
    const std::vector<ScoredPair> test_pairs = load_pairs(test);
    const std::vector<DenseRating> dense_ratings =
        dense.empty() ? std::vector<DenseRating>{} : load_dense_ratings(dense);
    const bool with_cxc = param != "margin";
    if (with_cxc && dense_ratings.empty()) throw ConfigError("--dense is required for this sweep");

    struct Row {
      std::string label;
      EncoderFlags enc;
      TrainConfig tc;
    };
    std::vector<Row> rows;
    TrainConfig base = train.config;
    base.mode = base_mode;
    if (supervised) {
      if (train.lr_option->count() == 0) base.learning_rate = kSupervisedLearningRate;
      if (train.epochs_option->count() == 0) base.epochs = kSupervisedEpochs;
    }
    base.seed = ctx.seed;
    if (param == "margin") {
      Row without{"w/o", encoder, base};
      without.tc.mode = TrainMode::kSupervised;
      rows.push_back(without);
    }
    for (const std::string& v : points) {
      Row row{v, encoder, base};
      if (param == "margin") {
        row.tc.loss.margin = parse_double(v);
        row.tc.mode = TrainMode::kSupervisedEh;
      } else if (param == "prompt-len") {
        row.enc.config.prompt_length = parse_count(v);
      } else {
        parse_prompt_type(v);
        row.enc.prompt_type = v;
      }
      row.tc.validate();
      rows.push_back(row);
    }

    ctx.out << (param == "margin" ? "m\tavg_sts\n"
                                  : param == "prompt-len" ? "k\tavg_sts\tcxc_sts\n"
                                                          : "prompt_type\tavg_sts\tcxc_sts\n");
    for (const Row& row : rows) {
      ctx.err << "sweep " << param << "=" << row.label << '\n';
      const EncoderState init = row.enc.build(vocab.size(), ctx.seed);
      const FitResult r = fit(init, row.tc, data, dev_set, Progress{ctx.err});
      const bool head = row.tc.eval_uses_head();
      ctx.out << row.label << '\t'
              << fixed2(test_spearman(r.best, vocab, test_pairs, head, max_len) * 100);
      if (with_cxc) {
        BootstrapConfig bc;
        bc.resamples = resamples;
        bc.seed = ctx.seed;
        const BootstrapResult b = bootstrap_spearman(r.best, vocab, dense_ratings, head, bc, max_len);
        ctx.out << '\t' << fixed2(b.mean * 100);
      }
      ctx.out << '\n';
      ctx.out.flush();
    }
  }
};

struct MakeToyCommand {
  std::string config;
  ToyDataConfig toy;
  std::string out_dir;

  CLI::App* add(CLI::App& app) {
    CLI::App* cmd = app.add_subcommand("make-toy", "write a synthetic paraphrase-cluster dataset");
    cmd->add_option("--out", out_dir, "output directory")->required();
    cmd->add_option("--clusters", toy.clusters)->capture_default_str();
    cmd->add_option("--cluster-words", toy.cluster_words, "topic tokens per cluster")
        ->capture_default_str();
    cmd->add_option("--topic-words", toy.topic_words, "topic tokens per sentence")
        ->capture_default_str();
    cmd->add_option("--fillers", toy.fillers, "shared filler vocabulary size")->capture_default_str();
    cmd->add_option("--fill-min", toy.min_fill)->capture_default_str();
    cmd->add_option("--fill-max", toy.max_fill)->capture_default_str();
    cmd->add_option("--per-cluster", toy.sentences_per_cluster, "corpus sentences per cluster")
        ->capture_default_str();
    cmd->add_option("--triplets", toy.triplets)->capture_default_str();
    cmd->add_option("--pairs", toy.pairs_per_split, "pairs per STS split")->capture_default_str();
    cmd->add_option("--dense-queries", toy.dense_queries)->capture_default_str();
    cmd->add_option("--dense-items", toy.dense_items)->capture_default_str();
    add_config_file(cmd, config);
    return cmd;
  }

  void run(Context& ctx) {
    ToyDataConfig c = toy;
    c.seed = ctx.seed;
    const ToyDataset data = make_toy_dataset(c);
    write_toy_dataset(data, out_dir);
    ctx.out << "file\trecords\n"
            << "corpus.txt\t" << data.corpus.size() << '\n'
            << "triplets.tsv\t" << data.triplets.size() << '\n'
            << "sts_dev.tsv\t" << data.dev.size() << '\n'
            << "sts_test.tsv\t" << data.test.size() << '\n'
            << "dense.tsv\t" << data.dense.size() << '\n';
  }
};

}  // namespace

std::vector<std::string> expand_values(const std::string& list) {
  std::vector<std::string> parts;
  std::stringstream in(list);
  for (std::string item; std::getline(in, item, ',');) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw ConfigError("empty entry in value list '" + list + "'");
    parts.push_back(item.substr(b, e - b + 1));
  }
  if (parts.empty()) throw ConfigError("empty value list");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (parts[i] != "...") {
      out.push_back(parts[i]);
      continue;
    }
    if (out.size() < 2 || i + 1 >= parts.size())
      throw ConfigError("'...' needs two values before it and one after");
    const double a = parse_double(out[out.size() - 2]);
    const double b = parse_double(out.back());
    const double last = parse_double(parts[i + 1]);
    const double step = b - a;
    if (step == 0.0 || (last - b) / step < 0.0) throw ConfigError("'...' does not reach its end value");
    const auto n = static_cast<std::size_t>(std::llround((last - b) / step));
    if (std::abs(b + static_cast<double>(n) * step - last) > 1e-9 * std::max(1.0, std::abs(last)))
      throw ConfigError("end value is not on the progression");
    for (std::size_t t = 1; t < n; ++t) out.push_back(shortest(b + static_cast<double>(t) * step));
    out.push_back(parts[i + 1]);
    ++i;
  }
  return out;
}

namespace {

struct Program {
  CLI::App app{"Soft-prompt contrastive sentence embeddings"};
  Context ctx;
  TrainCommand unsup, sup;
  EmbedCommand embed;
  EvalStsCommand eval_sts;
  EvalBootstrapCommand eval_boot;
  AnalyzeCommand analyze;
  SweepCommand sweep;
  MakeToyCommand make_toy;
  std::vector<std::pair<CLI::App*, std::function<void()>>> commands;

  Program(std::ostream& out, std::ostream& err) : ctx{out, err} {
    app.require_subcommand(1);
    app.add_option("--seed", ctx.seed, "seed for every random choice")->capture_default_str();
    app.fallthrough();
    attach(unsup.add(app, false), unsup);
    attach(sup.add(app, true), sup);
    attach(embed.add(app), embed);
    attach(eval_sts.add(app), eval_sts);
    attach(eval_boot.add(app), eval_boot);
    attach(analyze.add(app), analyze);
    attach(sweep.add(app), sweep);
    attach(make_toy.add(app), make_toy);
  }

  template <typename Command>
  void attach(CLI::App* sub, Command& command) {
    commands.emplace_back(sub, [this, &command] { command.run(ctx); });
  }

  void parse(const std::vector<std::string>& args) {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  }

  void execute() {
    for (const auto& [sub, fn] : commands)
      if (sub->parsed()) fn();
  }
};

bool names_flag(const std::string& arg, const std::string& flag) {
  return arg == flag || arg.rfind(flag + "=", 0) == 0;
}

// Config values enter the argument list right after the subcommand name,
// minus any flag the command line already names.
std::vector<std::string> merge_config(const std::vector<std::string>& args, const Program& program) {
  std::size_t at = args.size();
  const CLI::App* sub = nullptr;
  for (std::size_t i = 0; i < args.size() && sub == nullptr; ++i) {
    for (const auto& [s, fn] : program.commands) {
      if (args[i] == s->get_name()) {
        sub = s;
        at = i;
        break;
      }
    }
  }
  if (sub == nullptr) return args;
  std::string path;
  for (std::size_t i = at + 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  if (!fs::is_regular_file(path)) throw ConfigError("config file not found: " + path);
  std::vector<std::string> merged(args.begin(), args.begin() + static_cast<std::ptrdiff_t>(at) + 1);
  for (const std::string& token : read_config_tokens(path)) {
    const std::string name = token.substr(0, token.find('='));
    if (sub->get_option_no_throw(name) == nullptr && program.app.get_option_no_throw(name) == nullptr) throw ConfigError(path + ": unknown key '" + name.substr(2) + "'");
    bool on_command_line = false;
    for (const std::string& arg : args) on_command_line = on_command_line || names_flag(arg, name);
    if (!on_command_line) merged.push_back(token);
  }
  merged.insert(merged.end(), args.begin() + static_cast<std::ptrdiff_t>(at) + 1, args.end());
  return merged;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Program program(out, err);
  try {
    program.parse(merge_config(args, program));
  } catch (const CLI::ParseError& e) {
    const int code = program.app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }

  try {
    program.execute();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.is_validation() ? kExitValidation : kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace softprompt::cli
