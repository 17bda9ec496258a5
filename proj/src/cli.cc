// Copyright 2026 The SDLM Authors.
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

#include "sdlm/cli.h"

#include <openssl/evp.h>

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <iterator>
#include <memory>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "sdlm/autodiff.h"
#include "sdlm/config.h"
#include "sdlm/distance.h"
#include "sdlm/error.h"
#include "sdlm/eval.h"
#include "sdlm/model.h"
#include "sdlm/synth.h"
#include "sdlm/training.h"
#include "sdlm/treebank.h"

namespace sdlm::cli {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string JoinArgs(const std::vector<std::string> &args) {
  std::string out;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (i > 1) out += ' ';
    out += args[i];
  }
  return out;
}

std::optional<std::uint64_t> EnvSeed() {
  const char *v = std::getenv(kSeedEnv);
  if (v == nullptr || *v == '\0') return std::nullopt;
  try {
    std::size_t used = 0;
    const unsigned long long s = std::stoull(v, &used);
    if (used == std::string_view(v).size()) return s;
  } catch (const std::exception &) {
  }
  throw ConfigError(std::string(kSeedEnv) + " is not an unsigned integer: " + v);
}

// Line number (1-based) of a byte offset. End-of-input errors are placed on
// the last non-blank line.
std::size_t LineOf(const std::string &text, std::size_t offset) {
  if (offset >= text.size()) {
    offset = text.size();
    while (offset > 0 && std::isspace(static_cast<unsigned char>(text[offset - 1]))) {
      --offset;
    }
  }
  return 1 + static_cast<std::size_t>(
                 std::count(text.begin(), text.begin() + offset, '\n'));
}

std::vector<Tree> ReadTreebanks(const std::vector<std::string> &paths,
                                std::string *hashed) {
  std::vector<Tree> trees;
  for (const std::string &path : paths) {
    const std::string text = ReadFile(path);
    *hashed += text;
    try {
      std::vector<Tree> parsed = ParseBracketed(text);
      std::move(parsed.begin(), parsed.end(), std::back_inserter(trees));
    } catch (const ParseError &e) {
      throw DataError(path + ":" + std::to_string(LineOf(text, e.offset())) +
                      ": " + e.what());
    }
  }
  return trees;
}

std::string VocabHash(const Vocab &vocab) {
  std::string joined;
  for (const std::string &w : vocab.words()) joined += w + "\n";
  return Sha256Hex(joined);
}

std::vector<std::string> Words(const Corpus &corpus, std::size_t i) {
  std::vector<std::string> out;
  for (int id : corpus.sentence(i)) out.push_back(corpus.vocab.Word(id));
  return out;
}

// --------------------------------------------------------------------------

struct PreprocessArgs {
  std::string rules;
  std::string mode;
  std::vector<std::string> train, valid, test;
  std::string out;
};

void Preprocess(const PreprocessArgs &a, const std::string &command,
                std::ostream &out) {
  PreprocessRules rules;
  if (!a.rules.empty()) rules = PreprocessRules::Parse(ReadFile(a.rules));
  if (!a.mode.empty()) rules.mode = ParseCorpusMode(a.mode);

  std::string hashed;
  Dataset d;
  d.mode = rules.mode;
  d.rules = rules;
  const std::vector<Tree> train = ReadTreebanks(a.train, &hashed);
  if (train.empty()) throw DataError("no trees in the training treebank");
  d.splits["train"] = PreprocessCorpus(train, rules);
  d.vocab = d.splits["train"].vocab;
  if (!a.valid.empty()) {
    d.splits["valid"] = PreprocessCorpus(ReadTreebanks(a.valid, &hashed),
                                         rules, &d.vocab);
  }
  if (!a.test.empty()) {
    d.splits["test"] = PreprocessCorpus(ReadTreebanks(a.test, &hashed), rules,
                                        &d.vocab);
  }

  RunManifest m;
  m.command = command;
  m.config = rules.ToString();
  m.corpus_sha256 = Sha256Hex(hashed);
  std::ostringstream buf;
  WriteDataset(d, buf);
  json j = json::parse(buf.str());
  j["manifest"] = m.ToJson();
  WriteFile(a.out, j.dump(1) + "\n");

  out << "vocab: " << d.vocab.size() << " types\n";
  for (const auto &[name, c] : d.splits) {
    std::size_t words = 0;
    for (const SentenceSpan &s : c.spans) words += s.length();
    out << name << ": " << c.sentence_count() << " sentences, " << words
        << " words, " << c.tokens.size() << " tokens\n";
  }
  out << "wrote " << a.out << "\n";
}

// --------------------------------------------------------------------------

struct SynthArgs {
  std::size_t words = 5000;
  std::optional<std::uint64_t> seed;
  std::size_t max_depth = 4;
  std::string out;
};

void Synth(const SynthArgs &a, std::ostream &out) {
  SynthOptions options;
  options.max_depth = a.max_depth;
  const std::uint64_t seed = a.seed ? *a.seed : EnvSeed().value_or(1);
  std::string text;
  std::size_t n = 0;
  for (const Tree &t : SyntheticTreebank(a.words, seed, options)) {
    text += RenderBracketed(t) + "\n";
    ++n;
  }
  WriteFile(a.out, text);
  out << "wrote " << n << " trees to " << a.out << "\n";
}

// --------------------------------------------------------------------------

struct TrainArgs {
  std::string corpus;
  std::string config;
  std::vector<std::string> sets;
  std::string out;
  std::string log;
  std::string curves;
  std::string train_split = "train";
  std::string valid_split = "valid";
};

Config BuildConfig(const TrainArgs &a) {
  Config c;
  if (auto seed = EnvSeed()) c.train.seed = *seed;
  if (!a.config.empty()) c.Merge(ReadFile(a.config));
  for (const std::string &s : a.sets) {
    const std::size_t eq = s.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("--set expects key=value, got '" + s + "'");
    }
    c.Set(s.substr(0, eq), s.substr(eq + 1));
  }
  c.Validate();
  return c;
}

const Corpus &Split(const Dataset &d, const std::string &name) {
  auto it = d.splits.find(name);
  if (it == d.splits.end()) {
    throw DataError("corpus has no '" + name + "' split");
  }
  return it->second;
}

void Train(const TrainArgs &a, const std::string &command, std::ostream &out) {
  const Config config = BuildConfig(a);
  const std::string corpus_bytes = ReadFile(a.corpus);
  std::istringstream corpus_in(corpus_bytes);
  const Dataset d = ReadDataset(corpus_in);
  const Corpus &train = Split(d, a.train_split);
  auto valid_it = d.splits.find(a.valid_split);
  const Corpus *valid = valid_it == d.splits.end() ? nullptr : &valid_it->second;

  RunManifest m;
  m.command = command;
  m.config = config.ToString();
  m.seed = config.train.seed;
  m.corpus_sha256 = Sha256Hex(corpus_bytes);

  auto model = CreateModel(config.model, d.vocab.size(), config.train.seed);
  Trainer trainer(*model, config, train, valid);

  std::ofstream log;
  if (!a.log.empty()) {
    log.open(a.log, std::ios::binary);
    if (!log) throw DataError("cannot write " + a.log);
    log << json{{"manifest", m.ToJson()}}.dump() << "\n";
  }
  std::string curves = "# manifest " + m.ToJson().dump() + "\n" +
                       "epoch,train_ppl,val_ppl,train_syd,ranking_acc,lr\n";
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochLog &e) {
    out << "epoch " << e.epoch << "  train ppl " << e.train_ppl
        << "  valid ppl " << e.val_ppl << "  syd " << e.train_syd
        << "  rank acc " << e.ranking_acc << "  lr " << e.lr << "\n";
    if (log.is_open()) log << e.ToJson() << "\n" << std::flush;
    curves += std::to_string(e.epoch) + "," + json(e.train_ppl).dump() + "," +
              json(e.val_ppl).dump() + "," + json(e.train_syd).dump() + "," +
              json(e.ranking_acc).dump() + "," + json(e.lr).dump() + "\n";
  };
  trainer.Fit(hooks);

  ordered_json header;
  header["manifest"] = m.ToJson();
  header["vocab_size"] = d.vocab.size();
  header["vocab_sha256"] = VocabHash(d.vocab);
  std::ostringstream ckpt;
  ad::WriteCheckpoint(model->params(), header.dump(), ckpt);
  WriteFile(a.out, ckpt.str());
  if (!a.curves.empty()) WriteFile(a.curves, curves);
  out << "wrote " << a.out << "\n";
}

// --------------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string corpus;
  std::string split = "test";
  std::string trees;
  std::string algo = "unbiased";
  std::size_t layer = 0;
  std::size_t max_len = 0;
  std::vector<std::size_t> render;
  std::string out;
  std::string csv;
};

struct Loaded {
  Config config;
  std::unique_ptr<LanguageModel> model;
  json header;
};

Loaded LoadModel(const std::string &bytes) {
  Loaded l;
  {
    ad::ParamStore scratch;
    std::istringstream in(bytes);
    const std::string text = ad::ReadCheckpoint(in, &scratch);
    try {
      l.header = json::parse(text);
    } catch (const json::exception &e) {
      throw DataError(std::string("checkpoint header is not JSON: ") +
                      e.what());
    }
  }
  const RunManifest m = RunManifest::FromJson(l.header.at("manifest"));
  l.config = Config::Parse(m.config);
  l.model = CreateModel(l.config.model, l.header.at("vocab_size").get<std::size_t>(),
                        l.config.train.seed);
  const std::size_t expected = l.model->params().size();
  std::istringstream in(bytes);
  ad::ReadCheckpoint(in, &l.model->params());
  if (l.model->params().size() != expected) {
    throw DataError("checkpoint holds parameters the configured model lacks");
  }
  return l;
}

BinaryTree Induce(const std::vector<double> &d,
                  const std::vector<std::string> &words, bool biased) {
  return biased ? DistancesToTreeBiased(d, words)
                : DistancesToTreeUnbiased(d, words);
}

void Eval(const EvalArgs &a, const std::string &command, std::ostream &out) {
  const std::string ckpt_bytes = ReadFile(a.checkpoint);
  Loaded loaded;
  try {
    loaded = LoadModel(ckpt_bytes);
  } catch (const json::exception &e) {
    throw DataError(std::string("checkpoint header is malformed: ") + e.what());
  }
  LanguageModel &model = *loaded.model;
  const Config &config = loaded.config;

  const std::string corpus_bytes = ReadFile(a.corpus);
  std::istringstream corpus_in(corpus_bytes);
  const Dataset d = ReadDataset(corpus_in);
  if (loaded.header.at("vocab_sha256").get<std::string>() != VocabHash(d.vocab)) {
    throw DataError("vocab mismatch: checkpoint was trained on a different "
                    "vocabulary than " + a.corpus);
  }
  const Corpus &corpus = Split(d, a.split);

  const bool syd = a.trees.empty() ? model.has_syd() : a.trees == "syd";
  if (!syd && !a.trees.empty() && a.trees != "lm") {
    throw ConfigError("--trees must be lm or syd");
  }
  if (a.algo != "biased" && a.algo != "unbiased") {
    throw ConfigError("--algo must be biased or unbiased");
  }
  const bool biased = a.algo == "biased";
  std::size_t layer = a.layer;
  if (layer == 0) {
    layer = std::min(config.model.supervision_layer, model.distance_layers());
  }
  if (layer < 1 || layer > model.distance_layers()) {
    throw ConfigError("--layer must lie in [1, " +
                      std::to_string(model.distance_layers()) + "]");
  }

  RunManifest m;
  m.command = command;
  m.config = config.ToString();
  m.seed = config.train.seed;
  m.corpus_sha256 = Sha256Hex(corpus_bytes);
  m.checkpoint_sha256 = Sha256Hex(ckpt_bytes);

  DistanceTargets targets;
  if (model.has_syd()) targets = MakeTargets(corpus, TreeSource::kGold, 0);
  const LmEval lm = EvaluateLm(model, corpus, targets, config.train);

  // Structure metrics over sentences with gold trees.
  const Corpus filtered =
      a.max_len > 0 ? LengthFilter(corpus, a.max_len) : corpus;
  Corpus scored;
  scored.mode = filtered.mode;
  scored.vocab = filtered.vocab;
  for (std::size_t i = 0; i < filtered.sentence_count(); ++i) {
    if (filtered.gold_nary[i]) {
      scored.AddSentence(filtered.sentence(i), filtered.gold_nary[i]);
    }
  }
  const std::size_t lm_layer = layer - 1;
  const auto dist = InduceDistances(
      model, scored, syd ? DistanceStream::kSyd : DistanceStream::kLm, lm_layer);
  std::vector<BinaryTree> pred;
  std::vector<Tree> gold;
  for (std::size_t i = 0; i < scored.sentence_count(); ++i) {
    pred.push_back(Induce(dist[i], Words(scored, i), biased));
    gold.push_back(*scored.gold_nary[i]);
  }
  const StructureReport report = EvaluateStructure(pred, gold);

  ordered_json j;
  j["manifest"] = m.ToJson();
  j["split"] = a.split;
  j["trees"] = syd ? "syd" : "lm";
  j["algo"] = a.algo;
  j["layer"] = layer;
  j["max_len"] = a.max_len;
  ordered_json lmj;
  lmj["ppl"] = lm.ppl;
  lmj["loss"] = lm.loss;
  lmj["tokens"] = lm.tokens;
  if (model.has_syd()) lmj["ranking_acc"] = lm.ranking.rate();
  j["lm"] = lmj;
  j["structure"] = ordered_json::parse(report.ToJson());
  const std::string metrics = j.dump(2) + "\n";
  if (a.out.empty()) {
    out << metrics;
  } else {
    WriteFile(a.out, metrics);
  }
  if (!a.csv.empty()) {
    WriteFile(a.csv, "# manifest " + m.ToJson().dump() + "\n" +
                         report.HeightCsv());
  }

  if (a.render.empty()) return;
  for (std::size_t i : a.render) {
    if (i >= scored.sentence_count()) {
      throw ConfigError("--render index " + std::to_string(i) +
                        " is out of range (" +
                        std::to_string(scored.sentence_count()) +
                        " sentences)");
    }
  }
  std::vector<std::vector<double>> syd_d, lm_d;
  if (model.has_syd()) syd_d = InduceDistances(model, scored, DistanceStream::kSyd);
  lm_d = InduceDistances(model, scored, DistanceStream::kLm, lm_layer);
  for (std::size_t i : a.render) {
    const auto words = Words(scored, i);
    out << "== sentence " << i << ":";
    for (const auto &w : words) out << ' ' << w;
    out << "\n-- syd\n";
    if (model.has_syd()) {
      out << RenderAscii(Induce(syd_d[i], words, biased).ToTree());
    } else {
      out << "(no syd stream)\n";
    }
    out << "-- lm (layer " << layer << ")\n"
        << RenderAscii(Induce(lm_d[i], words, biased).ToTree());
    out << "-- gold\n" << RenderAscii(gold[i]);
  }
}

std::vector<std::size_t> ParseIndexList(const std::string &text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stoul(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception &) {
      throw ConfigError("--render expects comma-separated indices, got '" +
                        text + "'");
    }
  }
  return out;
}

}  // namespace

std::string Sha256Hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(),
                 nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 15];
  }
  return out;
}

std::string ReadFile(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void WriteFile(const std::string &path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path);
}

ordered_json RunManifest::ToJson() const {
  ordered_json j;
  j["version"] = version;
  j["command"] = command;
  j["seed"] = seed;
  j["corpus_sha256"] = corpus_sha256;
  if (!checkpoint_sha256.empty()) j["checkpoint_sha256"] = checkpoint_sha256;
  j["config"] = config;
  return j;
}

RunManifest RunManifest::FromJson(const json &j) {
  RunManifest m;
  m.version = j.at("version").get<std::string>();
  m.command = j.at("command").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.corpus_sha256 = j.at("corpus_sha256").get<std::string>();
  m.checkpoint_sha256 = j.value("checkpoint_sha256", "");
  m.config = j.at("config").get<std::string>();
  return m;
}

int Run(const std::vector<std::string> &args, std::ostream &out,
        std::ostream &err) {
  CLI::App app{"Syntactic distance language models: preprocess treebanks, "
               "train ON-LSTM / PRPN models with optional tree supervision, "
               "and evaluate perplexity and induced trees.",
               "sdlm"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));
  app.footer(std::string("Environment:\n  ") + kSeedEnv +
             "  default seed for train and synth (config files and --set "
             "override it)\n\nExit codes: 0 success, 1 usage, 2 data error, "
             "3 numeric failure.");

  PreprocessArgs pre;
  CLI::App *pre_cmd = app.add_subcommand(
      "preprocess", "Clean bracketed treebanks into a corpus file with a "
                    "shared vocabulary and gold distances.");
  pre_cmd->add_option("--rules", pre.rules, "preprocessing rules file")
      ->check(CLI::ExistingFile);
  pre_cmd->add_option("--mode", pre.mode, "corpus mode (overrides rules)")
      ->check(CLI::IsMember({"concat", "sepsent"}));
  pre_cmd->add_option("--train", pre.train, "training treebank files")
      ->required();
  pre_cmd->add_option("--valid", pre.valid, "validation treebank files");
  pre_cmd->add_option("--test", pre.test, "test treebank files");
  pre_cmd->add_option("--out", pre.out, "output corpus file")->required();

  SynthArgs syn;
  CLI::App *syn_cmd = app.add_subcommand(
      "synth", "Sample a synthetic English-like treebank.");
  syn_cmd->add_option("--words", syn.words, "minimum number of words")
      ->capture_default_str();
  syn_cmd->add_option("--seed", syn.seed, "sampling seed");
  syn_cmd->add_option("--max-depth", syn.max_depth, "recursion depth limit")
      ->capture_default_str();
  syn_cmd->add_option("--out", syn.out, "output treebank file")->required();

  TrainArgs tr;
  CLI::App *tr_cmd =
      app.add_subcommand("train", "Train a model and write a checkpoint.");
  tr_cmd->add_option("--corpus", tr.corpus, "corpus file from preprocess")
      ->required();
  tr_cmd->add_option("--config", tr.config, "config file (key = value)")
      ->check(CLI::ExistingFile);
  tr_cmd->add_option("--set", tr.sets, "override one key: key=value")
      ->allow_extra_args(false);
  tr_cmd->add_option("--out", tr.out, "checkpoint path")->required();
  tr_cmd->add_option("--log", tr.log, "JSON-lines epoch log");
  tr_cmd->add_option("--curves", tr.curves, "CSV training curves");
  tr_cmd->add_option("--train-split", tr.train_split)->capture_default_str();
  tr_cmd->add_option("--valid-split", tr.valid_split,
                     "used when present in the corpus")
      ->capture_default_str();

  EvalArgs ev;
  std::string render;
  CLI::App *ev_cmd = app.add_subcommand(
      "eval", "Perplexity and induced-tree structure metrics.");
  ev_cmd->add_option("--checkpoint", ev.checkpoint)->required();
  ev_cmd->add_option("--corpus", ev.corpus)->required();
  ev_cmd->add_option("--split", ev.split)->capture_default_str();
  ev_cmd->add_option("--trees", ev.trees,
                     "distance stream: lm or syd (default syd when present)")
      ->check(CLI::IsMember({"lm", "syd"}));
  ev_cmd->add_option("--algo", ev.algo, "tree induction: biased or unbiased")
      ->check(CLI::IsMember({"biased", "unbiased"}))
      ->capture_default_str();
  ev_cmd->add_option("--layer", ev.layer,
                     "1-based layer of the lm stream (default: supervised "
                     "layer)");
  ev_cmd->add_option("--wsj10-maxlen", ev.max_len,
                     "only score sentences with at most K words (0: all)")
      ->capture_default_str();
  ev_cmd->add_option("--render", render,
                     "comma-separated sentence indices drawn as syd, lm and "
                     "gold trees");
  ev_cmd->add_option("--out", ev.out, "metrics JSON path (default stdout)");
  ev_cmd->add_option("--csv", ev.csv, "accuracy-by-height CSV path");

  std::vector<const char *> argv;
  for (const std::string &a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  const std::string command = JoinArgs(args);
  try {
    if (*pre_cmd) {
      Preprocess(pre, command, out);
    } else if (*syn_cmd) {
      Synth(syn, out);
    } else if (*tr_cmd) {
      Train(tr, command, out);
    } else if (*ev_cmd) {
      ev.render = ParseIndexList(render);
      Eval(ev, command, out);
    }
  } catch (const ConfigError &e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError &e) {
    err << "numeric failure: " << e.what() << "\n";
    return kNumericFailure;
  } catch (const DataError &e) {
    err << "data error: " << e.what() << "\n";
    return kDataFailure;
  } catch (const std::exception &e) {
    err << "error: " << e.what() << "\n";
    return kDataFailure;
  }
  return kOk;
}

}  // namespace sdlm::cli
