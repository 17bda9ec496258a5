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

#include "sdlm/config.h"

#include <charconv>
#include <functional>
#include <sstream>

#include "sdlm/error.h"

namespace sdlm {

namespace {

std::string Trim(std::string_view s) {
  const auto space = [](char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n';
  };
  std::size_t b = 0, e = s.size();
  while (b < e && space(s[b])) ++b;
  while (e > b && space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

[[noreturn]] void Bad(std::string_view key, std::string_view value,
                      std::string_view expected) {
  throw ConfigError("invalid value for '" + std::string(key) + "': '" +
                    std::string(value) + "' (expected " +
                    std::string(expected) + ")");
}

std::string FormatDouble(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double ParseDouble(std::string_view key, std::string_view value) {
  double v = 0;
  auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
    Bad(key, value, "a number");
  }
  return v;
}

std::uint64_t ParseUnsigned(std::string_view key, std::string_view value) {
  std::uint64_t v = 0;
  auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
    Bad(key, value, "a non-negative integer");
  }
  return v;
}

bool ParseBool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "on" || value == "yes") {
    return true;
  }
  if (value == "false" || value == "0" || value == "off" || value == "no") {
    return false;
  }
  Bad(key, value, "true or false");
}

template <typename E>
struct EnumName {
  E value;
  std::string_view name;
};

template <typename E, std::size_t N>
E ParseEnum(std::string_view key, std::string_view value,
            const EnumName<E> (&names)[N]) {
  std::string expected;
  for (const auto &n : names) {
    if (n.name == value) return n.value;
    if (!expected.empty()) expected += " | ";
    expected += n.name;
  }
  Bad(key, value, expected);
}

template <typename E, std::size_t N>
std::string_view EnumToName(E v, const EnumName<E> (&names)[N]) {
  for (const auto &n : names) {
    if (n.value == v) return n.name;
  }
  return "?";
}

constexpr EnumName<ModelKind> kModelKinds[] = {
    {ModelKind::kOnLstm, "onlstm"}, {ModelKind::kPrpn, "prpn"}};
constexpr EnumName<PrpnParser> kParsers[] = {{PrpnParser::kSyd, "syd"},
                                             {PrpnParser::kConv, "conv"}};
constexpr EnumName<SupervisionMode> kModes[] = {
    {SupervisionMode::kSplitHead, "split-head"},
    {SupervisionMode::kOneSet, "one-set"},
    {SupervisionMode::kVanillaMultitask, "vanilla-multitask"},
    {SupervisionMode::kNone, "none"}};
constexpr EnumName<TreeSource> kSources[] = {{TreeSource::kGold, "gold"},
                                             {TreeSource::kRandom, "random"},
                                             {TreeSource::kNone, "none"}};
constexpr EnumName<PairMode> kPairModes[] = {
    {PairMode::kSymmetric, "symmetric"}, {PairMode::kAsWritten, "as-written"}};
constexpr EnumName<Optimizer> kOptimizers[] = {{Optimizer::kSgd, "sgd"},
                                               {Optimizer::kAdam, "adam"}};
constexpr EnumName<InitScheme> kInits[] = {{InitScheme::kUniform, "uniform"},
                                           {InitScheme::kZero, "zero"}};

struct Field {
  std::string name;
  std::function<std::string(const Config &)> get;
  std::function<void(Config &, std::string_view)> set;
};

template <typename T>
Field SizeField(std::string name, T Config::*group, std::size_t T::*member) {
  return {name,
          [=](const Config &c) { return std::to_string(c.*group.*member); },
          [=](Config &c, std::string_view v) {
            c.*group.*member = static_cast<std::size_t>(ParseUnsigned(name, v));
          }};
}

template <typename T>
Field DoubleField(std::string name, T Config::*group, double T::*member) {
  return {name, [=](const Config &c) { return FormatDouble(c.*group.*member); },
          [=](Config &c, std::string_view v) {
            c.*group.*member = ParseDouble(name, v);
          }};
}

template <typename T>
Field BoolField(std::string name, T Config::*group, bool T::*member) {
  return {name,
          [=](const Config &c) {
            return std::string(c.*group.*member ? "true" : "false");
          },
          [=](Config &c, std::string_view v) {
            c.*group.*member = ParseBool(name, v);
          }};
}

template <typename T, typename E, std::size_t N>
Field EnumField(std::string name, T Config::*group, E T::*member,
                const EnumName<E> (&names)[N]) {
  return {name,
          [=, &names](const Config &c) {
            return std::string(EnumToName(c.*group.*member, names));
          },
          [=, &names](Config &c, std::string_view v) {
            c.*group.*member = ParseEnum(name, v, names);
          }};
}

const std::vector<Field> &Fields() {
  using M = ModelConfig;
  using T = TrainConfig;
  auto m = &Config::model;
  auto t = &Config::train;
  static const std::vector<Field> fields = {
      EnumField("model", m, &M::kind, kModelKinds),
      SizeField("layers", m, &M::layers),
      SizeField("emb_size", m, &M::emb_size),
      SizeField("hidden_size", m, &M::hidden_size),
      SizeField("chunk_factor", m, &M::chunk_factor),
      BoolField("tie_weights", m, &M::tie_weights),
      EnumField("init", m, &M::init, kInits),
      EnumField("supervision_mode", m, &M::supervision, kModes),
      SizeField("supervision_layer", m, &M::supervision_layer),
      DoubleField("dropout_input", m, &M::dropout_input),
      DoubleField("dropout_recurrent", m, &M::dropout_recurrent),
      DoubleField("dropout_layer", m, &M::dropout_layer),
      DoubleField("dropout_output", m, &M::dropout_output),
      DoubleField("dropout_embedding", m, &M::dropout_embedding),
      EnumField("prpn_parser", m, &M::prpn_parser, kParsers),
      SizeField("prpn_lookback", m, &M::prpn_lookback),
      DoubleField("prpn_tau", m, &M::prpn_tau),
      SizeField("prpn_ff_size", m, &M::prpn_ff_size),
      EnumField("tree_source", t, &T::tree_source, kSources),
      DoubleField("alpha", t, &T::alpha),
      EnumField("pair_mode", t, &T::pair_mode, kPairModes),
      DoubleField("rank_margin", t, &T::rank_margin),
      SizeField("bptt", t, &T::bptt),
      SizeField("batch_size", t, &T::batch_size),
      SizeField("eval_batch_size", t, &T::eval_batch_size),
      SizeField("epochs", t, &T::epochs),
      EnumField("optimizer", t, &T::optimizer, kOptimizers),
      DoubleField("lr", t, &T::lr),
      DoubleField("clip", t, &T::clip),
      DoubleField("lr_decay", t, &T::lr_decay),
      SizeField("patience", t, &T::patience),
      DoubleField("min_lr", t, &T::min_lr),
      DoubleField("weight_decay", t, &T::weight_decay),
      BoolField("averaging", t, &T::averaging),
      SizeField("avg_start", t, &T::avg_start),
      DoubleField("adam_beta1", t, &T::adam_beta1),
      DoubleField("adam_beta2", t, &T::adam_beta2),
      DoubleField("adam_eps", t, &T::adam_eps),
      {"seed", [](const Config &c) { return std::to_string(c.train.seed); },
       [](Config &c, std::string_view v) {
         c.train.seed = ParseUnsigned("seed", v);
       }},
  };
  return fields;
}

}  // namespace

std::size_t ModelConfig::LayerHidden(std::size_t l) const {
  if (kind == ModelKind::kOnLstm && tie_weights && l + 1 == layers) {
    return emb_size;
  }
  return hidden_size;
}

void Config::Set(std::string_view key, std::string_view value) {
  const std::string k = Trim(key);
  const std::string v = Trim(value);
  for (const Field &f : Fields()) {
    if (f.name == k) {
      f.set(*this, v);
      return;
    }
  }
  throw ConfigError("unknown config key '" + k + "'");
}

void Config::Merge(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = Trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key = value");
    }
    try {
      Set(std::string_view(t).substr(0, eq), std::string_view(t).substr(eq + 1));
    } catch (const ConfigError &e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " +
                        e.what());
    }
  }
}

Config Config::Parse(std::string_view text) {
  Config c;
  c.Merge(text);
  return c;
}

void Config::Validate() const {
  const ModelConfig &m = model;
  if (m.layers == 0) throw ConfigError("layers must be >= 1");
  if (m.emb_size == 0 || m.hidden_size == 0) {
    throw ConfigError("emb_size and hidden_size must be positive");
  }
  if (m.chunk_factor == 0) throw ConfigError("chunk_factor must be >= 1");
  if (m.kind == ModelKind::kOnLstm) {
    for (std::size_t l = 0; l < m.layers; ++l) {
      if (m.LayerHidden(l) % m.chunk_factor != 0) {
        throw ConfigError("layer " + std::to_string(l + 1) + " size " +
                          std::to_string(m.LayerHidden(l)) +
                          " is not divisible by chunk_factor " +
                          std::to_string(m.chunk_factor));
      }
    }
  }
  if (m.supervision != SupervisionMode::kNone &&
      (m.supervision_layer < 1 || m.supervision_layer > m.layers)) {
    throw ConfigError("supervision_layer must lie in [1, layers]");
  }
  for (double p : {m.dropout_input, m.dropout_recurrent, m.dropout_layer,
                   m.dropout_output, m.dropout_embedding}) {
    if (p < 0.0 || p >= 1.0) {
      throw ConfigError("dropout rates must lie in [0, 1)");
    }
  }
  if (m.kind == ModelKind::kPrpn) {
    if (m.prpn_lookback < 1) throw ConfigError("prpn_lookback must be >= 1");
    if (!(m.prpn_tau > 0.0)) throw ConfigError("prpn_tau must be > 0");
    if (m.supervision == SupervisionMode::kVanillaMultitask) {
      throw ConfigError("vanilla-multitask supervision is onlstm-only");
    }
    if (m.supervision == SupervisionMode::kSplitHead &&
        m.prpn_parser != PrpnParser::kSyd) {
      throw ConfigError("split-head supervision needs prpn_parser = syd");
    }
  }
  const bool no_mode = m.supervision == SupervisionMode::kNone;
  const bool no_trees = train.tree_source == TreeSource::kNone;
  if (no_mode != no_trees) {
    throw ConfigError(
        "supervision_mode = none requires tree_source = none and vice versa");
  }
  if (!(train.alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
  if (!(train.rank_margin >= 0.0)) {
    throw ConfigError("rank_margin must be >= 0");
  }
  if (train.bptt == 0 || train.batch_size == 0 || train.eval_batch_size == 0) {
    throw ConfigError("bptt and batch sizes must be positive");
  }
  if (!(train.lr > 0.0)) throw ConfigError("lr must be > 0");
  if (train.clip < 0.0) throw ConfigError("clip must be >= 0");
  if (train.lr_decay <= 0.0 || train.lr_decay > 1.0) {
    throw ConfigError("lr_decay must lie in (0, 1]");
  }
}

std::string Config::ToString() const {
  std::string out;
  for (const Field &f : Fields()) {
    out += f.name;
    out += " = ";
    out += f.get(*this);
    out += '\n';
  }
  return out;
}

const std::vector<std::string> &Config::Keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const Field &f : Fields()) k.push_back(f.name);
    return k;
  }();
  return keys;
}

std::string_view SupervisionModeName(SupervisionMode m) {
  return EnumToName(m, kModes);
}

std::string_view TreeSourceName(TreeSource s) {
  return EnumToName(s, kSources);
}

}  // namespace sdlm
