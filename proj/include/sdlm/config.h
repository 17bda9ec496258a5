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

// Model and training configuration. Both live in one flat `key = value`
// namespace so a single file (plus command-line overrides) describes a run.

#ifndef SDLM_CONFIG_H_
#define SDLM_CONFIG_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace sdlm {

enum class ModelKind { kOnLstm, kPrpn };
enum class PrpnParser { kConv, kSyd };

// Which distance stream receives the ranking loss.
enum class SupervisionMode {
  kSplitHead,         // separate master forget gate from the shared h^f
  kOneSet,            // the LM distances of the supervised layer directly
  kVanillaMultitask,  // an extra head on the layer's hidden state
  kNone,
};

enum class TreeSource { kGold, kRandom, kNone };
enum class PairMode { kSymmetric, kAsWritten };
enum class Optimizer { kSgd, kAdam };
enum class InitScheme { kUniform, kZero };

struct ModelConfig {
  ModelKind kind = ModelKind::kOnLstm;
  std::size_t layers = 3;
  std::size_t emb_size = 400;
  std::size_t hidden_size = 1150;
  std::size_t chunk_factor = 1;
  bool tie_weights = true;
  InitScheme init = InitScheme::kUniform;

  SupervisionMode supervision = SupervisionMode::kSplitHead;
  std::size_t supervision_layer = 3;  // 1-based

  double dropout_input = 0.5;       // word vectors
  double dropout_recurrent = 0.45;  // recurrent connections
  double dropout_layer = 0.3;       // between layers
  double dropout_output = 0.45;     // last layer output
  double dropout_embedding = 0.125; // whole word types

  // PRPN family.
  PrpnParser prpn_parser = PrpnParser::kSyd;
  std::size_t prpn_lookback = 5;
  double prpn_tau = 10.0;
  std::size_t prpn_ff_size = 0;  // 0: same as hidden_size

  // Hidden size of layer `l` (0-based). With tied weights the last layer
  // matches the embedding size.
  std::size_t LayerHidden(std::size_t l) const;
  std::size_t MasterSize(std::size_t l) const {
    return LayerHidden(l) / chunk_factor;
  }
};

struct TrainConfig {
  TreeSource tree_source = TreeSource::kGold;
  double alpha = 0.75;
  PairMode pair_mode = PairMode::kSymmetric;
  // Added inside the hinge of pairs whose gold distances differ; 0 is the
  // plain ranking loss.
  double rank_margin = 0.0;

  std::size_t bptt = 70;
  std::size_t batch_size = 20;
  std::size_t eval_batch_size = 1;
  std::size_t epochs = 1000;

  Optimizer optimizer = Optimizer::kSgd;
  double lr = 30.0;
  double clip = 0.25;
  double lr_decay = 0.25;      // factor applied on a validation plateau
  std::size_t patience = 5;    // epochs without improvement before decaying
  double min_lr = 0.0;
  double weight_decay = 1.2e-6;
  bool averaging = false;      // tail iterate averaging
  std::size_t avg_start = 0;   // first epoch (1-based) included; 0 = half way
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  std::uint64_t seed = 1111;
};

struct Config {
  ModelConfig model;
  TrainConfig train;

  // Applies one `key = value` assignment. Throws ConfigError for unknown
  // keys or malformed values.
  void Set(std::string_view key, std::string_view value);
  // Applies every assignment of a config file; '#' starts a comment line.
  void Merge(std::string_view text);
  static Config Parse(std::string_view text);

  // Throws ConfigError when settings contradict each other.
  void Validate() const;

  // Canonical text form listing every key in a fixed order.
  std::string ToString() const;

  static const std::vector<std::string> &Keys();
};

std::string_view SupervisionModeName(SupervisionMode m);
std::string_view TreeSourceName(TreeSource s);

}  // namespace sdlm

#endif  // SDLM_CONFIG_H_
