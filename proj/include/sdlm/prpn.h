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

// Parse-read-predict language model: distance-driven parsing gates that
// softly truncate attention over a recurrent memory, with either the
// original convolutional parser or the two-stream recurrent encoder.

#ifndef SDLM_PRPN_H_
#define SDLM_PRPN_H_

#include <cstddef>
#include <cstdint>
#include <span>

#include "sdlm/autodiff.h"
#include "sdlm/model.h"

namespace sdlm {

// Two-layer causal convolution over embeddings [T, B, E] with `pad` [L, E]
// standing for the positions before the sequence:
//   h_i = relu(W_c [e_{i-L}; ...; e_i] + b_c),  d_i = relu(W_d h_i + b_d).
// Returns [T, B, 1].
ad::Var PrpnDistances(ad::Var embeddings, ad::Var pad, ad::Var conv_weight,
                      ad::Var conv_bias, ad::Var dist_weight,
                      ad::Var dist_bias, std::size_t lookback);

// (hardtanh((d_t - d_j) * tau) + 1) / 2.
double RelatednessAlpha(double d_t, double d_j, double tau);
// d_t [B, 1] against earlier distances d_past [B, n] -> [B, n].
ad::Var RelatednessAlpha(ad::Var d_t, ad::Var d_past, double tau);

// Product of alphas (empty product 1).
double ParsingGate(std::span<const double> alphas);
// alpha [B, n] holds alpha_j^t for j = 0..n-1 (all earlier positions).
// Returns [B, n + 1]: column k is prod_{j >= k} alpha_j, i.e. the gate of
// the memory entry written just before position k; the last column is 1.
ad::Var ParsingGates(ad::Var alpha);

// s_i = g_i z_i / sum_i g_i per row. Rows whose gates are all zero fall back
// to a one-hot on the most recent (last) position.
ad::Var GatedAttention(ad::Var gates, ad::Var z);

class PrpnModel : public LanguageModel {
 public:
  PrpnModel(const ModelConfig &config, std::size_t vocab_size,
            std::uint64_t seed);

  std::size_t distance_layers() const override { return 1; }

  // Reader h, c; with the recurrent encoder also the word-level and
  // distance-level LSTM states.
  ModelState InitialState(std::size_t batch) const override;

  ModelOutput Forward(ad::Tape &tape, std::span<const int> inputs,
                      std::size_t steps, std::size_t batch,
                      const ModelState &state, Rng *dropout) override;

 private:
  std::size_t ff_size() const;
};

}  // namespace sdlm

#endif  // SDLM_PRPN_H_
