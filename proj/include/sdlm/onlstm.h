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

// Ordered-neurons LSTM: cumax master gates, distance read-out, the split-head
// supervised distance head and the stacked language model.

#ifndef SDLM_ONLSTM_H_
#define SDLM_ONLSTM_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sdlm/autodiff.h"
#include "sdlm/model.h"

namespace sdlm {

// One layer. The fused weight [input + hidden, 2 * master + 4 * hidden] maps
// [x_t; h_{t-1}] to the column blocks
//   master forget | master input | forget | input | output | cell.
struct OnLstmLayer {
  ad::Parameter *weight = nullptr;
  ad::Parameter *bias = nullptr;
  std::size_t input = 0;
  std::size_t hidden = 0;
  std::size_t master = 0;  // hidden / chunk
  std::size_t chunk = 1;
};

struct CellState {
  ad::Var h;
  ad::Var c;
};

struct StepOutput {
  ad::Var h;
  ad::Var c;
  ad::Var master_forget;   // [B, master], nondecreasing
  ad::Var master_input;    // [B, master], nonincreasing
  ad::Var forget_preact;   // h^f: pre-activation of the master forget gate
  ad::Var distance;        // [B, 1]
};

// One ON-LSTM step. `h_in` is the previous hidden state as seen by the gates
// (possibly dropped out); `prev.c` is the previous cell.
StepOutput OnLstmStep(ad::Tape &tape, const OnLstmLayer &layer, ad::Var x,
                      ad::Var h_in, ad::Var c_prev);

// master size minus the sum of the master forget gate.
double ExtractDistance(std::span<const double> master_forget);
// Row-wise version: [B, master] -> [B, 1].
ad::Var ExtractDistance(ad::Var master_forget);

struct SydHeadOutput {
  ad::Var master_forget;    // cumax(h^f)
  ad::Var master_forget_w;  // cumax(W_s h^f + b_s)
  ad::Var distance_w;       // [B, 1]
};

// `weight` is [master, master], `bias` [master].
SydHeadOutput SydHead(ad::Var forget_preact, ad::Var weight, ad::Var bias);

class OnLstmModel : public LanguageModel {
 public:
  OnLstmModel(const ModelConfig &config, std::size_t vocab_size,
              std::uint64_t seed);

  std::size_t distance_layers() const override { return layers_.size(); }
  const OnLstmLayer &layer(std::size_t l) const { return layers_[l]; }

  // Per layer: h [B, H_l] then c [B, H_l].
  ModelState InitialState(std::size_t batch) const override;

  ModelOutput Forward(ad::Tape &tape, std::span<const int> inputs,
                      std::size_t steps, std::size_t batch,
                      const ModelState &state, Rng *dropout) override;

 private:
  std::vector<OnLstmLayer> layers_;
};

}  // namespace sdlm

#endif  // SDLM_ONLSTM_H_
