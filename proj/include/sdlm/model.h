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

// Interface shared by the language models that emit syntactic distances.

#ifndef SDLM_MODEL_H_
#define SDLM_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sdlm/autodiff.h"
#include "sdlm/config.h"

namespace sdlm {

class Rng;

// Recurrent state carried between windows; meaning is model specific.
using ModelState = std::vector<ad::Tensor>;

// Outputs of one window. Row t * batch + b of every stream belongs to input
// position (t, b); the distance at that row describes the slot between the
// previous token and the token read at (t, b).
struct ModelOutput {
  ad::Var logits;               // [steps * batch, vocab]
  std::vector<ad::Var> d_lm;    // one [steps * batch, 1] stream per layer
  ad::Var d_syd;                // supervised stream; invalid when absent
  ModelState state;             // final state, detached from the tape
};

class LanguageModel {
 public:
  LanguageModel(const ModelConfig &config, std::size_t vocab_size)
      : config_(config), vocab_size_(vocab_size) {}
  virtual ~LanguageModel() = default;

  const ModelConfig &config() const { return config_; }
  std::size_t vocab_size() const { return vocab_size_; }
  ad::ParamStore &params() { return params_; }
  const ad::ParamStore &params() const { return params_; }

  bool has_syd() const {
    return config_.supervision != SupervisionMode::kNone;
  }
  // Number of language-model distance streams.
  virtual std::size_t distance_layers() const = 0;

  virtual ModelState InitialState(std::size_t batch) const = 0;

  // `inputs` is time-major (inputs[t * batch + b]). Dropout is applied only
  // when `dropout` is non-null. Throws std::out_of_range for ids outside the
  // vocabulary and NumericError for non-finite states.
  virtual ModelOutput Forward(ad::Tape &tape, std::span<const int> inputs,
                              std::size_t steps, std::size_t batch,
                              const ModelState &state, Rng *dropout) = 0;

 protected:
  // Adds a parameter initialized from its own seeded stream, so the values
  // of one parameter never depend on which other parameters exist.
  ad::Parameter &AddUniform(const std::string &name, ad::Shape shape,
                            double bound, std::uint64_t seed);
  ad::Parameter &AddZeros(const std::string &name, ad::Shape shape);

  ModelConfig config_;
  std::size_t vocab_size_;
  ad::ParamStore params_;
};

std::unique_ptr<LanguageModel> CreateModel(const ModelConfig &config,
                                           std::size_t vocab_size,
                                           std::uint64_t seed);

// Inverted-dropout mask of the given shape, or an empty tensor when p == 0.
ad::Tensor DropoutMask(ad::Shape shape, double p, Rng &rng);

// x * mask when the mask is non-empty, else x.
ad::Var ApplyMask(ad::Var x, const ad::Tensor &mask);

}  // namespace sdlm

#endif  // SDLM_MODEL_H_
