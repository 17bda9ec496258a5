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

#include "sdlm/model.h"

#include "sdlm/error.h"
#include "sdlm/onlstm.h"
#include "sdlm/prpn.h"
#include "sdlm/rng.h"

namespace sdlm {

ad::Parameter &LanguageModel::AddUniform(const std::string &name,
                                         ad::Shape shape, double bound,
                                         std::uint64_t seed) {
  ad::Tensor value(std::move(shape));
  if (config_.init == InitScheme::kUniform) {
    Rng rng(DeriveSeed(seed, name));
    for (double &v : value.values()) v = rng.Uniform(-bound, bound);
  }
  return params_.Add(name, std::move(value));
}

ad::Parameter &LanguageModel::AddZeros(const std::string &name,
                                       ad::Shape shape) {
  return params_.Add(name, ad::Tensor(std::move(shape)));
}

std::unique_ptr<LanguageModel> CreateModel(const ModelConfig &config,
                                           std::size_t vocab_size,
                                           std::uint64_t seed) {
  if (vocab_size < 2) throw ConfigError("vocabulary needs at least 2 entries");
  switch (config.kind) {
    case ModelKind::kOnLstm:
      return std::make_unique<OnLstmModel>(config, vocab_size, seed);
    case ModelKind::kPrpn:
      return std::make_unique<PrpnModel>(config, vocab_size, seed);
  }
  throw ConfigError("unknown model kind");
}

ad::Tensor DropoutMask(ad::Shape shape, double p, Rng &rng) {
  if (p <= 0.0) return ad::Tensor();
  ad::Tensor mask(std::move(shape));
  const double keep = 1.0 - p;
  for (double &m : mask.values()) m = rng.Uniform() < keep ? 1.0 / keep : 0.0;
  return mask;
}

ad::Var ApplyMask(ad::Var x, const ad::Tensor &mask) {
  if (mask.size() == 0) return x;
  return ad::Mul(x, x.tape()->Constant(mask));
}

}  // namespace sdlm
