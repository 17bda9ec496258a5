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

#include "sdlm/onlstm.h"

#include <cmath>
#include <string>

#include "sdlm/error.h"
#include "sdlm/rng.h"

namespace sdlm {

StepOutput OnLstmStep(ad::Tape &tape, const OnLstmLayer &layer, ad::Var x,
                      ad::Var h_in, ad::Var c_prev) {
  const std::size_t H = layer.hidden, M = layer.master;
  const ad::Var in[] = {x, h_in};
  ad::Var pre = ad::Add(ad::MatMul(ad::Concat(in), tape.Param(*layer.weight)),
                        tape.Param(*layer.bias));
  StepOutput out;
  out.forget_preact = ad::Slice(pre, 0, M);
  out.master_forget = ad::Cumax(out.forget_preact);
  out.master_input = ad::Affine(ad::Cumax(ad::Slice(pre, M, M)), -1.0, 1.0);
  ad::Var gates = ad::Sigmoid(ad::Slice(pre, 2 * M, 3 * H));
  ad::Var f = ad::Slice(gates, 0, H);
  ad::Var i = ad::Slice(gates, H, H);
  ad::Var o = ad::Slice(gates, 2 * H, H);
  ad::Var cell = ad::Tanh(ad::Slice(pre, 2 * M + 3 * H, H));

  ad::Var mf = ad::RepeatCols(out.master_forget, layer.chunk);
  ad::Var mi = ad::RepeatCols(out.master_input, layer.chunk);
  ad::Var overlap = ad::Mul(mf, mi);
  ad::Var f_hat = ad::Add(ad::Mul(f, overlap), ad::Sub(mf, overlap));
  ad::Var i_hat = ad::Add(ad::Mul(i, overlap), ad::Sub(mi, overlap));
  out.c = ad::Add(ad::Mul(f_hat, c_prev), ad::Mul(i_hat, cell));
  out.h = ad::Mul(o, ad::Tanh(out.c));
  out.distance = ExtractDistance(out.master_forget);
  return out;
}

double ExtractDistance(std::span<const double> master_forget) {
  double sum = 0.0;
  for (double v : master_forget) sum += v;
  return static_cast<double>(master_forget.size()) - sum;
}

ad::Var ExtractDistance(ad::Var master_forget) {
  const double m = static_cast<double>(master_forget.value().cols());
  return ad::Affine(ad::Sum(master_forget, -1), -1.0, m);
}

SydHeadOutput SydHead(ad::Var forget_preact, ad::Var weight, ad::Var bias) {
  SydHeadOutput out;
  out.master_forget = ad::Cumax(forget_preact);
  out.master_forget_w =
      ad::Cumax(ad::Add(ad::MatMul(forget_preact, weight), bias));
  out.distance_w = ExtractDistance(out.master_forget_w);
  return out;
}

OnLstmModel::OnLstmModel(const ModelConfig &config, std::size_t vocab_size,
                         std::uint64_t seed)
    : LanguageModel(config, vocab_size) {
  const std::size_t E = config.emb_size;
  AddUniform("embedding", {vocab_size, E}, 0.1, seed);
  std::size_t input = E;
  for (std::size_t l = 0; l < config.layers; ++l) {
    OnLstmLayer layer;
    layer.input = input;
    layer.hidden = config.LayerHidden(l);
    layer.chunk = config.chunk_factor;
    layer.master = config.MasterSize(l);
    const std::string prefix = "layer" + std::to_string(l);
    const std::size_t width = 2 * layer.master + 4 * layer.hidden;
    layer.weight =
        &AddUniform(prefix + ".weight", {input + layer.hidden, width},
                    1.0 / std::sqrt(static_cast<double>(layer.hidden)), seed);
    layer.bias = &AddZeros(prefix + ".bias", {width});
    layers_.push_back(layer);
    input = layer.hidden;
  }
  if (config.tie_weights && input != E) {
    throw ConfigError("tied weights need the last layer size to equal emb_size");
  }
  if (!config.tie_weights) {
    AddUniform("output.weight", {input, vocab_size},
               1.0 / std::sqrt(static_cast<double>(input)), seed);
  }
  AddZeros("output.bias", {vocab_size});

  if (has_syd()) {
    const OnLstmLayer &sup = layers_.at(config.supervision_layer - 1);
    const double bound = 1.0 / std::sqrt(static_cast<double>(sup.master));
    if (config.supervision == SupervisionMode::kSplitHead) {
      AddUniform("split_head.weight", {sup.master, sup.master}, bound, seed);
      AddZeros("split_head.bias", {sup.master});
    } else if (config.supervision == SupervisionMode::kVanillaMultitask) {
      AddUniform("vanilla_head.weight", {sup.hidden, sup.master},
                 1.0 / std::sqrt(static_cast<double>(sup.hidden)), seed);
      AddZeros("vanilla_head.bias", {sup.master});
    }
  }
}

ModelState OnLstmModel::InitialState(std::size_t batch) const {
  ModelState state;
  for (const OnLstmLayer &layer : layers_) {
    state.emplace_back(ad::Shape{batch, layer.hidden});
    state.emplace_back(ad::Shape{batch, layer.hidden});
  }
  return state;
}

ModelOutput OnLstmModel::Forward(ad::Tape &tape, std::span<const int> inputs,
                                 std::size_t steps, std::size_t batch,
                                 const ModelState &state, Rng *dropout) {
  const std::size_t T = steps, B = batch, L = layers_.size();
  if (inputs.size() != T * B) {
    throw ShapeError("Forward: " + std::to_string(inputs.size()) +
                     " ids for " + std::to_string(T) + " steps x " +
                     std::to_string(B) + " columns");
  }
  if (state.size() != 2 * L) {
    throw ShapeError("Forward: state does not match the layer count");
  }
  const ModelConfig &cfg = config_;
  ad::Var table = tape.Param(params_.Get("embedding"));
  ad::Var emb = ad::Embedding(table, inputs);
  if (dropout != nullptr && cfg.dropout_embedding > 0.0) {
    const ad::Tensor keep =
        DropoutMask({vocab_size_}, cfg.dropout_embedding, *dropout);
    ad::Tensor rows({T * B, 1});
    for (std::size_t k = 0; k < inputs.size(); ++k) rows[k] = keep[inputs[k]];
    emb = ad::Mul(emb, tape.Constant(std::move(rows)));
  }
  const ad::Tensor in_mask =
      dropout ? DropoutMask({B, cfg.emb_size}, cfg.dropout_input, *dropout)
              : ad::Tensor();
  std::vector<ad::Var> xs(T);
  for (std::size_t t = 0; t < T; ++t) {
    xs[t] = ApplyMask(ad::SliceRows(emb, t * B, B), in_mask);
  }

  ModelOutput out;
  const std::size_t sup = has_syd() ? cfg.supervision_layer - 1 : L;
  std::vector<ad::Var> syd_steps;
  for (std::size_t l = 0; l < L; ++l) {
    const OnLstmLayer &layer = layers_[l];
    const ad::Tensor rec_mask =
        dropout ? DropoutMask({B, layer.hidden}, cfg.dropout_recurrent,
                              *dropout)
                : ad::Tensor();
    const ad::Tensor out_mask =
        dropout ? DropoutMask({B, layer.hidden},
                              l + 1 < L ? cfg.dropout_layer
                                        : cfg.dropout_output,
                              *dropout)
                : ad::Tensor();
    ad::Var h = tape.Constant(state[2 * l]);
    ad::Var c = tape.Constant(state[2 * l + 1]);
    std::vector<ad::Var> dist(T);
    for (std::size_t t = 0; t < T; ++t) {
      StepOutput step =
          OnLstmStep(tape, layer, xs[t], ApplyMask(h, rec_mask), c);
      if (!step.h.value().AllFinite() || !step.c.value().AllFinite()) {
        throw NumericError("non-finite ON-LSTM state at layer " +
                           std::to_string(l + 1) + ", timestep " +
                           std::to_string(t));
      }
      h = step.h;
      c = step.c;
      dist[t] = step.distance;
      if (l == sup) {
        switch (cfg.supervision) {
          case SupervisionMode::kSplitHead:
            syd_steps.push_back(
                SydHead(step.forget_preact,
                        tape.Param(params_.Get("split_head.weight")),
                        tape.Param(params_.Get("split_head.bias")))
                    .distance_w);
            break;
          case SupervisionMode::kVanillaMultitask:
            syd_steps.push_back(ExtractDistance(ad::Cumax(ad::Add(
                ad::MatMul(h, tape.Param(params_.Get("vanilla_head.weight"))),
                tape.Param(params_.Get("vanilla_head.bias"))))));
            break;
          default:
            break;
        }
      }
      xs[t] = ApplyMask(h, out_mask);
    }
    out.d_lm.push_back(ad::ConcatRows(dist));
    out.state.push_back(h.value());
    out.state.push_back(c.value());
  }
  if (cfg.supervision == SupervisionMode::kOneSet) {
    out.d_syd = out.d_lm[sup];
  } else if (!syd_steps.empty()) {
    out.d_syd = ad::ConcatRows(syd_steps);
  }

  ad::Var top = ad::ConcatRows(xs);
  ad::Var logits = cfg.tie_weights
                       ? ad::MatMul(top, table, /*transpose_b=*/true)
                       : ad::MatMul(top, tape.Param(params_.Get("output.weight")));
  out.logits = ad::Add(logits, tape.Param(params_.Get("output.bias")));
  return out;
}

}  // namespace sdlm
