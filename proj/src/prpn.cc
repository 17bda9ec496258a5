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

#include "sdlm/prpn.h"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "sdlm/error.h"
#include "sdlm/rng.h"

namespace sdlm {

namespace {

struct LstmOut {
  ad::Var h;
  ad::Var c;
};

LstmOut LstmStep(ad::Tape &tape, ad::Parameter &weight, ad::Parameter &bias,
                 ad::Var x, ad::Var h, ad::Var c) {
  const std::size_t H = c.value().cols();
  const ad::Var in[] = {x, h};
  ad::Var pre = ad::Add(ad::MatMul(ad::Concat(in), tape.Param(weight)),
                        tape.Param(bias));
  ad::Var gates = ad::Sigmoid(ad::Slice(pre, 0, 3 * H));
  ad::Var cell = ad::Tanh(ad::Slice(pre, 3 * H, H));
  LstmOut out;
  out.c = ad::Add(ad::Mul(ad::Slice(gates, H, H), c),
                  ad::Mul(ad::Slice(gates, 0, H), cell));
  out.h = ad::Mul(ad::Slice(gates, 2 * H, H), ad::Tanh(out.c));
  return out;
}

ad::Var FeedForward(ad::Tape &tape, ad::ParamStore &params,
                    const std::string &prefix, ad::Var x) {
  ad::Var h = ad::Relu(
      ad::Add(ad::MatMul(x, tape.Param(params.Get(prefix + ".0.weight"))),
              tape.Param(params.Get(prefix + ".0.bias"))));
  return ad::Add(ad::MatMul(h, tape.Param(params.Get(prefix + ".1.weight"))),
                 tape.Param(params.Get(prefix + ".1.bias")));
}

void CheckFinite(const ad::Var &v, const char *what, std::size_t t) {
  if (!v.value().AllFinite()) {
    throw NumericError(std::string("non-finite PRPN ") + what +
                       " at timestep " + std::to_string(t));
  }
}

}  // namespace

ad::Var PrpnDistances(ad::Var embeddings, ad::Var pad, ad::Var conv_weight,
                      ad::Var conv_bias, ad::Var dist_weight,
                      ad::Var dist_bias, std::size_t lookback) {
  ad::Var h = ad::Relu(
      ad::CausalConv1d(embeddings, pad, conv_weight, conv_bias, lookback));
  return ad::Relu(ad::Add(ad::MatMul(h, dist_weight), dist_bias));
}

double RelatednessAlpha(double d_t, double d_j, double tau) {
  return (std::clamp((d_t - d_j) * tau, -1.0, 1.0) + 1.0) / 2.0;
}

ad::Var RelatednessAlpha(ad::Var d_t, ad::Var d_past, double tau) {
  // d_past - d_t broadcasts d_t over the columns.
  return ad::Affine(
      ad::HardTanh(ad::Affine(ad::Sub(d_past, d_t), -tau, 0.0)), 0.5, 0.5);
}

double ParsingGate(std::span<const double> alphas) {
  double g = 1.0;
  for (double a : alphas) g *= a;
  return g;
}

ad::Var ParsingGates(ad::Var alpha) { return ad::SuffixProduct(alpha); }

ad::Var GatedAttention(ad::Var gates, ad::Var z) {
  ad::Tape &tape = *gates.tape();
  const ad::Tensor &g = gates.value();
  const std::size_t rows = g.rows(), n = g.cols();
  ad::Var denom = ad::Sum(gates, -1);
  ad::Tensor fix({rows, 1});
  ad::Tensor fallback({rows, n});
  bool any = false;
  for (std::size_t r = 0; r < rows; ++r) {
    if (denom.value()[r] == 0.0) {
      fix[r] = 1.0;
      fallback.at(r, n - 1) = 1.0;
      any = true;
    }
  }
  if (!any) return ad::Div(ad::Mul(gates, z), denom);
  ad::Var s = ad::Div(ad::Mul(gates, z),
                      ad::Add(denom, tape.Constant(std::move(fix))));
  return ad::Add(s, tape.Constant(std::move(fallback)));
}

PrpnModel::PrpnModel(const ModelConfig &config, std::size_t vocab_size,
                     std::uint64_t seed)
    : LanguageModel(config, vocab_size) {
  const std::size_t E = config.emb_size, H = config.hidden_size;
  const std::size_t L = config.prpn_lookback, F = ff_size();
  const double bh = 1.0 / std::sqrt(static_cast<double>(H));
  AddUniform("embedding", {vocab_size, E}, 0.1, seed);
  if (config.prpn_parser == PrpnParser::kConv) {
    AddUniform("parser.pad", {L, E}, 0.1, seed);
    AddUniform("parser.conv.weight", {(L + 1) * E, H},
               1.0 / std::sqrt(static_cast<double>((L + 1) * E)), seed);
    AddZeros("parser.conv.bias", {H});
    AddUniform("parser.dist.weight", {H, 1}, bh, seed);
    AddZeros("parser.dist.bias", {1});
  } else {
    AddUniform("encoder.word.weight", {E + H, 4 * H}, bh, seed);
    AddZeros("encoder.word.bias", {4 * H});
    AddUniform("encoder.pad", {L, H}, 0.1, seed);
    AddUniform("encoder.conv.weight", {(L + 1) * H, H},
               1.0 / std::sqrt(static_cast<double>((L + 1) * H)), seed);
    AddZeros("encoder.conv.bias", {H});
    AddUniform("encoder.dist.weight", {2 * H, 4 * H}, bh, seed);
    AddZeros("encoder.dist.bias", {4 * H});
    std::vector<std::string> heads = {"ff_lm"};
    if (config.supervision == SupervisionMode::kSplitHead) {
      heads.push_back("ff_syd");
    }
    for (const std::string &head : heads) {
      AddUniform(head + ".0.weight", {H, F}, bh, seed);
      AddZeros(head + ".0.bias", {F});
      AddUniform(head + ".1.weight", {F, 1},
                 1.0 / std::sqrt(static_cast<double>(F)), seed);
      AddZeros(head + ".1.bias", {1});
    }
  }
  AddUniform("reader.query.weight", {E + H, H}, bh, seed);
  AddUniform("reader.cell.weight", {E + H, 4 * H}, bh, seed);
  AddZeros("reader.cell.bias", {4 * H});
  AddUniform("output.weight", {2 * H, vocab_size},
             1.0 / std::sqrt(static_cast<double>(2 * H)), seed);
  AddZeros("output.bias", {vocab_size});
}

std::size_t PrpnModel::ff_size() const {
  return config_.prpn_ff_size ? config_.prpn_ff_size : config_.hidden_size;
}

ModelState PrpnModel::InitialState(std::size_t batch) const {
  const std::size_t n = config_.prpn_parser == PrpnParser::kSyd ? 6 : 2;
  return ModelState(n, ad::Tensor({batch, config_.hidden_size}));
}

ModelOutput PrpnModel::Forward(ad::Tape &tape, std::span<const int> inputs,
                               std::size_t steps, std::size_t batch,
                               const ModelState &state, Rng *dropout) {
  const std::size_t T = steps, B = batch;
  const std::size_t E = config_.emb_size, H = config_.hidden_size;
  const std::size_t L = config_.prpn_lookback;
  const bool syd_parser = config_.prpn_parser == PrpnParser::kSyd;
  if (inputs.size() != T * B) {
    throw ShapeError("Forward: " + std::to_string(inputs.size()) +
                     " ids for " + std::to_string(T) + " steps x " +
                     std::to_string(B) + " columns");
  }
  if (state.size() != (syd_parser ? 6u : 2u)) {
    throw ShapeError("Forward: state does not match the model");
  }
  ad::Var emb = ad::Embedding(tape.Param(params_.Get("embedding")), inputs);
  const ad::Tensor in_mask =
      dropout ? DropoutMask({B, E}, config_.dropout_input, *dropout)
              : ad::Tensor();
  const ad::Tensor out_mask =
      dropout ? DropoutMask({B, 2 * H}, config_.dropout_output, *dropout)
              : ad::Tensor();
  std::vector<ad::Var> xs(T);
  for (std::size_t t = 0; t < T; ++t) {
    xs[t] = ApplyMask(ad::SliceRows(emb, t * B, B), in_mask);
  }

  ModelOutput out;
  ad::Var distances;  // [T * B, 1]
  if (!syd_parser) {
    ad::Var seq = ad::Reshape(ad::ConcatRows(xs), {T, B, E});
    ad::Var d = PrpnDistances(
        seq, tape.Param(params_.Get("parser.pad")),
        tape.Param(params_.Get("parser.conv.weight")),
        tape.Param(params_.Get("parser.conv.bias")),
        tape.Param(params_.Get("parser.dist.weight")),
        tape.Param(params_.Get("parser.dist.bias")), L);
    distances = ad::Reshape(d, {T * B, 1});
  } else {
    ad::Var h = tape.Constant(state[2]), c = tape.Constant(state[3]);
    std::vector<ad::Var> hs(T);
    for (std::size_t t = 0; t < T; ++t) {
      LstmOut s = LstmStep(tape, params_.Get("encoder.word.weight"),
                           params_.Get("encoder.word.bias"), xs[t], h, c);
      CheckFinite(s.c, "encoder state", t);
      h = hs[t] = s.h;
      c = s.c;
    }
    ModelState next_state(6);
    next_state[2] = h.value();
    next_state[3] = c.value();
    ad::Var local = ad::Relu(ad::CausalConv1d(
        ad::Reshape(ad::ConcatRows(hs), {T, B, H}),
        tape.Param(params_.Get("encoder.pad")),
        tape.Param(params_.Get("encoder.conv.weight")),
        tape.Param(params_.Get("encoder.conv.bias")), L));
    local = ad::Reshape(local, {T * B, H});
    h = tape.Constant(state[4]);
    c = tape.Constant(state[5]);
    std::vector<ad::Var> hd(T);
    for (std::size_t t = 0; t < T; ++t) {
      LstmOut s = LstmStep(tape, params_.Get("encoder.dist.weight"),
                           params_.Get("encoder.dist.bias"),
                           ad::SliceRows(local, t * B, B), h, c);
      CheckFinite(s.c, "encoder state", t);
      h = hd[t] = s.h;
      c = s.c;
    }
    out.state = std::move(next_state);
    out.state[4] = h.value();
    out.state[5] = c.value();
    ad::Var encoded = ad::ConcatRows(hd);
    distances = FeedForward(tape, params_, "ff_lm", encoded);
    if (config_.supervision == SupervisionMode::kSplitHead) {
      out.d_syd = FeedForward(tape, params_, "ff_syd", encoded);
    }
  }
  out.d_lm.push_back(distances);
  if (config_.supervision == SupervisionMode::kOneSet) out.d_syd = distances;
  if (out.state.empty()) out.state.resize(2);

  // Reading network: attention over the memory written so far in this
  // window, starting with the carried-in state, truncated by parsing gates.
  std::vector<ad::Var> mem_h = {tape.Constant(state[0])};
  std::vector<ad::Var> mem_c = {tape.Constant(state[1])};
  std::vector<ad::Var> past;
  std::vector<ad::Var> outputs(T);
  ad::Parameter &query = params_.Get("reader.query.weight");
  ad::Parameter &cell_w = params_.Get("reader.cell.weight");
  ad::Parameter &cell_b = params_.Get("reader.cell.bias");
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t n = mem_h.size();
    ad::Var d_t = ad::SliceRows(distances, t * B, B);
    ad::Var gates =
        past.empty()
            ? tape.Constant(ad::Tensor({B, 1}, 1.0))
            : ParsingGates(RelatednessAlpha(d_t, ad::Concat(past),
                                            config_.prpn_tau));
    past.push_back(d_t);
    ad::Var keys = ad::Reshape(ad::ConcatRows(mem_h), {n, B, H});
    ad::Var cells = ad::Reshape(ad::ConcatRows(mem_c), {n, B, H});
    const ad::Var q_in[] = {xs[t], mem_h.back()};
    ad::Var q = ad::MatMul(ad::Concat(q_in), tape.Param(query));
    ad::Var z = ad::Softmax(ad::BatchDot(keys, q));
    ad::Var s = GatedAttention(gates, z);
    ad::Var h_mix = ad::BatchMix(s, keys);
    ad::Var c_mix = ad::BatchMix(s, cells);
    LstmOut r = LstmStep(tape, cell_w, cell_b, xs[t], h_mix, c_mix);
    CheckFinite(r.c, "reader state", t);
    mem_h.push_back(r.h);
    mem_c.push_back(r.c);
    const ad::Var both[] = {r.h, h_mix};
    outputs[t] = ApplyMask(ad::Concat(both), out_mask);
  }
  out.state[0] = mem_h.back().value();
  out.state[1] = mem_c.back().value();
  out.logits =
      ad::Add(ad::MatMul(ad::ConcatRows(outputs),
                         tape.Param(params_.Get("output.weight"))),
              tape.Param(params_.Get("output.bias")));
  return out;
}

}  // namespace sdlm
