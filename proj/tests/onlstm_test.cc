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
#include <vector>

#include "doctest.h"
#include "sdlm/distance.h"
#include "sdlm/error.h"
#include "sdlm/rng.h"
#include "sdlm/tree.h"
#include "test_util.h"

namespace sdlm {
namespace {

using ad::Tensor;
using ad::Var;

Tensor RandomTensor(ad::Shape shape, Rng &rng, double lo = -1, double hi = 1) {
  Tensor t(std::move(shape));
  for (double &v : t.values()) v = rng.Uniform(lo, hi);
  return t;
}

Var Probe(Var y) {
  Tensor w(y.shape());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(1.0 + 0.7 * i);
  return ad::SumAll(ad::Mul(y, y.tape()->Constant(w)));
}

struct LayerFixture {
  ad::ParamStore params;
  OnLstmLayer layer;

  LayerFixture(std::size_t input, std::size_t hidden, std::size_t chunk,
               Rng *rng) {
    layer.input = input;
    layer.hidden = hidden;
    layer.chunk = chunk;
    layer.master = hidden / chunk;
    const std::size_t width = 2 * layer.master + 4 * hidden;
    layer.weight = &params.Add(
        "w", rng ? RandomTensor({input + hidden, width}, *rng)
                 : Tensor({input + hidden, width}));
    layer.bias = &params.Add(
        "b", rng ? RandomTensor({width}, *rng) : Tensor({width}));
  }
};

ModelConfig SmallConfig() {
  ModelConfig c;
  c.layers = 2;
  c.emb_size = 4;
  c.hidden_size = 6;
  c.supervision = SupervisionMode::kSplitHead;
  c.supervision_layer = 2;
  return c;
}

TEST_CASE("extract distance examples") {
  const double a[] = {0.1, 0.3, 0.6, 1.0};
  CHECK(ExtractDistance(a) == doctest::Approx(2.0));
  const double b[] = {1.0, 1.0, 1.0, 1.0};
  CHECK(ExtractDistance(b) == doctest::Approx(0.0));
  const double c[] = {0.25, 0.5, 0.75, 1.0};
  CHECK(ExtractDistance(c) == doctest::Approx(1.5));

  ad::Tape tape;
  Var f = tape.Constant(Tensor::Matrix(2, 4, {0.1, 0.3, 0.6, 1.0,  //
                                             0.25, 0.5, 0.75, 1.0}));
  Var d = ExtractDistance(f);
  CHECK(d.shape() == ad::Shape{2, 1});
  CHECK(d.value()[0] == doctest::Approx(2.0));
  CHECK(d.value()[1] == doctest::Approx(1.5));
  CHECK(ExtractDistance(ad::Cumax(tape.Constant(Tensor({1, 4}))))
            .value()[0] == doctest::Approx(1.5));
}

// Gate saturation through the biases alone (zero weights): x and h are
// irrelevant and every gate is a known constant.
TEST_CASE("master gate limits") {
  const std::size_t H = 4, M = 4;
  LayerFixture fx(3, H, 1, nullptr);
  Tensor &bias = fx.layer.bias->value;
  const std::vector<double> f = {0.3, -0.2, 1.1, 0.5};
  const std::vector<double> i = {-0.7, 0.4, 0.0, 0.9};
  const std::vector<double> g = {0.2, -1.0, 0.6, 0.1};
  for (std::size_t k = 0; k < H; ++k) {
    bias[2 * M + k] = f[k];
    bias[2 * M + H + k] = i[k];
    bias[2 * M + 3 * H + k] = g[k];
  }
  const Tensor c_prev = Tensor::Matrix(1, H, {0.5, -0.4, 0.9, -1.2});
  auto sigmoid = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };

  SUBCASE("forget all-ones, input all-ones except the forced last unit") {
    bias[0] = 60.0;          // cumax -> (1, 1, 1, 1)
    bias[2 * M - 1] = 60.0;  // cumax -> (0, 0, 0, 1), input = (1, 1, 1, 0)
    ad::Tape tape;
    StepOutput s = OnLstmStep(tape, fx.layer, tape.Constant(Tensor({1, 3})),
                              tape.Constant(Tensor({1, H})),
                              tape.Constant(c_prev));
    for (std::size_t k = 0; k + 1 < H; ++k) {
      const double vanilla =
          sigmoid(f[k]) * c_prev[k] + sigmoid(i[k]) * std::tanh(g[k]);
      CHECK(s.c.value()[k] == doctest::Approx(vanilla).epsilon(1e-12));
    }
    // The last master input entry is 1 - 1 = 0 by construction, so that
    // unit always copies.
    CHECK(s.c.value()[H - 1] == doctest::Approx(c_prev[H - 1]));
    CHECK(s.distance.value()[0] == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("forget all-ones, input all-zeros copies the cell") {
    bias[0] = 60.0;
    bias[M] = 60.0;  // cumax -> ones, input -> zeros
    ad::Tape tape;
    StepOutput s = OnLstmStep(tape, fx.layer, tape.Constant(Tensor({1, 3})),
                              tape.Constant(Tensor({1, H})),
                              tape.Constant(c_prev));
    for (std::size_t k = 0; k < H; ++k) {
      CHECK(s.c.value()[k] == doctest::Approx(c_prev[k]).epsilon(1e-12));
    }
  }
}

TEST_CASE("step gradients match finite differences") {
  for (std::size_t chunk : {1, 2}) {
    CAPTURE(chunk);
    Rng rng(17 + chunk);
    LayerFixture fx(5, 8, chunk, &rng);
    const Tensor h0 = RandomTensor({2, 8}, rng);
    const Tensor c0 = RandomTensor({2, 8}, rng);
    const Tensor x0 = RandomTensor({2, 5}, rng);
    auto loss = [&](ad::Tape &tape, Var x, Var h, Var c) {
      StepOutput s = OnLstmStep(tape, fx.layer, x, h, c);
      const Var parts[] = {s.h, s.c, s.distance, s.master_input};
      return Probe(ad::Concat(parts));
    };
    ad::GradCheckResult r = ad::GradCheckParams(
        [&](ad::Tape &tape) {
          return loss(tape, tape.Constant(x0), tape.Constant(h0),
                      tape.Constant(c0));
        },
        fx.params, 1e-5);
    INFO("worst " << r.worst);
    CHECK(r.max_rel_error < 1e-4);
    r = ad::GradCheck(
        [&](ad::Tape &tape, Var x) {
          return loss(tape, x, tape.Constant(h0), tape.Constant(c0));
        },
        x0, 1e-5);
    CHECK(r.max_rel_error < 1e-4);
    r = ad::GradCheck(
        [&](ad::Tape &tape, Var c) {
          return loss(tape, tape.Constant(x0), tape.Constant(h0), c);
        },
        c0, 1e-5);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("master gates are monotone over random steps") {
  Rng rng(5);
  LayerFixture fx(6, 8, 1, &rng);
  for (double &w : fx.layer.weight->value.values()) w *= 3.0;
  ad::Tape tape;
  Var h = tape.Constant(Tensor({1, 8}));
  Var c = tape.Constant(Tensor({1, 8}));
  for (int t = 0; t < 1000; ++t) {
    StepOutput s = OnLstmStep(
        tape, fx.layer, tape.Constant(RandomTensor({1, 6}, rng, -3, 3)), h, c);
    const Tensor &mf = s.master_forget.value();
    const Tensor &mi = s.master_input.value();
    for (std::size_t k = 0; k < 8; ++k) {
      REQUIRE(mf[k] >= 0.0);
      REQUIRE(mf[k] <= 1.0 + 1e-12);
      REQUIRE(mi[k] >= -1e-12);
      REQUIRE(mi[k] <= 1.0);
      if (k > 0) {
        REQUIRE(mf[k] >= mf[k - 1] - 1e-15);
        REQUIRE(mi[k] <= mi[k - 1] + 1e-15);
      }
    }
    const double d = s.distance.value()[0];
    REQUIRE(d >= 0.0);
    REQUIRE(d < 8.0);
    h = tape.Constant(s.h.value());
    c = tape.Constant(s.c.value());
  }
}

TEST_CASE("split head identity and constant cases") {
  Rng rng(9);
  const Tensor pre = RandomTensor({5, 4}, rng, -2, 2);
  ad::Tape tape;
  Tensor eye({4, 4});
  for (std::size_t k = 0; k < 4; ++k) eye.at(k, k) = 1.0;
  SydHeadOutput id = SydHead(tape.Constant(pre), tape.Constant(eye),
                             tape.Constant(Tensor({4})));
  CHECK(id.master_forget_w.value() == id.master_forget.value());
  CHECK(id.distance_w.value() == ExtractDistance(id.master_forget).value());

  const Tensor b = Tensor({4}, {0.3, -0.1, 0.8, 0.0});
  SydHeadOutput flat = SydHead(tape.Constant(pre), tape.Constant(Tensor({4, 4})),
                               tape.Constant(b));
  for (std::size_t r = 1; r < 5; ++r) {
    CHECK(flat.distance_w.value()[r] == flat.distance_w.value()[0]);
  }
}

TEST_CASE("split head gradient") {
  Rng rng(10);
  const Tensor pre = RandomTensor({3, 5}, rng, -2, 2);
  const Tensor b = RandomTensor({5}, rng);
  ad::GradCheckResult r = ad::GradCheck(
      [&](ad::Tape &tape, Var w) {
        return Probe(SydHead(tape.Constant(pre), w, tape.Constant(b))
                         .distance_w);
      },
      RandomTensor({5, 5}, rng), 1e-5);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("distance ranks give the implied tree") {
  // Master forget gates with sums 2.5, 1.0, 3.5 -> distances 1.5, 3.0, 0.5.
  const std::vector<std::vector<double>> gates = {
      {0.25, 0.5, 0.75, 1.0}, {0.0, 0.0, 0.0, 1.0}, {0.5, 1.0, 1.0, 1.0}};
  std::vector<double> d;
  for (const auto &g : gates) d.push_back(ExtractDistance(g));
  CHECK(d == std::vector<double>{1.5, 3.0, 0.5});
  const std::vector<std::string> w = testing::Words(4);
  CHECK(RenderShape(DistancesToTreeUnbiased(d, w)) == "((w0 w1) (w2 w3))");
}

TEST_CASE("zero weights give uniform predictions") {
  ModelConfig c;
  c.layers = 1;
  c.emb_size = 4;
  c.hidden_size = 4;
  c.supervision = SupervisionMode::kNone;
  c.init = InitScheme::kZero;
  auto model = CreateModel(c, 3, 1);
  ad::Tape tape;
  const int ids[] = {0, 1, 2, 1, 0};
  ModelOutput out =
      model->Forward(tape, ids, 5, 1, model->InitialState(1), nullptr);
  CHECK(out.logits.shape() == ad::Shape{5, 3});
  for (double v : out.logits.value().values()) CHECK(v == 0.0);
  const int targets[] = {1, 2, 1, 0, 2};
  const double ce =
      ad::MeanAll(ad::CrossEntropy(out.logits, targets)).value()[0];
  CHECK(std::exp(ce) == doctest::Approx(3.0));
  CHECK(!out.d_syd.valid());
}

TEST_CASE("identical columns give identical outputs") {
  ModelConfig c = SmallConfig();
  auto model = CreateModel(c, 7, 3);
  const std::vector<int> seq = {2, 5, 1, 6, 3};
  std::vector<int> ids;
  for (int id : seq) ids.insert(ids.end(), 3, id);
  ad::Tape tape;
  ModelOutput out =
      model->Forward(tape, ids, seq.size(), 3, model->InitialState(3), nullptr);
  const Tensor &lg = out.logits.value();
  for (std::size_t t = 0; t < seq.size(); ++t) {
    for (std::size_t b = 1; b < 3; ++b) {
      for (std::size_t v = 0; v < 7; ++v) {
        CHECK(lg.at(t * 3 + b, v) == lg.at(t * 3, v));
      }
      CHECK(out.d_syd.value()[t * 3 + b] == out.d_syd.value()[t * 3]);
    }
  }
  CHECK(out.d_lm.size() == 2);
  CHECK(out.state.size() == 4);
  CHECK(out.state[0].shape() == ad::Shape{3, 6});
  CHECK(out.state[2].shape() == ad::Shape{3, 4});
}

TEST_CASE("out of vocabulary id is rejected") {
  auto model = CreateModel(SmallConfig(), 7, 3);
  ad::Tape tape;
  const int ids[] = {1, 7};
  CHECK_THROWS_AS(
      model->Forward(tape, ids, 2, 1, model->InitialState(1), nullptr),
      std::out_of_range);
  const int neg[] = {-1};
  CHECK_THROWS_AS(
      model->Forward(tape, neg, 1, 1, model->InitialState(1), nullptr),
      std::out_of_range);
  CHECK_THROWS_AS(
      model->Forward(tape, ids, 1, 1, model->InitialState(1), nullptr),
      ShapeError);
}

TEST_CASE("non-finite state names the timestep") {
  auto model = CreateModel(SmallConfig(), 7, 3);
  model->params().Get("layer1.bias").value[20] = NAN;
  ad::Tape tape;
  const int ids[] = {1, 2, 3};
  try {
    model->Forward(tape, ids, 3, 1, model->InitialState(1), nullptr);
    FAIL("expected NumericError");
  } catch (const NumericError &e) {
    CHECK(std::string(e.what()).find("timestep 0") != std::string::npos);
    CHECK(std::string(e.what()).find("layer 2") != std::string::npos);
  }
}

TEST_CASE("disabling the syd head leaves the language model untouched") {
  ModelConfig with = SmallConfig();
  ModelConfig without = with;
  without.supervision = SupervisionMode::kNone;
  auto a = CreateModel(with, 9, 42);
  auto b = CreateModel(without, 9, 42);
  CHECK(a->params().Has("split_head.weight"));
  CHECK(!b->params().Has("split_head.weight"));
  for (const std::string &name : b->params().Names()) {
    CHECK(a->params().Get(name).value == b->params().Get(name).value);
  }
  const std::vector<int> ids = {1, 4, 2, 8, 0, 3, 5, 7};
  Rng ra(7), rb(7);
  ad::Tape ta, tb;
  ModelOutput oa = a->Forward(ta, ids, 4, 2, a->InitialState(2), &ra);
  ModelOutput ob = b->Forward(tb, ids, 4, 2, b->InitialState(2), &rb);
  CHECK(oa.logits.value() == ob.logits.value());
  for (std::size_t l = 0; l < 2; ++l) {
    CHECK(oa.d_lm[l].value() == ob.d_lm[l].value());
  }
  CHECK(oa.state == ob.state);
  CHECK(oa.d_syd.valid());
  CHECK(!ob.d_syd.valid());
}

TEST_CASE("one-set supervision reuses the layer distances") {
  ModelConfig c = SmallConfig();
  c.supervision = SupervisionMode::kOneSet;
  c.supervision_layer = 1;
  auto model = CreateModel(c, 7, 3);
  ad::Tape tape;
  const int ids[] = {1, 2, 3};
  ModelOutput out =
      model->Forward(tape, ids, 3, 1, model->InitialState(1), nullptr);
  CHECK(out.d_syd.id() == out.d_lm[0].id());
}

TEST_CASE("identity split head matches the shared gate distances") {
  ModelConfig c = SmallConfig();
  auto model = CreateModel(c, 7, 3);
  Tensor &w = model->params().Get("split_head.weight").value;
  w.Fill(0.0);
  for (std::size_t k = 0; k < w.dim(0); ++k) w.at(k, k) = 1.0;
  ad::Tape tape;
  const int ids[] = {1, 2, 3, 4};
  ModelOutput out =
      model->Forward(tape, ids, 2, 2, model->InitialState(2), nullptr);
  CHECK(out.d_syd.value() == out.d_lm[1].value());
}

TEST_CASE("full model gradients") {
  for (SupervisionMode mode :
       {SupervisionMode::kSplitHead, SupervisionMode::kVanillaMultitask}) {
    ModelConfig c = SmallConfig();
    c.hidden_size = 4;
    c.emb_size = 4;
    c.chunk_factor = 2;
    c.supervision = mode;
    auto model = CreateModel(c, 5, 11);
    const int ids[] = {1, 4, 2, 0, 3, 3};
    const int targets[] = {4, 2, 0, 3, 3, 1};
    ModelState init = model->InitialState(2);
    Rng rng(2);
    for (Tensor &t : init) t = RandomTensor(t.shape(), rng, -0.5, 0.5);
    ad::GradCheckResult r = ad::GradCheckParams(
        [&](ad::Tape &tape) {
          ModelOutput out = model->Forward(tape, ids, 3, 2, init, nullptr);
          const Var parts[] = {ad::MeanAll(ad::CrossEntropy(out.logits,
                                                            targets)),
                               ad::Affine(Probe(out.d_syd), 0.1, 0.0)};
          return ad::SumAll(ad::Concat(parts));
        },
        model->params(), 1e-5);
    INFO("worst " << r.worst << " " << r.analytic << " " << r.numeric);
    CHECK(r.max_rel_error < 1e-3);
  }
}

}  // namespace
}  // namespace sdlm
