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

#include "sdlm/eval.h"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "sdlm/distance.h"
#include "sdlm/error.h"
#include "sdlm/rng.h"
#include "sdlm/synth.h"
#include "sdlm/treebank.h"
#include "test_util.h"

namespace sdlm {
namespace {

using testing::LeftChain;
using testing::RightChain;
using testing::Words;

// Leaf indices under every node, collected by a pre-order walk.
void LeafSets(const BinaryTree &t, int *next, std::vector<std::vector<int>> *out,
              std::vector<int> *mine) {
  if (t.is_leaf()) {
    mine->push_back((*next)++);
    return;
  }
  std::vector<int> here;
  for (const BinaryTree &c : t.children) LeafSets(c, next, out, &here);
  out->push_back(here);
  mine->insert(mine->end(), here.begin(), here.end());
}

std::vector<std::string> BruteSpans(const BinaryTree &t) {
  std::vector<std::vector<int>> sets;
  std::vector<int> all;
  int next = 0;
  LeafSets(t, &next, &sets, &all);
  std::vector<std::string> out;
  for (const auto &s : sets) {
    if (s.size() < 2 || s.size() == all.size()) continue;
    out.push_back(std::to_string(s.front()) + ":" + std::to_string(s.back()));
  }
  return out;
}

// Micro and macro F1 from string lists and explicit counting loops.
std::pair<double, double> BruteF1(const std::vector<BinaryTree> &pred,
                                  const std::vector<BinaryTree> &gold) {
  double tp = 0, np = 0, ng = 0, macro = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto p = BruteSpans(pred[i]);
    const auto g = BruteSpans(gold[i]);
    double m = 0;
    for (const auto &s : p) {
      if (std::find(g.begin(), g.end(), s) != g.end()) m += 1;
    }
    tp += m;
    np += p.size();
    ng += g.size();
    if (p.empty() && g.empty()) {
      macro += 100;
    } else if (m > 0) {
      macro += 100 * 2 * m / (p.size() + g.size());
    }
  }
  const double micro =
      np + ng == 0 ? 100 : (tp == 0 ? 0 : 100 * 2 * tp / (np + ng));
  return {micro, macro / pred.size()};
}

std::vector<Tree> SynthTrees(std::size_t words, std::uint64_t seed) {
  PreprocessRules rules;
  std::vector<Tree> out;
  for (const auto &t : PreprocessCorpus(SyntheticTreebank(words, seed), rules)
                           .gold_nary) {
    out.push_back(*t);
  }
  return out;
}

TEST_CASE("spans exclude sentence and single words unless asked") {
  const BinaryTree t = RightChain(Words(4));
  CHECK(SpansOf(t, false) == SpanSet{{1, 4}, {2, 4}});
  CHECK(SpansOf(t, true) == SpanSet{{0, 4}, {1, 4}, {2, 4}});
  const Tree nary = ParseBracketed(
      "(S (NP (PRP she)) (VP (VBD saw) (NP (DT a) (NN dog))))")[0];
  CHECK(SpansOf(nary, false) == SpanSet{{1, 4}, {2, 4}});
  const auto labeled = LabeledSpans(nary);
  REQUIRE(labeled.size() == 4);
  CHECK(labeled[0].label == "S");
  CHECK(labeled[1].label == "NP");
  CHECK(labeled[1].end - labeled[1].start == 1);
}

TEST_CASE("span set examples") {
  const auto w = Words(4);
  auto L = [&](int i) { return BinaryTree::Leaf("X", w[i]); };
  const BinaryTree abc = BinaryTree::Join("X", L(0), BinaryTree::Join("X", L(1), L(2)));
  CHECK(SpansOf(abc, false) == SpanSet{{1, 3}});
  CHECK(SpansOf(LeftChain(w), false) == SpanSet{{0, 2}, {0, 3}});
  CHECK(SpansOf(BinaryTree::Join("X", L(0), L(1)), false).empty());
}

TEST_CASE("right chain against left chain scores 0") {
  std::vector<BinaryTree> pred = {RightChain(Words(4))};
  std::vector<BinaryTree> gold = {LeftChain(Words(4))};
  const F1Score f = UnlabeledF1(std::span<const BinaryTree>(pred),
                                std::span<const BinaryTree>(gold));
  CHECK(f.micro == 0.0);
  CHECK(f.macro == 0.0);
}

TEST_CASE("F1 worked example") {
  // pred {(1,4),(2,4)} vs gold {(0,2),(2,4)}: P = R = 1/2.
  std::vector<BinaryTree> pred = {RightChain(Words(4))};
  std::vector<BinaryTree> gold = {BinaryTree::Join(
      "X",
      BinaryTree::Join("X", BinaryTree::Leaf("X", "w0"),
                       BinaryTree::Leaf("X", "w1")),
      BinaryTree::Join("X", BinaryTree::Leaf("X", "w2"),
                       BinaryTree::Leaf("X", "w3")))};
  F1Score f = UnlabeledF1(std::span<const BinaryTree>(pred),
                          std::span<const BinaryTree>(gold));
  CHECK(f.micro == doctest::Approx(50.0));
  CHECK(f.macro == doctest::Approx(50.0));
  std::vector<SpanSet> ps = {{{1, 4}, {2, 3}}};
  std::vector<SpanSet> gs = {{{0, 2}, {2, 4}}};
  F1Score h = UnlabeledF1(std::span<const SpanSet>(ps),
                          std::span<const SpanSet>(gs));
  CHECK(h.micro == 0.0);
  CHECK(h.macro == 0.0);
}

TEST_CASE("F1 of two-word sentences is 100 and micro differs from macro") {
  std::vector<SpanSet> ps = {{}, {{1, 3}}, {{0, 2}, {2, 4}}};
  std::vector<SpanSet> gs = {{}, {{0, 2}}, {{0, 2}, {2, 4}}};
  F1Score f = UnlabeledF1(std::span<const SpanSet>(ps),
                          std::span<const SpanSet>(gs));
  CHECK(f.macro == doctest::Approx(200.0 / 3));
  CHECK(f.micro == doctest::Approx(100.0 * 2 * 2 / 6));
  CHECK(f.sentences == 3);
}

TEST_CASE("F1 matches a brute-force oracle on random tree pairs") {
  for (std::uint64_t k = 0; k < 200; ++k) {
    Rng rng(DeriveSeed(7, k));
    std::vector<BinaryTree> pred, gold;
    const std::size_t sentences = 1 + rng.Below(5);
    for (std::size_t s = 0; s < sentences; ++s) {
      const std::size_t n = 1 + rng.Below(12);
      pred.push_back(RandomBinaryTree(n, DeriveSeed(k, 2 * s)));
      gold.push_back(RandomBinaryTree(n, DeriveSeed(k, 2 * s + 1)));
    }
    const F1Score f = UnlabeledF1(std::span<const BinaryTree>(pred),
                                  std::span<const BinaryTree>(gold));
    const auto [micro, macro] = BruteF1(pred, gold);
    CHECK(f.micro == doctest::Approx(micro).epsilon(1e-12));
    CHECK(f.macro == doctest::Approx(macro).epsilon(1e-12));
  }
}

TEST_CASE("F1 is symmetric and 100 on identical trees") {
  for (std::uint64_t k = 0; k < 50; ++k) {
    std::vector<BinaryTree> a = {RandomBinaryTree(9, k)};
    std::vector<BinaryTree> b = {RandomBinaryTree(9, k + 1000)};
    const F1Score ab = UnlabeledF1(std::span<const BinaryTree>(a),
                                   std::span<const BinaryTree>(b));
    const F1Score ba = UnlabeledF1(std::span<const BinaryTree>(b),
                                   std::span<const BinaryTree>(a));
    CHECK(ab.micro == doctest::Approx(ba.micro));
    CHECK(UnlabeledF1(std::span<const BinaryTree>(a),
                      std::span<const BinaryTree>(a))
              .micro == 100.0);
  }
}

TEST_CASE("leaf count mismatch names the sentence") {
  std::vector<BinaryTree> pred = {RightChain(Words(3)), RightChain(Words(4))};
  std::vector<BinaryTree> gold = {RightChain(Words(3)), RightChain(Words(5))};
  try {
    UnlabeledF1(std::span<const BinaryTree>(pred),
                std::span<const BinaryTree>(gold));
    FAIL("expected DataError");
  } catch (const DataError &e) {
    CHECK(std::string(e.what()).find("sentence 1") != std::string::npos);
  }
}

TEST_CASE("gold against gold scores 100 everywhere") {
  const std::vector<Tree> gold = SynthTrees(3000, 11);
  std::vector<BinaryTree> binary;
  std::vector<SpanSet> binary_spans;
  for (const Tree &t : gold) {
    binary.push_back(BinarizeRight(t));
    binary_spans.push_back(SpansOf(binary.back(), true));
  }
  const F1Score nary = UnlabeledF1(std::span<const Tree>(gold),
                                   std::span<const Tree>(gold));
  CHECK(nary.micro == 100.0);
  CHECK(nary.macro == 100.0);
  const F1Score bin = UnlabeledF1(std::span<const BinaryTree>(binary),
                                  std::span<const BinaryTree>(binary));
  CHECK(bin.micro == 100.0);
  CHECK(bin.macro == 100.0);
  // Binarization only adds spans, so recall against n-ary gold stays 100.
  const StructureReport r = EvaluateStructure(binary, gold);
  CHECK(r.f1_micro < 100.0);
  for (const auto &[tag, rate] : r.per_tag) {
    INFO(tag);
    CHECK(rate.total > 0);
    CHECK(rate.percent() == 100.0);
  }
  for (const auto &[h, rate] : AccuracyByHeight(binary, binary_spans)) {
    CHECK(rate.percent() == 100.0);
  }
}

TEST_CASE("binarized gold recalls every n-ary span") {
  const std::vector<Tree> gold = SynthTrees(1000, 12);
  for (const Tree &t : gold) {
    const SpanSet b = SpansOf(BinarizeRight(t), true);
    for (const auto &s : SpansOf(t, true)) CHECK(b.count(s) == 1);
  }
}

TEST_CASE("one wrong low constituent only lowers its height bucket") {
  // gold ((a b) (c (d e))), pred ((a b) ((c d) e)): (c d) is wrong.
  const auto w = Words(5);
  auto L = [&](int i) { return BinaryTree::Leaf("X", w[i]); };
  const BinaryTree gold = BinaryTree::Join(
      "X", BinaryTree::Join("X", L(0), L(1)),
      BinaryTree::Join("X", L(2), BinaryTree::Join("X", L(3), L(4))));
  const BinaryTree pred = BinaryTree::Join(
      "X", BinaryTree::Join("X", L(0), L(1)),
      BinaryTree::Join("X", BinaryTree::Join("X", L(2), L(3)), L(4)));
  std::vector<BinaryTree> p = {pred};
  std::vector<SpanSet> g = {SpansOf(gold, true)};
  const auto by = AccuracyByHeight(p, g);
  CHECK(by.at(2).correct == 1);
  CHECK(by.at(2).total == 2);
  CHECK(by.at(3).correct == 1);
  CHECK(by.at(3).total == 1);
}

TEST_CASE("right branching beats left branching on right-skewed text") {
  const std::vector<Tree> gold = SynthTrees(5000, 3);
  std::vector<BinaryTree> right, left;
  for (const Tree &t : gold) {
    const auto words = t.tokens();
    right.push_back(RightBranching(words));
    left.push_back(LeftBranching(words));
  }
  const F1Score r = UnlabeledF1(std::span<const BinaryTree>(right),
                                std::span<const Tree>(gold));
  const F1Score l = UnlabeledF1(std::span<const BinaryTree>(left),
                                std::span<const Tree>(gold));
  CHECK(r.micro > l.micro);
  CHECK(RightBranching(Words(5)) == RightChain(Words(5)));
  CHECK(LeftBranching(Words(5)) == LeftChain(Words(5)));
}

TEST_CASE("per-tag accuracy counts multi-word gold constituents") {
  const Tree gold = ParseBracketed(
      "(S (NP (PRP she)) (VP (VBD saw) (NP (DT a) (NN dog)) "
      "(PP (IN in) (NP (DT the) (NN park)))))")[0];
  // she (saw ((a dog) (in (the park))))
  const auto w = gold.tokens();
  auto L = [&](int i) { return BinaryTree::Leaf("X", w[i]); };
  const BinaryTree pred = BinaryTree::Join(
      "X", L(0),
      BinaryTree::Join(
          "X", L(1),
          BinaryTree::Join("X", BinaryTree::Join("X", L(2), L(3)),
                           BinaryTree::Join("X", L(4),
                                            BinaryTree::Join("X", L(5), L(6))))));
  std::vector<BinaryTree> p = {pred};
  std::vector<Tree> g = {gold};
  const auto acc = PerTagAccuracy(p, g, kDefaultTags);
  // NP: (a dog) and (the park) hit; single-word (she) is skipped.
  CHECK(acc.at("NP").total == 2);
  CHECK(acc.at("NP").correct == 2);
  CHECK(acc.at("VP").total == 1);
  CHECK(acc.at("VP").correct == 1);
  CHECK(acc.at("PP").correct == 1);
  CHECK(acc.at("ADJP").total == 0);
  CHECK(acc.at("ADJP").percent() == 0.0);
}

TEST_CASE("depth and branching of chains") {
  CHECK(Depth(RightChain(Words(5))) == 4);
  CHECK(Depth(BinaryTree::Leaf("X", "a")) == 0);
  const BranchCounts r = CountBranches(RightChain(Words(5)));
  CHECK(r.left == 4);
  CHECK(r.right == 1);
  const BranchCounts l = CountBranches(LeftChain(Words(5)));
  CHECK(l.left == 1);
  CHECK(l.right == 4);
  CHECK(l.ratio() == doctest::Approx(0.25));
  CHECK(CountBranches(BinaryTree::Leaf("X", "a")).ratio() == 0.0);
  const Tree nary = ParseBracketed("(S (NP (PRP she)) (VBD ran) (. .))")[0];
  const BranchCounts n = CountBranches(nary);
  CHECK(n.left == 1);
  CHECK(n.right == 2);
  CHECK(Depth(nary) == 2);
}

TEST_CASE("balanced trees") {
  const auto w = Words(4);
  auto L = [&](int i) { return BinaryTree::Leaf("X", w[i]); };
  const BinaryTree b = BinaryTree::Join("X", BinaryTree::Join("X", L(0), L(1)),
                                        BinaryTree::Join("X", L(2), L(3)));
  CHECK(Depth(b) == 2);
  CHECK(CountBranches(b).ratio() == 1.0);
  CHECK(CountBranches(RightChain(Words(4))).ratio() == 3.0);
  CHECK(CountBranches(LeftChain(Words(4))).ratio() == doctest::Approx(1.0 / 3));
  // Split every span at its midpoint: depth is ceil(log2 N).
  for (std::size_t n = 1; n <= 40; ++n) {
    std::vector<double> d(n - 1);
    const auto fill = [&](auto &self, std::size_t lo, std::size_t hi,
                          double level) -> void {
      if (hi - lo < 2) return;
      const std::size_t mid = lo + (hi - lo + 1) / 2;
      d[mid - 1] = level;
      self(self, lo, mid, level - 1);
      self(self, mid, hi, level - 1);
    };
    fill(fill, 0, n, 100.0);
    const BinaryTree t = DistancesToTreeUnbiased(d, Words(n));
    CHECK(Depth(t) ==
          static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(n)))));
  }
}

TEST_CASE("every word is a left or right child") {
  for (std::uint64_t k = 0; k < 100; ++k) {
    const BinaryTree t = RandomBinaryTree(2 + k % 15, k);
    const BranchCounts c = CountBranches(t);
    CHECK(c.left + c.right == t.leaf_count());
    CHECK(Depth(t) + 1 == static_cast<std::size_t>(t.height));
  }
}

TEST_CASE("accuracy by height excludes the root") {
  const BinaryTree pred = RightChain(Words(4));
  std::vector<BinaryTree> p = {pred};
  std::vector<SpanSet> g = {{{0, 4}, {2, 4}}};
  const auto by = AccuracyByHeight(p, g);
  REQUIRE(by.size() == 2);
  CHECK(by.at(2).correct == 1);
  CHECK(by.at(3).total == 1);
  CHECK(by.at(3).correct == 0);
  CHECK(by.count(4) == 0);
}

TEST_CASE("length filter keeps short sentences with their trees") {
  PreprocessRules rules;
  const std::vector<Tree> trees =
      ParseBracketed("(S (NN a) (NN b)) (S (NN a) (NN b) (NN c) (NN d)) "
                     "(S (NN c))");
  const Corpus corpus = PreprocessCorpus(trees, rules);
  const Corpus short_only = LengthFilter(corpus, 2);
  REQUIRE(short_only.sentence_count() == 2);
  CHECK(short_only.spans[0].length() == 2);
  CHECK(short_only.spans[1].length() == 1);
  CHECK(*short_only.gold_nary[1] == *corpus.gold_nary[2]);
  CHECK(short_only.gold_trees[0].has_value());
  short_only.Validate();
}

TEST_CASE("report JSON and CSV") {
  const std::vector<Tree> gold = SynthTrees(200, 5);
  std::vector<BinaryTree> pred;
  for (const Tree &t : gold) pred.push_back(RightBranching(t.tokens()));
  const StructureReport r = EvaluateStructure(pred, gold);
  const auto j = nlohmann::json::parse(r.ToJson());
  CHECK(j["sentences"] == gold.size());
  CHECK(j["f1_micro"].get<double>() == doctest::Approx(r.f1_micro));
  CHECK(j["per_tag"].contains("NP"));
  CHECK(j["left_right_ratio"].is_null() == !std::isfinite(r.branches.ratio()));
  const std::string csv = r.HeightCsv();
  CHECK(csv.rfind("height,correct,total,accuracy\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') ==
        static_cast<long>(r.by_height.size() + 1));
}

TEST_CASE("perplexity of a uniform model is the vocabulary size") {
  PreprocessRules rules;
  const Corpus c = PreprocessCorpus(SyntheticTreebank(200, 4), rules);
  Config cfg;
  cfg.model.layers = 1;
  cfg.model.emb_size = 6;
  cfg.model.hidden_size = 6;
  cfg.model.init = InitScheme::kZero;
  cfg.model.supervision = SupervisionMode::kNone;
  cfg.train.eval_batch_size = 2;
  auto model = CreateModel(cfg.model, c.vocab.size(), 3);
  CHECK(Perplexity(*model, c, cfg.train) ==
        doctest::Approx(static_cast<double>(c.vocab.size())));
}

}  // namespace
}  // namespace sdlm
