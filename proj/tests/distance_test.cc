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

#include "sdlm/distance.h"

#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "sdlm/error.h"
#include "sdlm/rng.h"
#include "sdlm/treebank.h"
#include "test_util.h"

namespace sdlm {
namespace {

std::vector<double> D(const BinaryTree &t) { return TreeToDistances(t).values; }

TEST_CASE("tree to distances on small trees") {
  const auto w = testing::Words(3);
  CHECK(D(testing::RightChain(w)) == std::vector<double>{3, 2});
  CHECK(D(testing::LeftChain(w)) == std::vector<double>{2, 3});
  DistanceSeq one = TreeToDistances(BinaryTree::Leaf("X", "a"));
  CHECK(one.values.empty());
  CHECK(one.n_tokens == 1);
  DistanceSeq three = TreeToDistances(testing::RightChain(w));
  CHECK(three.mask == std::vector<bool>{true, true});
  CHECK(three.provenance == Provenance::kGold);
}

TEST_CASE("five-word example assigns d3, d2, d1, d4 in order") {
  // ((w1 (w2 (w3 w4))) w5)
  const auto w = testing::Words(5);
  BinaryTree inner = testing::RightChain({w[0], w[1], w[2], w[3]});
  BinaryTree t = BinaryTree::Join("X", inner, BinaryTree::Leaf("X", w[4]));
  auto d = D(t);
  CHECK(d[3] > d[0]);
  CHECK(d[0] > d[1]);
  CHECK(d[1] > d[2]);
  CHECK(SameShape(DistancesToTreeUnbiased(d, w), t));
}

TEST_CASE("unbiased recovery examples") {
  const std::vector<std::string> abc = {"a", "b", "c"};
  CHECK(RenderShape(DistancesToTreeUnbiased(std::vector<double>{3, 2}, abc)) ==
        "(a (b c))");
  CHECK(RenderShape(DistancesToTreeUnbiased(std::vector<double>{1, 1}, abc)) ==
        "((a b) c)");
  BinaryTree leaf =
      DistancesToTreeUnbiased(std::vector<double>{}, std::vector<std::string>{"a"});
  CHECK(leaf.is_leaf());
  CHECK(leaf.height == 1);
  CHECK_THROWS(DistancesToTreeUnbiased(std::vector<double>{1}, abc));
}

TEST_CASE("round trip over every shape up to eight leaves") {
  for (std::size_t n = 1; n <= 8; ++n) {
    const auto w = testing::Words(n);
    for (const BinaryTree &t : testing::AllShapes(n)) {
      BinaryTree back = DistancesToTreeUnbiased(D(t), w);
      CHECK(SameShape(back, t));
      CHECK(back == t);
    }
  }
}

TEST_CASE("only relative order matters") {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.Below(9);
    std::vector<double> d(n - 1);
    for (double &v : d) v = rng.Uniform(-3, 3);
    std::vector<double> m(d.size());
    std::transform(d.begin(), d.end(), m.begin(),
                   [](double v) { return std::exp(2 * v) + 5; });
    const auto w = testing::Words(n);
    CHECK(SameShape(DistancesToTreeUnbiased(d, w),
                    DistancesToTreeUnbiased(m, w)));
  }
}

TEST_CASE("biased build") {
  const std::vector<std::string> abcd = {"a", "b", "c", "d"};
  const std::vector<double> flat = {1, 1, 1};
  CHECK(RenderShape(DistancesToTreeBiased(flat, abcd)) == "(a (b (c d)))");
  CHECK(RenderShape(DistancesToTreeUnbiased(flat, abcd)) == "(((a b) c) d)");
  CHECK(RenderShape(DistancesToTreeBiased(std::vector<double>{3, 2, 1},
                                          abcd)) == "(a (b (c d)))");
  CHECK(RenderShape(DistancesToTreeBiased(
            std::vector<double>{4, 3, 2, 1}, abcd,
            DistanceConvention::kPerWord)) == "(a (b (c d)))");
  CHECK(DistancesToTreeBiased(std::vector<double>{},
                              std::vector<std::string>{"a"})
            .is_leaf());
  // A larger slot in the middle makes its right-hand word the pivot.
  CHECK(RenderShape(DistancesToTreeBiased(std::vector<double>{1, 5, 1},
                                          abcd)) == "((a b) (c d))");
}

TEST_CASE("biased and unbiased agree on distinct right-branching input") {
  for (std::size_t n = 2; n <= 8; ++n) {
    const auto w = testing::Words(n);
    std::vector<double> d(n - 1);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = double(n - i);
    CHECK(SameShape(DistancesToTreeBiased(d, w), DistancesToTreeUnbiased(d, w)));
    CHECK(SameShape(DistancesToTreeBiased(d, w), testing::RightChain(w)));
  }
}

TEST_CASE("validate heights") {
  BinaryTree t = testing::RightChain(testing::Words(4));
  CHECK(ValidateHeights(t));
  CHECK(ValidateHeights(BinaryTree::Leaf("X", "a")));
  t.children[1].height = t.height;
  CHECK_FALSE(ValidateHeights(t));
}

TEST_CASE("distance line format") {
  DistanceSeq s = TreeToDistances(testing::RightChain(testing::Words(4)));
  s.mask[1] = false;
  const std::string line = FormatDistanceLine(s);
  CHECK(line == "4 4 3 2 1 0 1");
  DistanceSeq back = ParseDistanceLine(line);
  CHECK(back.values == s.values);
  CHECK(back.mask == s.mask);
  CHECK(back.n_tokens == 4);
  DistanceSeq real = DistanceSeq::FromValues({0.1, 1.0 / 3}, Provenance::kModelLm);
  CHECK(ParseDistanceLine(FormatDistanceLine(real)).values == real.values);
  CHECK_THROWS_AS(ParseDistanceLine("3 1"), DataError);
  CHECK_THROWS_AS(ParseDistanceLine("2 1 2"), DataError);
  CHECK_THROWS_AS(ParseDistanceLine("2 1 1 9"), DataError);
}

TEST_CASE("gold distances of binarized treebank trees are positive integers") {
  auto trees = ParseBracketed(
      "(S (NP (DT a) (JJ b) (NN c)) (VP (VBD d) (NP (NN e)) (PP (IN f) (NN g))))");
  BinaryTree b = BinarizeRight(trees[0]);
  DistanceSeq s = TreeToDistances(b);
  s.Validate();
  for (double v : s.values) {
    CHECK(v >= 2);
    CHECK(v == std::floor(v));
  }
}

}  // namespace
}  // namespace sdlm
