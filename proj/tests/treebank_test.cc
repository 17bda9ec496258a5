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

#include "sdlm/treebank.h"

#include <map>
#include <sstream>

#include "doctest.h"
#include "sdlm/distance.h"
#include "sdlm/error.h"
#include "test_util.h"

namespace sdlm {
namespace {

const LeafPredicate kPunct = [](const std::string &tag, const std::string &) {
  return tag == "." || tag == ",";
};

TEST_CASE("parse a simple tree") {
  auto trees = ParseBracketed("(S (NP (DT the) (NN cat)) (VP (VBD sat)))");
  REQUIRE(trees.size() == 1);
  CHECK(trees[0].label == "S");
  CHECK(trees[0].leaf_count() == 3);
  CHECK(trees[0].tokens() == std::vector<std::string>{"the", "cat", "sat"});
}

TEST_CASE("parse strips function tags and empty elements") {
  auto trees = ParseBracketed("(NP-SBJ (NN cat))");
  REQUIRE(trees.size() == 1);
  CHECK(trees[0].label == "NP");

  trees = ParseBracketed(
      "( (S (NP-SBJ=1 (-NONE- *T*)) (VP-TMP (VBD ran) (-LRB- -LRB-))) )");
  REQUIRE(trees.size() == 1);
  CHECK(RenderBracketed(trees[0]) == "(S (VP (VBD ran) (-LRB- -LRB-)))");
  CHECK(StripFunctionTags("-NONE-") == "-NONE-");
  CHECK(StripFunctionTags("PP-LOC-CLR") == "PP");
  CHECK(StripFunctionTags("NP=2") == "NP");
}

TEST_CASE("parse several trees and empty input") {
  CHECK(ParseBracketed("").empty());
  CHECK(ParseBracketed("  \n\t ").empty());
  auto trees = ParseBracketed("(A (B x))\n\n(C (D y) (E z))");
  REQUIRE(trees.size() == 2);
  CHECK(trees[1].leaf_count() == 2);
}

TEST_CASE("unbalanced brackets report an offset") {
  const std::string text = "((S (NN x))";
  try {
    ParseBracketed(text);
    FAIL("expected ParseError");
  } catch (const ParseError &e) {
    CHECK(e.offset() == text.size());
  }
  try {
    ParseBracketed("(S (NN x)))");
    FAIL("expected ParseError");
  } catch (const ParseError &e) {
    CHECK(e.offset() == 10);
  }
  CHECK_THROWS_AS(ParseBracketed("(S (NN x y))"), ParseError);
}

TEST_CASE("render then parse is the identity on cleaned trees") {
  const std::string text =
      "(S (NP (DT the) (JJ old) (NN man)) (VP (VBD saw) (NP (PRP it))))";
  Tree t = ParseBracketed(text)[0];
  CHECK(RenderBracketed(t) == text);
  CHECK(ParseBracketed(RenderBracketed(t))[0] == t);
}

TEST_CASE("prune leaves") {
  Tree t = ParseBracketed("(S (NP (NN cat)) (. .))")[0];
  auto never = [](const std::string &, const std::string &) { return false; };
  CHECK(*PruneLeaves(t, never) == t);
  auto pruned = PruneLeaves(t, kPunct);
  REQUIRE(pruned.has_value());
  CHECK(RenderBracketed(*pruned) == "(S (NP (NN cat)))");
  CHECK_FALSE(PruneLeaves(ParseBracketed("(S (. .))")[0], kPunct).has_value());
}

TEST_CASE("binarize right nests surplus children") {
  Tree t = ParseBracketed("(X (A a) (B b) (C c))")[0];
  BinaryTree b = BinarizeRight(t);
  CHECK(RenderShape(b) == "(a (b c))");
  CHECK(b.label == "X");
  CHECK(b.right().label == "X'");
  CHECK(b.height == 3);
  CHECK(b.right().height == 2);
  CHECK(b.left().height == 1);
  CHECK(ValidateHeights(b));
}

TEST_CASE("binarize collapses unary chains keeping the upper label") {
  Tree t = ParseBracketed("(S (NP (NN cat)) (VP (VBD sat)))")[0];
  BinaryTree b = BinarizeRight(t);
  CHECK(RenderShape(b) == "(cat sat)");
  CHECK(b.left().label == "NP");
  CHECK(b.left().token == "cat");
  CHECK(b.height == 2);

  BinaryTree leaf = BinarizeRight(ParseBracketed("(NP (NN x))")[0]);
  CHECK(leaf.is_leaf());
  CHECK(leaf.height == 1);
  CHECK(leaf.label == "NP");
}

TEST_CASE("binarize preserves leaf order and heights on many trees") {
  for (std::size_t n = 1; n <= 7; ++n) {
    for (const BinaryTree &b : testing::AllShapes(n)) {
      Tree t = b.ToTree();
      BinaryTree again = BinarizeRight(t);
      CHECK(SameShape(again, b));
      CHECK(again.tokens() == b.tokens());
      CHECK(ValidateHeights(again));
    }
  }
}

TEST_CASE("random binary tree") {
  CHECK_THROWS_AS(RandomBinaryTree(0, 1), std::invalid_argument);
  CHECK(RandomBinaryTree(1, 1).is_leaf());
  CHECK(RenderShape(RandomBinaryTree(2, 7)) == "(0 1)");
  CHECK(RandomBinaryTree(9, 3) == RandomBinaryTree(9, 3));
  CHECK(ValidateHeights(RandomBinaryTree(20, 5)));
}

// Probability of a shape under the uniform-split process, computed by direct
// recursion over the shape.
double SplitProbability(const BinaryTree &t) {
  if (t.is_leaf()) return 1.0;
  const double n = static_cast<double>(t.leaf_count());
  return SplitProbability(t.left()) * SplitProbability(t.right()) / (n - 1);
}

TEST_CASE("random trees cover every 4-leaf shape at the expected rates") {
  const auto shapes = testing::AllShapes(4);
  REQUIRE(shapes.size() == 5);
  for (std::uint64_t base : {11u, 97u}) {
    std::map<std::string, int> counts;
    const int samples = 10000;
    for (int s = 0; s < samples; ++s) {
      ++counts[RenderShape(RandomBinaryTree(4, base * 100003 + s))];
    }
    CHECK(counts.size() == 5);
    for (const BinaryTree &shape : shapes) {
      // Relabel the shape with the sampler's leaf tokens.
      BinaryTree probe = shape;
      int next = 0;
      std::function<void(BinaryTree &)> relabel = [&](BinaryTree &node) {
        if (node.is_leaf()) {
          node.token = std::to_string(next++);
          return;
        }
        for (auto &c : node.children) relabel(c);
      };
      relabel(probe);
      const double freq =
          static_cast<double>(counts[RenderShape(probe)]) / samples;
      const double expected = SplitProbability(shape);
      CHECK(freq >= 0.1);
      CHECK(freq <= 0.35);
      CHECK(std::abs(freq - expected) < 0.02);
    }
  }
}

TEST_CASE("vocabulary ordering and truncation") {
  Vocab v = Vocab::Build({{"the", 5}, {"cat", 2}, {"sat", 1}}, 4);
  REQUIRE(v.size() == 4);
  CHECK(v.Word(0) == "<unk>");
  CHECK(v.Word(1) == "<eos>");
  CHECK(v.Word(2) == "the");
  CHECK(v.Word(3) == "cat");
  CHECK(v.Lookup("sat") == Vocab::kUnk);
  CHECK(v.Lookup("cat") == 3);

  Vocab tie = Vocab::Build({{"b", 1}, {"a", 1}, {"c", 2}}, 10);
  CHECK(tie.words() == std::vector<std::string>{"<unk>", "<eos>", "c", "a", "b"});
  CHECK_THROWS_AS(Vocab::FromWords({"x", "<eos>"}, 5), ConfigError);
  CHECK(Vocab::FromWords(tie.words(), 10) == tie);
}

TEST_CASE("preprocess in concatenated mode") {
  auto trees = ParseBracketed(
      "(S (NP (DT The) (NN cat)) (VP (VBD sat)) (. .))"
      "(S (NP (DT A) (NN dog)) (VP (VBD ran)))");
  PreprocessRules rules;
  Corpus c = PreprocessCorpus(trees, rules);
  CHECK(c.tokens.size() == 8);
  REQUIRE(c.spans.size() == 2);
  CHECK(c.spans[0] == SentenceSpan{0, 3});
  CHECK(c.spans[1] == SentenceSpan{4, 7});
  CHECK(c.tokens[3] == Vocab::kEos);
  CHECK(c.tokens[7] == Vocab::kEos);
  CHECK(c.vocab.Word(c.tokens[0]) == "the");
  REQUIRE(c.gold_trees[0].has_value());
  CHECK(c.gold_trees[0]->leaf_count() == 3);
  CHECK(c.gold_nary[0]->tokens() ==
        std::vector<std::string>{"the", "cat", "sat"});
  c.Validate();
}

TEST_CASE("preprocess in separate-sentence mode with numbers") {
  auto trees = ParseBracketed(
      "(S (NP (CD 1,000)) (VP (VBD rose) (NP (CD 3.5) (NN %))) (. .))"
      "(S (NP (NNP Bob)) (VP (VBD left)))");
  PreprocessRules rules;
  rules.mode = CorpusMode::kSeparateSentence;
  Corpus c = PreprocessCorpus(trees, rules);
  CHECK(c.tokens.size() == 6);
  CHECK(c.spans[0] == SentenceSpan{0, 4});
  CHECK(c.spans[1] == SentenceSpan{4, 6});
  CHECK(c.vocab.Word(c.tokens[0]) == "N");
  CHECK(c.vocab.Word(c.tokens[2]) == "N");
  CHECK(c.vocab.Word(c.tokens[3]) == "%");
  CHECK(c.vocab.Word(c.tokens[4]) == "bob");
  for (int id : c.tokens) CHECK(id != Vocab::kEos);
  c.Validate();
}

TEST_CASE("supplied vocabulary must contain the specials") {
  auto trees = ParseBracketed("(S (NN x))");
  Vocab good = Vocab::Build({{"x", 1}}, 10);
  CHECK(PreprocessCorpus(trees, PreprocessRules(), &good).tokens.size() == 2);
}

TEST_CASE("rules parse and print") {
  PreprocessRules r = PreprocessRules::Parse(
      "# comment\nlowercase = false\ndrop_tags = . ,\nnumber_symbol = <num>\n"
      "vocab_max_size = 50\nmode = sepsent\n");
  CHECK_FALSE(r.lowercase);
  CHECK(r.drop_tags == std::set<std::string>{".", ","});
  CHECK(r.number_symbol == "<num>");
  CHECK(r.vocab_max_size == 50);
  CHECK(r.mode == CorpusMode::kSeparateSentence);
  PreprocessRules again = PreprocessRules::Parse(r.ToString());
  CHECK(again.ToString() == r.ToString());
  CHECK_THROWS_AS(PreprocessRules::Parse("bogus = 1"), ConfigError);
}

TEST_CASE("dataset round trip") {
  auto trees = ParseBracketed(
      "(S (NP (DT the) (NN cat)) (VP (VBD sat) (PP (IN on) (NP (DT the) "
      "(NN mat)))))(S (NP (PRP it)) (VP (VBD slept)))");
  Dataset d;
  d.rules = PreprocessRules();
  Corpus train = PreprocessCorpus(trees, d.rules);
  d.vocab = train.vocab;
  d.mode = train.mode;
  d.splits["train"] = train;
  d.splits["valid"] = PreprocessCorpus({trees[1]}, d.rules, &d.vocab);
  std::stringstream buf;
  WriteDataset(d, buf);
  const std::string first = buf.str();
  Dataset back = ReadDataset(buf);
  CHECK(back.vocab == d.vocab);
  CHECK(back.splits.size() == 2);
  const Corpus &bt = back.splits.at("train");
  CHECK(bt.tokens == train.tokens);
  CHECK(bt.spans == train.spans);
  CHECK(bt.gold_trees == train.gold_trees);
  CHECK(bt.gold_nary == train.gold_nary);
  std::stringstream again;
  WriteDataset(back, again);
  CHECK(again.str() == first);

  std::stringstream bad("{\"magic\": \"nope\"}");
  CHECK_THROWS_AS(ReadDataset(bad), DataError);
}

TEST_CASE("pipeline invariants on mixed trees") {
  auto trees = ParseBracketed(
      "(S (NP (DT the) (JJ big) (JJ red) (NN dog)) (, ,) (VP (VBD barked)))"
      "(S (`` ``) (NP (NN x)) ('' ''))"
      "(S (. .))"
      "(S (NP (NNS dogs)) (VP (VBP bark) (ADVP (RB loudly) (RB often))))");
  Corpus c = PreprocessCorpus(trees, PreprocessRules());
  CHECK(c.sentence_count() == 3);
  std::size_t total = 0;
  for (std::size_t i = 0; i < c.sentence_count(); ++i) {
    total += c.spans[i].length();
    REQUIRE(c.gold_trees[i].has_value());
    CHECK(c.gold_trees[i]->leaf_count() == c.spans[i].length());
    CHECK(ValidateHeights(*c.gold_trees[i]));
  }
  CHECK(c.tokens.size() == total + c.sentence_count());
}

}  // namespace
}  // namespace sdlm
