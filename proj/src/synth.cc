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

#include "sdlm/synth.h"

#include <string>
#include <utility>

#include "sdlm/rng.h"

namespace sdlm {

namespace {

const std::vector<std::string> kDeterminers = {"the", "a", "every", "this"};
const std::vector<std::string> kNouns = {
    "dog", "cat",   "bird", "man",  "woman", "child",
    "house", "tree", "car", "book", "idea",  "river"};
const std::vector<std::string> kAdjectives = {"big", "small", "red",
                                              "old", "happy", "green"};
const std::vector<std::string> kNames = {"alice", "bob", "carol"};
const std::vector<std::string> kPronouns = {"she", "he", "they"};
const std::vector<std::string> kVerbs = {"saw",  "liked", "found", "took",
                                         "gave", "knew",  "said"};
const std::vector<std::string> kPrepositions = {"in", "on", "near", "with",
                                                "under"};
const std::vector<std::string> kAdverbs = {"very", "quite"};

class Sampler {
 public:
  Sampler(std::uint64_t seed, const SynthOptions &options)
      : rng_(seed), options_(options) {}

  Tree Sentence(std::size_t depth) {
    std::vector<Tree> kids = {NounPhrase(depth + 1), VerbPhrase(depth + 1)};
    return Tree::Node("S", std::move(kids));
  }

 private:
  Tree Word(const char *tag, const std::vector<std::string> &words) {
    return Tree::Leaf(tag, words[rng_.Below(words.size())]);
  }

  // Index drawn from unnormalized weights; recursive options (flagged) are
  // skipped once the depth limit is reached.
  std::size_t Choose(std::vector<std::pair<double, bool>> options,
                     std::size_t depth) {
    double total = 0;
    for (auto &[w, recursive] : options) {
      if (recursive && depth >= options_.max_depth) w = 0;
      total += w;
    }
    double u = rng_.Uniform() * total;
    for (std::size_t k = 0; k < options.size(); ++k) {
      if (u < options[k].first) return k;
      u -= options[k].first;
    }
    return options.size() - 1;
  }

  Tree NounPhrase(std::size_t depth) {
    switch (Choose({{0.35, false},
                    {0.2, false},
                    {0.15, true},
                    {0.15, false},
                    {0.15, false}},
                   depth)) {
      case 0:
        return Tree::Node("NP", {Word("DT", kDeterminers), Word("NN", kNouns)});
      case 1:
        return Tree::Node("NP", {Word("DT", kDeterminers),
                                 Word("JJ", kAdjectives), Word("NN", kNouns)});
      case 2:
        return Tree::Node(
            "NP", {Tree::Node("NP", {Word("DT", kDeterminers),
                                     Word("NN", kNouns)}),
                   PrepPhrase(depth + 1)});
      case 3:
        return Tree::Node("NP", {Word("PRP", kPronouns)});
      default:
        return Tree::Node("NP", {Word("NNP", kNames)});
    }
  }

  Tree PrepPhrase(std::size_t depth) {
    return Tree::Node("PP",
                      {Word("IN", kPrepositions), NounPhrase(depth + 1)});
  }

  Tree AdjPhrase() {
    if (rng_.Bernoulli(0.5)) return Tree::Node("ADJP", {Word("JJ", kAdjectives)});
    return Tree::Node("ADJP",
                      {Word("RB", kAdverbs), Word("JJ", kAdjectives)});
  }

  Tree VerbPhrase(std::size_t depth) {
    Tree verb = Word("VBD", kVerbs);
    switch (Choose({{0.35, false},
                    {0.2, true},
                    {0.15, false},
                    {0.1, true},
                    {0.1, true},
                    {0.1, false}},
                   depth)) {
      case 0:
        return Tree::Node("VP", {std::move(verb), NounPhrase(depth + 1)});
      case 1:
        return Tree::Node("VP", {std::move(verb), NounPhrase(depth + 1),
                                 PrepPhrase(depth + 1)});
      case 2:
        return Tree::Node("VP", {std::move(verb), AdjPhrase()});
      case 3:
        return Tree::Node("VP", {std::move(verb), PrepPhrase(depth + 1)});
      case 4:
        return Tree::Node(
            "VP", {std::move(verb),
                   Tree::Node("SBAR", {Tree::Leaf("IN", "that"),
                                       Sentence(depth + 1)})});
      default:
        return Tree::Node("VP", {std::move(verb)});
    }
  }

  Rng rng_;
  SynthOptions options_;
};

}  // namespace

Tree SampleSentence(std::uint64_t seed, const SynthOptions &options) {
  Tree s = Sampler(seed, options).Sentence(0);
  if (options.punctuation) s.children.push_back(Tree::Leaf(".", "."));
  return s;
}

std::vector<Tree> SyntheticTreebank(std::size_t min_words, std::uint64_t seed,
                                    const SynthOptions &options) {
  std::vector<Tree> trees;
  std::size_t words = 0;
  for (std::uint64_t i = 0; words < min_words; ++i) {
    trees.push_back(SampleSentence(DeriveSeed(seed, i), options));
    words += trees.back().leaf_count() - (options.punctuation ? 1 : 0);
  }
  return trees;
}

}  // namespace sdlm
