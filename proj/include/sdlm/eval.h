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

// Structure metrics over induced and gold trees, and perplexity.

#ifndef SDLM_EVAL_H_
#define SDLM_EVAL_H_

#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sdlm/config.h"
#include "sdlm/model.h"
#include "sdlm/tree.h"
#include "sdlm/treebank.h"

namespace sdlm {

// Half-open word-index spans [start, end).
using SpanSet = std::set<std::pair<std::size_t, std::size_t>>;

// One span per internal node, single-word spans excluded. The whole-sentence
// span is kept only when `keep_sentence` is set.
SpanSet SpansOf(const BinaryTree &tree, bool keep_sentence);
SpanSet SpansOf(const Tree &tree, bool keep_sentence);

struct LabeledSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string label;
};

// Every internal (non-preterminal) node of an n-ary tree, outermost first.
std::vector<LabeledSpan> LabeledSpans(const Tree &tree);

struct F1Score {
  double micro = 0.0;  // percent
  double macro = 0.0;  // percent
  std::size_t sentences = 0;
};

// Per sentence P = |pred & gold| / |pred|, R = |pred & gold| / |gold|;
// identical empty sets score 100, otherwise an empty side scores 0.
F1Score UnlabeledF1(std::span<const SpanSet> pred,
                    std::span<const SpanSet> gold);
// F1 spans (sentence and single-word spans dropped). Throws DataError naming
// the first sentence whose leaf counts differ.
F1Score UnlabeledF1(std::span<const BinaryTree> pred,
                    std::span<const BinaryTree> gold);
F1Score UnlabeledF1(std::span<const BinaryTree> pred,
                    std::span<const Tree> gold);
F1Score UnlabeledF1(std::span<const Tree> pred, std::span<const Tree> gold);

struct Rate {
  std::size_t correct = 0;
  std::size_t total = 0;
  double percent() const {
    return total ? 100.0 * static_cast<double>(correct) / total : 0.0;
  }
};

inline const std::vector<std::string> kDefaultTags = {"ADJP", "NP", "VP",
                                                      "PP"};

// For each tag, the gold constituents carrying it (single-word constituents
// excluded) whose span is a predicted constituent; sentence spans are kept
// on both sides.
std::map<std::string, Rate> PerTagAccuracy(std::span<const BinaryTree> pred,
                                           std::span<const Tree> gold,
                                           const std::vector<std::string> &tags);

// Longest root-to-leaf path in edges.
std::size_t Depth(const BinaryTree &tree);
std::size_t Depth(const Tree &tree);

// Leaf words that are not the last child of their parent versus those that
// are; a single-leaf tree contributes nothing.
struct BranchCounts {
  std::size_t left = 0;
  std::size_t right = 0;
  // left / right; 0 when both are 0, infinity when only right is 0.
  double ratio() const;
};
BranchCounts CountBranches(const BinaryTree &tree);
BranchCounts CountBranches(const Tree &tree);

// Predicted non-root internal nodes bucketed by their height; a node is
// correct when its span is a gold constituent (sentence span included).
std::map<int, Rate> AccuracyByHeight(std::span<const BinaryTree> pred,
                                     std::span<const SpanSet> gold);

BinaryTree RightBranching(std::span<const std::string> tokens);
BinaryTree LeftBranching(std::span<const std::string> tokens);

// Sentences with at most max_len tokens, gold trees kept aligned.
Corpus LengthFilter(const Corpus &corpus, std::size_t max_len);

struct StructureReport {
  double f1_micro = 0.0;
  double f1_macro = 0.0;
  std::map<std::string, Rate> per_tag;
  double mean_depth = 0.0;
  BranchCounts branches;
  std::map<int, Rate> by_height;
  std::size_t sentences = 0;

  std::string ToJson() const;
  // "height,correct,total,accuracy" rows.
  std::string HeightCsv() const;
};

// Depth and branching statistics describe the predicted trees.
StructureReport EvaluateStructure(
    std::span<const BinaryTree> pred, std::span<const Tree> gold,
    const std::vector<std::string> &tags = kDefaultTags);

// exp(mean NLL per scored token), dropout off.
double Perplexity(LanguageModel &model, const Corpus &corpus,
                  const TrainConfig &config);

}  // namespace sdlm

#endif  // SDLM_EVAL_H_
