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
#include <limits>
#include <stdexcept>

#include "json.hpp"
#include "sdlm/error.h"
#include "sdlm/training.h"

namespace sdlm {

namespace {

std::size_t CollectBinary(const BinaryTree &node, std::size_t start,
                          SpanSet *out) {
  if (node.is_leaf()) return 1;
  std::size_t n = CollectBinary(node.left(), start, out);
  n += CollectBinary(node.right(), start + n, out);
  if (n > 1) out->insert({start, start + n});
  return n;
}

std::size_t CollectNary(const Tree &node, std::size_t start,
                        std::vector<LabeledSpan> *out) {
  if (node.is_leaf()) return 1;
  const std::size_t slot = out->size();
  out->push_back({start, start, node.label});
  std::size_t n = 0;
  for (const Tree &child : node.children) {
    n += CollectNary(child, start + n, out);
  }
  (*out)[slot].end = start + n;
  return n;
}

void CountBinary(const BinaryTree &node, BranchCounts *c) {
  for (std::size_t k = 0; k < node.children.size(); ++k) {
    const BinaryTree &child = node.children[k];
    if (child.is_leaf()) {
      (k + 1 == node.children.size() ? c->right : c->left)++;
    } else {
      CountBinary(child, c);
    }
  }
}

void CountNary(const Tree &node, BranchCounts *c) {
  for (std::size_t k = 0; k < node.children.size(); ++k) {
    const Tree &child = node.children[k];
    if (child.is_leaf()) {
      (k + 1 == node.children.size() ? c->right : c->left)++;
    } else {
      CountNary(child, c);
    }
  }
}

void Heights(const BinaryTree &node, std::size_t start, bool root,
             const SpanSet &gold, std::map<int, Rate> *out) {
  if (node.is_leaf()) return;
  const std::size_t n = node.leaf_count();
  if (!root) {
    Rate &r = (*out)[node.height];
    ++r.total;
    if (gold.count({start, start + n})) ++r.correct;
  }
  Heights(node.left(), start, false, gold, out);
  Heights(node.right(), start + node.left().leaf_count(), false, gold, out);
}

void CheckLengths(std::size_t pred, std::size_t gold) {
  if (pred != gold) {
    throw DataError("predicted and gold tree lists differ in length (" +
                    std::to_string(pred) + " vs " + std::to_string(gold) +
                    ")");
  }
}

template <typename Pred, typename Gold>
void CheckLeaves(std::span<const Pred> pred, std::span<const Gold> gold) {
  CheckLengths(pred.size(), gold.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].leaf_count() != gold[i].leaf_count()) {
      throw DataError("sentence " + std::to_string(i) + ": predicted tree has " +
                      std::to_string(pred[i].leaf_count()) +
                      " leaves, gold has " +
                      std::to_string(gold[i].leaf_count()));
    }
  }
}

nlohmann::ordered_json RateJson(const Rate &r) {
  nlohmann::ordered_json j;
  j["correct"] = r.correct;
  j["total"] = r.total;
  j["accuracy"] = r.percent();
  return j;
}

}  // namespace

SpanSet SpansOf(const BinaryTree &tree, bool keep_sentence) {
  SpanSet out;
  const std::size_t n = CollectBinary(tree, 0, &out);
  if (!keep_sentence) out.erase({0, n});
  return out;
}

SpanSet SpansOf(const Tree &tree, bool keep_sentence) {
  SpanSet out;
  const std::size_t n = tree.leaf_count();
  for (const LabeledSpan &s : LabeledSpans(tree)) {
    if (s.end - s.start > 1) out.insert({s.start, s.end});
  }
  if (!keep_sentence) out.erase({0, n});
  return out;
}

std::vector<LabeledSpan> LabeledSpans(const Tree &tree) {
  std::vector<LabeledSpan> out;
  CollectNary(tree, 0, &out);
  return out;
}

F1Score UnlabeledF1(std::span<const SpanSet> pred,
                    std::span<const SpanSet> gold) {
  CheckLengths(pred.size(), gold.size());
  F1Score score;
  score.sentences = pred.size();
  std::size_t match = 0, n_pred = 0, n_gold = 0;
  double macro = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    std::size_t m = 0;
    for (const auto &s : pred[i]) m += gold[i].count(s);
    match += m;
    n_pred += pred[i].size();
    n_gold += gold[i].size();
    if (pred[i].empty() && gold[i].empty()) {
      macro += 100.0;
    } else if (m > 0) {
      const double p = static_cast<double>(m) / pred[i].size();
      const double r = static_cast<double>(m) / gold[i].size();
      macro += 100.0 * 2 * p * r / (p + r);
    }
  }
  if (!pred.empty()) score.macro = macro / pred.size();
  if (n_pred == 0 && n_gold == 0) {
    score.micro = pred.empty() ? 0.0 : 100.0;
  } else if (match > 0) {
    const double p = static_cast<double>(match) / n_pred;
    const double r = static_cast<double>(match) / n_gold;
    score.micro = 100.0 * 2 * p * r / (p + r);
  }
  return score;
}

namespace {

template <typename Pred, typename Gold>
F1Score TreeF1(std::span<const Pred> pred, std::span<const Gold> gold) {
  CheckLeaves(pred, gold);
  std::vector<SpanSet> p, g;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    p.push_back(SpansOf(pred[i], false));
    g.push_back(SpansOf(gold[i], false));
  }
  return UnlabeledF1(std::span<const SpanSet>(p), std::span<const SpanSet>(g));
}

}  // namespace

F1Score UnlabeledF1(std::span<const BinaryTree> pred,
                    std::span<const BinaryTree> gold) {
  return TreeF1(pred, gold);
}

F1Score UnlabeledF1(std::span<const BinaryTree> pred,
                    std::span<const Tree> gold) {
  return TreeF1(pred, gold);
}

F1Score UnlabeledF1(std::span<const Tree> pred, std::span<const Tree> gold) {
  return TreeF1(pred, gold);
}

std::map<std::string, Rate> PerTagAccuracy(
    std::span<const BinaryTree> pred, std::span<const Tree> gold,
    const std::vector<std::string> &tags) {
  CheckLeaves(pred, gold);
  std::map<std::string, Rate> out;
  for (const std::string &tag : tags) out[tag];
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const SpanSet spans = SpansOf(pred[i], true);
    for (const LabeledSpan &s : LabeledSpans(gold[i])) {
      if (s.end - s.start < 2) continue;
      auto it = out.find(s.label);
      if (it == out.end()) continue;
      ++it->second.total;
      if (spans.count({s.start, s.end})) ++it->second.correct;
    }
  }
  return out;
}

std::size_t Depth(const BinaryTree &tree) {
  std::size_t d = 0;
  for (const BinaryTree &c : tree.children) d = std::max(d, Depth(c) + 1);
  return d;
}

std::size_t Depth(const Tree &tree) {
  std::size_t d = 0;
  for (const Tree &c : tree.children) d = std::max(d, Depth(c) + 1);
  return d;
}

double BranchCounts::ratio() const {
  if (right == 0) {
    return left == 0 ? 0.0 : std::numeric_limits<double>::infinity();
  }
  return static_cast<double>(left) / static_cast<double>(right);
}

BranchCounts CountBranches(const BinaryTree &tree) {
  BranchCounts c;
  CountBinary(tree, &c);
  return c;
}

BranchCounts CountBranches(const Tree &tree) {
  BranchCounts c;
  CountNary(tree, &c);
  return c;
}

std::map<int, Rate> AccuracyByHeight(std::span<const BinaryTree> pred,
                                     std::span<const SpanSet> gold) {
  CheckLengths(pred.size(), gold.size());
  std::map<int, Rate> out;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    Heights(pred[i], 0, true, gold[i], &out);
  }
  return out;
}

BinaryTree RightBranching(std::span<const std::string> tokens) {
  if (tokens.empty()) throw std::invalid_argument("no tokens");
  BinaryTree t = BinaryTree::Leaf("X", tokens.back());
  for (std::size_t i = tokens.size() - 1; i-- > 0;) {
    t = BinaryTree::Join("X", BinaryTree::Leaf("X", tokens[i]), std::move(t));
  }
  return t;
}

BinaryTree LeftBranching(std::span<const std::string> tokens) {
  if (tokens.empty()) throw std::invalid_argument("no tokens");
  BinaryTree t = BinaryTree::Leaf("X", tokens.front());
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    t = BinaryTree::Join("X", std::move(t), BinaryTree::Leaf("X", tokens[i]));
  }
  return t;
}

Corpus LengthFilter(const Corpus &corpus, std::size_t max_len) {
  Corpus out;
  out.mode = corpus.mode;
  out.vocab = corpus.vocab;
  for (std::size_t i = 0; i < corpus.sentence_count(); ++i) {
    if (corpus.spans[i].length() > max_len) continue;
    out.AddSentence(corpus.sentence(i), corpus.gold_nary[i]);
    if (!corpus.gold_nary[i]) out.gold_trees.back() = corpus.gold_trees[i];
  }
  return out;
}

std::string StructureReport::ToJson() const {
  nlohmann::ordered_json j;
  j["sentences"] = sentences;
  j["f1_micro"] = f1_micro;
  j["f1_macro"] = f1_macro;
  nlohmann::ordered_json tags = nlohmann::ordered_json::object();
  for (const auto &[tag, r] : per_tag) tags[tag] = RateJson(r);
  j["per_tag"] = tags;
  j["mean_depth"] = mean_depth;
  j["left_words"] = branches.left;
  j["right_words"] = branches.right;
  const double ratio = branches.ratio();
  if (std::isfinite(ratio)) {
    j["left_right_ratio"] = ratio;
  } else {
    j["left_right_ratio"] = nullptr;
  }
  nlohmann::ordered_json heights = nlohmann::ordered_json::object();
  for (const auto &[h, r] : by_height) heights[std::to_string(h)] = RateJson(r);
  j["accuracy_by_height"] = heights;
  return j.dump(2);
}

std::string StructureReport::HeightCsv() const {
  std::string out = "height,correct,total,accuracy\n";
  for (const auto &[h, r] : by_height) {
    out += std::to_string(h) + "," + std::to_string(r.correct) + "," +
           std::to_string(r.total) + "," +
           nlohmann::json(r.percent()).dump() + "\n";
  }
  return out;
}

StructureReport EvaluateStructure(std::span<const BinaryTree> pred,
                                  std::span<const Tree> gold,
                                  const std::vector<std::string> &tags) {
  StructureReport report;
  const F1Score f1 = UnlabeledF1(pred, gold);
  report.sentences = pred.size();
  report.f1_micro = f1.micro;
  report.f1_macro = f1.macro;
  report.per_tag = PerTagAccuracy(pred, gold, tags);
  std::vector<SpanSet> gold_spans;
  double depth = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    gold_spans.push_back(SpansOf(gold[i], true));
    depth += static_cast<double>(Depth(pred[i]));
    const BranchCounts c = CountBranches(pred[i]);
    report.branches.left += c.left;
    report.branches.right += c.right;
  }
  if (!pred.empty()) report.mean_depth = depth / pred.size();
  report.by_height = AccuracyByHeight(pred, gold_spans);
  return report;
}

double Perplexity(LanguageModel &model, const Corpus &corpus,
                  const TrainConfig &config) {
  return EvaluateLm(model, corpus, {}, config).ppl;
}

}  // namespace sdlm
