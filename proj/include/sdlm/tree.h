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

#ifndef SDLM_TREE_H_
#define SDLM_TREE_H_

#include <cstddef>
#include <string>
#include <vector>

namespace sdlm {

// Labeled n-ary constituency tree. A leaf is a preterminal: it carries the
// POS tag in `label` and the word in `token`, and has no children.
struct Tree {
  std::string label;
  std::string token;
  std::vector<Tree> children;

  static Tree Leaf(std::string label, std::string token);
  static Tree Node(std::string label, std::vector<Tree> children);

  bool is_leaf() const { return children.empty(); }
  std::size_t leaf_count() const;
  std::vector<std::string> tokens() const;
  std::vector<std::string> tags() const;

  bool operator==(const Tree &other) const = default;
};

// Binarized tree. Every internal node has exactly two children and a height
// equal to max(child heights) + 1; leaves have height 1.
struct BinaryTree {
  std::string label;
  std::string token;
  int height = 1;
  std::vector<BinaryTree> children;

  static BinaryTree Leaf(std::string label, std::string token);
  // Builds an internal node and sets its height from the children.
  static BinaryTree Join(std::string label, BinaryTree left, BinaryTree right);

  bool is_leaf() const { return children.empty(); }
  const BinaryTree &left() const { return children[0]; }
  const BinaryTree &right() const { return children[1]; }
  std::size_t leaf_count() const;
  std::vector<std::string> tokens() const;

  // Recomputes every height bottom-up.
  void RecomputeHeights();
  Tree ToTree() const;

  bool operator==(const BinaryTree &other) const = default;
};

// Structural equality ignoring labels, tokens and heights.
bool SameShape(const BinaryTree &a, const BinaryTree &b);

// "(S (NP (DT the) (NN cat)) (VP (VBD sat)))"
std::string RenderBracketed(const Tree &tree);
std::string RenderBracketed(const BinaryTree &tree);

// Unlabeled rendering over tokens only: "(the (cat sat))".
std::string RenderShape(const BinaryTree &tree);
std::string RenderShape(const Tree &tree);

// Multi-line ASCII drawing, one node per line with box-drawing made of
// plain ASCII characters.
std::string RenderAscii(const Tree &tree);

}  // namespace sdlm

#endif  // SDLM_TREE_H_
