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

#include "sdlm/tree.h"

#include <algorithm>
#include <utility>

namespace sdlm {

namespace {

template <typename T>
void CollectTokens(const T &node, std::vector<std::string> *out) {
  if (node.is_leaf()) {
    out->push_back(node.token);
    return;
  }
  for (const auto &child : node.children) CollectTokens(child, out);
}

template <typename T>
std::size_t CountLeaves(const T &node) {
  if (node.is_leaf()) return 1;
  std::size_t n = 0;
  for (const auto &child : node.children) n += CountLeaves(child);
  return n;
}

template <typename T>
void Bracket(const T &node, std::string *out) {
  out->push_back('(');
  out->append(node.label);
  if (node.is_leaf()) {
    out->push_back(' ');
    out->append(node.token);
  } else {
    for (const auto &child : node.children) {
      out->push_back(' ');
      Bracket(child, out);
    }
  }
  out->push_back(')');
}

template <typename T>
void Shape(const T &node, std::string *out) {
  if (node.is_leaf()) {
    out->append(node.token);
    return;
  }
  out->push_back('(');
  for (std::size_t i = 0; i < node.children.size(); ++i) {
    if (i > 0) out->push_back(' ');
    Shape(node.children[i], out);
  }
  out->push_back(')');
}

void Ascii(const Tree &node, const std::string &prefix, bool last, bool root,
           std::string *out) {
  out->append(prefix);
  if (!root) out->append(last ? "`-- " : "|-- ");
  out->append(node.label.empty() ? "*" : node.label);
  if (node.is_leaf()) {
    out->push_back(' ');
    out->append(node.token);
  }
  out->push_back('\n');
  std::string next = prefix;
  if (!root) next += last ? "    " : "|   ";
  for (std::size_t i = 0; i < node.children.size(); ++i) {
    Ascii(node.children[i], next, i + 1 == node.children.size(), false, out);
  }
}

}  // namespace

Tree Tree::Leaf(std::string label, std::string token) {
  Tree t;
  t.label = std::move(label);
  t.token = std::move(token);
  return t;
}

Tree Tree::Node(std::string label, std::vector<Tree> children) {
  Tree t;
  t.label = std::move(label);
  t.children = std::move(children);
  return t;
}

std::size_t Tree::leaf_count() const { return CountLeaves(*this); }

std::vector<std::string> Tree::tokens() const {
  std::vector<std::string> out;
  CollectTokens(*this, &out);
  return out;
}

std::vector<std::string> Tree::tags() const {
  std::vector<std::string> out;
  struct Walk {
    static void Run(const Tree &n, std::vector<std::string> *o) {
      if (n.is_leaf()) {
        o->push_back(n.label);
        return;
      }
      for (const auto &c : n.children) Run(c, o);
    }
  };
  Walk::Run(*this, &out);
  return out;
}

BinaryTree BinaryTree::Leaf(std::string label, std::string token) {
  BinaryTree t;
  t.label = std::move(label);
  t.token = std::move(token);
  t.height = 1;
  return t;
}

BinaryTree BinaryTree::Join(std::string label, BinaryTree left,
                            BinaryTree right) {
  BinaryTree t;
  t.label = std::move(label);
  t.height = std::max(left.height, right.height) + 1;
  t.children.reserve(2);
  t.children.push_back(std::move(left));
  t.children.push_back(std::move(right));
  return t;
}

std::size_t BinaryTree::leaf_count() const { return CountLeaves(*this); }

std::vector<std::string> BinaryTree::tokens() const {
  std::vector<std::string> out;
  CollectTokens(*this, &out);
  return out;
}

void BinaryTree::RecomputeHeights() {
  if (is_leaf()) {
    height = 1;
    return;
  }
  int h = 0;
  for (auto &child : children) {
    child.RecomputeHeights();
    h = std::max(h, child.height);
  }
  height = h + 1;
}

Tree BinaryTree::ToTree() const {
  if (is_leaf()) return Tree::Leaf(label, token);
  std::vector<Tree> kids;
  kids.reserve(children.size());
  for (const auto &child : children) kids.push_back(child.ToTree());
  return Tree::Node(label, std::move(kids));
}

bool SameShape(const BinaryTree &a, const BinaryTree &b) {
  if (a.children.size() != b.children.size()) return false;
  for (std::size_t i = 0; i < a.children.size(); ++i) {
    if (!SameShape(a.children[i], b.children[i])) return false;
  }
  return true;
}

std::string RenderBracketed(const Tree &tree) {
  std::string out;
  Bracket(tree, &out);
  return out;
}

std::string RenderBracketed(const BinaryTree &tree) {
  std::string out;
  Bracket(tree, &out);
  return out;
}

std::string RenderShape(const BinaryTree &tree) {
  std::string out;
  Shape(tree, &out);
  return out;
}

std::string RenderShape(const Tree &tree) {
  std::string out;
  Shape(tree, &out);
  return out;
}

std::string RenderAscii(const Tree &tree) {
  std::string out;
  Ascii(tree, "", true, true, &out);
  return out;
}

}  // namespace sdlm
