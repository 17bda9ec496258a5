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

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "sdlm/error.h"

namespace sdlm {

namespace {

// Returns the number of leaves under `node`; writes the height of every
// internal node into the slot between its two halves.
std::size_t FillSlots(const BinaryTree &node, std::size_t first_leaf,
                      std::vector<double> *values) {
  if (node.is_leaf()) return 1;
  const std::size_t left = FillSlots(node.left(), first_leaf, values);
  (*values)[first_leaf + left - 1] = static_cast<double>(node.height);
  const std::size_t right = FillSlots(node.right(), first_leaf + left, values);
  return left + right;
}

BinaryTree Leaf(std::span<const std::string> leaves, std::size_t i) {
  return BinaryTree::Leaf("X", leaves[i]);
}

// Split span [lo, hi) of leaves at its largest slot.
BinaryTree SplitUnbiased(std::span<const double> d,
                         std::span<const std::string> leaves, std::size_t lo,
                         std::size_t hi) {
  if (hi - lo == 1) return Leaf(leaves, lo);
  std::size_t best = lo;
  for (std::size_t t = lo; t + 1 < hi; ++t) {
    if (d[t] >= d[best]) best = t;
  }
  BinaryTree left = SplitUnbiased(d, leaves, lo, best + 1);
  BinaryTree right = SplitUnbiased(d, leaves, best + 1, hi);
  return BinaryTree::Join("X", std::move(left), std::move(right));
}

// Per-word greedy build over words [lo, hi).
BinaryTree BuildBiased(std::span<const double> w,
                       std::span<const std::string> leaves, std::size_t lo,
                       std::size_t hi) {
  if (hi - lo == 1) return Leaf(leaves, lo);
  std::size_t pivot = lo;
  for (std::size_t t = lo + 1; t < hi; ++t) {
    if (w[t] > w[pivot]) pivot = t;
  }
  BinaryTree head = Leaf(leaves, pivot);
  if (pivot + 1 < hi) {
    head = BinaryTree::Join("X", std::move(head),
                            BuildBiased(w, leaves, pivot + 1, hi));
  }
  if (pivot == lo) return head;
  return BinaryTree::Join("X", BuildBiased(w, leaves, lo, pivot),
                          std::move(head));
}

}  // namespace

std::string_view ProvenanceName(Provenance p) {
  switch (p) {
    case Provenance::kGold:
      return "gold";
    case Provenance::kModelLm:
      return "model-lm";
    case Provenance::kModelSyd:
      return "model-syd";
  }
  return "unknown";
}

DistanceSeq DistanceSeq::FromValues(std::vector<double> values,
                                    Provenance provenance) {
  DistanceSeq seq;
  seq.n_tokens = values.size() + 1;
  seq.mask.assign(values.size(), true);
  seq.values = std::move(values);
  seq.provenance = provenance;
  return seq;
}

void DistanceSeq::Validate() const {
  if (n_tokens == 0) throw DataError("distance sequence with zero tokens");
  if (values.size() != n_tokens - 1 || mask.size() != n_tokens - 1) {
    throw DataError("distance sequence length must be n_tokens - 1");
  }
}

DistanceSeq TreeToDistances(const BinaryTree &tree) {
  const std::size_t n = tree.leaf_count();
  std::vector<double> values(n - 1, 0.0);
  FillSlots(tree, 0, &values);
  return DistanceSeq::FromValues(std::move(values), Provenance::kGold);
}

BinaryTree DistancesToTreeUnbiased(std::span<const double> distances,
                                   std::span<const std::string> leaves) {
  if (leaves.empty()) throw std::invalid_argument("no leaves");
  if (distances.size() + 1 != leaves.size()) {
    throw std::invalid_argument(
        "DistancesToTreeUnbiased: need exactly one distance per slot");
  }
  return SplitUnbiased(distances, leaves, 0, leaves.size());
}

BinaryTree DistancesToTreeBiased(std::span<const double> distances,
                                 std::span<const std::string> leaves,
                                 DistanceConvention convention) {
  if (leaves.empty()) throw std::invalid_argument("no leaves");
  std::vector<double> per_word;
  if (convention == DistanceConvention::kSlot) {
    if (distances.size() + 1 != leaves.size()) {
      throw std::invalid_argument(
          "DistancesToTreeBiased: need exactly one distance per slot");
    }
    per_word.reserve(leaves.size());
    per_word.push_back(-std::numeric_limits<double>::infinity());
    per_word.insert(per_word.end(), distances.begin(), distances.end());
  } else {
    if (distances.size() != leaves.size()) {
      throw std::invalid_argument(
          "DistancesToTreeBiased: need exactly one distance per word");
    }
    per_word.assign(distances.begin(), distances.end());
  }
  return BuildBiased(per_word, leaves, 0, leaves.size());
}

bool ValidateHeights(const BinaryTree &tree) {
  if (tree.is_leaf()) return tree.height == 1;
  if (tree.children.size() != 2) return false;
  const BinaryTree &l = tree.left();
  const BinaryTree &r = tree.right();
  if (tree.height != std::max(l.height, r.height) + 1) return false;
  if (tree.height <= l.height || tree.height <= r.height) return false;
  return ValidateHeights(l) && ValidateHeights(r);
}

std::string FormatDistanceLine(const DistanceSeq &seq) {
  std::ostringstream out;
  out.precision(17);
  out << seq.n_tokens;
  for (double v : seq.values) out << ' ' << v;
  for (bool m : seq.mask) out << ' ' << (m ? 1 : 0);
  return out.str();
}

DistanceSeq ParseDistanceLine(std::string_view line) {
  std::istringstream in{std::string(line)};
  DistanceSeq seq;
  if (!(in >> seq.n_tokens) || seq.n_tokens == 0) {
    throw DataError("distance line: missing token count");
  }
  seq.values.resize(seq.n_tokens - 1);
  for (double &v : seq.values) {
    if (!(in >> v)) throw DataError("distance line: too few values");
  }
  seq.mask.resize(seq.n_tokens - 1);
  for (std::size_t i = 0; i < seq.mask.size(); ++i) {
    int bit = 0;
    if (!(in >> bit) || (bit != 0 && bit != 1)) {
      throw DataError("distance line: bad mask bit");
    }
    seq.mask[i] = bit == 1;
  }
  std::string extra;
  if (in >> extra) throw DataError("distance line: trailing data");
  return seq;
}

}  // namespace sdlm
