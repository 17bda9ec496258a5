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

// Conversions between binary trees and syntactic distances: one scalar per
// slot between adjacent words, larger where a higher constituent boundary
// separates them.

#ifndef SDLM_DISTANCE_H_
#define SDLM_DISTANCE_H_

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sdlm/tree.h"

namespace sdlm {

enum class Provenance { kGold, kModelLm, kModelSyd };

std::string_view ProvenanceName(Provenance p);

// N-1 distances for an N-token sentence. values[t] is the slot between token
// t and token t+1.
struct DistanceSeq {
  std::vector<double> values;
  std::vector<bool> mask;
  std::size_t n_tokens = 0;
  Provenance provenance = Provenance::kGold;

  // All slots supervised.
  static DistanceSeq FromValues(std::vector<double> values,
                                Provenance provenance);

  // Throws DataError when lengths disagree.
  void Validate() const;

  bool operator==(const DistanceSeq &) const = default;
};

// Height of the node splitting slot t, for every slot, in slot order.
DistanceSeq TreeToDistances(const BinaryTree &tree);

// Top-down recovery: split each span at its largest distance and recurse.
// Among tied maxima the rightmost slot is split first, which is the same as
// merging the leftmost of the smallest distances first when building bottom
// up; flat regions therefore come out left-leaning.
BinaryTree DistancesToTreeUnbiased(std::span<const double> distances,
                                   std::span<const std::string> leaves);

// How the distances handed to the biased builder are indexed.
enum class DistanceConvention {
  kSlot,     // N-1 values, values[t] between token t and t+1
  kPerWord,  // N values, values[t] attached to token t
};

// Greedy build with right-branching bias: the word at the largest distance
// (leftmost on ties) becomes the left sibling of the recursively built
// remainder, i.e. [build(left), [pivot, build(right)]]. Flat or tied regions
// collapse into right-branching chains. The slot convention treats the first
// word of the sentence as never being a pivot.
BinaryTree DistancesToTreeBiased(
    std::span<const double> distances, std::span<const std::string> leaves,
    DistanceConvention convention = DistanceConvention::kSlot);

// True iff every internal node has height max(children) + 1, strictly above
// both children, and every leaf has height 1.
bool ValidateHeights(const BinaryTree &tree);

// Text form, one sentence per line: "N v_1 ... v_{N-1} m_1 ... m_{N-1}".
std::string FormatDistanceLine(const DistanceSeq &seq);
DistanceSeq ParseDistanceLine(std::string_view line);

}  // namespace sdlm

#endif  // SDLM_DISTANCE_H_
