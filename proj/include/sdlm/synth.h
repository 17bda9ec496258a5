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

// Small right-skewed English-like probabilistic grammar used to produce
// treebanks for tests, examples and the acceptance runs.

#ifndef SDLM_SYNTH_H_
#define SDLM_SYNTH_H_

#include <cstddef>
#include <cstdint>
#include <vector>

#include "sdlm/tree.h"

namespace sdlm {

struct SynthOptions {
  // Nesting depth after which recursive expansions are no longer chosen.
  std::size_t max_depth = 4;
  // Each sentence ends with a (. .) leaf, as in treebank files.
  bool punctuation = true;
};

// One sentence rooted at S.
Tree SampleSentence(std::uint64_t seed, const SynthOptions &options = {});

// Sentences seeded by (seed, index) until the word count (punctuation
// excluded) reaches `min_words`.
std::vector<Tree> SyntheticTreebank(std::size_t min_words, std::uint64_t seed,
                                    const SynthOptions &options = {});

}  // namespace sdlm

#endif  // SDLM_SYNTH_H_
