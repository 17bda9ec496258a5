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

// Treebank ingestion: bracketed-notation reader, leaf pruning, right
// binarization, and the cleaning pipeline that aligns a language-model token
// stream with per-sentence gold trees.

#ifndef SDLM_TREEBANK_H_
#define SDLM_TREEBANK_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sdlm/tree.h"

namespace sdlm {

// Parses one or more trees in `(LABEL child ...)` notation. Empty-element
// leaves (-NONE-) are removed, function tags are stripped from nonterminal
// labels ("NP-SBJ=2" -> "NP"), and nodes left without children are dropped.
// A root with an empty label and a single child (the usual PTB wrapper) is
// replaced by that child. Throws ParseError on unbalanced brackets.
std::vector<Tree> ParseBracketed(std::string_view text);

// Strips function tags from a nonterminal label. "-NONE-" and labels that
// start with '-' (e.g. "-LRB-") are returned unchanged.
std::string StripFunctionTags(std::string_view label);

using LeafPredicate =
    std::function<bool(const std::string &tag, const std::string &token)>;

// Removes leaves matching `drop` and any internal node left without
// children. Unary chains are kept. Returns nullopt when every leaf is dropped.
std::optional<Tree> PruneLeaves(const Tree &tree, const LeafPredicate &drop);

// Right-branching binarization: (X c1 c2 ... ck) becomes
// (X c1 (X' c2 (X' c3 ... ck))). Unary nodes collapse into their child and
// keep the upper label. Heights are filled in.
BinaryTree BinarizeRight(const Tree &tree);

// Samples a binary tree by choosing a split point uniformly at random in every
// span, recursively. Deterministic for a fixed seed. Leaves are labeled "X"
// with tokens "0", "1", ...
BinaryTree RandomBinaryTree(std::size_t n_leaves, std::uint64_t seed);

class Vocab {
 public:
  static constexpr int kUnk = 0;
  static constexpr int kEos = 1;
  static constexpr std::string_view kUnkWord = "<unk>";
  static constexpr std::string_view kEosWord = "<eos>";

  Vocab();

  // Most frequent words first, ties broken lexicographically. `max_size`
  // counts the two special entries.
  static Vocab Build(const std::map<std::string, std::int64_t> &counts,
                     std::size_t max_size);

  // Rebuilds a vocabulary from its id-ordered word list. Throws ConfigError
  // unless ids 0 and 1 hold the unknown and end-of-sentence markers.
  static Vocab FromWords(const std::vector<std::string> &words,
                         std::size_t max_size);

  int Lookup(std::string_view word) const;
  bool Contains(std::string_view word) const;
  const std::string &Word(int id) const;
  std::size_t size() const { return words_.size(); }
  std::size_t max_size() const { return max_size_; }
  const std::vector<std::string> &words() const { return words_; }

  bool operator==(const Vocab &other) const {
    return words_ == other.words_ && max_size_ == other.max_size_;
  }

 private:
  int Add(const std::string &word);

  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
  std::size_t max_size_ = 0;
};

enum class CorpusMode { kConcatenated, kSeparateSentence };

std::string_view CorpusModeName(CorpusMode mode);
CorpusMode ParseCorpusMode(std::string_view name);

struct SentenceSpan {
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive
  std::size_t length() const { return end - start; }
  bool operator==(const SentenceSpan &) const = default;
};

// Token stream with sentence boundaries and the gold trees aligned to it.
// In concatenated mode every sentence is followed by one end-of-sentence
// token which lies outside all spans. In separate-sentence mode spans are
// back to back.
struct Corpus {
  CorpusMode mode = CorpusMode::kConcatenated;
  std::vector<int> tokens;
  std::vector<SentenceSpan> spans;
  // Cleaned n-ary gold trees (labels kept); leaf i <-> token i of the span.
  std::vector<std::optional<Tree>> gold_nary;
  // Right-binarized versions of gold_nary.
  std::vector<std::optional<BinaryTree>> gold_trees;
  Vocab vocab;

  std::size_t sentence_count() const { return spans.size(); }
  std::span<const int> sentence(std::size_t i) const {
    return std::span<const int>(tokens).subspan(spans[i].start,
                                                spans[i].length());
  }

  // Appends one sentence; gold may be absent.
  void AddSentence(std::span<const int> ids, std::optional<Tree> gold);

  // Throws DataError if spans, eos placement or tree leaf counts disagree.
  void Validate() const;
};

struct PreprocessRules {
  bool lowercase = true;
  std::set<std::string> drop_tags = {".",     ",",     ":", "``", "''",
                                     "-LRB-", "-RRB-", "#", "$"};
  // ECMAScript regex matched against the whole (lowercased) token.
  std::string number_pattern = R"([+-]?[0-9]+([.,:/\\-]+[0-9]+)*)";
  std::string number_symbol = "N";
  std::size_t vocab_max_size = 10000;
  CorpusMode mode = CorpusMode::kConcatenated;

  // Reads `key = value` lines. Keys: lowercase, drop_tags (space separated),
  // number_pattern, number_symbol, vocab_max_size, mode. '#' starts a comment
  // only at the beginning of a line.
  static PreprocessRules Parse(std::string_view text);
  std::string ToString() const;
};

// Cleans every tree (drop tags, lowercase, number replacement), emits the
// token stream and aligned gold trees. A vocabulary is built from `trees`
// unless one is supplied.
Corpus PreprocessCorpus(const std::vector<Tree> &trees,
                        const PreprocessRules &rules,
                        const Vocab *vocab = nullptr);

// Train/valid/test corpora sharing one vocabulary.
struct Dataset {
  Vocab vocab;
  CorpusMode mode = CorpusMode::kConcatenated;
  PreprocessRules rules;
  std::map<std::string, Corpus> splits;
};

inline constexpr std::string_view kCorpusMagic = "SDLM-CORPUS";
inline constexpr int kCorpusFormatVersion = 1;

void WriteDataset(const Dataset &dataset, std::ostream &out);
Dataset ReadDataset(std::istream &in);
Dataset LoadDataset(const std::string &path);
void SaveDataset(const Dataset &dataset, const std::string &path);

}  // namespace sdlm

#endif  // SDLM_TREEBANK_H_
