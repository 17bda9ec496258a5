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

#include <algorithm>
#include <cctype>
#include <fstream>
#include <regex>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "json.hpp"
#include "sdlm/distance.h"
#include "sdlm/error.h"
#include "sdlm/rng.h"

namespace sdlm {

namespace {

constexpr std::string_view kNone = "-NONE-";

bool IsSpace(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

// Recursive-descent reader over raw bracketed text.
class BracketReader {
 public:
  explicit BracketReader(std::string_view text) : text_(text) {}

  std::vector<Tree> ReadAll() {
    std::vector<Tree> trees;
    SkipSpace();
    while (pos_ < text_.size()) {
      if (text_[pos_] == ')') throw ParseError("unexpected ')'", pos_);
      if (text_[pos_] != '(') {
        throw ParseError("expected '(' at start of tree", pos_);
      }
      trees.push_back(ReadNode());
      SkipSpace();
    }
    return trees;
  }

 private:
  void SkipSpace() {
    while (pos_ < text_.size() && IsSpace(text_[pos_])) ++pos_;
  }

  std::string ReadAtom() {
    std::size_t start = pos_;
    while (pos_ < text_.size() && !IsSpace(text_[pos_]) &&
           text_[pos_] != '(' && text_[pos_] != ')') {
      ++pos_;
    }
    return std::string(text_.substr(start, pos_ - start));
  }

  [[noreturn]] void MissingClose() {
    throw ParseError("unbalanced brackets: missing ')'", text_.size());
  }

  // Expects text_[pos_] == '('.
  Tree ReadNode() {
    const std::size_t open = pos_;
    ++pos_;
    SkipSpace();
    if (pos_ >= text_.size()) MissingClose();
    Tree node;
    if (text_[pos_] != '(' && text_[pos_] != ')') node.label = ReadAtom();
    SkipSpace();
    if (pos_ >= text_.size()) MissingClose();
    if (text_[pos_] == ')') throw ParseError("empty constituent", open);
    if (text_[pos_] != '(') {
      node.token = ReadAtom();
      SkipSpace();
      if (pos_ >= text_.size()) MissingClose();
      if (text_[pos_] != ')') {
        throw ParseError("leaf holds more than one token", pos_);
      }
      ++pos_;
      return node;
    }
    while (true) {
      SkipSpace();
      if (pos_ >= text_.size()) MissingClose();
      if (text_[pos_] == ')') {
        ++pos_;
        return node;
      }
      if (text_[pos_] != '(') {
        throw ParseError("token mixed with constituents", pos_);
      }
      node.children.push_back(ReadNode());
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

// Drops -NONE- leaves, strips function tags, removes emptied nodes.
std::optional<Tree> Clean(Tree node) {
  if (node.is_leaf()) {
    if (node.label == kNone) return std::nullopt;
    return node;
  }
  std::vector<Tree> kept;
  kept.reserve(node.children.size());
  for (auto &child : node.children) {
    if (auto c = Clean(std::move(child))) kept.push_back(std::move(*c));
  }
  if (kept.empty()) return std::nullopt;
  node.label = StripFunctionTags(node.label);
  node.children = std::move(kept);
  return node;
}

BinaryTree Binarize(const Tree &node) {
  if (node.is_leaf()) return BinaryTree::Leaf(node.label, node.token);
  if (node.children.size() == 1) {
    BinaryTree collapsed = Binarize(node.children[0]);
    collapsed.label = node.label;
    return collapsed;
  }
  std::string sentinel = node.label;
  if (sentinel.empty() || sentinel.back() != '\'') sentinel.push_back('\'');
  const std::size_t k = node.children.size();
  BinaryTree acc = Binarize(node.children[k - 1]);
  for (std::size_t i = k - 1; i-- > 1;) {
    acc = BinaryTree::Join(sentinel, Binarize(node.children[i]), std::move(acc));
  }
  return BinaryTree::Join(node.label, Binarize(node.children[0]),
                          std::move(acc));
}

BinaryTree RandomSpan(std::size_t lo, std::size_t hi, Rng *rng) {
  if (hi - lo == 1) return BinaryTree::Leaf("X", std::to_string(lo));
  const std::size_t split = lo + 1 + rng->Below(hi - lo - 1);
  BinaryTree left = RandomSpan(lo, split, rng);
  BinaryTree right = RandomSpan(split, hi, rng);
  return BinaryTree::Join("X", std::move(left), std::move(right));
}

std::string Trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && IsSpace(s[b])) ++b;
  while (e > b && IsSpace(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

bool ParseBool(const std::string &key, const std::string &value) {
  if (value == "1" || value == "true" || value == "on" || value == "yes")
    return true;
  if (value == "0" || value == "false" || value == "off" || value == "no")
    return false;
  throw ConfigError("invalid boolean for '" + key + "': " + value);
}

void CleanLeaves(Tree *node, const PreprocessRules &rules,
                 const std::regex &number, std::vector<std::string> *words) {
  if (node->is_leaf()) {
    std::string word = node->token;
    if (rules.lowercase) {
      for (char &c : word) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      }
    }
    if (!rules.number_pattern.empty() && std::regex_match(word, number)) {
      word = rules.number_symbol;
    }
    node->token = word;
    words->push_back(std::move(word));
    return;
  }
  for (auto &child : node->children) CleanLeaves(&child, rules, number, words);
}

}  // namespace

std::string StripFunctionTags(std::string_view label) {
  if (label.empty() || label.front() == '-') return std::string(label);
  const std::size_t cut = label.find_first_of("-=");
  if (cut == std::string_view::npos) return std::string(label);
  return std::string(label.substr(0, cut));
}

std::vector<Tree> ParseBracketed(std::string_view text) {
  std::vector<Tree> raw = BracketReader(text).ReadAll();
  std::vector<Tree> trees;
  trees.reserve(raw.size());
  for (auto &t : raw) {
    std::optional<Tree> cleaned = Clean(std::move(t));
    if (!cleaned) continue;
    while (cleaned->label.empty() && cleaned->children.size() == 1) {
      Tree child = std::move(cleaned->children[0]);
      *cleaned = std::move(child);
    }
    trees.push_back(std::move(*cleaned));
  }
  return trees;
}

std::optional<Tree> PruneLeaves(const Tree &tree, const LeafPredicate &drop) {
  if (tree.is_leaf()) {
    if (drop && drop(tree.label, tree.token)) return std::nullopt;
    return tree;
  }
  std::vector<Tree> kept;
  for (const auto &child : tree.children) {
    if (auto c = PruneLeaves(child, drop)) kept.push_back(std::move(*c));
  }
  if (kept.empty()) return std::nullopt;
  return Tree::Node(tree.label, std::move(kept));
}

BinaryTree BinarizeRight(const Tree &tree) { return Binarize(tree); }

BinaryTree RandomBinaryTree(std::size_t n_leaves, std::uint64_t seed) {
  if (n_leaves == 0) {
    throw std::invalid_argument("RandomBinaryTree: n_leaves must be >= 1");
  }
  Rng rng(seed);
  return RandomSpan(0, n_leaves, &rng);
}

// ---------------------------------------------------------------------------
// Vocab

Vocab::Vocab() {
  Add(std::string(kUnkWord));
  Add(std::string(kEosWord));
}

int Vocab::Add(const std::string &word) {
  auto it = index_.find(word);
  if (it != index_.end()) return it->second;
  const int id = static_cast<int>(words_.size());
  words_.push_back(word);
  index_.emplace(word, id);
  return id;
}

Vocab Vocab::Build(const std::map<std::string, std::int64_t> &counts,
                   std::size_t max_size) {
  if (max_size < 2) {
    throw ConfigError("vocab max size must leave room for <unk> and <eos>");
  }
  std::vector<std::pair<std::string, std::int64_t>> ranked;
  for (const auto &[word, n] : counts) {
    if (word == kUnkWord || word == kEosWord) continue;
    ranked.emplace_back(word, n);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto &a, const auto &b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocab v;
  v.max_size_ = max_size;
  for (const auto &entry : ranked) {
    if (v.size() >= max_size) break;
    v.Add(entry.first);
  }
  return v;
}

Vocab Vocab::FromWords(const std::vector<std::string> &words,
                       std::size_t max_size) {
  if (words.size() < 2 || words[0] != kUnkWord || words[1] != kEosWord) {
    throw ConfigError("vocabulary must start with <unk> and <eos>");
  }
  Vocab v;
  v.max_size_ = max_size;
  for (std::size_t i = 2; i < words.size(); ++i) {
    if (v.Contains(words[i])) {
      throw ConfigError("duplicate vocabulary entry: " + words[i]);
    }
    v.Add(words[i]);
  }
  return v;
}

int Vocab::Lookup(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocab::Contains(std::string_view word) const {
  return index_.count(std::string(word)) > 0;
}

const std::string &Vocab::Word(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= words_.size()) {
    throw std::out_of_range("vocab id out of range: " + std::to_string(id));
  }
  return words_[static_cast<std::size_t>(id)];
}

// ---------------------------------------------------------------------------
// Corpus

std::string_view CorpusModeName(CorpusMode mode) {
  return mode == CorpusMode::kConcatenated ? "concat" : "sepsent";
}

CorpusMode ParseCorpusMode(std::string_view name) {
  if (name == "concat" || name == "concatenated") {
    return CorpusMode::kConcatenated;
  }
  if (name == "sepsent" || name == "separate") {
    return CorpusMode::kSeparateSentence;
  }
  throw ConfigError("unknown corpus mode: " + std::string(name));
}

void Corpus::AddSentence(std::span<const int> ids, std::optional<Tree> gold) {
  SentenceSpan span;
  span.start = tokens.size();
  tokens.insert(tokens.end(), ids.begin(), ids.end());
  span.end = tokens.size();
  spans.push_back(span);
  if (mode == CorpusMode::kConcatenated) tokens.push_back(Vocab::kEos);
  if (gold) {
    gold_trees.push_back(BinarizeRight(*gold));
  } else {
    gold_trees.push_back(std::nullopt);
  }
  gold_nary.push_back(std::move(gold));
}

void Corpus::Validate() const {
  if (gold_trees.size() != spans.size() || gold_nary.size() != spans.size()) {
    throw DataError("corpus: tree list does not match sentence count");
  }
  std::size_t expected = 0;
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const SentenceSpan &s = spans[i];
    if (s.start != expected || s.end < s.start || s.end > tokens.size()) {
      throw DataError("corpus: sentence spans do not partition the stream at "
                      "sentence " + std::to_string(i));
    }
    expected = s.end;
    if (mode == CorpusMode::kConcatenated) {
      if (s.end >= tokens.size() || tokens[s.end] != Vocab::kEos) {
        throw DataError("corpus: missing end-of-sentence after sentence " +
                        std::to_string(i));
      }
      ++expected;
    }
    if (gold_nary[i] && gold_nary[i]->leaf_count() != s.length()) {
      throw DataError("corpus: gold tree leaf count differs from length of "
                      "sentence " + std::to_string(i));
    }
    if (gold_trees[i] && gold_trees[i]->leaf_count() != s.length()) {
      throw DataError("corpus: binarized tree leaf count differs for "
                      "sentence " + std::to_string(i));
    }
  }
  if (expected != tokens.size()) {
    throw DataError("corpus: trailing tokens outside sentence spans");
  }
  for (int id : tokens) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab.size()) {
      throw DataError("corpus: token id out of vocabulary range");
    }
  }
}

// ---------------------------------------------------------------------------
// Preprocessing

PreprocessRules PreprocessRules::Parse(std::string_view text) {
  PreprocessRules rules;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = Trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("rules line " + std::to_string(line_no) +
                        ": expected key = value");
    }
    const std::string key = Trim(std::string_view(t).substr(0, eq));
    const std::string value = Trim(std::string_view(t).substr(eq + 1));
    if (key == "lowercase") {
      rules.lowercase = ParseBool(key, value);
    } else if (key == "drop_tags") {
      rules.drop_tags.clear();
      std::istringstream tags(value);
      std::string tag;
      while (tags >> tag) rules.drop_tags.insert(tag);
    } else if (key == "number_pattern") {
      rules.number_pattern = value;
    } else if (key == "number_symbol") {
      rules.number_symbol = value;
    } else if (key == "vocab_max_size") {
      rules.vocab_max_size = static_cast<std::size_t>(std::stoull(value));
    } else if (key == "mode") {
      rules.mode = ParseCorpusMode(value);
    } else {
      throw ConfigError("rules line " + std::to_string(line_no) +
                        ": unknown key '" + key + "'");
    }
  }
  return rules;
}

std::string PreprocessRules::ToString() const {
  std::ostringstream out;
  out << "lowercase = " << (lowercase ? "true" : "false") << "\n";
  out << "drop_tags =";
  for (const auto &t : drop_tags) out << ' ' << t;
  out << "\n";
  out << "number_pattern = " << number_pattern << "\n";
  out << "number_symbol = " << number_symbol << "\n";
  out << "vocab_max_size = " << vocab_max_size << "\n";
  out << "mode = " << CorpusModeName(mode) << "\n";
  return out.str();
}

Corpus PreprocessCorpus(const std::vector<Tree> &trees,
                        const PreprocessRules &rules, const Vocab *vocab) {
  std::regex number;
  if (!rules.number_pattern.empty()) {
    try {
      number = std::regex(rules.number_pattern, std::regex::ECMAScript);
    } catch (const std::regex_error &e) {
      throw ConfigError("invalid number_pattern: " + std::string(e.what()));
    }
  }
  const auto drop = [&rules](const std::string &tag, const std::string &) {
    return rules.drop_tags.count(tag) > 0;
  };

  std::vector<Tree> cleaned;
  std::vector<std::vector<std::string>> sentences;
  for (const Tree &tree : trees) {
    std::optional<Tree> pruned = PruneLeaves(tree, drop);
    if (!pruned) continue;
    std::vector<std::string> words;
    CleanLeaves(&*pruned, rules, number, &words);
    cleaned.push_back(std::move(*pruned));
    sentences.push_back(std::move(words));
  }

  Corpus corpus;
  corpus.mode = rules.mode;
  if (vocab != nullptr) {
    if (vocab->size() < 2 || vocab->Word(Vocab::kUnk) != Vocab::kUnkWord ||
        vocab->Word(Vocab::kEos) != Vocab::kEosWord) {
      throw ConfigError("supplied vocabulary lacks the special entries");
    }
    corpus.vocab = *vocab;
  } else {
    std::map<std::string, std::int64_t> counts;
    for (const auto &words : sentences) {
      for (const auto &w : words) ++counts[w];
    }
    corpus.vocab = Vocab::Build(counts, rules.vocab_max_size);
  }

  std::vector<int> ids;
  for (std::size_t i = 0; i < cleaned.size(); ++i) {
    ids.clear();
    for (const auto &w : sentences[i]) ids.push_back(corpus.vocab.Lookup(w));
    corpus.AddSentence(ids, std::move(cleaned[i]));
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Dataset I/O

namespace {

using nlohmann::json;

json CorpusToJson(const Corpus &c) {
  json j;
  j["tokens"] = c.tokens;
  json spans = json::array();
  for (const auto &s : c.spans) spans.push_back({s.start, s.end});
  j["spans"] = std::move(spans);
  json trees = json::array();
  json dists = json::array();
  for (std::size_t i = 0; i < c.spans.size(); ++i) {
    if (c.gold_nary[i]) {
      trees.push_back(RenderBracketed(*c.gold_nary[i]));
      dists.push_back(FormatDistanceLine(TreeToDistances(*c.gold_trees[i])));
    } else {
      trees.push_back(nullptr);
      dists.push_back(nullptr);
    }
  }
  j["trees"] = std::move(trees);
  j["distances"] = std::move(dists);
  return j;
}

Corpus CorpusFromJson(const json &j, const Vocab &vocab, CorpusMode mode) {
  Corpus c;
  c.mode = mode;
  c.vocab = vocab;
  c.tokens = j.at("tokens").get<std::vector<int>>();
  const json &spans = j.at("spans");
  const json &trees = j.at("trees");
  if (spans.size() != trees.size()) {
    throw DataError("corpus file: spans and trees differ in length");
  }
  for (std::size_t i = 0; i < spans.size(); ++i) {
    SentenceSpan s{spans[i].at(0).get<std::size_t>(),
                   spans[i].at(1).get<std::size_t>()};
    c.spans.push_back(s);
    if (trees[i].is_null()) {
      c.gold_nary.push_back(std::nullopt);
      c.gold_trees.push_back(std::nullopt);
    } else {
      std::vector<Tree> parsed = ParseBracketed(trees[i].get<std::string>());
      if (parsed.size() != 1) {
        throw DataError("corpus file: tree " + std::to_string(i) +
                        " is not a single tree");
      }
      c.gold_trees.push_back(BinarizeRight(parsed[0]));
      c.gold_nary.push_back(std::move(parsed[0]));
    }
  }
  c.Validate();
  return c;
}

}  // namespace

void WriteDataset(const Dataset &dataset, std::ostream &out) {
  json j;
  j["magic"] = kCorpusMagic;
  j["version"] = kCorpusFormatVersion;
  j["mode"] = CorpusModeName(dataset.mode);
  j["rules"] = dataset.rules.ToString();
  j["vocab"] = {{"max_size", dataset.vocab.max_size()},
                {"words", dataset.vocab.words()}};
  json splits = json::object();
  for (const auto &[name, corpus] : dataset.splits) {
    splits[name] = CorpusToJson(corpus);
  }
  j["splits"] = std::move(splits);
  out << j.dump(1) << "\n";
}

Dataset ReadDataset(std::istream &in) {
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception &e) {
    throw DataError(std::string("corpus file is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || j.value("magic", "") != kCorpusMagic) {
    throw DataError("not an SDLM corpus file (bad magic)");
  }
  if (j.value("version", 0) != kCorpusFormatVersion) {
    throw DataError("unsupported corpus format version");
  }
  try {
    Dataset d;
    d.mode = ParseCorpusMode(j.at("mode").get<std::string>());
    d.rules = PreprocessRules::Parse(j.at("rules").get<std::string>());
    d.vocab = Vocab::FromWords(
        j.at("vocab").at("words").get<std::vector<std::string>>(),
        j.at("vocab").at("max_size").get<std::size_t>());
    for (const auto &[name, split] : j.at("splits").items()) {
      d.splits.emplace(name, CorpusFromJson(split, d.vocab, d.mode));
    }
    return d;
  } catch (const json::exception &e) {
    throw DataError(std::string("corpus file is malformed: ") + e.what());
  }
}

Dataset LoadDataset(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus file: " + path);
  return ReadDataset(in);
}

void SaveDataset(const Dataset &dataset, const std::string &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write corpus file: " + path);
  WriteDataset(dataset, out);
  if (!out) throw DataError("write failed: " + path);
}

}  // namespace sdlm
