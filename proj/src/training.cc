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

#include "sdlm/training.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <utility>

#include "json.hpp"
#include "sdlm/error.h"

namespace sdlm {

namespace {

int Sign(double v) { return (v > 0) - (v < 0); }

// Calls fn(rows) for every (column, sentence) group of supervised rows, rows
// in time order.
template <typename Fn>
void ForEachGroup(const Batch &batch, Fn fn) {
  for (std::size_t b = 0; b < batch.columns; ++b) {
    std::map<long, std::vector<std::size_t>> groups;
    for (std::size_t t = 0; t < batch.steps; ++t) {
      const std::size_t r = t * batch.columns + b;
      if (batch.gold_mask[r]) groups[batch.sentence[r]].push_back(r);
    }
    for (auto &[sentence, rows] : groups) fn(rows);
  }
}

std::vector<double> Pick(std::span<const double> values,
                         std::span<const std::size_t> rows) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(values[r]);
  return out;
}

}  // namespace

ad::Var LmLoss(ad::Var logits, std::span<const int> targets,
               std::span<const double> weights) {
  ad::Tape &tape = *logits.tape();
  if (weights.size() != targets.size()) {
    throw ShapeError("LmLoss: one weight per target required");
  }
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (total == 0.0) return tape.Constant(ad::Tensor::Scalar(0.0));
  ad::Tensor w({weights.size(), 1},
               std::vector<double>(weights.begin(), weights.end()));
  ad::Var ce = ad::CrossEntropy(logits, targets);
  return ad::Affine(ad::SumAll(ad::Mul(ce, tape.Constant(std::move(w)))),
                    1.0 / total, 0.0);
}

ad::Var LmLoss(ad::Var logits, std::span<const int> targets) {
  return ad::MeanAll(ad::CrossEntropy(logits, targets));
}

double RankingLoss(std::span<const double> predicted,
                   std::span<const double> gold, const std::vector<bool> &mask,
                   PairMode mode, double margin) {
  if (predicted.size() != gold.size() || mask.size() != gold.size()) {
    throw ShapeError("RankingLoss: lengths differ");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (!mask[i]) continue;
    for (std::size_t j = i + 1; j < gold.size(); ++j) {
      if (!mask[j]) continue;
      const int s = Sign(gold[i] - gold[j]);
      const double m = s != 0 ? margin : 0.0;
      if (1 - s > 0) {
        loss += std::max(0.0, (1 - s) * (predicted[i] - predicted[j]) + m);
      }
      if (mode == PairMode::kSymmetric && 1 + s > 0) {
        loss += std::max(0.0, (1 + s) * (predicted[j] - predicted[i]) + m);
      }
    }
  }
  return loss;
}

void AddRankPairs(std::span<const std::size_t> rows,
                  std::span<const double> gold, PairMode mode,
                  RankPairs *out, double margin) {
  for (std::size_t a = 0; a < rows.size(); ++a) {
    for (std::size_t c = a + 1; c < rows.size(); ++c) {
      ++out->pairs;
      const int s = Sign(gold[a] - gold[c]);
      const double m = s != 0 ? margin : 0.0;
      if (1 - s > 0) out->terms.push_back({rows[a], rows[c], 1.0 - s, m});
      if (mode == PairMode::kSymmetric && 1 + s > 0) {
        out->terms.push_back({rows[c], rows[a], 1.0 + s, m});
      }
    }
  }
}

ad::Var RankingLoss(ad::Var distances, const RankPairs &pairs) {
  ad::Tape &tape = *distances.tape();
  if (pairs.terms.empty()) return tape.Constant(ad::Tensor::Scalar(0.0));
  const ad::Tensor &d = distances.value();
  const double scale = 1.0 / static_cast<double>(pairs.pairs);
  double sum = 0.0;
  // Terms exactly at the corner count as active.
  std::vector<RankTerm> active;
  for (const RankTerm &t : pairs.terms) {
    if (t.first >= d.size() || t.second >= d.size()) {
      throw ShapeError("RankingLoss: row outside the distance stream");
    }
    const double h = t.coef * (d[t.first] - d[t.second]) + t.margin;
    if (h >= 0.0) {
      sum += h;
      active.push_back(t);
    }
  }
  const ad::Var parents[] = {distances};
  const int id = distances.id();
  return tape.Record(
      ad::Tensor::Scalar(sum * scale), parents,
      [&tape, id, scale, active = std::move(active)](const ad::Tensor &g) {
        ad::Tensor &gd = tape.GradBuffer(id);
        for (const RankTerm &t : active) {
          gd[t.first] += g[0] * t.coef * scale;
          gd[t.second] -= g[0] * t.coef * scale;
        }
      });
}

double JointLoss(double lm, double syd, double alpha) {
  return lm + alpha * syd;
}

ad::Var JointLoss(ad::Var lm, ad::Var syd, double alpha) {
  return ad::Add(lm, ad::Affine(syd, alpha, 0.0));
}

void PairAccuracy::Add(std::span<const double> predicted,
                       std::span<const double> gold) {
  for (std::size_t i = 0; i < gold.size(); ++i) {
    for (std::size_t j = i + 1; j < gold.size(); ++j) {
      const int g = Sign(gold[i] - gold[j]);
      if (g == 0) continue;
      ++total;
      if (Sign(predicted[i] - predicted[j]) == g) ++correct;
    }
  }
}

DistanceTargets MakeTargets(const Corpus &corpus, TreeSource source,
                            std::uint64_t seed) {
  DistanceTargets out(corpus.sentence_count());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t n = corpus.spans[i].length();
    if (source == TreeSource::kGold && corpus.gold_trees[i]) {
      out[i] = TreeToDistances(*corpus.gold_trees[i]);
    } else if (source == TreeSource::kRandom && n > 0) {
      out[i] = TreeToDistances(RandomBinaryTree(n, DeriveSeed(seed, i)));
    }
  }
  return out;
}

RankPairs Batch::Pairs(PairMode mode, double margin) const {
  RankPairs pairs;
  ForEachGroup(*this, [&](const std::vector<std::size_t> &rows) {
    AddRankPairs(rows, Pick(gold, rows), mode, &pairs, margin);
  });
  return pairs;
}

std::vector<Batch> MakeBatches(const Corpus &corpus,
                               const DistanceTargets &targets,
                               std::size_t batch_size, std::size_t bptt) {
  if (corpus.sentence_count() == 0) throw DataError("empty corpus");
  if (batch_size == 0 || bptt == 0) {
    throw ConfigError("batch size and bptt must be positive");
  }
  if (!targets.empty() && targets.size() != corpus.sentence_count()) {
    throw DataError("distance targets do not match the corpus");
  }
  auto target = [&](std::size_t s) -> const DistanceSeq * {
    if (targets.empty() || !targets[s]) return nullptr;
    return &*targets[s];
  };
  std::vector<Batch> batches;

  if (corpus.mode == CorpusMode::kConcatenated) {
    const std::size_t n = corpus.tokens.size();
    if (batch_size > n) {
      throw DataError("batch size " + std::to_string(batch_size) +
                      " exceeds the " + std::to_string(n) + " corpus tokens");
    }
    std::vector<long> sent(n, -1);
    std::vector<std::size_t> word(n, 0);
    for (std::size_t s = 0; s < corpus.sentence_count(); ++s) {
      for (std::size_t p = corpus.spans[s].start; p < corpus.spans[s].end;
           ++p) {
        sent[p] = static_cast<long>(s);
        word[p] = p - corpus.spans[s].start;
      }
    }
    const std::size_t len = n / batch_size;
    if (len < 2) throw DataError("corpus too small for the batch size");
    for (std::size_t i = 0; i + 1 < len; i += bptt) {
      Batch batch;
      batch.steps = std::min(bptt, len - 1 - i);
      batch.columns = batch_size;
      batch.reset_state = i == 0;
      const std::size_t rows = batch.rows();
      batch.inputs.resize(rows);
      batch.targets.resize(rows);
      batch.weights.assign(rows, 1.0);
      batch.gold.assign(rows, 0.0);
      batch.gold_mask.assign(rows, false);
      batch.sentence.assign(rows, -1);
      for (std::size_t t = 0; t < batch.steps; ++t) {
        for (std::size_t b = 0; b < batch_size; ++b) {
          const std::size_t r = t * batch_size + b;
          const std::size_t p = b * len + i + t;
          batch.inputs[r] = corpus.tokens[p];
          batch.targets[r] = corpus.tokens[p + 1];
          const long s = sent[p];
          if (t == 0 || s < 0 || sent[p - 1] != s) continue;
          const DistanceSeq *d = target(static_cast<std::size_t>(s));
          if (d == nullptr || !d->mask[word[p] - 1]) continue;
          batch.gold[r] = d->values[word[p] - 1];
          batch.gold_mask[r] = true;
          batch.sentence[r] = s;
        }
      }
      batches.push_back(std::move(batch));
    }
    return batches;
  }

  std::vector<std::size_t> order(corpus.sentence_count());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return corpus.spans[a].length() <
                            corpus.spans[b].length();
                   });
  for (std::size_t k = 0; k < order.size(); k += batch_size) {
    const std::size_t cols = std::min(batch_size, order.size() - k);
    std::size_t longest = 0;
    for (std::size_t b = 0; b < cols; ++b) {
      longest = std::max(longest, corpus.spans[order[k + b]].length());
    }
    Batch batch;
    batch.steps = longest + 1;
    batch.columns = cols;
    batch.reset_state = true;
    const std::size_t rows = batch.rows();
    batch.inputs.assign(rows, Vocab::kEos);
    batch.targets.assign(rows, Vocab::kEos);
    batch.weights.assign(rows, 0.0);
    batch.gold.assign(rows, 0.0);
    batch.gold_mask.assign(rows, false);
    batch.sentence.assign(rows, -1);
    for (std::size_t b = 0; b < cols; ++b) {
      const std::size_t s = order[k + b];
      std::span<const int> words = corpus.sentence(s);
      const DistanceSeq *d = target(s);
      for (std::size_t t = 0; t <= words.size(); ++t) {
        const std::size_t r = t * cols + b;
        if (t > 0) batch.inputs[r] = words[t - 1];
        if (t < words.size()) batch.targets[r] = words[t];
        batch.weights[r] = 1.0;
        if (t >= 2 && d != nullptr && d->mask[t - 2]) {
          batch.gold[r] = d->values[t - 2];
          batch.gold_mask[r] = true;
          batch.sentence[r] = static_cast<long>(s);
        }
      }
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

LmEval EvaluateLm(LanguageModel &model, const Corpus &corpus,
                  const DistanceTargets &targets, const TrainConfig &config) {
  const std::vector<Batch> batches =
      MakeBatches(corpus, targets, config.eval_batch_size, config.bptt);
  LmEval result;
  double nll = 0.0, syd = 0.0;
  std::size_t pairs = 0;
  ModelState state;
  for (const Batch &batch : batches) {
    if (batch.reset_state) state = model.InitialState(batch.columns);
    ad::Tape tape;
    ModelOutput out = model.Forward(tape, batch.inputs, batch.steps,
                                    batch.columns, state, nullptr);
    state = std::move(out.state);
    const ad::Tensor ce =
        ad::CrossEntropy(out.logits, batch.targets).value();
    for (std::size_t r = 0; r < batch.rows(); ++r) {
      if (batch.weights[r] == 0.0) continue;
      nll += ce[r];
      ++result.tokens;
    }
    if (!out.d_syd.valid()) continue;
    std::span<const double> d = out.d_syd.value().values();
    ForEachGroup(batch, [&](const std::vector<std::size_t> &rows) {
      const std::vector<double> p = Pick(d, rows);
      const std::vector<double> g = Pick(batch.gold, rows);
      const std::vector<bool> all(rows.size(), true);
      result.ranking.Add(p, g);
      syd += RankingLoss(p, g, all, config.pair_mode, config.rank_margin);
      pairs += rows.size() * (rows.size() - 1) / 2;
    });
  }
  result.loss = result.tokens ? nll / result.tokens : 0.0;
  result.ppl = std::exp(result.loss);
  result.syd_loss = pairs ? syd / pairs : 0.0;
  return result;
}

std::vector<std::vector<double>> InduceDistances(LanguageModel &model,
                                                 const Corpus &corpus,
                                                 DistanceStream stream,
                                                 std::size_t layer) {
  if (stream == DistanceStream::kSyd && !model.has_syd()) {
    throw ConfigError("model has no supervised distance stream");
  }
  if (stream == DistanceStream::kLm && layer >= model.distance_layers()) {
    throw ConfigError("distance layer " + std::to_string(layer + 1) +
                      " out of range");
  }
  std::vector<std::vector<double>> out(corpus.sentence_count());
  // Sentences of equal length share one forward pass.
  std::map<std::size_t, std::vector<std::size_t>> by_length;
  for (std::size_t s = 0; s < corpus.sentence_count(); ++s) {
    by_length[corpus.spans[s].length()].push_back(s);
  }
  constexpr std::size_t kMaxColumns = 32;
  for (const auto &[n, group] : by_length) {
    if (n < 2) continue;
    for (std::size_t k = 0; k < group.size(); k += kMaxColumns) {
      const std::size_t cols = std::min(kMaxColumns, group.size() - k);
      std::vector<int> inputs((n + 1) * cols, Vocab::kEos);
      for (std::size_t b = 0; b < cols; ++b) {
        std::span<const int> words = corpus.sentence(group[k + b]);
        for (std::size_t t = 1; t <= n; ++t) {
          inputs[t * cols + b] = words[t - 1];
        }
      }
      ad::Tape tape;
      ModelOutput o = model.Forward(tape, inputs, n + 1, cols,
                                    model.InitialState(cols), nullptr);
      const ad::Tensor &d = stream == DistanceStream::kSyd
                                ? o.d_syd.value()
                                : o.d_lm[layer].value();
      for (std::size_t b = 0; b < cols; ++b) {
        std::vector<double> &v = out[group[k + b]];
        for (std::size_t t = 2; t <= n; ++t) v.push_back(d[t * cols + b]);
      }
    }
  }
  return out;
}

std::string EpochLog::ToJson() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["train_lm"] = train_lm;
  j["train_syd"] = train_syd;
  j["train_ppl"] = train_ppl;
  j["val_ppl"] = val_ppl;
  j["ranking_acc"] = ranking_acc;
  j["lr"] = lr;
  j["wall_time"] = wall_time;
  return j.dump();
}

Trainer::Trainer(LanguageModel &model, const Config &config,
                 const Corpus &train, const Corpus *valid)
    : model_(model),
      config_(config),
      train_(train),
      valid_(valid),
      rng_(DeriveSeed(config.train.seed, "trainer")),
      lr_(config.train.lr),
      start_(std::chrono::steady_clock::now()) {
  config_.Validate();
  train_targets_ = MakeTargets(train, config_.train.tree_source,
                               DeriveSeed(config_.train.seed, "trees"));
  if (model_.has_syd()) {
    valid_targets_ = MakeTargets(valid ? *valid : train, TreeSource::kGold, 0);
  }
  batches_ = MakeBatches(train, train_targets_, config_.train.batch_size,
                         config_.train.bptt);
}

void Trainer::Update() {
  const TrainConfig &tc = config_.train;
  ad::ParamStore &params = model_.params();
  if (tc.clip > 0.0) {
    const double norm = params.GradNorm();
    if (norm > tc.clip) params.ScaleGrad(tc.clip / norm);
  }
  if (tc.optimizer == Optimizer::kSgd) {
    for (auto &[name, p] : params.items()) {
      double *v = p.value.data();
      const double *g = p.grad.data();
      for (std::size_t k = 0; k < p.value.size(); ++k) {
        v[k] -= lr_ * (g[k] + tc.weight_decay * v[k]);
      }
    }
    return;
  }
  if (adam_m_.empty()) {
    for (auto &[name, p] : params.items()) {
      adam_m_.emplace_back(p.value.shape());
      adam_v_.emplace_back(p.value.shape());
    }
  }
  ++adam_step_;
  const double c1 = 1.0 - std::pow(tc.adam_beta1, adam_step_);
  const double c2 = 1.0 - std::pow(tc.adam_beta2, adam_step_);
  std::size_t i = 0;
  for (auto &[name, p] : params.items()) {
    double *v = p.value.data();
    const double *g = p.grad.data();
    double *m = adam_m_[i].data();
    double *s = adam_v_[i].data();
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double grad = g[k] + tc.weight_decay * v[k];
      m[k] = tc.adam_beta1 * m[k] + (1 - tc.adam_beta1) * grad;
      s[k] = tc.adam_beta2 * s[k] + (1 - tc.adam_beta2) * grad * grad;
      v[k] -= lr_ * (m[k] / c1) / (std::sqrt(s[k] / c2) + tc.adam_eps);
    }
    ++i;
  }
}

void Trainer::SwapAverage() {
  std::size_t i = 0;
  for (auto &[name, p] : model_.params().items()) {
    std::swap(p.value, average_[i++]);
  }
}

EpochLog Trainer::TrainEpoch() {
  const TrainConfig &tc = config_.train;
  ++epoch_;
  std::vector<std::size_t> order(batches_.size());
  std::iota(order.begin(), order.end(), 0);
  if (train_.mode == CorpusMode::kSeparateSentence) {
    for (std::size_t k = order.size(); k > 1; --k) {
      std::swap(order[k - 1], order[rng_.Below(k)]);
    }
  }
  const std::size_t avg_start =
      tc.avg_start ? tc.avg_start : std::max<std::size_t>(1, tc.epochs / 2);
  const bool averaging = tc.averaging && epoch_ >= avg_start;

  double lm_sum = 0.0, syd_sum = 0.0;
  std::size_t tokens = 0, pairs = 0;
  ModelState state;
  for (std::size_t step = 0; step < order.size(); ++step) {
    const Batch &batch = batches_[order[step]];
    if (batch.reset_state) state = model_.InitialState(batch.columns);
    const std::string where = "epoch " + std::to_string(epoch_) + ", step " +
                              std::to_string(step + 1);
    ad::Tape tape;
    ModelOutput out;
    try {
      out = model_.Forward(tape, batch.inputs, batch.steps, batch.columns,
                           state, &rng_);
    } catch (const NumericError &e) {
      throw NumericError(std::string(e.what()) + " (" + where + ")");
    }
    state = std::move(out.state);
    ad::Var lm = LmLoss(out.logits, batch.targets, batch.weights);
    ad::Var loss = lm;
    const std::size_t scored = static_cast<std::size_t>(
        std::accumulate(batch.weights.begin(), batch.weights.end(), 0.0));
    lm_sum += lm.value()[0] * scored;
    tokens += scored;
    if (out.d_syd.valid()) {
      const RankPairs rp = batch.Pairs(tc.pair_mode, tc.rank_margin);
      if (rp.pairs > 0) {
        ad::Var syd = RankingLoss(out.d_syd, rp);
        syd_sum += syd.value()[0] * rp.pairs;
        pairs += rp.pairs;
        if (tc.alpha > 0.0) loss = JointLoss(lm, syd, tc.alpha);
      }
    }
    if (!std::isfinite(loss.value()[0])) {
      throw NumericError("non-finite loss at " + where);
    }
    model_.params().ZeroGrad();
    tape.Backward(loss);
    if (!std::isfinite(model_.params().GradNorm())) {
      throw NumericError("non-finite gradient at " + where);
    }
    Update();
    if (averaging) {
      if (average_count_ == 0) {
        average_.clear();
        for (auto &[name, p] : model_.params().items()) {
          average_.push_back(p.value);
        }
      } else {
        std::size_t i = 0;
        const double w = 1.0 / static_cast<double>(average_count_ + 1);
        for (auto &[name, p] : model_.params().items()) {
          ad::Tensor &a = average_[i++];
          for (std::size_t k = 0; k < a.size(); ++k) {
            a[k] += (p.value[k] - a[k]) * w;
          }
        }
      }
      ++average_count_;
    }
  }
  EpochLog log;
  log.epoch = epoch_;
  log.train_lm = tokens ? lm_sum / tokens : 0.0;
  log.train_syd = pairs ? syd_sum / pairs : 0.0;
  log.train_ppl = std::exp(log.train_lm);
  log.lr = lr_;
  log.wall_time = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - start_)
                      .count();
  return log;
}

std::vector<EpochLog> Trainer::Fit(const TrainHooks &hooks) {
  const TrainConfig &tc = config_.train;
  std::vector<EpochLog> logs;
  double best = std::numeric_limits<double>::infinity();
  std::vector<ad::Tensor> best_params;
  std::size_t bad_epochs = 0;
  for (std::size_t e = 0; e < tc.epochs; ++e) {
    EpochLog log = TrainEpoch();
    const bool use_average = average_count_ > 0;
    if (use_average) SwapAverage();
    const Corpus &held = valid_ ? *valid_ : train_;
    const LmEval ev = EvaluateLm(model_, held, valid_targets_, tc);
    if (valid_) log.val_ppl = ev.ppl;
    log.ranking_acc = ev.ranking.rate();
    const double score = valid_ ? ev.loss : log.train_lm;
    if (score < best) {
      best = score;
      bad_epochs = 0;
      if (valid_) {
        best_params.clear();
        for (auto &[name, p] : model_.params().items()) {
          best_params.push_back(p.value);
        }
      }
      if (hooks.on_best) hooks.on_best(log);
    } else if (++bad_epochs >= tc.patience) {
      lr_ *= tc.lr_decay;
      bad_epochs = 0;
    }
    if (use_average) SwapAverage();
    log.wall_time = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - start_)
                        .count();
    if (hooks.on_epoch) hooks.on_epoch(log);
    logs.push_back(log);
    if (lr_ < tc.min_lr) break;
  }
  if (average_count_ > 0) {
    SwapAverage();
  } else if (!best_params.empty()) {
    std::size_t i = 0;
    for (auto &[name, p] : model_.params().items()) {
      p.value = std::move(best_params[i++]);
    }
  }
  return logs;
}

}  // namespace sdlm
