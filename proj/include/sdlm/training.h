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

// Losses, truncated-BPTT batching with gold-distance alignment, and the
// training loop.

#ifndef SDLM_TRAINING_H_
#define SDLM_TRAINING_H_

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sdlm/autodiff.h"
#include "sdlm/config.h"
#include "sdlm/distance.h"
#include "sdlm/model.h"
#include "sdlm/rng.h"
#include "sdlm/treebank.h"

namespace sdlm {

// ---------------------------------------------------------------------------
// Losses.

// Weighted mean cross-entropy: sum_r w_r CE_r / sum_r w_r. Rows with weight
// 0 are ignored; all-zero weights give 0.
ad::Var LmLoss(ad::Var logits, std::span<const int> targets,
               std::span<const double> weights);
// Unweighted mean cross-entropy.
ad::Var LmLoss(ad::Var logits, std::span<const int> targets);

// Sum over i < j of max(0, (1 - sign(g_i - g_j)) (w_i - w_j)) over the
// masked-in slots; kSymmetric also adds the mirrored (j, i) terms. With a
// margin m, pairs with distinct gold distances use
// max(0, (1 - sign(g_i - g_j)) (w_i - w_j) + m).
double RankingLoss(std::span<const double> predicted,
                   std::span<const double> gold, const std::vector<bool> &mask,
                   PairMode mode, double margin = 0.0);

// One hinge term max(0, coef * (d[first] - d[second]) + margin) over rows of
// a distance stream.
struct RankTerm {
  std::size_t first = 0;
  std::size_t second = 0;
  double coef = 0.0;
  double margin = 0.0;
};

struct RankPairs {
  std::vector<RankTerm> terms;  // nonzero coefficients only
  std::size_t pairs = 0;        // unordered pairs considered
};

// Pairs among `rows` (in time order) with gold distances `gold`.
void AddRankPairs(std::span<const std::size_t> rows,
                  std::span<const double> gold, PairMode mode,
                  RankPairs *out, double margin = 0.0);

// Mean over pairs of the hinge terms; a zero constant when there are no
// pairs. The subgradient at a hinge's corner is taken from the active side.
ad::Var RankingLoss(ad::Var distances, const RankPairs &pairs);

double JointLoss(double lm, double syd, double alpha);
ad::Var JointLoss(ad::Var lm, ad::Var syd, double alpha);

// Fraction bookkeeping for pairs with distinct gold distances: a pair is
// correct when the predicted order is strict and agrees with gold.
struct PairAccuracy {
  std::size_t correct = 0;
  std::size_t total = 0;
  double rate() const {
    return total ? static_cast<double>(correct) / total : 0.0;
  }
  void Add(std::span<const double> predicted, std::span<const double> gold);
};

// ---------------------------------------------------------------------------
// Batching.

// Supervision target per sentence; absent for unsupervised sentences.
using DistanceTargets = std::vector<std::optional<DistanceSeq>>;

// Gold distances from the corpus trees, distances of seeded random trees of
// the same lengths (fixed for a given seed), or nothing.
DistanceTargets MakeTargets(const Corpus &corpus, TreeSource source,
                            std::uint64_t seed);

// Time-major window. Row r = t * columns + b.
struct Batch {
  std::size_t steps = 0;
  std::size_t columns = 0;
  std::vector<int> inputs;
  std::vector<int> targets;
  std::vector<double> weights;    // 1 where the target is scored
  std::vector<double> gold;       // distance of the slot ending at the input
  std::vector<bool> gold_mask;
  std::vector<long> sentence;     // sentence of the supervised slot, or -1
  bool reset_state = false;       // start from a fresh state

  std::size_t rows() const { return steps * columns; }
  // Supervised pairs: same column, same sentence, within this window.
  RankPairs Pairs(PairMode mode, double margin = 0.0) const;
};

// Concatenated mode folds the stream into `batch_size` columns (the
// remainder that does not fill a column is dropped) and cuts bptt-step
// windows whose state carries over. Separate-sentence mode groups sentences
// of similar length; every sequence is [eos, w_1..w_n] -> [w_1..w_n, eos]
// and starts from a fresh state. Throws DataError when the corpus is empty
// or has fewer tokens than columns.
std::vector<Batch> MakeBatches(const Corpus &corpus,
                               const DistanceTargets &targets,
                               std::size_t batch_size, std::size_t bptt);

// ---------------------------------------------------------------------------
// Evaluation and training.

struct LmEval {
  double loss = 0.0;  // mean nats per scored token
  double ppl = 0.0;
  std::size_t tokens = 0;
  double syd_loss = 0.0;       // mean ranking loss per pair (syd stream)
  PairAccuracy ranking;        // syd stream against the targets
};

// Dropout off. Targets may be empty (no ranking statistics).
LmEval EvaluateLm(LanguageModel &model, const Corpus &corpus,
                  const DistanceTargets &targets, const TrainConfig &config);

enum class DistanceStream { kLm, kSyd };

// Reads every sentence on its own ([eos, w_1..w_n], fresh state) and returns
// its n-1 slot distances from the syd stream or the LM stream of `layer`
// (0-based).
std::vector<std::vector<double>> InduceDistances(LanguageModel &model,
                                                 const Corpus &corpus,
                                                 DistanceStream stream,
                                                 std::size_t layer = 0);

struct EpochLog {
  std::size_t epoch = 0;
  double train_lm = 0.0;    // mean nats per token over the epoch
  double train_syd = 0.0;   // mean ranking loss per pair over the epoch
  double train_ppl = 0.0;
  double val_ppl = 0.0;     // 0 without a validation corpus
  double ranking_acc = 0.0; // syd stream on the validation (else training) set
  double lr = 0.0;
  double wall_time = 0.0;   // seconds since training started

  std::string ToJson() const;
};

struct TrainHooks {
  std::function<void(const EpochLog &)> on_epoch;
  // Called whenever the validation perplexity improves.
  std::function<void(const EpochLog &)> on_best;
};

class Trainer {
 public:
  // Validates the config (ConfigError) and derives the training targets.
  Trainer(LanguageModel &model, const Config &config, const Corpus &train,
          const Corpus *valid);

  // One pass over the training batches. Throws NumericError naming the
  // epoch and step if the loss or the gradient is not finite.
  EpochLog TrainEpoch();

  // Runs config.train.epochs epochs with plateau decay; restores the best
  // validation parameters (or the averaged ones) at the end.
  std::vector<EpochLog> Fit(const TrainHooks &hooks = {});

  double lr() const { return lr_; }
  const DistanceTargets &train_targets() const { return train_targets_; }

 private:
  void Update();
  void SwapAverage();

  LanguageModel &model_;
  Config config_;
  const Corpus &train_;
  const Corpus *valid_;
  DistanceTargets train_targets_;
  DistanceTargets valid_targets_;
  std::vector<Batch> batches_;
  Rng rng_;
  double lr_;
  std::size_t epoch_ = 0;
  std::size_t adam_step_ = 0;
  std::vector<ad::Tensor> adam_m_, adam_v_;
  std::vector<ad::Tensor> average_;
  std::size_t average_count_ = 0;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace sdlm

#endif  // SDLM_TRAINING_H_
