#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

#include "ulab/data.hpp"
#include "ulab/parallel.hpp"
#include "ulab/score_table.hpp"
#include "ulab/timing.hpp"
#include "ulab/trainer.hpp"

namespace ulab {

struct MemConfig {
  int n_models = 100;
  double subset_fraction = 0.7;
  TrainConfig train;
  ModelSpec model;
  std::uint64_t seed = 0;
};

inline constexpr std::size_t kExactLooMaxTrain = 64;

namespace detail {

// Keyed integer accumulators: identical totals whatever order models finish in.
struct InOutCounts {
  std::vector<std::uint32_t> in_hits, in_n, out_hits, out_n;

  explicit InOutCounts(std::size_t n) : in_hits(n), in_n(n), out_hits(n), out_n(n) {}

  std::vector<double> scores() const {
    std::vector<double> s(in_n.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (in_n[i] == 0 || out_n[i] == 0) {
        s[i] = std::numeric_limits<double>::quiet_NaN();
      } else {
        s[i] = static_cast<double>(in_hits[i]) / in_n[i] - static_cast<double>(out_hits[i]) / out_n[i];
      }
    }
    return s;
  }
};

}  // namespace detail

// Subsampled estimate of
//   mem(i) = P[f(x_i) = y_i | i in training set] - P[f(x_i) = y_i | i held out]
// from T models trained on independent round(p*n)-sized subsets of the train
// split. Examples never (or always) sampled get an undefined score.
inline ScoreTable estimate_memorization(const Dataset& data, const MemConfig& cfg, int jobs = 1) {
  if (cfg.n_models < 2) throw ValidationError("n_models must be >= 2");
  if (!(cfg.subset_fraction > 0.0 && cfg.subset_fraction < 1.0)) throw ValidationError("subset_fraction must be in (0,1)");
  Stopwatch sw;
  const auto train_ids = data.train_ids();
  const std::size_t n = train_ids.size();
  const std::size_t k = std::max<std::size_t>(1, rounded_count(cfg.subset_fraction, n));

  struct Run {
    std::vector<bool> member;
    std::vector<std::uint8_t> correct;
  };
  auto runs = parallel_map(static_cast<std::size_t>(cfg.n_models), jobs, [&](std::size_t t) {
    const auto perm = permutation(n, derive_seed(cfg.seed, Stream::subset, t));
    Run r{std::vector<bool>(n, false), {}};
    std::vector<std::size_t> subset;
    for (std::size_t j = 0; j < k; ++j) {
      r.member[perm[j]] = true;
    }
    for (std::size_t j = 0; j < n; ++j)
      if (r.member[j]) subset.push_back(train_ids[j]);
    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.seed, Stream::init, t);
    const auto trained = train_from_scratch(data, subset, cfg.model, tc, {.log_events = false});
    r.correct = correctness(trained.model, data, train_ids);
    return r;
  });

  detail::InOutCounts acc(n);
  for (const auto& r : runs)
    for (std::size_t j = 0; j < n; ++j) {
      if (r.member[j]) {
        acc.in_hits[j] += r.correct[j];
        ++acc.in_n[j];
      } else {
        acc.out_hits[j] += r.correct[j];
        ++acc.out_n[j];
      }
    }
  auto table = ScoreTable::make(ScoreKind::memorization, train_ids, acc.scores());
  table.n_models = cfg.n_models;
  table.subset_fraction = cfg.subset_fraction;
  table.wall_time = sw.seconds();
  return table;
}

// Leave-one-out memorization with S seeds per model:
//   score(i) = mean_s correct_i(train on D, seed s) - mean_s correct_i(train on D\{i}, seed s)
// Both terms share seed s. Guarded to tiny train splits.
inline ScoreTable exact_loo(const Dataset& data, const ModelSpec& model, const TrainConfig& train_cfg, int n_seeds,
                            std::uint64_t seed = 0, int jobs = 1) {
  const auto train_ids = data.train_ids();
  const std::size_t n = train_ids.size();
  if (n > kExactLooMaxTrain)
    throw ValidationError("exact_loo is limited to " + std::to_string(kExactLooMaxTrain) + " train examples, got " +
                          std::to_string(n));
  if (n < 2) throw ValidationError("exact_loo needs at least 2 train examples");
  if (n_seeds < 10) throw ValidationError("exact_loo needs at least 10 seeds");
  Stopwatch sw;
  const std::size_t per_seed = n + 1;  // job 0: full data, job 1+i: without example i
  const auto results =
      parallel_map(static_cast<std::size_t>(n_seeds) * per_seed, jobs, [&](std::size_t job) {
        const std::size_t s = job / per_seed;
        const std::size_t k = job % per_seed;
        TrainConfig tc = train_cfg;
        tc.seed = derive_seed(seed, Stream::init, s);
        std::vector<std::size_t> subset;
        for (std::size_t j = 0; j < n; ++j)
          if (k == 0 || j != k - 1) subset.push_back(train_ids[j]);
        const auto trained = train_from_scratch(data, subset, model, tc, {.log_events = false});
        return correctness(trained.model, data, train_ids);
      });
  std::vector<double> with(n, 0.0), without(n, 0.0);
  for (std::size_t s = 0; s < static_cast<std::size_t>(n_seeds); ++s) {
    const auto& full = results[s * per_seed];
    for (std::size_t i = 0; i < n; ++i) {
      with[i] += full[i];
      without[i] += results[s * per_seed + 1 + i][i];
    }
  }
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) scores[i] = (with[i] - without[i]) / n_seeds;
  auto table = ScoreTable::make(ScoreKind::memorization, train_ids, std::move(scores));
  table.wall_time = sw.seconds();
  return table;
}

}  // namespace ulab
