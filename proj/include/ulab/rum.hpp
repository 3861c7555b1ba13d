#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ulab/data.hpp"
#include "ulab/digest.hpp"
#include "ulab/eval.hpp"
#include "ulab/parallel.hpp"
#include "ulab/proxies.hpp"
#include "ulab/score_table.hpp"
#include "ulab/timing.hpp"
#include "ulab/trainer.hpp"
#include "ulab/unlearn.hpp"

namespace ulab {

enum class Approach { rum_f, vanilla, shuffle };

inline std::string_view to_string(Approach a) {
  switch (a) {
    case Approach::rum_f: return "rum_f";
    case Approach::vanilla: return "vanilla";
    case Approach::shuffle: return "shuffle";
  }
  return "?";
}

inline Approach parse_approach(std::string_view s) {
  for (auto a : {Approach::rum_f, Approach::vanilla, Approach::shuffle})
    if (to_string(a) == s) return a;
  throw ValidationError("unknown approach '" + std::string(s) + "'");
}

using Partition = std::vector<std::vector<std::size_t>>;

// Splits `ids` (already in unlearning order) into k contiguous chunks whose
// sizes differ by at most one; the larger chunks come first.
inline Partition contiguous_chunks(std::span<const std::size_t> ids, int k) {
  if (k < 1) throw ValidationError("K must be >= 1");
  Partition out;
  const std::size_t n = ids.size(), kk = static_cast<std::size_t>(k);
  std::size_t pos = 0;
  for (std::size_t c = 0; c < kk; ++c) {
    const std::size_t len = n / kk + (c < n % kk ? 1 : 0);
    out.emplace_back(ids.begin() + static_cast<std::ptrdiff_t>(pos), ids.begin() + static_cast<std::ptrdiff_t>(pos + len));
    std::sort(out.back().begin(), out.back().end());
    pos += len;
  }
  return out;
}

// Orders the forget set by alignment * score ascending (least memorized first,
// ties by id) and cuts it into K homogeneous subsets.
inline Partition refine(const ScoreTable& scores, const UnlearnTask& task, int k) {
  std::vector<std::pair<double, std::size_t>> keyed;
  for (auto id : task.forget_ids) {
    auto v = scores.score_of(id);
    if (!v) throw ValidationError("forget example " + std::to_string(id) + " has no defined score");
    keyed.emplace_back(scores.alignment * *v, id);
  }
  std::sort(keyed.begin(), keyed.end());
  std::vector<std::size_t> ordered;
  for (const auto& [_, id] : keyed) ordered.push_back(id);
  return contiguous_chunks(ordered, k);
}

// Uniformly random K-partition of the forget set.
inline Partition random_partition(const UnlearnTask& task, int k, std::uint64_t seed) {
  const auto perm = permutation(task.forget_ids.size(), derive_seed(seed, Stream::partition));
  std::vector<std::size_t> ordered;
  for (auto p : perm) ordered.push_back(task.forget_ids[p]);
  return contiguous_chunks(ordered, k);
}

struct RumStep {
  int step = 0;
  std::vector<std::size_t> forget_ids;
  std::vector<std::size_t> retain_ids;
  double wall_time = 0.0;
};

struct RumResult {
  ModelState model;
  std::vector<RumStep> steps;
  double wall_time = 0.0;
};

// Sequential unlearning over a partition: step i forgets subset i while the
// retain set is the original retain set plus every subset not yet unlearned.
inline RumResult rum_f(const ModelState& original, const Dataset& data, const UnlearnTask& task,
                       const Partition& partition, const UnlearnConfig& cfg) {
  {
    std::vector<std::size_t> all;
    for (const auto& s : partition) all.insert(all.end(), s.begin(), s.end());
    std::sort(all.begin(), all.end());
    if (all != task.forget_ids) throw ValidationError("partition is not a partition of the forget set");
  }
  RumResult res;
  res.model = original;
  std::vector<std::size_t> later;
  for (const auto& s : partition) later.insert(later.end(), s.begin(), s.end());
  std::sort(later.begin(), later.end());
  for (std::size_t i = 0; i < partition.size(); ++i) {
    std::vector<std::size_t> rest;
    std::set_difference(later.begin(), later.end(), partition[i].begin(), partition[i].end(), std::back_inserter(rest));
    later = std::move(rest);
    UnlearnTask step_task;
    step_task.forget_ids = partition[i];
    std::merge(task.retain_ids.begin(), task.retain_ids.end(), later.begin(), later.end(),
               std::back_inserter(step_task.retain_ids));
    auto r = unlearn(res.model, data, step_task, cfg);
    res.model = std::move(r.model);
    res.steps.push_back({static_cast<int>(i + 1), std::move(step_task.forget_ids), std::move(step_task.retain_ids),
                         r.wall_time});
    res.wall_time += r.wall_time;
  }
  return res;
}

inline UnlearnResult vanilla(const ModelState& original, const Dataset& data, const UnlearnTask& task,
                             const UnlearnConfig& cfg) {
  return unlearn(original, data, task, cfg);
}

inline RumResult shuffle_control(const ModelState& original, const Dataset& data, const UnlearnTask& task,
                                 const UnlearnConfig& cfg, int k, std::uint64_t seed) {
  if (k < 2) throw ValidationError("shuffle control needs K >= 2");
  return rum_f(original, data, task, random_partition(task, k, seed), cfg);
}

// Runs one approach and returns the final model and its wall time.
inline UnlearnResult run_approach(Approach a, const ModelState& original, const Dataset& data, const UnlearnTask& task,
                                  const ScoreTable& scores, int k, const UnlearnConfig& cfg, std::uint64_t seed) {
  switch (a) {
    case Approach::vanilla: return vanilla(original, data, task, cfg);
    case Approach::rum_f: {
      auto r = rum_f(original, data, task, refine(scores, task, k), cfg);
      return {std::move(r.model), r.wall_time};
    }
    case Approach::shuffle: {
      auto r = shuffle_control(original, data, task, cfg, k, seed);
      return {std::move(r.model), r.wall_time};
    }
  }
  throw ValidationError("unknown approach");
}

// ---------------------------------------------------------------------------
// Proxy recomputation on a working pool.

struct ProxyContext {
  ModelSpec model;
  TrainConfig train;
  HoldoutConfig holdout;
  CurvatureConfig curvature;
};

// Learning-event and curvature proxies come from a fresh training run on the
// pool (seeded by `run_seed`); holdout retraining uses `current` directly.
inline ScoreTable compute_proxy(ScoreKind kind, const ModelState& current, const Dataset& data,
                                std::span<const std::size_t> pool, const ProxyContext& ctx, std::uint64_t run_seed) {
  if (kind == ScoreKind::holdout_retraining) return holdout_retraining_proxy(current, data, ctx.holdout, pool);
  if (kind == ScoreKind::memorization)
    throw ValidationError("memorization is not recomputed as a proxy; use estimate_memorization");
  TrainConfig tc = ctx.train;
  tc.seed = run_seed;
  TrainOptions opt;
  opt.log_events = is_learning_event(kind);
  if (kind == ScoreKind::loss_curvature) opt.checkpoint_every = curvature_checkpoint_interval(tc.epochs);
  auto run = train_from_scratch(data, pool, ctx.model, tc, opt);
  if (kind == ScoreKind::loss_curvature) {
    auto t = loss_curvature_proxy(run.checkpoints, data, ctx.curvature, pool);
    return t;
  }
  auto tables = learning_event_proxies(run.log);
  return tables.get(kind);
}

// ---------------------------------------------------------------------------
// Multi-step sequential unlearning with proxy recomputation between steps.

struct SequentialConfig {
  ScoreKind proxy = ScoreKind::confidence;
  int n_steps = 3;
  std::size_t band_size = 100;
  int k = 3;
  UnlearnConfig unlearn;
  MiaConfig mia;
  ProxyContext proxy_ctx;
  std::vector<Approach> tracks{Approach::rum_f, Approach::vanilla};
};

struct SequentialStep {
  int step = 0;  // 1-based
  Approach approach = Approach::rum_f;
  EvalReport report;
  double gini = 0.0;  // of the proxy recomputed after this step
  std::vector<std::size_t> forget_ids;
  std::uint64_t forget_ids_digest = 0;
};

struct SequentialResult {
  std::vector<SequentialStep> steps;
  // Index 0 = before any unlearning; index n = after step n.
  std::map<Approach, std::vector<double>> gini_series;
  std::map<Approach, std::vector<std::vector<double>>> proxy_values;
};

inline std::uint64_t proxy_run_seed(std::uint64_t base, int step) {
  return step == 0 ? base : derive_seed(base, static_cast<std::uint64_t>(step));
}

inline SequentialResult sequential_stability(const Dataset& data, const ModelState& original,
                                             const SequentialConfig& cfg, int jobs = 1) {
  if (cfg.n_steps < 1) throw ValidationError("n_steps must be >= 1");
  const auto train_ids = data.train_ids();
  if (3 * cfg.band_size * static_cast<std::size_t>(cfg.n_steps) > train_ids.size())
    throw ValidationError("train pool too small for " + std::to_string(cfg.n_steps) + " steps of 3x" +
                          std::to_string(cfg.band_size));

  struct Track {
    std::vector<SequentialStep> steps;
    std::vector<double> gini;
    std::vector<std::vector<double>> values;
  };
  auto tracks = parallel_map(cfg.tracks.size(), jobs, [&](std::size_t t) {
    const Approach approach = cfg.tracks[t];
    Track out;
    ModelState model = original;
    std::vector<std::size_t> pool = train_ids;
    auto scores = compute_proxy(cfg.proxy, model, data, pool, cfg.proxy_ctx, proxy_run_seed(cfg.proxy_ctx.train.seed, 0));
    out.values.push_back(scores.defined_values());
    out.gini.push_back(gini(out.values.back()));
    for (int step = 1; step <= cfg.n_steps; ++step) {
      const auto task = select_forget(scores, pool, cfg.band_size);
      auto res = run_approach(approach, model, data, task, scores, cfg.k, cfg.unlearn, cfg.unlearn.seed);
      const auto oracle = retrain(data, task, cfg.proxy_ctx.model, cfg.proxy_ctx.train);
      SequentialStep rec;
      rec.step = step;
      rec.approach = approach;
      rec.report = evaluate(res.model, oracle.model, data, task, cfg.mia, res.wall_time);
      rec.forget_ids = task.forget_ids;
      rec.forget_ids_digest = digest_ids(task.forget_ids);
      model = std::move(res.model);
      pool = task.retain_ids;
      scores = compute_proxy(cfg.proxy, model, data, pool, cfg.proxy_ctx,
                             proxy_run_seed(cfg.proxy_ctx.train.seed, step));
      out.values.push_back(scores.defined_values());
      rec.gini = gini(out.values.back());
      out.gini.push_back(rec.gini);
      out.steps.push_back(std::move(rec));
    }
    return out;
  });

  SequentialResult result;
  for (std::size_t t = 0; t < tracks.size(); ++t) {
    result.gini_series[cfg.tracks[t]] = tracks[t].gini;
    result.proxy_values[cfg.tracks[t]] = std::move(tracks[t].values);
    for (auto& s : tracks[t].steps) result.steps.push_back(std::move(s));
  }
  return result;
}

inline bool non_increasing(std::span<const double> series) {
  for (std::size_t i = 1; i < series.size(); ++i)
    if (series[i] > series[i - 1]) return false;
  return true;
}

}  // namespace ulab
