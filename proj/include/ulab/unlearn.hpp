#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ulab/data.hpp"
#include "ulab/error.hpp"
#include "ulab/nn.hpp"
#include "ulab/rng.hpp"
#include "ulab/timing.hpp"
#include "ulab/trainer.hpp"

namespace ulab {

enum class Algorithm { retrain, fine_tune, neggrad_plus, l1_sparse, salun };

inline std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::retrain: return "retrain";
    case Algorithm::fine_tune: return "fine_tune";
    case Algorithm::neggrad_plus: return "neggrad_plus";
    case Algorithm::l1_sparse: return "l1_sparse";
    case Algorithm::salun: return "salun";
  }
  return "?";
}

inline Algorithm parse_algorithm(std::string_view s) {
  for (auto a : {Algorithm::retrain, Algorithm::fine_tune, Algorithm::neggrad_plus, Algorithm::l1_sparse,
                 Algorithm::salun})
    if (to_string(a) == s) return a;
  throw ValidationError("unknown algorithm '" + std::string(s) + "'");
}

struct UnlearnConfig {
  Algorithm algorithm = Algorithm::neggrad_plus;
  int epochs = 5;
  double lr = 0.01;
  int batch_size = 32;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double beta = 0.95;           // neggrad_plus: weight of the retain loss
  double gamma = 1e-4;          // l1_sparse: L1 coefficient
  double sparsity_ratio = 0.5;  // salun: fraction of parameters updated
  std::uint64_t seed = 0;
};

inline void validate(const UnlearnConfig& c) {
  if (c.epochs < 0) throw ValidationError("unlearning epochs must be >= 0");
  if (c.batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (!(c.lr > 0.0)) throw ValidationError("lr must be > 0");
  if (!(c.beta >= 0.5 && c.beta <= 1.0)) throw ValidationError("beta must be in [0.5, 1]");
  if (!(c.gamma >= 0.0)) throw ValidationError("gamma must be >= 0");
  if (!(c.sparsity_ratio > 0.0 && c.sparsity_ratio < 1.0)) throw ValidationError("sparsity_ratio must be in (0,1)");
}

struct UnlearnResult {
  ModelState model;
  double wall_time = 0.0;
};

// beta * L(retain) - (1 - beta) * L(forget)
inline double neggrad_objective(double beta, double retain_loss, double forget_loss) {
  return beta * retain_loss - (1.0 - beta) * forget_loss;
}

namespace detail {

struct DescentOptions {
  std::span<const std::size_t> ascent_ids;  // forget examples for the ascent term
  double retain_weight = 1.0;
  double ascent_weight = 0.0;  // > 0 enables the ascent term
  double l1_gamma = 0.0;
  const ParamMask* mask = nullptr;
};

// `epochs` passes of shuffled mini-batch SGD over `descent_ids` at constant lr,
// starting from a fresh optimizer state. With an ascent term, every descent
// batch is paired with the next batch of a cycling stream over `ascent_ids`.
inline ModelState descent_loop(ModelState model, const Dataset& data, std::span<const std::size_t> descent_ids,
                               const UnlearnConfig& cfg, const DescentOptions& opt) {
  model.reset_momentum();
  if (cfg.epochs == 0 || descent_ids.empty()) return model;
  const SgdParams sgd{cfg.lr, cfg.momentum, cfg.weight_decay, opt.l1_gamma};
  const std::size_t n = descent_ids.size();
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  const bool ascent = opt.ascent_weight != 0.0 && !opt.ascent_ids.empty();
  const std::size_t fbs = ascent ? std::min(bs, opt.ascent_ids.size()) : 0;

  std::vector<std::size_t> forget_stream;
  std::size_t forget_pos = 0, forget_pass = 0;
  auto next_forget_batch = [&] {
    std::vector<std::size_t> ids;
    while (ids.size() < fbs) {
      if (forget_pos == forget_stream.size()) {
        const auto p = permutation(opt.ascent_ids.size(), derive_seed(cfg.seed, Stream::forget_cycle, forget_pass++));
        forget_stream.clear();
        for (auto k : p) forget_stream.push_back(opt.ascent_ids[k]);
        forget_pos = 0;
      }
      ids.push_back(forget_stream[forget_pos++]);
    }
    return ids;
  };

  std::vector<std::size_t> batch_ids;
  for (int e = 0; e < cfg.epochs; ++e) {
    const auto order = permutation(n, derive_seed(cfg.seed, Stream::shuffle, e));
    for (std::size_t start = 0; start < n; start += bs) {
      batch_ids.clear();
      for (std::size_t k = start; k < std::min(n, start + bs); ++k) batch_ids.push_back(descent_ids[order[k]]);
      auto g = loss_and_gradients(model, data.batch(batch_ids), opt.retain_weight).grads;
      if (ascent) {
        const auto fids = next_forget_batch();
        const auto gf = loss_and_gradients(model, data.batch(fids), opt.ascent_weight).grads;
        for (std::size_t l = 0; l < g.size(); ++l) {
          g[l].weight -= gf[l].weight;
          g[l].bias -= gf[l].bias;
        }
      }
      sgd_step(model, g, sgd, opt.mask);
    }
  }
  return model;
}

inline void require_retain(const UnlearnTask& task) {
  if (task.retain_ids.empty()) throw ValidationError("retain set is empty");
}

}  // namespace detail

// Gold standard: fresh initialization, full training procedure on the retain set.
inline UnlearnResult retrain(const Dataset& data, const UnlearnTask& task, const ModelSpec& spec,
                             const TrainConfig& train_cfg) {
  detail::require_retain(task);
  Stopwatch sw;
  auto res = train_from_scratch(data, task.retain_ids, spec, train_cfg, {.log_events = false});
  return {std::move(res.model), sw.seconds()};
}

inline UnlearnResult fine_tune(const ModelState& original, const Dataset& data, const UnlearnTask& task,
                               const UnlearnConfig& cfg) {
  validate(cfg);
  detail::require_retain(task);
  Stopwatch sw;
  auto m = detail::descent_loop(original, data, task.retain_ids, cfg, {});
  return {std::move(m), sw.seconds()};
}

inline UnlearnResult neggrad_plus(const ModelState& original, const Dataset& data, const UnlearnTask& task,
                                  const UnlearnConfig& cfg) {
  validate(cfg);
  detail::require_retain(task);
  Stopwatch sw;
  detail::DescentOptions opt;
  opt.ascent_ids = task.forget_ids;
  opt.retain_weight = cfg.beta;
  opt.ascent_weight = 1.0 - cfg.beta;
  auto m = detail::descent_loop(original, data, task.retain_ids, cfg, opt);
  return {std::move(m), sw.seconds()};
}

inline UnlearnResult l1_sparse(const ModelState& original, const Dataset& data, const UnlearnTask& task,
                               const UnlearnConfig& cfg) {
  validate(cfg);
  detail::require_retain(task);
  Stopwatch sw;
  detail::DescentOptions opt;
  opt.l1_gamma = cfg.gamma;
  auto m = detail::descent_loop(original, data, task.retain_ids, cfg, opt);
  return {std::move(m), sw.seconds()};
}

// |d L(forget) / d theta| at theta, one entry per parameter.
inline Gradients saliency(const ModelState& model, const Dataset& data, std::span<const std::size_t> forget_ids) {
  auto g = backward(model, data.batch(forget_ids));
  for (auto& l : g) {
    l.weight = l.weight.cwiseAbs();
    l.bias = l.bias.cwiseAbs();
  }
  return g;
}

// Global top-k mask, k = ceil(ratio * n_params), ties broken by flat parameter
// order (layer, weights row-major, then bias).
inline ParamMask saliency_mask(const Gradients& sal, double ratio) {
  std::vector<double> flat;
  ParamMask mask;
  for (const auto& l : sal) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) flat.push_back(l.weight(r, c));
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) flat.push_back(l.bias(i));
    mask.push_back({Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(l.weight.rows(), l.weight.cols(), false),
                    Eigen::Matrix<bool, Eigen::Dynamic, 1>::Constant(l.bias.size(), false)});
  }
  const auto k = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(flat.size())));
  std::vector<std::size_t> order(flat.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return flat[a] > flat[b]; });
  std::vector<bool> keep(flat.size(), false);
  for (std::size_t i = 0; i < std::min(k, order.size()); ++i) keep[order[i]] = true;
  std::size_t pos = 0;
  for (auto& l : mask) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = keep[pos++];
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = keep[pos++];
  }
  return mask;
}

inline std::size_t mask_cardinality(const ParamMask& m) {
  std::size_t n = 0;
  for (const auto& l : m) n += static_cast<std::size_t>(l.weight.count() + l.bias.count());
  return n;
}

// Each forget example gets a fixed random label different from its training label.
inline Dataset relabel_forget(const Dataset& data, std::span<const std::size_t> forget_ids, std::uint64_t seed) {
  Dataset out = data;
  for (auto id : forget_ids) {
    Rng rng(derive_seed(seed, Stream::relabel, id));
    int nl = static_cast<int>(rng.below(static_cast<std::uint64_t>(data.n_classes - 1)));
    if (nl >= data.labels[id]) ++nl;
    out.labels[id] = nl;
  }
  return out;
}

namespace detail {

inline ModelState random_label_descent(const ModelState& original, const Dataset& data, const UnlearnTask& task,
                                       const UnlearnConfig& cfg, const ParamMask* mask) {
  const Dataset relabeled = relabel_forget(data, task.forget_ids, cfg.seed);
  std::vector<std::size_t> all = task.pool();
  DescentOptions opt;
  opt.mask = mask;
  return descent_loop(original, relabeled, all, cfg, opt);
}

}  // namespace detail

// Random-label fine-tuning on retain + relabeled forget, all parameters free.
inline UnlearnResult random_label_finetune(const ModelState& original, const Dataset& data, const UnlearnTask& task,
                                           const UnlearnConfig& cfg) {
  validate(cfg);
  detail::require_retain(task);
  Stopwatch sw;
  auto m = detail::random_label_descent(original, data, task, cfg, nullptr);
  return {std::move(m), sw.seconds()};
}

// Random-label fine-tuning restricted to the most forget-salient parameters.
inline UnlearnResult salun(const ModelState& original, const Dataset& data, const UnlearnTask& task,
                           const UnlearnConfig& cfg) {
  validate(cfg);
  detail::require_retain(task);
  Stopwatch sw;
  if (task.forget_ids.empty()) {
    auto m = detail::descent_loop(original, data, task.retain_ids, cfg, {});
    return {std::move(m), sw.seconds()};
  }
  const auto mask = saliency_mask(saliency(original, data, task.forget_ids), cfg.sparsity_ratio);
  auto m = detail::random_label_descent(original, data, task, cfg, &mask);
  return {std::move(m), sw.seconds()};
}

// Dispatch for the approximate algorithms (retrain needs a training recipe; see retrain()).
inline UnlearnResult unlearn(const ModelState& original, const Dataset& data, const UnlearnTask& task,
                             const UnlearnConfig& cfg) {
  switch (cfg.algorithm) {
    case Algorithm::fine_tune: return fine_tune(original, data, task, cfg);
    case Algorithm::neggrad_plus: return neggrad_plus(original, data, task, cfg);
    case Algorithm::l1_sparse: return l1_sparse(original, data, task, cfg);
    case Algorithm::salun: return salun(original, data, task, cfg);
    case Algorithm::retrain: break;
  }
  throw ValidationError("retrain is not an approximate unlearning algorithm; call retrain()");
}

}  // namespace ulab
