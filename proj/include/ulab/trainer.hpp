#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ulab/csv.hpp"
#include "ulab/data.hpp"
#include "ulab/error.hpp"
#include "ulab/nn.hpp"
#include "ulab/rng.hpp"
#include "ulab/timing.hpp"

namespace ulab {

struct ModelSpec {
  std::vector<int> hidden{64, 64};
  Activation activation = Activation::relu;

  std::vector<int> layer_dims(int input_dim, int n_classes) const {
    std::vector<int> dims{input_dim};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(n_classes);
    return dims;
  }

  ModelState init(const Dataset& data, std::uint64_t seed) const {
    return ModelState::init(layer_dims(data.input_dim, data.n_classes), seed, activation);
  }
};

enum class ScheduleKind { constant, cosine, multistep };

inline std::string_view to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::constant: return "constant";
    case ScheduleKind::cosine: return "cosine";
    case ScheduleKind::multistep: return "multistep";
  }
  return "?";
}

inline ScheduleKind parse_schedule(std::string_view s) {
  for (auto k : {ScheduleKind::constant, ScheduleKind::cosine, ScheduleKind::multistep})
    if (to_string(k) == s) return k;
  throw ValidationError("unknown schedule '" + std::string(s) + "'");
}

struct Schedule {
  ScheduleKind kind = ScheduleKind::cosine;
  std::vector<int> milestones;
  double factor = 0.2;
};

struct TrainConfig {
  int epochs = 60;
  int batch_size = 32;
  double base_lr = 0.1;
  Schedule schedule;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 0;
};

inline void validate(const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw ValidationError("epochs must be >= 1");
  if (cfg.batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (!(cfg.base_lr > 0.0)) throw ValidationError("base_lr must be > 0");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) throw ValidationError("momentum must be in [0,1)");
  if (!(cfg.weight_decay >= 0.0)) throw ValidationError("weight_decay must be >= 0");
  if (cfg.schedule.kind == ScheduleKind::multistep && !(cfg.schedule.factor > 0.0 && cfg.schedule.factor < 1.0))
    throw ValidationError("multistep factor must be in (0,1)");
}

inline double lr_at(const TrainConfig& cfg, int epoch) {
  if (epoch < 0 || epoch >= cfg.epochs) throw ValidationError("epoch out of range");
  switch (cfg.schedule.kind) {
    case ScheduleKind::constant: return cfg.base_lr;
    case ScheduleKind::cosine:
      return cfg.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * epoch / static_cast<double>(cfg.epochs)));
    case ScheduleKind::multistep: {
      const auto passed = std::count_if(cfg.schedule.milestones.begin(), cfg.schedule.milestones.end(),
                                        [&](int m) { return m <= epoch; });
      return cfg.base_lr * std::pow(cfg.schedule.factor, static_cast<double>(passed));
    }
  }
  return cfg.base_lr;
}

// Per-epoch, per-example training signals. Row = epoch, column = position of
// the example in `ids`.
struct EventLog {
  std::vector<std::size_t> ids;
  Matrix true_prob;
  Matrix max_prob;
  Matrix entropy;
  Matrix correct;  // 0 or 1
  double wall_time = 0.0;  // time spent collecting the signals

  int epochs() const { return static_cast<int>(true_prob.rows()); }
  bool empty() const { return ids.empty() || true_prob.rows() == 0; }
};

struct ExampleSignals {
  Vector true_prob, max_prob, entropy, correct;
};

// Evaluation-mode signals for `ids` under `model`.
inline ExampleSignals example_signals(const ModelState& model, const Dataset& data, std::span<const std::size_t> ids) {
  const auto b = data.batch(ids);
  const Matrix probs = softmax(forward(model, b));
  const auto n = probs.rows();
  ExampleSignals s{Vector(n), Vector(n), Vector(n), Vector(n)};
  const double max_entropy = std::log(static_cast<double>(probs.cols()));
  for (Eigen::Index r = 0; r < n; ++r) {
    const int y = b.labels[static_cast<std::size_t>(r)];
    s.true_prob(r) = probs(r, y);
    s.max_prob(r) = probs.row(r).maxCoeff();
    double h = 0.0;
    for (Eigen::Index c = 0; c < probs.cols(); ++c)
      if (probs(r, c) > 0.0) h -= probs(r, c) * std::log(probs(r, c));
    s.entropy(r) = std::clamp(h, 0.0, max_entropy);
    s.correct(r) = argmax_row(probs, r) == y ? 1.0 : 0.0;
  }
  return s;
}

struct TrainOptions {
  bool log_events = true;
  int checkpoint_every = 0;  // 0 disables checkpoint collection
};

struct TrainResult {
  ModelState model;
  EventLog log;
  double wall_time = 0.0;
  std::vector<double> epoch_loss;      // mean mini-batch loss per epoch
  std::vector<ModelState> checkpoints;  // post-epoch snapshots
};

// Shuffled mini-batch momentum SGD over `subset`. Signals are recorded after
// each epoch's updates, without touching the parameters.
inline TrainResult train(ModelState init, const Dataset& data, std::span<const std::size_t> subset,
                         const TrainConfig& cfg, const TrainOptions& opt = {}) {
  validate(cfg);
  if (subset.empty()) throw ValidationError("training subset is empty");
  Stopwatch total;
  TrainResult res;
  res.model = std::move(init);
  const std::size_t n = subset.size();
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  if (opt.log_events) {
    res.log.ids.assign(subset.begin(), subset.end());
    for (Matrix* m : {&res.log.true_prob, &res.log.max_prob, &res.log.entropy, &res.log.correct})
      *m = Matrix(cfg.epochs, static_cast<Eigen::Index>(n));
  }
  std::vector<std::size_t> batch_ids;
  for (int e = 0; e < cfg.epochs; ++e) {
    const SgdParams sgd{lr_at(cfg, e), cfg.momentum, cfg.weight_decay, 0.0};
    const auto order = permutation(n, derive_seed(cfg.seed, Stream::shuffle, e));
    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < n; start += bs) {
      batch_ids.clear();
      for (std::size_t k = start; k < std::min(n, start + bs); ++k) batch_ids.push_back(subset[order[k]]);
      auto lg = loss_and_gradients(res.model, data.batch(batch_ids));
      sgd_step(res.model, lg.grads, sgd);
      loss_sum += lg.loss;
      ++n_batches;
    }
    const double mean_loss = loss_sum / static_cast<double>(n_batches);
    if (!std::isfinite(mean_loss)) throw std::runtime_error("training diverged at epoch " + std::to_string(e));
    res.epoch_loss.push_back(mean_loss);
    if (opt.log_events) {
      Stopwatch sw;
      const auto s = example_signals(res.model, data, subset);
      res.log.true_prob.row(e) = s.true_prob.transpose();
      res.log.max_prob.row(e) = s.max_prob.transpose();
      res.log.entropy.row(e) = s.entropy.transpose();
      res.log.correct.row(e) = s.correct.transpose();
      res.log.wall_time += sw.seconds();
    }
    if (opt.checkpoint_every > 0 && ((e + 1) % opt.checkpoint_every == 0 || e + 1 == cfg.epochs))
      res.checkpoints.push_back(res.model);
  }
  res.wall_time = total.seconds();
  return res;
}

// Fresh initialization from cfg.seed, then train().
inline TrainResult train_from_scratch(const Dataset& data, std::span<const std::size_t> subset, const ModelSpec& spec,
                                      const TrainConfig& cfg, const TrainOptions& opt = {}) {
  return train(spec.init(data, derive_seed(cfg.seed, Stream::init)), data, subset, cfg, opt);
}

inline std::vector<std::uint8_t> correctness(const ModelState& model, const Dataset& data,
                                             std::span<const std::size_t> ids) {
  std::vector<std::uint8_t> out(ids.size());
  if (ids.empty()) return out;
  const auto b = data.batch(ids);
  const Matrix logits = forward(model, b);
  for (Eigen::Index r = 0; r < logits.rows(); ++r)
    out[static_cast<std::size_t>(r)] = argmax_row(logits, r) == b.labels[static_cast<std::size_t>(r)];
  return out;
}

inline double accuracy(const ModelState& model, const Dataset& data, std::span<const std::size_t> ids) {
  if (ids.empty()) throw ValidationError("accuracy over an empty id set");
  const auto c = correctness(model, data, ids);
  std::size_t hits = 0;
  for (auto v : c) hits += v;
  return static_cast<double>(hits) / static_cast<double>(ids.size());
}

// CSV: epoch,example_id,true_prob,max_prob,entropy,correct
inline void write_event_log_csv(std::ostream& os, const EventLog& log, std::uint64_t digest, std::uint64_t seed) {
  csv::write_provenance(os, digest, seed);
  csv::write_row(os, {"epoch", "example_id", "true_prob", "max_prob", "entropy", "correct"});
  for (int e = 0; e < log.epochs(); ++e)
    for (std::size_t k = 0; k < log.ids.size(); ++k) {
      const auto c = static_cast<Eigen::Index>(k);
      csv::write_row(os, {std::to_string(e), std::to_string(log.ids[k]), csv::format(log.true_prob(e, c)),
                          csv::format(log.max_prob(e, c)), csv::format(log.entropy(e, c)),
                          log.correct(e, c) != 0.0 ? "1" : "0"});
    }
}

}  // namespace ulab
