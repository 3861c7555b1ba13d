#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ulab/csv.hpp"
#include "ulab/data.hpp"
#include "ulab/nn.hpp"
#include "ulab/score_table.hpp"
#include "ulab/timing.hpp"
#include "ulab/trainer.hpp"

namespace ulab {

// ---------------------------------------------------------------------------
// Learning-event proxies: per-example means of the logged signals over epochs.

struct LearningEventTables {
  ScoreTable confidence, max_confidence, entropy, binary_accuracy;

  ScoreTable& get(ScoreKind k) {
    switch (k) {
      case ScoreKind::confidence: return confidence;
      case ScoreKind::max_confidence: return max_confidence;
      case ScoreKind::entropy: return entropy;
      case ScoreKind::binary_accuracy: return binary_accuracy;
      default: throw ValidationError("not a learning-event proxy: " + std::string(to_string(k)));
    }
  }
};

inline bool is_learning_event(ScoreKind k) {
  return k == ScoreKind::confidence || k == ScoreKind::max_confidence || k == ScoreKind::entropy ||
         k == ScoreKind::binary_accuracy;
}

// Each table's wall_time is the logging cost plus its own averaging time.
inline LearningEventTables learning_event_proxies(const EventLog& log) {
  if (log.empty()) throw ValidationError("event log is empty");
  auto mean_of = [&](const Matrix& m, ScoreKind kind) {
    Stopwatch sw;
    const Vector means = m.colwise().mean().transpose();
    auto t = ScoreTable::make(kind, log.ids, std::vector<double>(means.data(), means.data() + means.size()));
    t.wall_time = log.wall_time + sw.seconds();
    return t;
  };
  return {mean_of(log.true_prob, ScoreKind::confidence), mean_of(log.max_prob, ScoreKind::max_confidence),
          mean_of(log.entropy, ScoreKind::entropy), mean_of(log.correct, ScoreKind::binary_accuracy)};
}

// ---------------------------------------------------------------------------
// Holdout retraining: symmetric KL between softmax outputs before and after a
// short fine-tune on the holdout split.

inline constexpr double kProbabilityFloor = 1e-12;

// KL(P||Q) + KL(Q||P) with both distributions floored at 1e-12.
inline double symmetric_kl(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw StructuralError("distribution size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double a = std::max(p[i], kProbabilityFloor);
    const double b = std::max(q[i], kProbabilityFloor);
    s += (a - b) * (std::log(a) - std::log(b));
  }
  return s;
}

struct HoldoutConfig {
  int epochs = 2;
  int batch_size = 32;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 0;
};

inline ScoreTable holdout_retraining_proxy(const ModelState& model, const Dataset& data, const HoldoutConfig& cfg,
                                           std::span<const std::size_t> score_ids) {
  const auto holdout = data.test_ids();
  if (holdout.empty()) throw ValidationError("holdout split is empty");
  Stopwatch sw;
  ModelState tuned = model;
  if (cfg.epochs > 0) {
    tuned.reset_momentum();
    TrainConfig tc;
    tc.epochs = cfg.epochs;
    tc.batch_size = cfg.batch_size;
    tc.base_lr = cfg.lr;
    tc.schedule.kind = ScheduleKind::constant;
    tc.momentum = cfg.momentum;
    tc.weight_decay = cfg.weight_decay;
    tc.seed = cfg.seed;
    tuned = train(std::move(tuned), data, holdout, tc, {.log_events = false}).model;
  }
  const auto b = data.batch(score_ids);
  const Matrix p = softmax(forward(model, b));
  const Matrix q = softmax(forward(tuned, b));
  std::vector<double> scores(score_ids.size());
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    const Eigen::RowVectorXd pr = p.row(r), qr = q.row(r);
    scores[static_cast<std::size_t>(r)] =
        symmetric_kl({pr.data(), static_cast<std::size_t>(pr.size())}, {qr.data(), static_cast<std::size_t>(qr.size())});
  }
  auto t = ScoreTable::make(ScoreKind::holdout_retraining, {score_ids.begin(), score_ids.end()}, std::move(scores));
  t.wall_time = sw.seconds();
  return t;
}

inline ScoreTable holdout_retraining_proxy(const ModelState& model, const Dataset& data, const HoldoutConfig& cfg) {
  const auto ids = data.train_ids();
  return holdout_retraining_proxy(model, data, cfg, ids);
}

// ---------------------------------------------------------------------------
// Loss curvature: mean over sign-random probes v of ||g(x + h v) - g(x)|| / h,
// g = input gradient of the example's loss; averaged over checkpoints.

struct CurvatureConfig {
  int n_probes = 4;
  double step = 1e-2;
  std::uint64_t seed = 0;
};

inline void validate(const CurvatureConfig& c) {
  if (c.n_probes < 1) throw ValidationError("n_probes must be >= 1");
  if (!(c.step > 0.0)) throw ValidationError("curvature step must be > 0");
}

// Probe r of example `id`: i.i.d. +-1 entries.
inline Vector curvature_probe(std::uint64_t seed, std::size_t id, int r, int dim) {
  Rng rng(derive_seed(seed, Stream::probe, id, static_cast<std::uint64_t>(r)));
  Vector v(dim);
  for (int j = 0; j < dim; ++j) v(j) = rng.sign();
  return v;
}

// Single-point estimator over any gradient oracle.
template <typename GradFn>
double curvature_at(GradFn&& grad, const Vector& x, std::span<const Vector> probes, double h) {
  const Vector g0 = grad(x);
  double s = 0.0;
  for (const auto& v : probes) s += (grad(Vector(x + h * v)) - g0).norm() / h;
  return s / static_cast<double>(probes.size());
}

inline ScoreTable loss_curvature_proxy(std::span<const ModelState> checkpoints, const Dataset& data,
                                       const CurvatureConfig& cfg, std::span<const std::size_t> score_ids) {
  validate(cfg);
  if (checkpoints.empty()) throw ValidationError("loss curvature needs at least one checkpoint");
  Stopwatch sw;
  const auto base = data.batch(score_ids);
  const auto n = base.size();
  std::vector<Matrix> probes;
  for (int r = 0; r < cfg.n_probes; ++r) {
    Matrix v(n, data.input_dim);
    for (Eigen::Index k = 0; k < n; ++k)
      v.row(k) = curvature_probe(cfg.seed, score_ids[static_cast<std::size_t>(k)], r, data.input_dim).transpose();
    probes.push_back(std::move(v));
  }
  Vector total = Vector::Zero(n);
  for (const auto& ck : checkpoints) {
    const Matrix g0 = input_gradients(ck, base);
    for (const auto& v : probes) {
      Batch shifted{base.inputs + cfg.step * v, base.labels};
      total += (input_gradients(ck, shifted) - g0).rowwise().norm() / cfg.step;
    }
  }
  total /= static_cast<double>(checkpoints.size()) * cfg.n_probes;
  auto t = ScoreTable::make(ScoreKind::loss_curvature, {score_ids.begin(), score_ids.end()},
                            std::vector<double>(total.data(), total.data() + total.size()));
  t.wall_time = sw.seconds();
  return t;
}

inline ScoreTable loss_curvature_proxy(std::span<const ModelState> checkpoints, const Dataset& data,
                                       const CurvatureConfig& cfg) {
  const auto ids = data.train_ids();
  return loss_curvature_proxy(checkpoints, data, cfg, ids);
}

inline int curvature_checkpoint_interval(int epochs) { return std::max(1, epochs / 10); }

// ---------------------------------------------------------------------------
// Spearman rank correlation.

// Average ranks (1-based) with ties sharing the mean of their positions.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = r;
    i = j;
  }
  return ranks;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw ValidationError("correlation undefined for a constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw StructuralError("spearman inputs differ in length");
  if (a.size() < 3) throw ValidationError("spearman needs at least 3 pairs");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  return pearson(ra, rb);
}

// Over ids present and defined in both tables.
inline double spearman(const ScoreTable& a, const ScoreTable& b) {
  std::vector<double> x, y;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!ScoreTable::is_defined(a.scores[i])) continue;
    if (auto v = b.score_of(a.ids[i])) {
      x.push_back(a.scores[i]);
      y.push_back(*v);
    }
  }
  if (x.size() < 3) throw ValidationError("fewer than 3 common defined ids");
  return spearman(x, y);
}

// ---------------------------------------------------------------------------
// Fidelity / efficiency profile.

struct FidelityRow {
  ScoreKind proxy;
  double spearman_vs_mem = 0.0;
  double wall_time_s = 0.0;
  double pct_of_mem_time = 0.0;
  double pct_of_retrain_time = 0.0;
};

inline std::vector<FidelityRow> fidelity_report(const ScoreTable& mem, std::span<const ScoreTable> proxies,
                                                double retrain_time) {
  std::vector<FidelityRow> rows;
  for (const auto& p : proxies) {
    FidelityRow r;
    r.proxy = p.kind;
    r.spearman_vs_mem = spearman(p, mem);
    r.wall_time_s = p.wall_time;
    r.pct_of_mem_time = mem.wall_time > 0.0 ? 100.0 * p.wall_time / mem.wall_time : std::nan("");
    r.pct_of_retrain_time = retrain_time > 0.0 ? 100.0 * p.wall_time / retrain_time : std::nan("");
    rows.push_back(r);
  }
  return rows;
}

inline const std::vector<std::string>& fidelity_columns() {
  static const std::vector<std::string> cols{"proxy", "spearman_vs_mem", "wall_time_s", "pct_of_mem_time",
                                             "pct_of_retrain_time"};
  return cols;
}

}  // namespace ulab
