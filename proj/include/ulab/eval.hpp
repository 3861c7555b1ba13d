#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ulab/data.hpp"
#include "ulab/error.hpp"
#include "ulab/nn.hpp"
#include "ulab/rng.hpp"
#include "ulab/trainer.hpp"

namespace ulab {

// ---------------------------------------------------------------------------
// Tug-of-war

inline double tow_from_gaps(double gap_forget, double gap_retain, double gap_test) {
  return (1.0 - gap_forget) * (1.0 - gap_retain) * (1.0 - gap_test);
}

namespace detail {
inline void require_splits(const Dataset& data, const UnlearnTask& task) {
  if (task.forget_ids.empty()) throw ValidationError("forget set is empty");
  if (task.retain_ids.empty()) throw ValidationError("retain set is empty");
  if (data.test_ids().empty()) throw ValidationError("test split is empty");
}
}  // namespace detail

inline double tow(const ModelState& unlearned, const ModelState& retrained, const Dataset& data,
                  const UnlearnTask& task) {
  detail::require_splits(data, task);
  const auto test = data.test_ids();
  auto gap = [&](std::span<const std::size_t> ids) {
    return std::abs(accuracy(unlearned, data, ids) - accuracy(retrained, data, ids));
  };
  return tow_from_gaps(gap(task.forget_ids), gap(task.retain_ids), gap(test));
}

// ---------------------------------------------------------------------------
// Membership inference: a logistic "training vs non-training" classifier on
// (true-class probability, entropy, loss), fit on equal-size retain/test samples.

struct MiaConfig {
  std::size_t n_samples = 500;
  std::uint64_t seed = 0;
  int iterations = 500;
  double l2 = 1e-3;
  double lr = 0.5;
};

inline Matrix mia_features(const ModelState& model, const Dataset& data, std::span<const std::size_t> ids) {
  const auto b = data.batch(ids);
  const Matrix logits = forward(model, b);
  const Matrix probs = softmax(logits);
  const Vector loss = per_example_loss(logits, b.labels);
  Matrix f(probs.rows(), 3);
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    double h = 0.0;
    for (Eigen::Index c = 0; c < probs.cols(); ++c)
      if (probs(r, c) > 0.0) h -= probs(r, c) * std::log(probs(r, c));
    f(r, 0) = probs(r, b.labels[static_cast<std::size_t>(r)]);
    f(r, 1) = h;
    f(r, 2) = loss(r);
  }
  return f;
}

struct MiaClassifier {
  Vector mean = Vector::Zero(3);
  Vector scale = Vector::Ones(3);
  Vector weights = Vector::Zero(3);
  double bias = 0.0;

  // true = "training" (positive class)
  bool predicts_member(const Eigen::RowVectorXd& features) const {
    const Vector z = (features.transpose() - mean).cwiseQuotient(scale);
    return z.dot(weights) + bias >= 0.0;
  }
};

// Fraction of rows classified "non-training".
inline double true_negative_rate(const MiaClassifier& clf, const Matrix& features) {
  if (features.rows() == 0) throw ValidationError("no examples to score");
  std::size_t neg = 0;
  for (Eigen::Index r = 0; r < features.rows(); ++r) neg += !clf.predicts_member(features.row(r));
  return static_cast<double>(neg) / static_cast<double>(features.rows());
}

inline MiaClassifier fit_mia_classifier(const Matrix& members, const Matrix& non_members, const MiaConfig& cfg) {
  if (members.rows() == 0 || non_members.rows() == 0)
    throw ValidationError("membership classifier needs both training and non-training examples");
  const Eigen::Index n = members.rows() + non_members.rows();
  Matrix x(n, members.cols());
  x << members, non_members;
  Vector y(n);
  y << Vector::Ones(members.rows()), Vector::Zero(non_members.rows());

  MiaClassifier clf;
  clf.mean = x.colwise().mean().transpose();
  const Matrix centred = x.rowwise() - clf.mean.transpose();
  clf.scale = (centred.colwise().squaredNorm() / static_cast<double>(n)).cwiseSqrt().transpose();
  for (Eigen::Index j = 0; j < clf.scale.size(); ++j)
    if (!(clf.scale(j) > 1e-12)) clf.scale(j) = 1.0;
  const Matrix z = centred.array().rowwise() / clf.scale.transpose().array();

  for (int it = 0; it < cfg.iterations; ++it) {
    const Vector margin = (z * clf.weights).array() + clf.bias;
    const Vector p = (1.0 / (1.0 + (-margin.array()).exp())).matrix();
    const Vector err = p - y;
    const Vector gw = z.transpose() * err / static_cast<double>(n) + cfg.l2 * clf.weights;
    const double gb = err.mean();
    clf.weights -= cfg.lr * gw;
    clf.bias -= cfg.lr * gb;
  }
  return clf;
}

inline MiaClassifier fit_mia_classifier(const ModelState& model, const Dataset& data,
                                        std::span<const std::size_t> retain_ids, const MiaConfig& cfg) {
  const auto test = data.test_ids();
  const std::size_t n = std::min({cfg.n_samples, retain_ids.size(), test.size()});
  if (n == 0) throw ValidationError("membership classifier needs both training and non-training examples");
  const auto pr = permutation(retain_ids.size(), derive_seed(cfg.seed, Stream::mia, 0));
  const auto pt = permutation(test.size(), derive_seed(cfg.seed, Stream::mia, 1));
  std::vector<std::size_t> rs, ts;
  for (std::size_t k = 0; k < n; ++k) {
    rs.push_back(retain_ids[pr[k]]);
    ts.push_back(test[pt[k]]);
  }
  return fit_mia_classifier(mia_features(model, data, rs), mia_features(model, data, ts), cfg);
}

// Proportion of forget examples the classifier calls "non-training".
inline double mia_score(const ModelState& model, const Dataset& data, const UnlearnTask& task, const MiaConfig& cfg) {
  if (task.forget_ids.empty()) throw ValidationError("forget set is empty");
  const auto clf = fit_mia_classifier(model, data, task.retain_ids, cfg);
  return true_negative_rate(clf, mia_features(model, data, task.forget_ids));
}

inline double tow_mia_from_gaps(double mia_gap, double gap_retain, double gap_test) {
  return (1.0 - mia_gap) * (1.0 - gap_retain) * (1.0 - gap_test);
}

// ---------------------------------------------------------------------------
// Full report for one unlearned model against its retrained oracle.

struct EvalReport {
  double acc_forget_u = 0, acc_retain_u = 0, acc_test_u = 0;
  double acc_forget_r = 0, acc_retain_r = 0, acc_test_r = 0;
  double mia_u = 0, mia_r = 0;
  double tow = 0, tow_mia = 0;
  double wall_time_s = 0;
};

inline EvalReport evaluate(const ModelState& unlearned, const ModelState& retrained, const Dataset& data,
                           const UnlearnTask& task, const MiaConfig& mia_cfg, double wall_time_s = 0.0) {
  detail::require_splits(data, task);
  const auto test = data.test_ids();
  EvalReport r;
  r.acc_forget_u = accuracy(unlearned, data, task.forget_ids);
  r.acc_retain_u = accuracy(unlearned, data, task.retain_ids);
  r.acc_test_u = accuracy(unlearned, data, test);
  r.acc_forget_r = accuracy(retrained, data, task.forget_ids);
  r.acc_retain_r = accuracy(retrained, data, task.retain_ids);
  r.acc_test_r = accuracy(retrained, data, test);
  r.mia_u = mia_score(unlearned, data, task, mia_cfg);
  r.mia_r = mia_score(retrained, data, task, mia_cfg);
  const double gr = std::abs(r.acc_retain_u - r.acc_retain_r);
  const double gt = std::abs(r.acc_test_u - r.acc_test_r);
  r.tow = tow_from_gaps(std::abs(r.acc_forget_u - r.acc_forget_r), gr, gt);
  r.tow_mia = tow_mia_from_gaps(std::abs(r.mia_u - r.mia_r), gr, gt);
  r.wall_time_s = wall_time_s;
  return r;
}

inline double tow_mia(const ModelState& unlearned, const ModelState& retrained, const Dataset& data,
                      const UnlearnTask& task, const MiaConfig& cfg) {
  return evaluate(unlearned, retrained, data, task, cfg).tow_mia;
}

inline nlohmann::json to_json(const EvalReport& r) {
  return {{"acc_forget_u", r.acc_forget_u}, {"acc_retain_u", r.acc_retain_u}, {"acc_test_u", r.acc_test_u},
          {"acc_forget_r", r.acc_forget_r}, {"acc_retain_r", r.acc_retain_r}, {"acc_test_r", r.acc_test_r},
          {"mia_u", r.mia_u},               {"mia_r", r.mia_r},               {"tow", r.tow},
          {"tow_mia", r.tow_mia},           {"wall_time_s", r.wall_time_s}};
}

// ---------------------------------------------------------------------------
// Inequality of a score distribution. Negative values are clamped to zero.

namespace detail {
inline std::vector<double> sorted_nonnegative(std::span<const double> scores) {
  if (scores.empty()) throw ValidationError("gini/lorenz need at least one value");
  std::vector<double> x;
  x.reserve(scores.size());
  for (double v : scores) {
    if (std::isnan(v)) throw ValidationError("gini/lorenz input contains NaN");
    x.push_back(std::max(0.0, v));
  }
  std::sort(x.begin(), x.end());
  if (x.back() == 0.0) throw ValidationError("gini/lorenz undefined for all-zero input");
  return x;
}
}  // namespace detail

// G = 2 * sum_i i * x_(i) / (n * sum x) - (n + 1) / n, with 1-based ranks over ascending x.
inline double gini(std::span<const double> scores) {
  const auto x = detail::sorted_nonnegative(scores);
  const double n = static_cast<double>(x.size());
  double weighted = 0.0, total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    weighted += static_cast<double>(i + 1) * x[i];
    total += x[i];
  }
  return std::clamp(2.0 * weighted / (n * total) - (n + 1.0) / n, 0.0, 1.0);
}

struct LorenzPoint {
  double population = 0;  // alpha: cumulative share of examples
  double share = 0;       // beta: cumulative share of the total score
};

// n + 1 points from (0, 0) to (1, 1) over ascending scores.
inline std::vector<LorenzPoint> lorenz(std::span<const double> scores) {
  const auto x = detail::sorted_nonnegative(scores);
  double total = 0.0;
  for (double v : x) total += v;
  std::vector<LorenzPoint> pts{{0.0, 0.0}};
  double cum = 0.0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    cum += x[i];
    pts.push_back({static_cast<double>(i + 1) / n, cum / total});
  }
  pts.back() = {1.0, 1.0};
  return pts;
}

}  // namespace ulab
