#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ulab/csv.hpp"
#include "ulab/error.hpp"

namespace ulab {

enum class ScoreKind {
  memorization,
  confidence,
  max_confidence,
  entropy,
  binary_accuracy,
  holdout_retraining,
  loss_curvature,
};

inline constexpr ScoreKind kAllProxyKinds[] = {ScoreKind::confidence,         ScoreKind::max_confidence,
                                               ScoreKind::entropy,            ScoreKind::binary_accuracy,
                                               ScoreKind::holdout_retraining, ScoreKind::loss_curvature};

inline std::string_view to_string(ScoreKind k) {
  switch (k) {
    case ScoreKind::memorization: return "memorization";
    case ScoreKind::confidence: return "confidence";
    case ScoreKind::max_confidence: return "max_confidence";
    case ScoreKind::entropy: return "entropy";
    case ScoreKind::binary_accuracy: return "binary_accuracy";
    case ScoreKind::holdout_retraining: return "holdout_retraining";
    case ScoreKind::loss_curvature: return "loss_curvature";
  }
  return "?";
}

inline ScoreKind parse_score_kind(std::string_view s) {
  for (auto k : {ScoreKind::memorization, ScoreKind::confidence, ScoreKind::max_confidence, ScoreKind::entropy,
                 ScoreKind::binary_accuracy, ScoreKind::holdout_retraining, ScoreKind::loss_curvature})
    if (to_string(k) == s) return k;
  throw ValidationError("unknown score kind '" + std::string(s) + "'");
}

// +1 when larger values mean "more memorized", -1 otherwise.
inline int memorization_alignment(ScoreKind k) {
  switch (k) {
    case ScoreKind::memorization:
    case ScoreKind::holdout_retraining:
    case ScoreKind::loss_curvature: return +1;
    default: return -1;
  }
}

// Per-example scores keyed by example id (ids kept sorted ascending).
// An undefined score is stored as NaN and is never replaced by a number.
struct ScoreTable {
  ScoreKind kind = ScoreKind::memorization;
  int alignment = +1;
  std::vector<std::size_t> ids;
  std::vector<double> scores;
  double wall_time = 0.0;

  // Estimator metadata (memorization only).
  std::optional<int> n_models;
  std::optional<double> subset_fraction;

  static ScoreTable make(ScoreKind kind, std::vector<std::size_t> ids, std::vector<double> scores) {
    if (ids.size() != scores.size()) throw StructuralError("ids/scores size mismatch");
    ScoreTable t;
    t.kind = kind;
    t.alignment = memorization_alignment(kind);
    std::vector<std::size_t> order(ids.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return ids[a] < ids[b]; });
    for (auto i : order) {
      if (!t.ids.empty() && t.ids.back() == ids[i]) throw ValidationError("duplicate example id in score table");
      t.ids.push_back(ids[i]);
      t.scores.push_back(scores[i]);
    }
    return t;
  }

  std::size_t size() const { return ids.size(); }

  static bool is_defined(double v) { return !std::isnan(v); }

  std::optional<std::size_t> index_of(std::size_t id) const {
    auto it = std::lower_bound(ids.begin(), ids.end(), id);
    if (it == ids.end() || *it != id) return std::nullopt;
    return static_cast<std::size_t>(it - ids.begin());
  }

  // nullopt for unknown ids and undefined scores alike.
  std::optional<double> score_of(std::size_t id) const {
    auto i = index_of(id);
    if (!i || !is_defined(scores[*i])) return std::nullopt;
    return scores[*i];
  }

  bool covers(std::size_t id) const { return index_of(id).has_value(); }

  std::vector<std::size_t> undefined_ids() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (!is_defined(scores[i])) out.push_back(ids[i]);
    return out;
  }

  // Scores of defined entries, in id order.
  std::vector<double> defined_values() const {
    std::vector<double> out;
    for (double v : scores)
      if (is_defined(v)) out.push_back(v);
    return out;
  }

  double mean_over(const std::vector<std::size_t>& subset) const {
    double s = 0.0;
    std::size_t n = 0;
    for (auto id : subset)
      if (auto v = score_of(id)) {
        s += *v;
        ++n;
      }
    return n ? s / static_cast<double>(n) : std::nan("");
  }
};

// CSV: example_id,kind,score,alignment. Undefined scores are written as NA.
inline void write_score_csv(std::ostream& os, const ScoreTable& t, std::uint64_t digest, std::uint64_t seed) {
  csv::write_provenance(os, digest, seed);
  csv::write_row(os, {"example_id", "kind", "score", "alignment"});
  for (std::size_t i = 0; i < t.size(); ++i)
    csv::write_row(os, {std::to_string(t.ids[i]), std::string(to_string(t.kind)), csv::format(t.scores[i]),
                        std::to_string(t.alignment)});
}

inline ScoreTable read_score_csv(std::istream& is) {
  const auto tab = csv::read_table(is);
  const auto c_id = tab.column("example_id"), c_kind = tab.column("kind"), c_score = tab.column("score");
  if (tab.rows.empty()) throw ValidationError("empty score table");
  std::vector<std::size_t> ids;
  std::vector<double> scores;
  const ScoreKind kind = parse_score_kind(tab.rows.front()[c_kind]);
  for (const auto& r : tab.rows) {
    if (parse_score_kind(r[c_kind]) != kind) throw ValidationError("mixed kinds in score table");
    ids.push_back(csv::parse_int<std::size_t>(r[c_id]));
    scores.push_back(csv::parse_double(r[c_score]));
  }
  return ScoreTable::make(kind, std::move(ids), std::move(scores));
}

inline nlohmann::json score_sidecar(const ScoreTable& t, std::uint64_t digest, std::uint64_t seed) {
  nlohmann::json j;
  j["kind"] = std::string(to_string(t.kind));
  j["T"] = t.n_models ? nlohmann::json(*t.n_models) : nlohmann::json(nullptr);
  j["p"] = t.subset_fraction ? nlohmann::json(*t.subset_fraction) : nlohmann::json(nullptr);
  j["wall_time_seconds"] = t.wall_time;
  j["undefined_ids"] = t.undefined_ids();
  j["config_digest"] = csv::hex64(digest);
  j["seed"] = seed;
  return j;
}

}  // namespace ulab
