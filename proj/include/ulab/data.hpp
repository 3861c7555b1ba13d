#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ulab/csv.hpp"
#include "ulab/error.hpp"
#include "ulab/nn.hpp"
#include "ulab/rng.hpp"
#include "ulab/score_table.hpp"

namespace ulab {

enum class Provenance { clean, atypical, noisy };
enum class Split { train, holdout_test };

inline std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::clean: return "clean";
    case Provenance::atypical: return "atypical";
    case Provenance::noisy: return "noisy";
  }
  return "?";
}

inline std::string_view to_string(Split s) { return s == Split::train ? "train" : "holdout_test"; }

inline Provenance parse_provenance(std::string_view s) {
  if (s == "clean") return Provenance::clean;
  if (s == "atypical") return Provenance::atypical;
  if (s == "noisy") return Provenance::noisy;
  throw ValidationError("unknown provenance '" + std::string(s) + "'");
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "holdout_test") return Split::holdout_test;
  throw ValidationError("unknown split '" + std::string(s) + "'");
}

struct DatasetSpec {
  int n_classes = 10;
  std::size_t n_train = 2000;
  std::size_t n_test = 1000;
  int input_dim = 20;
  double atypical_fraction = 0.1;
  double noise_fraction = 0.1;
  std::uint64_t seed = 0;

  // Generator geometry, in units of the main-cluster radius (sigma).
  double class_separation = 2.5;  // expected distance between two class means
  double atypical_offset = 3.0;   // subpopulation centre distance from its class mean
  double atypical_spread = 0.25;  // subpopulation radius
  int subpops_per_class = 6;
};

// Example ids are row indices into `features`: train rows first, then holdout/test.
struct Dataset {
  int n_classes = 0;
  int input_dim = 0;
  std::uint64_t seed = 0;
  Matrix features;                   // n x input_dim
  std::vector<int> labels;           // presented label (flipped for noisy examples)
  std::vector<int> original_labels;  // label before noise
  std::vector<Provenance> provenance;
  std::vector<Split> split;

  std::size_t size() const { return labels.size(); }

  std::vector<std::size_t> ids_in(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < split.size(); ++i)
      if (split[i] == s) out.push_back(i);
    return out;
  }
  std::vector<std::size_t> train_ids() const { return ids_in(Split::train); }
  std::vector<std::size_t> test_ids() const { return ids_in(Split::holdout_test); }

  std::vector<std::size_t> ids_with(Provenance p, Split s = Split::train) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < size(); ++i)
      if (provenance[i] == p && split[i] == s) out.push_back(i);
    return out;
  }

  Batch batch(std::span<const std::size_t> ids) const {
    Batch b{Matrix(static_cast<Eigen::Index>(ids.size()), input_dim), std::vector<int>(ids.size())};
    for (std::size_t k = 0; k < ids.size(); ++k) {
      b.inputs.row(static_cast<Eigen::Index>(k)) = features.row(static_cast<Eigen::Index>(ids[k]));
      b.labels[k] = labels[ids[k]];
    }
    return b;
  }
};

inline std::size_t rounded_count(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
}

inline void validate(const DatasetSpec& spec) {
  if (!(spec.atypical_fraction >= 0.0 && spec.atypical_fraction <= 0.5))
    throw ValidationError("atypical_fraction must be in [0, 0.5]");
  if (!(spec.noise_fraction >= 0.0 && spec.noise_fraction <= 0.5))
    throw ValidationError("noise_fraction must be in [0, 0.5]");
  if (spec.n_train == 0 || spec.n_test == 0) throw ValidationError("n_train and n_test must be > 0");
  if (spec.n_classes < 2) throw ValidationError("n_classes must be >= 2");
  if (spec.input_dim < 1) throw ValidationError("input_dim must be >= 1");
  if (spec.subpops_per_class < 1) throw ValidationError("subpops_per_class must be >= 1");
  if (!(spec.class_separation > 0.0)) throw ValidationError("class_separation must be > 0");
  if (!(spec.atypical_spread > 0.0)) throw ValidationError("atypical_spread must be > 0");
}

// Per class: a main Gaussian cluster plus `subpops_per_class` small off-cluster
// subpopulations. Exactly round(atypical_fraction * n) examples of each split
// are drawn from subpopulations, and exactly round(noise_fraction * n_train)
// train examples get a label drawn uniformly from the other classes.
inline Dataset make_dataset(const DatasetSpec& spec) {
  validate(spec);
  const int C = spec.n_classes;
  const int d = spec.input_dim;
  const double coord_scale = 1.0 / std::sqrt(static_cast<double>(d));

  Rng geo(derive_seed(spec.seed, Stream::data, 0));
  auto random_direction = [&] {
    Vector u(d);
    for (int j = 0; j < d; ++j) u(j) = geo.normal();
    return Vector(u / u.norm());
  };

  Matrix means(C, d);
  for (int c = 0; c < C; ++c)
    for (int j = 0; j < d; ++j) means(c, j) = spec.class_separation * std::sqrt(0.5) * coord_scale * geo.normal();
  // Subpopulations sit off-cluster, displaced toward a randomly chosen other class.
  const int S = spec.subpops_per_class;
  Matrix subpop_centres(C * S, d);
  for (int c = 0; c < C; ++c)
    for (int s = 0; s < S; ++s) {
      int other = static_cast<int>(geo.below(static_cast<std::uint64_t>(C - 1)));
      if (other >= c) ++other;
      const Vector towards = (means.row(other) - means.row(c)).transpose();
      const Vector dir = (towards / towards.norm() + 0.5 * random_direction()).normalized();
      subpop_centres.row(c * S + s) = means.row(c) + spec.atypical_offset * dir.transpose();
    }

  Dataset ds;
  ds.n_classes = C;
  ds.input_dim = d;
  ds.seed = spec.seed;
  const std::size_t n = spec.n_train + spec.n_test;
  ds.features = Matrix(static_cast<Eigen::Index>(n), d);
  ds.labels.resize(n);
  ds.original_labels.resize(n);
  ds.provenance.assign(n, Provenance::clean);
  ds.split.resize(n);

  auto fill_split = [&](std::size_t offset, std::size_t count, Split sp, std::uint64_t tag) {
    const auto perm = permutation(count, derive_seed(spec.seed, Stream::data, tag, 1));
    const std::size_t n_atyp = rounded_count(spec.atypical_fraction, count);
    std::vector<bool> atypical(count, false);
    for (std::size_t k = 0; k < n_atyp; ++k) atypical[perm[k]] = true;
    Rng rng(derive_seed(spec.seed, Stream::data, tag, 2));
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t id = offset + k;
      const int c = static_cast<int>(k % static_cast<std::size_t>(C));
      ds.split[id] = sp;
      ds.labels[id] = ds.original_labels[id] = c;
      Vector centre = means.row(c).transpose();
      double spread = 1.0;
      if (atypical[k]) {
        ds.provenance[id] = Provenance::atypical;
        centre = subpop_centres.row(c * S + static_cast<int>(rng.below(static_cast<std::uint64_t>(S)))).transpose();
        spread = spec.atypical_spread;
      }
      for (int j = 0; j < d; ++j)
        ds.features(static_cast<Eigen::Index>(id), j) = centre(j) + spread * coord_scale * rng.normal();
    }
  };
  fill_split(0, spec.n_train, Split::train, 1);
  fill_split(spec.n_train, spec.n_test, Split::holdout_test, 2);

  const std::size_t n_noisy = rounded_count(spec.noise_fraction, spec.n_train);
  const auto perm = permutation(spec.n_train, derive_seed(spec.seed, Stream::noise));
  Rng flip(derive_seed(spec.seed, Stream::noise, 1));
  for (std::size_t k = 0; k < n_noisy; ++k) {
    const std::size_t id = perm[k];
    const int orig = ds.original_labels[id];
    int nl = static_cast<int>(flip.below(static_cast<std::uint64_t>(C - 1)));
    if (nl >= orig) ++nl;
    ds.labels[id] = nl;
    ds.provenance[id] = Provenance::noisy;
  }
  return ds;
}

// CSV: id,split,label,original_label,provenance,f0..f{d-1}
inline void write_dataset_csv(std::ostream& os, const Dataset& ds, std::uint64_t digest, std::uint64_t seed) {
  csv::write_provenance(os, digest, seed);
  std::vector<std::string> header{"id", "split", "label", "original_label", "provenance"};
  for (int j = 0; j < ds.input_dim; ++j) header.push_back("f" + std::to_string(j));
  csv::write_row(os, header);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::vector<std::string> row{std::to_string(i), std::string(to_string(ds.split[i])), std::to_string(ds.labels[i]),
                                 std::to_string(ds.original_labels[i]), std::string(to_string(ds.provenance[i]))};
    for (int j = 0; j < ds.input_dim; ++j) row.push_back(csv::format(ds.features(static_cast<Eigen::Index>(i), j)));
    csv::write_row(os, row);
  }
}

inline Dataset read_dataset_csv(std::istream& is, int n_classes) {
  const auto tab = csv::read_table(is);
  const auto c_id = tab.column("id"), c_split = tab.column("split"), c_label = tab.column("label"),
             c_orig = tab.column("original_label"), c_prov = tab.column("provenance");
  std::vector<std::size_t> feat_cols;
  for (int j = 0;; ++j) {
    auto it = std::find(tab.header.begin(), tab.header.end(), "f" + std::to_string(j));
    if (it == tab.header.end()) break;
    feat_cols.push_back(static_cast<std::size_t>(it - tab.header.begin()));
  }
  if (feat_cols.empty()) throw ValidationError("dataset CSV has no feature columns");
  Dataset ds;
  ds.n_classes = n_classes;
  ds.input_dim = static_cast<int>(feat_cols.size());
  const std::size_t n = tab.rows.size();
  ds.features = Matrix(static_cast<Eigen::Index>(n), ds.input_dim);
  ds.labels.resize(n);
  ds.original_labels.resize(n);
  ds.provenance.resize(n);
  ds.split.resize(n);
  for (const auto& r : tab.rows) {
    const auto id = csv::parse_int<std::size_t>(r[c_id]);
    if (id >= n) throw ValidationError("dataset ids must be 0..n-1");
    ds.split[id] = parse_split(r[c_split]);
    ds.labels[id] = csv::parse_int<int>(r[c_label]);
    ds.original_labels[id] = csv::parse_int<int>(r[c_orig]);
    ds.provenance[id] = parse_provenance(r[c_prov]);
    if (ds.labels[id] < 0 || ds.labels[id] >= n_classes) throw ValidationError("label out of range");
    for (std::size_t j = 0; j < feat_cols.size(); ++j)
      ds.features(static_cast<Eigen::Index>(id), static_cast<Eigen::Index>(j)) = csv::parse_double(r[feat_cols[j]]);
  }
  return ds;
}

// Disjoint forget/retain partition of a pool of train ids (both sorted).
struct UnlearnTask {
  std::vector<std::size_t> forget_ids;
  std::vector<std::size_t> retain_ids;

  std::vector<std::size_t> pool() const {
    std::vector<std::size_t> out;
    std::merge(forget_ids.begin(), forget_ids.end(), retain_ids.begin(), retain_ids.end(), std::back_inserter(out));
    return out;
  }
};

inline UnlearnTask make_task(std::vector<std::size_t> pool, std::vector<std::size_t> forget) {
  std::sort(pool.begin(), pool.end());
  std::sort(forget.begin(), forget.end());
  if (std::adjacent_find(forget.begin(), forget.end()) != forget.end()) throw ValidationError("duplicate forget id");
  if (!std::includes(pool.begin(), pool.end(), forget.begin(), forget.end()))
    throw ValidationError("forget set is not a subset of the pool");
  UnlearnTask t;
  std::set_difference(pool.begin(), pool.end(), forget.begin(), forget.end(), std::back_inserter(t.retain_ids));
  t.forget_ids = std::move(forget);
  return t;
}

enum class Band { low, medium, high };

// Defined-score ids of `pool` keyed by alignment * score, sorted by (key, id).
inline std::vector<std::pair<double, std::size_t>> aligned_order(const ScoreTable& scores,
                                                                 std::span<const std::size_t> pool) {
  std::vector<std::pair<double, std::size_t>> keyed;
  for (auto id : pool) {
    if (!scores.covers(id)) throw ValidationError("score table does not cover example " + std::to_string(id));
    if (auto v = scores.score_of(id)) keyed.emplace_back(scores.alignment * *v, id);
  }
  std::sort(keyed.begin(), keyed.end());
  return keyed;
}

// Forget set made of `band_size` examples from each requested band: the lowest,
// the ones centred on the median rank, and the highest aligned scores. Bands are
// rank windows over the sorted keys; inside a group of tied keys the window slots
// go to the lowest ids of the group, bands taken in low, medium, high order.
// Examples with undefined scores are never selected but stay in the retain set.
inline UnlearnTask select_forget(const ScoreTable& scores, std::span<const std::size_t> pool, std::size_t band_size,
                                 std::span<const Band> bands = std::array{Band::low, Band::medium, Band::high}) {
  const auto keyed = aligned_order(scores, pool);
  const std::size_t n = keyed.size();
  if (band_size == 0) throw ValidationError("band size must be > 0");
  if (3 * band_size > n)
    throw ValidationError("not enough scored examples: need 3*" + std::to_string(band_size) + ", have " +
                          std::to_string(n));
  std::vector<bool> slot(n, false);
  for (Band b : bands) {
    std::size_t start = 0;
    switch (b) {
      case Band::low: start = 0; break;
      case Band::medium: start = (n - band_size) / 2; break;
      case Band::high: start = n - band_size; break;
    }
    for (std::size_t k = start; k < start + band_size; ++k) slot[k] = true;
  }
  std::vector<std::size_t> forget;
  for (std::size_t g = 0; g < n;) {
    std::size_t e = g;
    std::size_t taken = 0;
    while (e < n && keyed[e].first == keyed[g].first) taken += slot[e++];
    // ids within a tie group are already ascending
    for (std::size_t k = 0; k < taken; ++k) forget.push_back(keyed[g + k].second);
    g = e;
  }
  return make_task(std::vector<std::size_t>(pool.begin(), pool.end()), std::move(forget));
}

}  // namespace ulab
