#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ulab/csv.hpp"
#include "ulab/data.hpp"
#include "ulab/digest.hpp"
#include "ulab/error.hpp"
#include "ulab/eval.hpp"
#include "ulab/memorization.hpp"
#include "ulab/proxies.hpp"
#include "ulab/rum.hpp"
#include "ulab/trainer.hpp"
#include "ulab/unlearn.hpp"

namespace ulab {

struct RumBlock {
  int k = 3;
  std::vector<Approach> approaches{Approach::rum_f, Approach::vanilla, Approach::shuffle};
  std::size_t band_size = 100;
  std::vector<ScoreKind> proxies{ScoreKind::confidence, ScoreKind::binary_accuracy, ScoreKind::holdout_retraining};
  ScoreKind sequential_proxy = ScoreKind::confidence;
  int sequential_steps = 3;
};

struct ExperimentConfig {
  std::vector<std::uint64_t> seeds;
  std::string output_dir = "out";

  DatasetSpec dataset;
  ModelSpec model;
  TrainConfig train;
  int mem_models = 100;
  double mem_subset_fraction = 0.7;
  std::vector<ScoreKind> proxy_kinds{std::begin(kAllProxyKinds), std::end(kAllProxyKinds)};
  HoldoutConfig holdout;
  CurvatureConfig curvature;
  std::vector<Algorithm> algorithms{Algorithm::neggrad_plus};
  UnlearnConfig unlearn;
  RumBlock rum;
  MiaConfig mia;

  std::map<std::string, int> block_lines;  // section name -> header line

  bool has_block(const std::string& name) const { return block_lines.count(name) > 0; }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(std::string_view v) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= v.size()) {
    const auto comma = v.find(',', pos);
    const auto item = trim(v.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

template <typename T>
T parse_integer(std::string_view v) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) throw ValidationError("expected an integer, got '" + std::string(v) + "'");
  return out;
}

inline double parse_real(std::string_view v) {
  try {
    return csv::parse_double(v);
  } catch (const std::exception&) {
    throw ValidationError("expected a number, got '" + std::string(v) + "'");
  }
}

inline int parse_positive(std::string_view v) {
  const int x = parse_integer<int>(v);
  if (x < 1) throw ValidationError("must be >= 1");
  return x;
}

inline int parse_nonnegative(std::string_view v) {
  const int x = parse_integer<int>(v);
  if (x < 0) throw ValidationError("must be >= 0");
  return x;
}

template <typename T, typename Parse>
std::vector<T> parse_list(std::string_view v, Parse parse) {
  std::vector<T> out;
  for (const auto& item : split_list(v)) out.push_back(parse(item));
  return out;
}

template <typename T>
std::vector<T> nonempty(std::vector<T> v) {
  if (v.empty()) throw ValidationError("list must not be empty");
  return v;
}

using Handler = std::function<void(std::string_view)>;
using Section = std::map<std::string, Handler, std::less<>>;

inline std::map<std::string, Section, std::less<>> handlers(ExperimentConfig& c, std::optional<double>& holdout_lr) {
  std::map<std::string, Section, std::less<>> h;
  h["experiment"] = {
      {"seeds", [&](auto v) { c.seeds = nonempty(parse_list<std::uint64_t>(v, parse_integer<std::uint64_t>)); }},
      {"output_dir", [&](auto v) { c.output_dir = std::string(v); }},
  };
  auto& d = c.dataset;
  h["dataset"] = {
      {"n_classes", [&](auto v) { d.n_classes = parse_integer<int>(v); }},
      {"n_train", [&](auto v) { d.n_train = parse_integer<std::size_t>(v); }},
      {"n_test", [&](auto v) { d.n_test = parse_integer<std::size_t>(v); }},
      {"input_dim", [&](auto v) { d.input_dim = parse_positive(v); }},
      {"atypical_fraction", [&](auto v) { d.atypical_fraction = parse_real(v); }},
      {"noise_fraction", [&](auto v) { d.noise_fraction = parse_real(v); }},
      {"class_separation", [&](auto v) { d.class_separation = parse_real(v); }},
      {"atypical_offset", [&](auto v) { d.atypical_offset = parse_real(v); }},
      {"atypical_spread", [&](auto v) { d.atypical_spread = parse_real(v); }},
      {"subpops_per_class", [&](auto v) { d.subpops_per_class = parse_positive(v); }},
  };
  h["model"] = {
      {"hidden", [&](auto v) { c.model.hidden = parse_list<int>(v, parse_positive); }},
      {"activation", [&](auto v) { c.model.activation = parse_activation(v); }},
  };
  auto& t = c.train;
  h["train"] = {
      {"epochs", [&](auto v) { t.epochs = parse_positive(v); }},
      {"batch_size", [&](auto v) { t.batch_size = parse_positive(v); }},
      {"base_lr", [&](auto v) { t.base_lr = parse_real(v); }},
      {"schedule", [&](auto v) { t.schedule.kind = parse_schedule(v); }},
      {"milestones", [&](auto v) { t.schedule.milestones = parse_list<int>(v, parse_nonnegative); }},
      {"factor", [&](auto v) { t.schedule.factor = parse_real(v); }},
      {"momentum", [&](auto v) { t.momentum = parse_real(v); }},
      {"weight_decay", [&](auto v) { t.weight_decay = parse_real(v); }},
  };
  h["mem"] = {
      {"n_models", [&](auto v) { c.mem_models = parse_integer<int>(v); }},
      {"subset_fraction", [&](auto v) { c.mem_subset_fraction = parse_real(v); }},
  };
  h["proxies"] = {
      {"kinds", [&](auto v) {
         c.proxy_kinds = nonempty(parse_list<ScoreKind>(v, parse_score_kind));
         for (auto k : c.proxy_kinds)
           if (k == ScoreKind::memorization) throw ValidationError("memorization is not a proxy");
       }},
      {"holdout_epochs", [&](auto v) { c.holdout.epochs = parse_nonnegative(v); }},
      {"holdout_lr", [&](auto v) { holdout_lr = parse_real(v); }},
      {"curvature_probes", [&](auto v) { c.curvature.n_probes = parse_positive(v); }},
      {"curvature_step", [&](auto v) { c.curvature.step = parse_real(v); }},
  };
  auto& u = c.unlearn;
  h["unlearn"] = {
      {"algorithms", [&](auto v) {
         c.algorithms = nonempty(parse_list<Algorithm>(v, parse_algorithm));
         for (auto a : c.algorithms)
           if (a == Algorithm::retrain) throw ValidationError("retrain is always reported as the reference row");
       }},
      {"epochs", [&](auto v) { u.epochs = parse_nonnegative(v); }},
      {"lr", [&](auto v) { u.lr = parse_real(v); }},
      {"batch_size", [&](auto v) { u.batch_size = parse_positive(v); }},
      {"momentum", [&](auto v) { u.momentum = parse_real(v); }},
      {"weight_decay", [&](auto v) { u.weight_decay = parse_real(v); }},
      {"beta", [&](auto v) { u.beta = parse_real(v); }},
      {"gamma", [&](auto v) { u.gamma = parse_real(v); }},
      {"sparsity_ratio", [&](auto v) { u.sparsity_ratio = parse_real(v); }},
  };
  auto& r = c.rum;
  h["rum"] = {
      {"k", [&](auto v) { r.k = parse_positive(v); }},
      {"approaches", [&](auto v) { r.approaches = nonempty(parse_list<Approach>(v, parse_approach)); }},
      {"band_size", [&](auto v) { r.band_size = static_cast<std::size_t>(parse_positive(v)); }},
      {"proxies", [&](auto v) {
         r.proxies = nonempty(parse_list<ScoreKind>(v, parse_score_kind));
         for (auto k : r.proxies)
           if (k == ScoreKind::memorization) throw ValidationError("memorization is not a proxy");
       }},
      {"sequential_proxy", [&](auto v) {
         r.sequential_proxy = parse_score_kind(v);
         if (r.sequential_proxy == ScoreKind::memorization) throw ValidationError("memorization is not a proxy");
       }},
      {"sequential_steps", [&](auto v) { r.sequential_steps = parse_positive(v); }},
  };
  h["eval"] = {
      {"mia_samples", [&](auto v) { c.mia.n_samples = static_cast<std::size_t>(parse_positive(v)); }},
      {"mia_iterations", [&](auto v) { c.mia.iterations = parse_positive(v); }},
      {"mia_l2", [&](auto v) { c.mia.l2 = parse_real(v); }},
      {"mia_lr", [&](auto v) { c.mia.lr = parse_real(v); }},
  };
  return h;
}

// Cross-field checks, reported against the block header line.
inline void validate_blocks(const ExperimentConfig& c) {
  auto check = [&](const char* block, auto&& fn) {
    try {
      fn();
    } catch (const ValidationError& e) {
      auto it = c.block_lines.find(block);
      throw ConfigError(e.what(), it == c.block_lines.end() ? 0 : it->second, block);
    }
  };
  check("dataset", [&] { validate(c.dataset); });
  check("train", [&] {
    validate(c.train);
    if (c.train.schedule.kind == ScheduleKind::multistep && c.train.schedule.milestones.empty())
      throw ValidationError("multistep schedule needs milestones");
  });
  check("mem", [&] {
    if (c.mem_models < 2) throw ValidationError("n_models must be >= 2");
    if (!(c.mem_subset_fraction > 0.0 && c.mem_subset_fraction < 1.0))
      throw ValidationError("subset_fraction must be in (0,1)");
  });
  check("proxies", [&] {
    validate(c.curvature);
    if (!(c.holdout.lr > 0.0)) throw ValidationError("holdout_lr must be > 0");
  });
  check("unlearn", [&] { validate(c.unlearn); });
  check("rum", [&] {
    for (auto a : c.rum.approaches)
      if (a == Approach::shuffle && c.rum.k < 2) throw ValidationError("shuffle needs k >= 2");
  });
  check("eval", [&] {
    if (!(c.mia.l2 >= 0.0)) throw ValidationError("mia_l2 must be >= 0");
    if (!(c.mia.lr > 0.0)) throw ValidationError("mia_lr must be > 0");
  });
}

}  // namespace detail

// Sectioned key = value text. '#' or ';' starts a comment line; '#' after
// whitespace starts a trailing comment. Unknown sections or keys are errors.
inline ExperimentConfig parse_config(std::istream& is) {
  ExperimentConfig c;
  std::optional<double> holdout_lr;
  const auto table = detail::handlers(c, holdout_lr);
  std::set<std::string> seen;
  std::string section;
  std::string raw;
  int lineno = 0;
  while (std::getline(is, raw)) {
    ++lineno;
    std::string_view line = raw;
    if (auto hash = line.find(" #"); hash != std::string_view::npos) line = line.substr(0, hash);
    if (auto hash = line.find("\t#"); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("unterminated section header", lineno);
      section = std::string(detail::trim(line.substr(1, line.size() - 2)));
      if (!table.count(section)) throw ConfigError("unknown section [" + section + "]", lineno);
      if (c.block_lines.count(section)) throw ConfigError("duplicate section [" + section + "]", lineno);
      c.block_lines[section] = lineno;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("expected 'key = value'", lineno);
    const std::string key(detail::trim(line.substr(0, eq)));
    const auto value = detail::trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigError("key outside of any section", lineno, key);
    const std::string field = section + "." + key;
    const auto& handlers = table.find(section)->second;
    auto it = handlers.find(key);
    if (it == handlers.end()) throw ConfigError("unknown key", lineno, field);
    if (!seen.insert(field).second) throw ConfigError("duplicate key", lineno, field);
    try {
      it->second(value);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(e.what(), lineno, field);
    }
  }
  if (!c.has_block("experiment")) throw ConfigError("missing required block [experiment]");
  if (c.seeds.empty()) throw ConfigError("seeds must be a non-empty list", c.block_lines["experiment"], "experiment.seeds");
  c.holdout.lr = holdout_lr.value_or(c.train.base_lr / 10.0);
  detail::validate_blocks(c);
  return c;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(f);
}

inline void require_blocks(const ExperimentConfig& c, std::initializer_list<const char*> blocks) {
  for (const char* b : blocks)
    if (!c.has_block(b)) throw ConfigError(std::string("missing required block [") + b + "]", 0, b);
}

// Canonical text of every value that can influence results. Seeds and the
// output directory are excluded: the seed is recorded next to the digest.
inline std::string canonical(const ExperimentConfig& c) {
  std::ostringstream os;
  auto num = [](double v) { return csv::format(v); };
  auto ints = [](const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  };
  auto names = [](const auto& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::string(to_string(v[i]));
    return s;
  };
  const auto& d = c.dataset;
  os << "dataset.n_classes=" << d.n_classes << "\ndataset.n_train=" << d.n_train << "\ndataset.n_test=" << d.n_test
     << "\ndataset.input_dim=" << d.input_dim << "\ndataset.atypical_fraction=" << num(d.atypical_fraction)
     << "\ndataset.noise_fraction=" << num(d.noise_fraction) << "\ndataset.class_separation=" << num(d.class_separation)
     << "\ndataset.atypical_offset=" << num(d.atypical_offset) << "\ndataset.atypical_spread=" << num(d.atypical_spread)
     << "\ndataset.subpops_per_class=" << d.subpops_per_class << "\n";
  os << "model.hidden=" << ints(c.model.hidden) << "\nmodel.activation=" << to_string(c.model.activation) << "\n";
  const auto& t = c.train;
  os << "train.epochs=" << t.epochs << "\ntrain.batch_size=" << t.batch_size << "\ntrain.base_lr=" << num(t.base_lr)
     << "\ntrain.schedule=" << to_string(t.schedule.kind) << "\ntrain.milestones=" << ints(t.schedule.milestones)
     << "\ntrain.factor=" << num(t.schedule.factor) << "\ntrain.momentum=" << num(t.momentum)
     << "\ntrain.weight_decay=" << num(t.weight_decay) << "\n";
  os << "mem.n_models=" << c.mem_models << "\nmem.subset_fraction=" << num(c.mem_subset_fraction) << "\n";
  os << "proxies.kinds=" << names(c.proxy_kinds) << "\nproxies.holdout_epochs=" << c.holdout.epochs
     << "\nproxies.holdout_lr=" << num(c.holdout.lr) << "\nproxies.curvature_probes=" << c.curvature.n_probes
     << "\nproxies.curvature_step=" << num(c.curvature.step) << "\n";
  const auto& u = c.unlearn;
  os << "unlearn.algorithms=" << names(c.algorithms) << "\nunlearn.epochs=" << u.epochs << "\nunlearn.lr=" << num(u.lr)
     << "\nunlearn.batch_size=" << u.batch_size << "\nunlearn.momentum=" << num(u.momentum)
     << "\nunlearn.weight_decay=" << num(u.weight_decay) << "\nunlearn.beta=" << num(u.beta)
     << "\nunlearn.gamma=" << num(u.gamma) << "\nunlearn.sparsity_ratio=" << num(u.sparsity_ratio) << "\n";
  const auto& r = c.rum;
  os << "rum.k=" << r.k << "\nrum.approaches=" << names(r.approaches) << "\nrum.band_size=" << r.band_size
     << "\nrum.proxies=" << names(r.proxies) << "\nrum.sequential_proxy=" << to_string(r.sequential_proxy)
     << "\nrum.sequential_steps=" << r.sequential_steps << "\n";
  os << "eval.mia_samples=" << c.mia.n_samples << "\neval.mia_iterations=" << c.mia.iterations
     << "\neval.mia_l2=" << num(c.mia.l2) << "\neval.mia_lr=" << num(c.mia.lr) << "\n";
  return os.str();
}

inline std::uint64_t config_digest(const ExperimentConfig& c) {
  Fnv1a h;
  h.update(canonical(c));
  return h.value();
}

}  // namespace ulab
