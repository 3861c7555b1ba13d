#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ulab/checkpoint.hpp"
#include "ulab/config.hpp"
#include "ulab/csv.hpp"
#include "ulab/data.hpp"
#include "ulab/eval.hpp"
#include "ulab/memorization.hpp"
#include "ulab/parallel.hpp"
#include "ulab/proxies.hpp"
#include "ulab/rum.hpp"
#include "ulab/stats.hpp"
#include "ulab/trainer.hpp"
#include "ulab/unlearn.hpp"

namespace ulab {

namespace fs = std::filesystem;
using nlohmann::json;

// An existing output carries a different digest/seed and --force was not given.
class OverwriteRefused : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunOptions {
  fs::path out;
  bool force = false;
  int jobs = 1;
  std::vector<std::uint64_t> seeds;
  std::ostream* log = nullptr;
};

// ---------------------------------------------------------------------------
// Output files: provenance tags, overwrite guard, atomic writes.

namespace detail {

inline std::string seeds_label(const std::vector<std::uint64_t>& seeds) {
  std::string s;
  for (std::size_t i = 0; i < seeds.size(); ++i) s += (i ? "," : "") + std::to_string(seeds[i]);
  return s;
}

inline std::string provenance_line(std::uint64_t digest, const std::string& seed) {
  return "# config_digest=" + csv::hex64(digest) + " seed=" + seed;
}

inline std::string json_seed_label(const json& j) {
  if (j.contains("seed") && j["seed"].is_number_unsigned()) return std::to_string(j["seed"].get<std::uint64_t>());
  if (j.contains("seeds") && j["seeds"].is_array()) {
    std::vector<std::uint64_t> v;
    for (const auto& x : j["seeds"]) v.push_back(x.get<std::uint64_t>());
    return seeds_label(v);
  }
  return "?";
}

// "<digest hex> <seed label>" of an existing file, or "" if it carries none.
inline std::string existing_tag(const fs::path& p) {
  const auto ext = p.extension().string();
  std::ifstream is(p, std::ios::binary);
  if (!is) return {};
  try {
    if (ext == ".csv") {
      std::string line;
      std::getline(is, line);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const std::string prefix = "# config_digest=";
      if (line.rfind(prefix, 0) != 0) return {};
      const auto sp = line.find(" seed=");
      if (sp == std::string::npos) return {};
      return line.substr(prefix.size(), sp - prefix.size()) + " " + line.substr(sp + 6);
    }
    if (ext == ".json" || ext == ".jsonl") {
      json j;
      if (ext == ".jsonl") {
        std::string line;
        std::getline(is, line);
        j = json::parse(line);
      } else {
        j = json::parse(is);
      }
      if (!j.contains("config_digest")) return {};
      return j["config_digest"].get<std::string>() + " " + json_seed_label(j);
    }
    if (ext == ".ckpt") {
      CheckpointHeader h;
      read_checkpoint(is, &h);
      return csv::hex64(h.config_digest) + " *";
    }
  } catch (const std::exception&) {
    return {};
  }
  return {};
}

inline bool tags_match(const std::string& existing, const std::string& expected) {
  if (existing == expected) return true;
  // Checkpoints carry the digest but not the run seed.
  return existing.size() > 2 && existing.substr(existing.size() - 2) == " *" &&
         existing.substr(0, existing.size() - 2) == expected.substr(0, expected.find(' '));
}

inline void write_atomic(const fs::path& p, const std::string& content) {
  fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    os.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!os) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, p);
}

}  // namespace detail

// Collects the files a command will emit, checks them against what is on disk
// before any work starts, then writes them.
class OutputSet {
 public:
  OutputSet(std::uint64_t digest, bool force) : digest_(digest), force_(force) {}

  void expect(const fs::path& p, const std::string& seed_label) {
    tags_[p] = csv::hex64(digest_) + " " + seed_label;
    if (force_ || !fs::exists(p)) return;
    const auto found = detail::existing_tag(p);
    if (!detail::tags_match(found, tags_[p]))
      throw OverwriteRefused("refusing to overwrite " + p.string() + " (written with " +
                             (found.empty() ? std::string("no provenance") : "'" + found + "'") +
                             ", now '" + tags_[p] + "'); pass --force to replace it");
  }

  void write(const fs::path& p, const std::string& content) {
    if (!tags_.count(p)) throw std::logic_error("output not declared: " + p.string());
    detail::write_atomic(p, content);
    written_.push_back(p);
  }

  std::uint64_t digest() const { return digest_; }
  const std::vector<fs::path>& written() const { return written_; }

 private:
  std::uint64_t digest_;
  bool force_;
  std::map<fs::path, std::string> tags_;
  std::vector<fs::path> written_;
};

inline std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Per-seed derived configuration. Every component is seeded from the run seed.

struct SeedPlan {
  std::uint64_t seed = 0;
  DatasetSpec dataset;
  ModelSpec model;
  TrainConfig train;
  MemConfig mem;
  HoldoutConfig holdout;
  CurvatureConfig curvature;
  MiaConfig mia;
  UnlearnConfig unlearn;

  UnlearnConfig unlearn_with(Algorithm a) const {
    UnlearnConfig u = unlearn;
    u.algorithm = a;
    return u;
  }

  ProxyContext proxy_ctx() const { return {model, train, holdout, curvature}; }
};

inline SeedPlan plan_for(const ExperimentConfig& c, std::uint64_t s) {
  SeedPlan p;
  p.seed = s;
  p.dataset = c.dataset;
  p.dataset.seed = s;
  p.model = c.model;
  p.train = c.train;
  p.train.seed = s;
  p.mem.n_models = c.mem_models;
  p.mem.subset_fraction = c.mem_subset_fraction;
  p.mem.train = p.train;
  p.mem.model = c.model;
  p.mem.seed = s;
  p.holdout = c.holdout;
  p.holdout.seed = s;
  p.curvature = c.curvature;
  p.curvature.seed = s;
  p.mia = c.mia;
  p.mia.seed = s;
  p.unlearn = c.unlearn;
  p.unlearn.seed = s;
  return p;
}

// The original model: full train split, events logged, curvature checkpoints kept.
inline TrainResult train_original(const SeedPlan& p, const Dataset& data) {
  TrainOptions opt;
  opt.log_events = true;
  opt.checkpoint_every = curvature_checkpoint_interval(p.train.epochs);
  return train_from_scratch(data, data.train_ids(), p.model, p.train, opt);
}

inline ScoreTable proxy_from_original(ScoreKind kind, const TrainResult& original, const Dataset& data,
                                      const SeedPlan& p) {
  if (is_learning_event(kind)) return learning_event_proxies(original.log).get(kind);
  if (kind == ScoreKind::holdout_retraining) return holdout_retraining_proxy(original.model, data, p.holdout);
  if (kind == ScoreKind::loss_curvature) return loss_curvature_proxy(original.checkpoints, data, p.curvature);
  throw ValidationError("not a proxy: " + std::string(to_string(kind)));
}

inline std::string score_csv(const ScoreTable& t, std::uint64_t digest, std::uint64_t seed) {
  std::ostringstream os;
  write_score_csv(os, t, digest, seed);
  return os.str();
}

// ---------------------------------------------------------------------------
// Commands

struct Command {
  const ExperimentConfig& cfg;
  RunOptions opt;
  std::uint64_t digest;

  Command(const ExperimentConfig& c, RunOptions o) : cfg(c), opt(std::move(o)), digest(config_digest(c)) {
    if (opt.seeds.empty()) opt.seeds = cfg.seeds;
    if (opt.out.empty()) opt.out = cfg.output_dir;
    if (opt.jobs < 1) opt.jobs = 1;
  }

  fs::path seed_dir(std::uint64_t s) const { return opt.out / ("seed_" + std::to_string(s)); }
  std::string all_seeds() const { return detail::seeds_label(opt.seeds); }

  void note(const std::string& msg) const {
    static std::mutex mu;
    if (!opt.log) return;
    std::lock_guard lock(mu);
    *opt.log << msg << "\n";
  }

  json stamp(std::uint64_t seed) const { return {{"config_digest", csv::hex64(digest)}, {"seed", seed}}; }
  json stamp_all() const { return {{"config_digest", csv::hex64(digest)}, {"seeds", opt.seeds}}; }
};

inline std::vector<fs::path> cmd_gen_data(const ExperimentConfig& cfg, RunOptions o) {
  require_blocks(cfg, {"dataset"});
  Command cmd(cfg, std::move(o));
  OutputSet out(cmd.digest, cmd.opt.force);
  for (auto s : cmd.opt.seeds) out.expect(cmd.seed_dir(s) / "dataset.csv", std::to_string(s));
  auto files = parallel_map(cmd.opt.seeds.size(), cmd.opt.jobs, [&](std::size_t i) {
    const auto s = cmd.opt.seeds[i];
    const auto data = make_dataset(plan_for(cfg, s).dataset);
    std::ostringstream os;
    write_dataset_csv(os, data, cmd.digest, s);
    return os.str();
  });
  for (std::size_t i = 0; i < files.size(); ++i) out.write(cmd.seed_dir(cmd.opt.seeds[i]) / "dataset.csv", files[i]);
  return out.written();
}

inline std::vector<fs::path> cmd_train(const ExperimentConfig& cfg, RunOptions o) {
  require_blocks(cfg, {"dataset", "model", "train"});
  Command cmd(cfg, std::move(o));
  OutputSet out(cmd.digest, cmd.opt.force);
  for (auto s : cmd.opt.seeds)
    for (const char* f : {"model.ckpt", "events.csv", "train.json"}) out.expect(cmd.seed_dir(s) / f, std::to_string(s));
  struct Files {
    std::string ckpt, events, report;
  };
  auto files = parallel_map(cmd.opt.seeds.size(), cmd.opt.jobs, [&](std::size_t i) {
    const auto s = cmd.opt.seeds[i];
    const auto p = plan_for(cfg, s);
    const auto data = make_dataset(p.dataset);
    const auto r = train_from_scratch(data, data.train_ids(), p.model, p.train, {.log_events = true});
    Files f;
    std::ostringstream ck, ev;
    write_checkpoint(ck, r.model, cmd.digest);
    write_event_log_csv(ev, r.log, cmd.digest, s);
    json j = cmd.stamp(s);
    j["epochs"] = p.train.epochs;
    j["final_loss"] = r.epoch_loss.back();
    j["train_accuracy"] = accuracy(r.model, data, data.train_ids());
    j["test_accuracy"] = accuracy(r.model, data, data.test_ids());
    j["wall_time_s"] = r.wall_time;
    return Files{ck.str(), ev.str(), dump_json(j)};
  });
  for (std::size_t i = 0; i < files.size(); ++i) {
    const auto dir = cmd.seed_dir(cmd.opt.seeds[i]);
    out.write(dir / "model.ckpt", files[i].ckpt);
    out.write(dir / "events.csv", files[i].events);
    out.write(dir / "train.json", files[i].report);
  }
  return out.written();
}

inline json memorization_sidecar(const ScoreTable& mem, const Dataset& data, std::uint64_t digest, std::uint64_t seed) {
  json j = score_sidecar(mem, digest, seed);
  json by;
  for (auto prov : {Provenance::clean, Provenance::atypical, Provenance::noisy}) {
    const double m = mem.mean_over(data.ids_with(prov, Split::train));
    by[std::string(to_string(prov))] = std::isnan(m) ? json(nullptr) : json(m);
  }
  j["mean_by_provenance"] = by;
  return j;
}

inline std::vector<fs::path> cmd_mem(const ExperimentConfig& cfg, RunOptions o) {
  require_blocks(cfg, {"dataset", "model", "train", "mem"});
  Command cmd(cfg, std::move(o));
  OutputSet out(cmd.digest, cmd.opt.force);
  for (auto s : cmd.opt.seeds)
    for (const char* f : {"memorization.csv", "memorization.json"}) out.expect(cmd.seed_dir(s) / f, std::to_string(s));
  for (auto s : cmd.opt.seeds) {
    const auto p = plan_for(cfg, s);
    const auto data = make_dataset(p.dataset);
    cmd.note("seed " + std::to_string(s) + ": estimating memorization with " + std::to_string(p.mem.n_models) +
             " models");
    const auto mem = estimate_memorization(data, p.mem, cmd.opt.jobs);
    const auto dir = cmd.seed_dir(s);
    out.write(dir / "memorization.csv", score_csv(mem, cmd.digest, s));
    out.write(dir / "memorization.json", dump_json(memorization_sidecar(mem, data, cmd.digest, s)));
    if (!mem.undefined_ids().empty())
      cmd.note("seed " + std::to_string(s) + ": " + std::to_string(mem.undefined_ids().size()) +
               " examples have an undefined memorization score");
  }
  return out.written();
}

inline std::vector<fs::path> cmd_proxy(const ExperimentConfig& cfg, RunOptions o) {
  require_blocks(cfg, {"dataset", "model", "train", "proxies"});
  Command cmd(cfg, std::move(o));
  OutputSet out(cmd.digest, cmd.opt.force);
  auto name = [](ScoreKind k) { return "proxy_" + std::string(to_string(k)); };
  for (auto s : cmd.opt.seeds)
    for (auto k : cfg.proxy_kinds)
      for (const char* ext : {".csv", ".json"}) out.expect(cmd.seed_dir(s) / (name(k) + ext), std::to_string(s));
  auto tables = parallel_map(cmd.opt.seeds.size(), cmd.opt.jobs, [&](std::size_t i) {
    const auto p = plan_for(cfg, cmd.opt.seeds[i]);
    const auto data = make_dataset(p.dataset);
    const auto original = train_original(p, data);
    std::vector<ScoreTable> ts;
    for (auto k : cfg.proxy_kinds) ts.push_back(proxy_from_original(k, original, data, p));
    return ts;
  });
  for (std::size_t i = 0; i < tables.size(); ++i) {
    const auto s = cmd.opt.seeds[i];
    for (const auto& t : tables[i]) {
      out.write(cmd.seed_dir(s) / (name(t.kind) + ".csv"), score_csv(t, cmd.digest, s));
      out.write(cmd.seed_dir(s) / (name(t.kind) + ".json"), dump_json(score_sidecar(t, cmd.digest, s)));
    }
  }
  return out.written();
}

// Reuses memorization.csv/.json from an earlier `mem` run when their
// provenance matches; otherwise estimates from scratch.
inline ScoreTable memorization_for(const Command& cmd, const SeedPlan& p, const Dataset& data) {
  const auto dir = cmd.seed_dir(p.seed);
  const std::string tag = csv::hex64(cmd.digest) + " " + std::to_string(p.seed);
  const auto csv_path = dir / "memorization.csv", json_path = dir / "memorization.json";
  if (fs::exists(csv_path) && fs::exists(json_path) && detail::existing_tag(csv_path) == tag &&
      detail::existing_tag(json_path) == tag) {
    std::ifstream cs(csv_path), js(json_path);
    auto t = read_score_csv(cs);
    const auto side = json::parse(js);
    t.wall_time = side.at("wall_time_seconds").get<double>();
    t.n_models = side.at("T").get<int>();
    t.subset_fraction = side.at("p").get<double>();
    cmd.note("seed " + std::to_string(p.seed) + ": reusing " + csv_path.string());
    return t;
  }
  cmd.note("seed " + std::to_string(p.seed) + ": estimating memorization with " + std::to_string(p.mem.n_models) +
           " models");
  return estimate_memorization(data, p.mem, cmd.opt.jobs);
}

inline std::vector<fs::path> cmd_fidelity(const ExperimentConfig& cfg, RunOptions o) {
  require_blocks(cfg, {"dataset", "model", "train", "mem", "proxies"});
  Command cmd(cfg, std::move(o));
  OutputSet out(cmd.digest, cmd.opt.force);
  for (auto s : cmd.opt.seeds) out.expect(cmd.seed_dir(s) / "fidelity.csv", std::to_string(s));
  out.expect(cmd.opt.out / "fidelity_summary.csv", cmd.all_seeds());

  std::map<ScoreKind, std::vector<FidelityRow>> by_proxy;
  for (auto s : cmd.opt.seeds) {
    const auto p = plan_for(cfg, s);
    const auto data = make_dataset(p.dataset);
    const auto mem = memorization_for(cmd, p, data);
    const auto original = train_original(p, data);
    std::vector<ScoreTable> proxies;
    for (auto k : cfg.proxy_kinds) proxies.push_back(proxy_from_original(k, original, data, p));
    const auto rows = fidelity_report(mem, proxies, original.wall_time);
    std::ostringstream os;
    csv::write_provenance(os, cmd.digest, s);
    csv::write_row(os, fidelity_columns());
    for (const auto& r : rows) {
      csv::write_row(os, {std::string(to_string(r.proxy)), csv::format(r.spearman_vs_mem), csv::format(r.wall_time_s),
                          csv::format(r.pct_of_mem_time), csv::format(r.pct_of_retrain_time)});
      by_proxy[r.proxy].push_back(r);
    }
    out.write(cmd.seed_dir(s) / "fidelity.csv", os.str());
  }

  std::ostringstream os;
  os << detail::provenance_line(cmd.digest, cmd.all_seeds()) << "\r\n";
  csv::write_row(os, {"proxy", "n_seeds", "spearman_vs_mem", "spearman_ci95", "wall_time_s", "pct_of_mem_time",
                      "pct_of_retrain_time"});
  for (auto k : cfg.proxy_kinds) {
    const auto& rows = by_proxy[k];
    std::vector<double> rho, wt, pm, pr;
    for (const auto& r : rows) {
      rho.push_back(r.spearman_vs_mem);
      wt.push_back(r.wall_time_s);
      pm.push_back(r.pct_of_mem_time);
      pr.push_back(r.pct_of_retrain_time);
    }
    const auto ci = mean_ci(rho);
    csv::write_row(os, {std::string(to_string(k)), std::to_string(rows.size()), csv::format(ci.mean),
                        csv::format(ci.half_width), csv::format(mean_ci(wt).mean), csv::format(mean_ci(pm).mean),
                        csv::format(mean_ci(pr).mean)});
  }
  out.write(cmd.opt.out / "fidelity_summary.csv", os.str());
  return out.written();
}

// ---------------------------------------------------------------------------
// Single-shot unlearning experiment.

struct RumRow {
  std::uint64_t seed = 0;
  std::string algorithm, approach;
  ScoreKind proxy = ScoreKind::confidence;
  std::uint64_t forget_ids_digest = 0;
  EvalReport report;
};

inline const std::vector<std::string>& rum_columns() {
  static const std::vector<std::string> cols{
      "seed",         "algorithm",    "approach",   "proxy", "k",     "forget_ids_digest", "acc_forget_u",
      "acc_retain_u", "acc_test_u",   "acc_forget_r", "acc_retain_r", "acc_test_r", "mia_u", "mia_r",
      "tow",          "tow_mia",      "wall_time_s"};
  return cols;
}

// All rows for one seed and one forget-set proxy: the retrain reference first,
// then every algorithm x approach.
inline std::vector<RumRow> rum_rows(const ExperimentConfig& cfg, const SeedPlan& p, const Dataset& data,
                                    const TrainResult& original, ScoreKind proxy) {
  const auto scores = proxy_from_original(proxy, original, data, p);
  const auto task = select_forget(scores, data.train_ids(), cfg.rum.band_size);
  const auto oracle = retrain(data, task, p.model, p.train);
  const auto fdigest = digest_ids(task.forget_ids);
  std::vector<RumRow> rows;
  rows.push_back({p.seed, "retrain", "reference", proxy, fdigest,
                  evaluate(oracle.model, oracle.model, data, task, p.mia, oracle.wall_time)});
  for (auto alg : cfg.algorithms)
    for (auto a : cfg.rum.approaches) {
      const auto res = run_approach(a, original.model, data, task, scores, cfg.rum.k, p.unlearn_with(alg), p.seed);
      rows.push_back({p.seed, std::string(to_string(alg)), std::string(to_string(a)), proxy, fdigest,
                      evaluate(res.model, oracle.model, data, task, p.mia, res.wall_time)});
    }
  return rows;
}

inline std::vector<fs::path> cmd_rum(const ExperimentConfig& cfg, RunOptions o) {
  require_blocks(cfg, {"dataset", "model", "train", "proxies", "unlearn", "rum", "eval"});
  Command cmd(cfg, std::move(o));
  OutputSet out(cmd.digest, cmd.opt.force);
  for (auto s : cmd.opt.seeds) out.expect(cmd.seed_dir(s) / "rum.csv", std::to_string(s));
  out.expect(cmd.opt.out / "rum_summary.csv", cmd.all_seeds());
  out.expect(cmd.opt.out / "rum_summary.json", cmd.all_seeds());

  const auto& seeds = cmd.opt.seeds;
  struct SeedState {
    SeedPlan plan;
    Dataset data;
    TrainResult original;
  };
  auto states = parallel_map(seeds.size(), cmd.opt.jobs, [&](std::size_t i) {
    cmd.note("seed " + std::to_string(seeds[i]) + ": training original model");
    SeedState st{plan_for(cfg, seeds[i]), {}, {}};
    st.data = make_dataset(st.plan.dataset);
    st.original = train_original(st.plan, st.data);
    return st;
  });
  const std::size_t np = cfg.rum.proxies.size();
  auto blocks = parallel_map(seeds.size() * np, cmd.opt.jobs, [&](std::size_t job) {
    const auto& st = states[job / np];
    return rum_rows(cfg, st.plan, st.data, st.original, cfg.rum.proxies[job % np]);
  });

  std::map<std::tuple<ScoreKind, std::string, std::string>, std::vector<EvalReport>> groups;
  std::vector<std::tuple<ScoreKind, std::string, std::string>> order;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    std::ostringstream os;
    csv::write_provenance(os, cmd.digest, seeds[i]);
    csv::write_row(os, rum_columns());
    for (std::size_t j = 0; j < np; ++j)
      for (const auto& r : blocks[i * np + j]) {
        const auto& e = r.report;
        csv::write_row(os, {std::to_string(r.seed), r.algorithm, r.approach, std::string(to_string(r.proxy)),
                            std::to_string(cfg.rum.k), csv::hex64(r.forget_ids_digest), csv::format(e.acc_forget_u),
                            csv::format(e.acc_retain_u), csv::format(e.acc_test_u), csv::format(e.acc_forget_r),
                            csv::format(e.acc_retain_r), csv::format(e.acc_test_r), csv::format(e.mia_u),
                            csv::format(e.mia_r), csv::format(e.tow), csv::format(e.tow_mia),
                            csv::format(e.wall_time_s)});
        const auto key = std::make_tuple(r.proxy, r.algorithm, r.approach);
        if (!groups.count(key)) order.push_back(key);
        groups[key].push_back(e);
      }
    out.write(cmd.seed_dir(seeds[i]) / "rum.csv", os.str());
  }

  std::ostringstream os;
  os << detail::provenance_line(cmd.digest, cmd.all_seeds()) << "\r\n";
  csv::write_row(os, {"proxy", "algorithm", "approach", "n_seeds", "tow_mean", "tow_ci95", "tow_mia_mean",
                      "tow_mia_ci95", "wall_time_s_mean", "wall_time_s_ci95"});
  json rows = json::array();
  for (const auto& key : order) {
    const auto& reps = groups[key];
    std::vector<double> tw, tm, wt;
    for (const auto& e : reps) {
      tw.push_back(e.tow);
      tm.push_back(e.tow_mia);
      wt.push_back(e.wall_time_s);
    }
    const auto a = mean_ci(tw), b = mean_ci(tm), c = mean_ci(wt);
    const auto& [proxy, alg, appr] = key;
    csv::write_row(os, {std::string(to_string(proxy)), alg, appr, std::to_string(reps.size()), csv::format(a.mean),
                        csv::format(a.half_width), csv::format(b.mean), csv::format(b.half_width),
                        csv::format(c.mean), csv::format(c.half_width)});
    auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
    rows.push_back({{"proxy", std::string(to_string(proxy))},
                    {"algorithm", alg},
                    {"approach", appr},
                    {"n_seeds", reps.size()},
                    {"tow_mean", a.mean},
                    {"tow_ci95", num(a.half_width)},
                    {"tow_mia_mean", b.mean},
                    {"tow_mia_ci95", num(b.half_width)},
                    {"wall_time_s_mean", c.mean},
                    {"wall_time_s_ci95", num(c.half_width)}});
  }
  out.write(cmd.opt.out / "rum_summary.csv", os.str());
  json summary = cmd.stamp_all();
  summary["k"] = cfg.rum.k;
  summary["band_size"] = cfg.rum.band_size;
  summary["rows"] = rows;
  out.write(cmd.opt.out / "rum_summary.json", dump_json(summary));
  return out.written();
}

// ---------------------------------------------------------------------------
// Multi-step sequential unlearning.

inline SequentialConfig sequential_config(const ExperimentConfig& cfg, const SeedPlan& p, Algorithm alg) {
  SequentialConfig sc;
  sc.proxy = cfg.rum.sequential_proxy;
  sc.n_steps = cfg.rum.sequential_steps;
  sc.band_size = cfg.rum.band_size;
  sc.k = cfg.rum.k;
  sc.unlearn = p.unlearn_with(alg);
  sc.mia = p.mia;
  sc.proxy_ctx = p.proxy_ctx();
  sc.tracks = cfg.rum.approaches;
  return sc;
}

inline std::vector<fs::path> cmd_sequential(const ExperimentConfig& cfg, RunOptions o) {
  require_blocks(cfg, {"dataset", "model", "train", "proxies", "unlearn", "rum", "eval"});
  Command cmd(cfg, std::move(o));
  OutputSet out(cmd.digest, cmd.opt.force);
  for (auto s : cmd.opt.seeds)
    for (const char* f : {"sequential.jsonl", "gini.csv", "lorenz.csv"}) out.expect(cmd.seed_dir(s) / f, std::to_string(s));
  out.expect(cmd.opt.out / "sequential_summary.json", cmd.all_seeds());
  out.expect(cmd.opt.out / "gini_summary.csv", cmd.all_seeds());

  const auto& seeds = cmd.opt.seeds;
  const std::size_t na = cfg.algorithms.size();
  auto results = parallel_map(seeds.size() * na, cmd.opt.jobs, [&](std::size_t job) {
    const auto p = plan_for(cfg, seeds[job / na]);
    const auto alg = cfg.algorithms[job % na];
    cmd.note("seed " + std::to_string(p.seed) + ": sequential " + std::string(to_string(alg)));
    const auto data = make_dataset(p.dataset);
    const auto original = train_from_scratch(data, data.train_ids(), p.model, p.train, {.log_events = false});
    return sequential_stability(data, original.model, sequential_config(cfg, p, alg));
  });

  // (algorithm, approach) -> per-seed series
  std::map<std::pair<std::string, std::string>, std::vector<std::vector<double>>> gini_by_track, tow_by_track,
      tow_mia_by_track;
  std::map<std::pair<std::string, std::string>, int> monotone_count;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const auto s = seeds[i];
    std::ostringstream jl, gc, lc;
    csv::write_provenance(gc, cmd.digest, s);
    csv::write_row(gc, {"algorithm", "approach", "step", "gini", "non_increasing"});
    csv::write_provenance(lc, cmd.digest, s);
    csv::write_row(lc, {"algorithm", "approach", "step", "population", "share"});
    for (std::size_t a = 0; a < na; ++a) {
      const auto& res = results[i * na + a];
      const std::string alg(to_string(cfg.algorithms[a]));
      for (auto track : cfg.rum.approaches) {
        const std::string appr(to_string(track));
        const auto& g = res.gini_series.at(track);
        const auto key = std::make_pair(alg, appr);
        gini_by_track[key].push_back(g);
        const bool mono = non_increasing(g);
        monotone_count[key] += mono;

        json rec0 = cmd.stamp(s);
        rec0.update({{"step", 0}, {"algorithm", alg}, {"approach", appr}, {"proxy", std::string(to_string(cfg.rum.sequential_proxy))},
                     {"tow", nullptr}, {"tow_mia", nullptr}, {"gini", g[0]}, {"wall_time_s", nullptr},
                     {"forget_ids_digest", nullptr}});
        jl << rec0.dump() << "\n";
        std::vector<double> tw, tm;
        for (const auto& st : res.steps) {
          if (st.approach != track) continue;
          json rec = cmd.stamp(s);
          rec.update({{"step", st.step}, {"algorithm", alg}, {"approach", appr},
                      {"proxy", std::string(to_string(cfg.rum.sequential_proxy))}, {"tow", st.report.tow},
                      {"tow_mia", st.report.tow_mia}, {"gini", st.gini}, {"wall_time_s", st.report.wall_time_s},
                      {"forget_ids_digest", csv::hex64(st.forget_ids_digest)}});
          jl << rec.dump() << "\n";
          tw.push_back(st.report.tow);
          tm.push_back(st.report.tow_mia);
        }
        tow_by_track[key].push_back(tw);
        tow_mia_by_track[key].push_back(tm);

        for (std::size_t k = 0; k < g.size(); ++k) {
          const bool ok = k == 0 || g[k] <= g[k - 1];
          csv::write_row(gc, {alg, appr, std::to_string(k), csv::format(g[k]), ok ? "1" : "0"});
          for (const auto& pt : lorenz(res.proxy_values.at(track)[k]))
            csv::write_row(lc, {alg, appr, std::to_string(k), csv::format(pt.population), csv::format(pt.share)});
        }
        if (!mono) cmd.note("seed " + std::to_string(s) + ": gini of " + alg + "/" + appr + " is not non-increasing");
      }
    }
    out.write(cmd.seed_dir(s) / "sequential.jsonl", jl.str());
    out.write(cmd.seed_dir(s) / "gini.csv", gc.str());
    out.write(cmd.seed_dir(s) / "lorenz.csv", lc.str());
  }

  auto step_means = [](const std::vector<std::vector<double>>& per_seed) {
    std::vector<double> m(per_seed.front().size(), 0.0);
    for (const auto& v : per_seed)
      for (std::size_t k = 0; k < v.size(); ++k) m[k] += v[k] / static_cast<double>(per_seed.size());
    return m;
  };
  std::ostringstream gs;
  gs << detail::provenance_line(cmd.digest, cmd.all_seeds()) << "\r\n";
  csv::write_row(gs, {"algorithm", "approach", "step", "gini_mean", "gini_ci95", "tow_mean", "tow_mia_mean"});
  json tracks = json::array();
  for (auto alg_e : cfg.algorithms)
    for (auto track : cfg.rum.approaches) {
      const auto key = std::make_pair(std::string(to_string(alg_e)), std::string(to_string(track)));
      const auto& gs_seed = gini_by_track[key];
      const auto tw = step_means(tow_by_track[key]);
      const auto tm = step_means(tow_mia_by_track[key]);
      std::vector<double> gmean;
      for (std::size_t k = 0; k < gs_seed.front().size(); ++k) {
        std::vector<double> col;
        for (const auto& v : gs_seed) col.push_back(v[k]);
        const auto ci = mean_ci(col);
        gmean.push_back(ci.mean);
        csv::write_row(gs, {key.first, key.second, std::to_string(k), csv::format(ci.mean), csv::format(ci.half_width),
                            k == 0 ? "NA" : csv::format(tw[k - 1]), k == 0 ? "NA" : csv::format(tm[k - 1])});
      }
      tracks.push_back({{"algorithm", key.first},
                        {"approach", key.second},
                        {"gini_mean_by_step", gmean},
                        {"tow_mean_by_step", tw},
                        {"tow_mia_mean_by_step", tm},
                        {"seeds_gini_non_increasing", monotone_count[key]},
                        {"gini_non_increasing_mean", non_increasing(gmean)}});
    }
  json summary = cmd.stamp_all();
  summary["proxy"] = std::string(to_string(cfg.rum.sequential_proxy));
  summary["n_steps"] = cfg.rum.sequential_steps;
  summary["band_size"] = cfg.rum.band_size;
  summary["tracks"] = tracks;
  out.write(cmd.opt.out / "gini_summary.csv", gs.str());
  out.write(cmd.opt.out / "sequential_summary.json", dump_json(summary));
  return out.written();
}

}  // namespace ulab
