#pragma once

// Subcommand implementations behind tools/thermoctl. Every command takes a
// flat Config (flags and --config file merged), resolves its defaults into
// it, and writes that resolved config plus a manifest next to its outputs.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "thermo/common.hpp"
#include "thermo/gbt.hpp"
#include "thermo/guard.hpp"
#include "thermo/metrics.hpp"
#include "thermo/regress.hpp"
#include "thermo/sched.hpp"
#include "thermo/sim.hpp"
#include "thermo/synth.hpp"
#include "thermo/telemetry.hpp"
#include "thermo/thermal.hpp"
#include "thermo/trace.hpp"

namespace thermo::cli {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// output directories
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Collects written files; finish() adds run_config.txt and a manifest of
// names, sizes and FNV-1a hashes.
class RunDir {
 public:
  explicit RunDir(std::string path) : path_(std::move(path)) {
    if (path_.empty()) throw InvalidArgument("missing output directory (--out)");
    fs::create_directories(path_);
  }

  void write(const std::string& name, std::string_view content) {
    write_file((fs::path(path_) / name).string(), content);
    files_[name] = {content.size(), fnv1a(content)};
  }

  void finish(const Config& cfg) {
    write("run_config.txt", cfg.serialize());
    std::string m;
    for (const auto& [name, info] : files_) m += concat(name, ' ', info.first, ' ', hex64(info.second), '\n');
    write_file((fs::path(path_) / "manifest.txt").string(), m);
  }

  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::map<std::string, std::pair<std::size_t, std::uint64_t>> files_;
};

inline std::string require(const Config& cfg, const std::string& key) {
  auto v = cfg.get(key, std::string());
  if (v.empty()) throw InvalidArgument("missing required option --" + key);
  return v;
}

inline std::size_t resolve_count(Config& cfg, const std::string& key, std::int64_t fallback) {
  const auto v = cfg.resolve<std::int64_t>(key, fallback);
  if (v < 0) throw InvalidArgument("--" + key + " must be >= 0");
  return static_cast<std::size_t>(v);
}

inline std::uint64_t resolve_seed(Config& cfg) {
  const auto v = cfg.resolve<std::int64_t>("seed", 1);
  if (v < 0) throw InvalidArgument("--seed must be >= 0");
  return static_cast<std::uint64_t>(v);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  for (const auto& item : split(s, ',')) {
    auto t = std::string(trim(item));
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// model settings
// ---------------------------------------------------------------------------

inline gbt::Hyper resolve_hyper(Config& cfg) {
  gbt::Hyper h;
  h.eta = cfg.resolve("eta", h.eta);
  h.gamma = cfg.resolve("gamma", h.gamma);
  h.lambda = cfg.resolve("lambda", h.lambda);
  h.max_depth = cfg.resolve("max_depth", h.max_depth);
  h.min_child_weight = cfg.resolve("min_child_weight", h.min_child_weight);
  h.subsample = cfg.resolve("subsample", h.subsample);
  h.rounds = cfg.resolve("rounds", h.rounds);
  h.early_stopping = cfg.resolve<std::int64_t>("early_stopping", 0) != 0;
  h.patience = cfg.resolve("patience", h.patience);
  h.validate();
  return h;
}

inline BaselineDefaults resolve_baselines(Config& cfg) {
  BaselineDefaults b;
  b.ridge_lambda = cfg.resolve("ridge_lambda", b.ridge_lambda);
  b.lasso_lambda = cfg.resolve("lasso_lambda", b.lasso_lambda);
  b.sgd_lr = cfg.resolve("sgd_lr", b.sgd_lr);
  b.sgd_epochs = cfg.resolve("sgd_epochs", b.sgd_epochs);
  b.mlp_lr = cfg.resolve("mlp_lr", b.mlp_lr);
  b.mlp_epochs = cfg.resolve("mlp_epochs", b.mlp_epochs);
  return b;
}

inline const std::vector<std::string>& model_kinds() {
  static const std::vector<std::string> k = {"gbt", "ols", "ridge", "lasso", "sgd", "mlp"};
  return k;
}

inline HostModel fit_model(const std::string& kind, const Dataset& d, std::uint64_t seed, const gbt::Hyper& hp,
                           const BaselineDefaults& b) {
  if (kind == "gbt") return HostModel::Variant(gbt::train(d, hp, seed));
  if (kind == "ols") return HostModel::Variant(fit_ols(d));
  if (kind == "ridge") return HostModel::Variant(fit_ridge(d, b.ridge_lambda));
  if (kind == "lasso") return HostModel::Variant(fit_lasso(d, b.lasso_lambda));
  if (kind == "sgd") return HostModel::Variant(fit_sgd(d, b.sgd_lr, b.sgd_epochs, seed));
  if (kind == "mlp") return HostModel::Variant(fit_mlp(d, b.mlp_lr, b.mlp_epochs, seed));
  throw InvalidArgument("unknown model kind '" + kind + "'");
}

inline Trainer trainer_for(const std::string& kind, const gbt::Hyper& hp, const BaselineDefaults& b) {
  return [=](const Dataset& d, std::uint64_t seed) -> Regressor {
    return [m = fit_model(kind, d, seed, hp, b)](std::span<const double> x) { return m.predict(x); };
  };
}

// "eta=0.05,0.1;max_depth=2,4"
inline gbt::Grid parse_grid(const std::string& text) {
  gbt::Grid g;
  for (const auto& axis : split(text, ';')) {
    if (trim(axis).empty()) continue;
    const auto eq = axis.find('=');
    if (eq == std::string::npos) throw FormatError("grid axis must be name=v1,v2,..., got '" + axis + "'");
    auto& vals = g[std::string(trim(std::string_view(axis).substr(0, eq)))];
    for (const auto& v : split_list(axis.substr(eq + 1))) vals.push_back(require_double(v, "grid value"));
  }
  if (g.empty()) throw InvalidArgument("empty grid");
  return g;
}

// Held-out rows for one host: a seeded fraction, sorted.
inline std::vector<std::size_t> holdout_rows(std::size_t n, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw InvalidArgument("--holdout must be in [0, 1)");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  shuffle(idx, rng);
  idx.resize(static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n))));
  std::sort(idx.begin(), idx.end());
  return idx;
}

inline std::string format_indices(const std::vector<std::size_t>& idx) {
  std::string out;
  for (auto i : idx) out += concat(i, '\n');
  return out;
}

inline std::vector<std::size_t> parse_indices(std::string_view text) {
  std::vector<std::size_t> out;
  for (const auto& l : split(text, '\n')) {
    if (trim(l).empty()) continue;
    const double v = require_double(l, "row index");
    if (v < 0 || v != std::floor(v)) throw FormatError("bad row index '" + l + "'");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

inline std::vector<std::size_t> complement(std::size_t n, const std::vector<std::size_t>& idx) {
  std::vector<char> mark(n, 0);
  for (auto i : idx) mark.at(i) = 1;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mark[i]) out.push_back(i);
  }
  return out;
}

inline std::map<std::string, Dataset> filter_hosts(std::map<std::string, Dataset> all, const std::string& list) {
  const auto want = split_list(list);
  if (want.empty()) return all;
  std::map<std::string, Dataset> out;
  for (const auto& h : want) {
    auto it = all.find(h);
    if (it == all.end()) throw InvalidArgument("no dataset for host '" + h + "'");
    out.insert(*it);
  }
  return out;
}

// Host models (<host>.model) and fan models (<host>.fans) in id order.
inline Predictors load_predictors(const std::string& dir, const GuardParams& guard, bool need_fans,
                                  std::vector<std::string>* versions = nullptr) {
  if (!fs::is_directory(dir)) throw Error("not a directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".model") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw EmptyInputError("no .model files in " + dir);
  Predictors p;
  p.guard = guard;
  for (const auto& f : files) {
    const auto text = read_file(f.string());
    HostModel m;
    try {
      m = parse_host_model(text);
    } catch (const Error& e) {
      throw FormatError(f.string() + ": " + e.what());
    }
    if (versions) versions->push_back(m.kind() + "-" + hex64(fnv1a(text)));
    p.host_ids.push_back(f.stem().string());
    p.models.push_back(std::move(m));
    auto fans_path = fs::path(f).replace_extension(".fans");
    if (fs::exists(fans_path)) {
      p.fans.push_back(thermal::parse_fan_models(read_file(fans_path.string())));
    } else if (need_fans) {
      throw Error("missing fan model " + fans_path.string());
    } else {
      p.fans.emplace_back();
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// synth-telemetry / synth-trace
// ---------------------------------------------------------------------------

inline void cmd_synth_telemetry(Config cfg, std::ostream& log) {
  RunDir out(require(cfg, "out"));
  const auto hosts = resolve_count(cfg, "hosts", 20);
  const auto rows = resolve_count(cfg, "rows", 1000);
  const auto seed = resolve_seed(cfg);
  const double start = cfg.resolve("start", 1.6e9);
  const double step = cfg.resolve("interval_s", 600.0);
  if (hosts == 0 || rows == 0) throw InvalidArgument("--hosts and --rows must be > 0");
  const auto profiles = synth::host_profiles(hosts, seed);
  std::vector<HostRecord> all;
  std::string prof = "host,hotness,inlet_offset_c,cpu_offset_c\n";
  for (std::size_t h = 0; h < hosts; ++h) {
    auto recs = synth::host_records(profiles[h], rows, derive_seed(seed, 100 + h), start, step);
    all.insert(all.end(), recs.begin(), recs.end());
    prof += concat(profiles[h].id, ',', format_double(profiles[h].hotness), ',',
                   format_double(profiles[h].inlet_offset), ',', format_double(profiles[h].cpu_offset), '\n');
  }
  out.write("telemetry.csv", synth::telemetry_csv(all));
  out.write("profiles.txt", prof);
  out.finish(cfg);
  log << "wrote " << all.size() << " rows for " << hosts << " hosts to " << out.path() << "\n";
}

inline void cmd_synth_trace(Config cfg, std::ostream& log) {
  RunDir out(require(cfg, "out"));
  const auto vms = resolve_count(cfg, "vms", 100);
  const double hours = cfg.resolve("hours", 24.0);
  const double sample = cfg.resolve("sample_s", 300.0);
  const double start = cfg.resolve("start", 1.6e9);
  const auto seed = resolve_seed(cfg);
  if (vms == 0 || !(hours > 0.0) || !(sample > 0.0)) throw InvalidArgument("--vms, --hours, --sample_s must be > 0");
  for (std::size_t v = 0; v < vms; ++v) {
    out.write(synth::vm_name(v) + ".csv",
              sim::format_trace(synth::vm_samples(derive_seed(seed, 1000 + v), hours * 3600.0, sample, start)));
  }
  out.finish(cfg);
  log << "wrote " << vms << " VM traces to " << out.path() << "\n";
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

struct IngestSummary {
  std::size_t files = 0;
  std::size_t raw_rows = 0;
  std::size_t kept = 0;
  std::size_t dropped = 0;
  std::map<std::string, std::size_t> drop_reasons;
  std::map<std::string, Dataset> datasets;
};

// A directory input reads every *.csv and *.log file in name order; .txt
// files (run manifests, profiles) are left alone.
inline IngestSummary ingest(const std::string& input, const IngestConfig& icfg) {
  std::vector<fs::path> files;
  if (fs::is_directory(input)) {
    for (const auto& e : fs::directory_iterator(input)) {
      const auto ext = e.path().extension();
      if (e.is_regular_file() && (ext == ".csv" || ext == ".log")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw EmptyInputError("no telemetry files in " + input);
  } else if (fs::exists(input)) {
    files.emplace_back(input);
  } else {
    throw Error("no such file or directory: " + input);
  }
  IngestSummary s;
  std::vector<HostRecord> records;
  for (const auto& f : files) {
    ParseResult r;
    try {
      r = parse_log(f.string(), icfg);
    } catch (const Error& e) {
      throw Error(f.string() + ": " + e.what());
    }
    ++s.files;
    s.raw_rows += r.raw_rows;
    s.dropped += r.dropped;
    for (const auto& [why, n] : r.drop_reasons) s.drop_reasons[why] += n;
    records.insert(records.end(), r.records.begin(), r.records.end());
  }
  if (files.size() > 1) {
    if (auto dup = drop_duplicate_timestamps(records); dup > 0) {
      s.dropped += dup;
      s.drop_reasons["duplicate_timestamp"] += dup;
    }
  }
  s.kept = records.size();
  if (records.empty()) throw EmptyInputError("no usable telemetry rows in " + input);
  s.datasets = partition_by_host(records);
  return s;
}

inline void cmd_ingest(Config cfg, std::ostream& log) {
  const auto input = require(cfg, "input");
  RunDir out(require(cfg, "out"));
  cfg.resolve<std::string>("delimiter", ",");
  const auto icfg = IngestConfig::from_config(cfg);
  const auto s = ingest(input, icfg);
  std::string hosts = "host,rows,target_min_c,target_max_c\n";
  for (const auto& [id, d] : s.datasets) {
    out.write(id + ".csv", write_dataset(d));
    hosts += concat(id, ',', d.rows(), ',', format_double(d.target_bounds.min), ',',
                    format_double(d.target_bounds.max), '\n');
  }
  Config sum;
  sum.set("files", static_cast<double>(s.files));
  sum.set("raw_rows", static_cast<double>(s.raw_rows));
  sum.set("kept_rows", static_cast<double>(s.kept));
  sum.set("dropped_rows", static_cast<double>(s.dropped));
  sum.set("hosts", static_cast<double>(s.datasets.size()));
  for (const auto& [why, n] : s.drop_reasons) sum.set("dropped." + why, static_cast<double>(n));
  out.write("ingest_summary.txt", sum.serialize());
  out.write("hosts.txt", hosts);
  out.finish(cfg);
  log << "ingested " << s.kept << " of " << s.raw_rows << " rows into " << s.datasets.size() << " host datasets\n";
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

inline void cmd_train(Config cfg, std::ostream& log) {
  auto data = filter_hosts(load_dataset_dir(require(cfg, "data")), cfg.resolve<std::string>("hosts", ""));
  RunDir out(require(cfg, "out"));
  const auto kind = cfg.resolve<std::string>("kind", "gbt");
  if (std::find(model_kinds().begin(), model_kinds().end(), kind) == model_kinds().end()) {
    throw InvalidArgument("unknown --kind '" + kind + "'");
  }
  const auto seed = resolve_seed(cfg);
  const auto folds = resolve_count(cfg, "folds", 10);
  const double holdout = cfg.resolve("holdout", 0.2);
  auto hp = resolve_hyper(cfg);
  const auto base = resolve_baselines(cfg);
  const auto grid_text = cfg.resolve<std::string>("grid", "");

  std::string cv = "host,model,folds,mean_rmse_c,normalized_rmse\n";
  std::string grid_csv;
  std::size_t index = 0;
  for (const auto& [id, d] : data) {
    const auto host_seed = derive_seed(seed, index++);
    const auto hold = holdout_rows(d.rows(), holdout, host_seed);
    const auto fit_idx = complement(d.rows(), hold);
    const auto train = d.subset_rows(fit_idx);
    auto host_hp = hp;
    if (!grid_text.empty()) {
      if (kind != "gbt") throw InvalidArgument("--grid applies to --kind gbt only");
      const auto g = gbt::grid_search(train, parse_grid(grid_text), folds ? folds : 5, seed, hp);
      host_hp = g.best;
      if (grid_csv.empty()) grid_csv = "host,eta,gamma,lambda,max_depth,min_child_weight,subsample,rounds,mean_rmse_c\n";
      for (const auto& [h, rep] : g.cells) {
        grid_csv += concat(id, ',', format_double(h.eta), ',', format_double(h.gamma), ',', format_double(h.lambda),
                           ',', h.max_depth, ',', format_double(h.min_child_weight), ',', format_double(h.subsample),
                           ',', h.rounds, ',', format_double(rep.mean_rmse), '\n');
      }
    }
    const auto model = fit_model(kind, train, seed, host_hp, base);
    out.write(id + ".model", model.serialize());
    out.write(id + ".fans", thermal::serialize(thermal::fit_fan_models(train)));
    out.write(id + ".holdout", format_indices(hold));
    if (folds > 0) {
      const auto rep = kfold_cv(train, folds, trainer_for(kind, host_hp, base), seed, kind);
      cv += concat(id, ',', kind, ',', folds, ',', format_double(rep.mean_rmse), ',',
                   format_double(rep.normalized_mean_rmse()), '\n');
    }
    log << "trained " << kind << " for " << id << " on " << train.rows() << " rows\n";
  }
  if (folds > 0) out.write("cv_report.csv", cv);
  if (!grid_csv.empty()) out.write("grid.csv", grid_csv);
  out.finish(cfg);
}

// ---------------------------------------------------------------------------
// evaluate / features
// ---------------------------------------------------------------------------

inline void cmd_evaluate(Config cfg, std::ostream& log) {
  auto data = filter_hosts(load_dataset_dir(require(cfg, "data")), cfg.resolve<std::string>("hosts", ""));
  RunDir out(require(cfg, "out"));
  const auto seed = resolve_seed(cfg);
  const auto folds = resolve_count(cfg, "folds", 10);
  const auto hp = resolve_hyper(cfg);
  const auto base = resolve_baselines(cfg);
  auto specs = baseline_specs(base);
  specs.push_back({"GBT", gbt::trainer(hp)});
  std::string rows = "host,model,mean_rmse_c,normalized_rmse\n";
  std::map<std::string, std::pair<double, double>> totals;
  for (const auto& [id, d] : data) {
    for (const auto& r : compare_models(d, specs, folds, seed)) {
      rows += concat(id, ',', r.model_name, ',', format_double(r.mean_rmse), ',',
                     format_double(r.normalized_mean_rmse()), '\n');
      totals[r.model_name].first += r.mean_rmse;
      totals[r.model_name].second += r.normalized_mean_rmse();
    }
  }
  std::vector<std::pair<std::string, std::pair<double, double>>> rank(totals.begin(), totals.end());
  std::stable_sort(rank.begin(), rank.end(), [](const auto& a, const auto& b) { return a.second.first < b.second.first; });
  std::string summary = "model,mean_rmse_c,normalized_rmse\n";
  const double n = static_cast<double>(data.size());
  for (const auto& [name, t] : rank) {
    summary += concat(name, ',', format_double(t.first / n), ',', format_double(t.second / n), '\n');
    log << name << " mean RMSE " << t.first / n << " C\n";
  }
  out.write("evaluation.csv", rows);
  out.write("ranking.csv", summary);
  out.finish(cfg);
}

inline void cmd_features(Config cfg, std::ostream& log) {
  auto data = filter_hosts(load_dataset_dir(require(cfg, "data")), cfg.resolve<std::string>("hosts", ""));
  RunDir out(require(cfg, "out"));
  const auto seed = resolve_seed(cfg);
  const auto folds = resolve_count(cfg, "folds", 10);
  const auto hp = resolve_hyper(cfg);
  std::string imp = "host,rank,feature,splits\n";
  std::string curve = "host,n_features,mean_rmse_c\n";
  for (const auto& [id, d] : data) {
    const auto m = gbt::train(d, hp, seed);
    const auto counts = gbt::feature_importance(m);
    const auto ranked = gbt::rank_features(m);
    for (std::size_t r = 0; r < ranked.size(); ++r) imp += concat(id, ',', r + 1, ',', ranked[r], ',', counts.at(ranked[r]), '\n');
    if (folds > 0) {
      for (const auto& p : gbt::threshold_curve(d, ranked, folds, seed, hp)) {
        curve += concat(id, ',', p.n_features, ',', format_double(p.mean_rmse), '\n');
      }
    }
    log << id << " top features: " << ranked[0] << ", " << ranked[1] << ", " << ranked[2] << "\n";
  }
  out.write("importance.csv", imp);
  if (folds > 0) out.write("threshold_curve.csv", curve);
  out.finish(cfg);
}

// ---------------------------------------------------------------------------
// compare-theoretical
// ---------------------------------------------------------------------------

struct TheoryRow {
  std::string host;
  std::size_t row = 0;
  double t_cpu = 0.0;
  double rc = 0.0;
  double learned = 0.0;
};

struct TheoryReport {
  std::vector<TheoryRow> rows;
  double mae_rc = 0.0;
  double mae_learned = 0.0;
  bool capped = false;
};

// Samples n held-out rows across hosts and predicts each row's CPU
// temperature with the RC model (power = P_c, one interval elapsed) and
// with the learned ambient model minus the measured inlet temperature.
inline TheoryReport compare_theoretical(const Predictors& p, const std::map<std::string, Dataset>& data,
                                        const std::map<std::string, std::vector<std::size_t>>& holdout,
                                        std::size_t n, std::uint64_t seed, double t, const thermal::RcParams& rc) {
  std::vector<std::pair<std::size_t, std::size_t>> pool;  // (host index, row)
  std::vector<const Dataset*> ds;
  for (std::size_t h = 0; h < p.size(); ++h) {
    auto it = data.find(p.host_ids[h]);
    if (it == data.end()) throw InvalidArgument("no dataset for host " + p.host_ids[h]);
    if (!it->second.has_aux()) throw InvalidArgument("dataset " + p.host_ids[h] + " lacks T_in/T_cpu columns");
    ds.push_back(&it->second);
    auto hit = holdout.find(p.host_ids[h]);
    if (hit == holdout.end()) continue;
    for (auto r : hit->second) {
      if (r >= it->second.rows()) throw InvalidArgument("holdout row out of range for " + p.host_ids[h]);
      pool.emplace_back(h, r);
    }
  }
  if (pool.empty()) throw EmptyInputError("no held-out rows to compare on");
  TheoryReport rep;
  if (n > pool.size()) {
    rep.capped = true;
    n = pool.size();
  }
  Rng rng(seed);
  shuffle(pool, rng);
  pool.resize(n);
  const std::size_t power_col = ds.front()->column_index(feature_names()[kPower]);
  double e_rc = 0.0, e_l = 0.0;
  for (const auto& [h, r] : pool) {
    const auto& d = *ds[h];
    TheoryRow row;
    row.host = p.host_ids[h];
    row.row = r;
    row.t_cpu = d.t_cpu[r];
    row.rc = thermal::rc_temperature(d.at(r, power_col), d.t_inlet[r], t, rc);
    row.learned = guarded_predict(p, h, d.row(r)).value - d.t_inlet[r];
    e_rc += std::abs(row.rc - row.t_cpu);
    e_l += std::abs(row.learned - row.t_cpu);
    rep.rows.push_back(row);
  }
  rep.mae_rc = e_rc / static_cast<double>(n);
  rep.mae_learned = e_l / static_cast<double>(n);
  return rep;
}

inline std::map<std::string, std::vector<std::size_t>> load_holdouts(const std::string& dir,
                                                                     const std::vector<std::string>& hosts) {
  std::map<std::string, std::vector<std::size_t>> out;
  for (const auto& h : hosts) {
    const auto path = fs::path(dir) / (h + ".holdout");
    if (fs::exists(path)) out[h] = parse_indices(read_file(path.string()));
  }
  return out;
}

inline void cmd_compare_theoretical(Config cfg, std::ostream& log) {
  const auto models = require(cfg, "models");
  const auto data = load_dataset_dir(require(cfg, "data"));
  RunDir out(require(cfg, "out"));
  const auto n = resolve_count(cfg, "n", 1000);
  const auto seed = resolve_seed(cfg);
  const double t = cfg.resolve("interval_s", 600.0);
  thermal::RcParams rc;
  rc.r = cfg.resolve("rc.r", rc.r);
  rc.c = cfg.resolve("rc.c", rc.c);
  rc.t_initial_k = cfg.resolve("rc.t_initial_k", rc.t_initial_k);
  GuardParams g;
  g.enabled = cfg.resolve<std::int64_t>("guard.enabled", 1) != 0;
  g.margin = cfg.resolve("guard.margin", g.margin);
  const auto p = load_predictors(models, g, false);
  const auto rep = compare_theoretical(p, data, load_holdouts(models, p.host_ids), n, seed, t, rc);
  if (rep.capped) log << "warning: only " << rep.rows.size() << " held-out rows available; n capped\n";

  std::string tuples = "host,row,t_cpu_c,rc_c,learned_c,rc_abs_err_c,learned_abs_err_c\n";
  std::vector<double> er, el;
  for (const auto& r : rep.rows) {
    tuples += concat(r.host, ',', r.row, ',', format_double(r.t_cpu), ',', format_double(r.rc), ',',
                     format_double(r.learned), ',', format_double(std::abs(r.rc - r.t_cpu)), ',',
                     format_double(std::abs(r.learned - r.t_cpu)), '\n');
    er.push_back(std::abs(r.rc - r.t_cpu));
    el.push_back(std::abs(r.learned - r.t_cpu));
  }
  std::sort(er.begin(), er.end());
  std::sort(el.begin(), el.end());
  std::string ranked = "rank,rc_abs_err_c,learned_abs_err_c\n";
  for (std::size_t i = 0; i < er.size(); ++i) {
    ranked += concat(i + 1, ',', format_double(er[i]), ',', format_double(el[i]), '\n');
  }
  Config sum;
  sum.set("n", static_cast<double>(rep.rows.size()));
  sum.set("mae_rc_c", rep.mae_rc);
  sum.set("mae_learned_c", rep.mae_learned);
  sum.set("max_rc_err_c", er.back());
  sum.set("max_learned_err_c", el.back());
  out.write("tuples.csv", tuples);
  out.write("ranked_errors.csv", ranked);
  out.write("summary.txt", sum.serialize());
  out.finish(cfg);
  log << "mean absolute error: RC " << rep.mae_rc << " C, learned " << rep.mae_learned << " C over "
      << rep.rows.size() << " tuples\n";
}

// ---------------------------------------------------------------------------
// simulate / compare
// ---------------------------------------------------------------------------

struct SimSetup {
  sim::SimParams params;
  sim::FlavorMix mix;
  std::size_t vms = 100;
  std::string policy;
  std::uint64_t seed = 1;
  sched::GraniteParams granite;
  GuardParams guard;
};

// Resolves every simulation key; `preset` only changes the VM-count default.
inline SimSetup resolve_sim(Config& cfg) {
  SimSetup s;
  const auto preset = cfg.resolve<std::string>("preset", "desk");
  if (preset != "desk" && preset != "full") throw InvalidArgument("--preset must be desk or full");
  s.policy = cfg.resolve<std::string>("policy", "tas");
  s.seed = resolve_seed(cfg);
  s.vms = resolve_count(cfg, "vms", preset == "full" ? 750 : 100);
  auto& p = s.params;
  p.intervals = resolve_count(cfg, "intervals", 144);
  p.interval_s = cfg.resolve("interval_s", p.interval_s);
  p.u_max = cfg.resolve("u_max", p.u_max);
  p.t_red = cfg.resolve("t_red", p.t_red);
  p.degradation = cfg.resolve("degradation", p.degradation);
  p.t_supply = cfg.resolve("t_supply", p.t_supply);
  p.histogram_bin = cfg.resolve("histogram_bin", p.histogram_bin);
  p.host.cores = cfg.resolve("host_cores", p.host.cores);
  p.host.ram_mb = cfg.resolve("host_ram_mb", p.host.ram_mb);
  p.host.bandwidth_mbps = cfg.resolve("bandwidth_mbps", p.host.bandwidth_mbps);
  p.host.curve = thermal::PowerCurve::parse(cfg.resolve<std::string>("power_curve", p.host.curve.to_string()));
  s.mix = sim::FlavorMix::parse(cfg.resolve<std::string>("flavor_mix", s.mix.to_string()));
  s.granite.s = cfg.resolve("granite.s", s.granite.s);
  s.granite.min_threshold = cfg.resolve("granite.min_threshold", s.granite.min_threshold);
  s.guard.enabled = cfg.resolve<std::int64_t>("guard.enabled", 1) != 0;
  s.guard.margin = cfg.resolve("guard.margin", s.guard.margin);
  if (!(p.interval_s > 0.0) || p.intervals == 0) throw InvalidArgument("interval settings must be > 0");
  if (!(p.u_max > 0.0 && p.u_max <= 1.0)) throw InvalidArgument("--u_max must be in (0, 1]");
  if (!(p.degradation >= 0.0 && p.degradation <= 1.0)) throw InvalidArgument("--degradation must be in [0, 1]");
  if (p.host.cores <= 0 || !(p.host.ram_mb > 0.0) || !(p.host.bandwidth_mbps > 0.0)) {
    throw InvalidArgument("host capacities must be > 0");
  }
  return s;
}

inline std::string migrations_csv(const std::vector<sim::MigrationEvent>& events) {
  std::string out = "interval,vm,source,target,duration_s\n";
  for (const auto& e : events) {
    out += concat(e.interval, ',', e.vm, ',', e.source, ',', e.target, ',', format_double(e.duration_s), '\n');
  }
  return out;
}

inline void cmd_simulate(Config cfg, std::ostream& log) {
  const auto models = require(cfg, "models");
  const auto trace_dir = require(cfg, "trace");
  RunDir out(require(cfg, "out"));
  auto setup = resolve_sim(cfg);
  auto pred = load_predictors(models, setup.guard, true);
  const auto hosts = resolve_count(cfg, "hosts", static_cast<std::int64_t>(pred.size()));
  if (hosts == 0 || hosts > pred.size()) {
    throw InvalidArgument(concat("--hosts ", hosts, " but ", pred.size(), " models in ", models));
  }
  pred.host_ids.resize(hosts);
  pred.models.resize(hosts);
  pred.fans.resize(hosts);
  auto trace = sim::load_trace(trace_dir, setup.params.interval_s, setup.params.intervals);
  sim::Environment env{setup.params, &pred, &trace};
  auto policy = sched::make_policy(setup.policy, setup.granite);
  auto res = sim::run(env, *policy, setup.vms, setup.mix, setup.seed, cfg.serialize());
  out.write("intervals.csv", metrics::intervals_csv(res.report));
  out.write("summary.txt", metrics::summary_text(res.report));
  out.write("histogram.csv", metrics::histogram_csv(res.report));
  out.write("migrations.csv", migrations_csv(res.migrations));
  out.finish(cfg);
  const auto& r = res.report;
  log << setup.policy << ": peak " << r.peak_temp << " C, energy " << r.total_kwh << " kWh, mean active hosts "
      << r.mean_active_hosts << ", migrations " << r.migrations << "\n";
}

// Rebuilds the aggregate part of a report from a simulate output directory.
inline metrics::SimReport load_report(const std::string& dir) {
  const auto sum = Config::load((fs::path(dir) / "summary.txt").string());
  metrics::SimReport r;
  r.policy = sum.get("policy", std::string());
  r.config = read_file((fs::path(dir) / "run_config.txt").string());
  r.peak_temp = sum.get("peak_temp_c", 0.0);
  r.mean_temp = sum.get("mean_temp_c", 0.0);
  r.computing_kwh = sum.get("computing_kwh", 0.0);
  r.cooling_kwh = sum.get("cooling_kwh", 0.0);
  r.total_kwh = sum.get("total_kwh", 0.0);
  r.mean_active_hosts = sum.get("mean_active_hosts", 0.0);
  r.migrations = static_cast<std::size_t>(sum.get("migrations", std::int64_t{0}));
  r.sla.sla_tah = sum.get("sla_tah", 0.0);
  r.sla.pdm = sum.get("pdm", 0.0);
  r.sla.sla_violation = sum.get("sla_violation", 0.0);
  return r;
}

// Keys that legitimately differ between runs being compared.
inline const std::vector<std::string>& comparison_ignored_keys() {
  static const std::vector<std::string> k = {"policy", "out", "config"};
  return k;
}

inline std::vector<metrics::ComparisonRow> compare_dirs(const std::vector<std::string>& dirs) {
  std::vector<metrics::SimReport> reports;
  for (const auto& d : dirs) {
    auto r = load_report(d);
    // strip keys that are expected to differ so compare_runs sees equal configs
    auto c = Config::parse(r.config);
    Config kept;
    for (const auto& [k, v] : c.items()) {
      const auto& ig = comparison_ignored_keys();
      if (std::find(ig.begin(), ig.end(), k) == ig.end()) kept.set(k, v);
    }
    r.config = kept.serialize();
    reports.push_back(std::move(r));
  }
  return metrics::compare_runs(reports);
}

inline void cmd_compare(Config cfg, std::ostream& log) {
  const auto runs = split_list(require(cfg, "runs"));
  RunDir out(require(cfg, "out"));
  const auto rows = compare_dirs(runs);
  const auto table = metrics::comparison_table(rows);
  out.write("comparison.csv", table);
  out.finish(cfg);
  log << table;
}

// ---------------------------------------------------------------------------
// serve
// ---------------------------------------------------------------------------

struct ServeState {
  Predictors predictors;
  std::vector<std::string> versions;
};

struct HttpReply {
  int status = 200;
  std::string body;
};

inline HttpReply json_error(int status, const std::string& message, const std::string& field = {}) {
  nlohmann::json j;
  j["error"] = message;
  if (!field.empty()) j["field"] = field;
  return {status, j.dump()};
}

// POST /predict body: {"host_id": "...", "features": {"CPU": 12.5, ...}}.
// Every feature of the host's model must be present and numeric; unknown
// names are rejected so a misspelt column cannot be silently ignored.
inline HttpReply handle_predict(const ServeState& st, std::string_view body) {
  nlohmann::json req;
  try {
    req = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception&) {
    return json_error(400, "request body is not valid JSON");
  }
  if (!req.is_object()) return json_error(400, "request must be a JSON object");
  if (!req.contains("host_id") || !req["host_id"].is_string()) {
    return json_error(400, "host_id must be a string", "host_id");
  }
  const auto host = req["host_id"].get<std::string>();
  const auto& ids = st.predictors.host_ids;
  const auto it = std::find(ids.begin(), ids.end(), host);
  if (it == ids.end()) return json_error(404, "unknown host '" + host + "'", "host_id");
  const auto h = static_cast<std::size_t>(it - ids.begin());
  if (!req.contains("features") || !req["features"].is_object()) {
    return json_error(400, "features must be an object of name: number", "features");
  }
  const auto& feats = req["features"];
  const auto& names = st.predictors.models[h].feature_names();
  for (const auto& [k, v] : feats.items()) {
    if (std::find(names.begin(), names.end(), k) == names.end()) return json_error(400, "unknown feature '" + k + "'", k);
  }
  std::vector<double> x;
  for (const auto& name : names) {
    if (!feats.contains(name)) return json_error(400, "missing feature '" + name + "'", name);
    const auto& v = feats[name];
    if (!v.is_number()) return json_error(400, "feature '" + name + "' must be a number", name);
    const double d = v.get<double>();
    if (!std::isfinite(d)) return json_error(400, "feature '" + name + "' must be finite", name);
    x.push_back(d);
  }
  const auto g = guarded_predict(st.predictors, h, x);
  nlohmann::json resp;
  resp["host_id"] = host;
  resp["prediction"] = g.value;
  resp["raw_prediction"] = g.raw;
  resp["guard_flag"] = g.flagged;
  resp["critical"] = g.critical;
  resp["model_version"] = st.versions.at(h);
  return {200, resp.dump()};
}

inline HttpReply handle_health(const ServeState& st) {
  nlohmann::json j;
  j["status"] = "ok";
  j["hosts"] = st.predictors.host_ids;
  return {200, j.dump()};
}

inline ServeState load_serve_state(Config& cfg) {
  GuardParams g;
  g.enabled = cfg.resolve<std::int64_t>("guard.enabled", 1) != 0;
  g.margin = cfg.resolve("guard.margin", g.margin);
  ServeState st;
  st.predictors = load_predictors(require(cfg, "models"), g, false, &st.versions);
  return st;
}

// ---------------------------------------------------------------------------
// command table
// ---------------------------------------------------------------------------

struct Option {
  std::string key;
  std::string help;
};

struct CommandSpec {
  std::string name;
  std::string help;
  std::vector<Option> options;
  std::function<void(Config, std::ostream&)> run;
};

inline std::vector<Option> hyper_options() {
  return {{"eta", "learning rate"},
          {"gamma", "minimum split gain"},
          {"lambda", "L2 leaf penalty"},
          {"max_depth", "maximum tree depth"},
          {"min_child_weight", "minimum hessian sum per child"},
          {"subsample", "row sampling fraction per round"},
          {"rounds", "boosting rounds"},
          {"early_stopping", "1 to stop on a held-out split"},
          {"patience", "rounds without improvement before stopping"}};
}

inline std::vector<Option> baseline_options() {
  return {{"ridge_lambda", "ridge penalty"},   {"lasso_lambda", "lasso penalty"},
          {"sgd_lr", "SGD learning rate"},     {"sgd_epochs", "SGD epochs"},
          {"mlp_lr", "MLP learning rate"},     {"mlp_epochs", "MLP epochs"}};
}

inline std::vector<Option> join(std::vector<Option> a, const std::vector<Option>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

inline const std::vector<CommandSpec>& commands() {
  static const std::vector<CommandSpec> table = [] {
    std::vector<Option> ingest_opts = {{"input", "telemetry file, or directory of *.csv/*.log files"},
                                       {"out", "output directory"},
                                       {"delimiter", "field separator: one character, tab or semicolon"}};
    for (const auto& f : record_fields()) ingest_opts.push_back({"column." + f, "header name for " + f});
    return std::vector<CommandSpec>{
        {"synth-telemetry", "generate synthetic host telemetry",
         {{"out", "output directory"}, {"hosts", "number of hosts"}, {"rows", "rows per host"},
          {"seed", "random seed"}, {"start", "first timestamp, s"}, {"interval_s", "sampling period, s"}},
         cmd_synth_telemetry},
        {"synth-trace", "generate synthetic VM traces",
         {{"out", "output directory"}, {"vms", "number of VMs"}, {"hours", "trace length"},
          {"sample_s", "sampling period, s"}, {"start", "first timestamp, s"}, {"seed", "random seed"}},
         cmd_synth_trace},
        {"ingest", "clean telemetry logs into per-host datasets", ingest_opts, cmd_ingest},
        {"train", "fit per-host temperature and fan models",
         join(join({{"data", "dataset directory"},
                    {"out", "model directory"},
                    {"hosts", "comma-separated host subset"},
                    {"kind", "gbt, ols, ridge, lasso, sgd or mlp"},
                    {"seed", "random seed"},
                    {"folds", "cross-validation folds, 0 to skip"},
                    {"holdout", "fraction of rows held out from training"},
                    {"grid", "GBT grid search, e.g. eta=0.05,0.1;max_depth=2,4"}},
                   hyper_options()),
              baseline_options()),
         cmd_train},
        {"evaluate", "cross-validate GBT against the baseline regressors",
         join(join({{"data", "dataset directory"},
                    {"out", "output directory"},
                    {"hosts", "comma-separated host subset"},
                    {"seed", "random seed"},
                    {"folds", "cross-validation folds"}},
                   hyper_options()),
              baseline_options()),
         cmd_evaluate},
        {"features", "rank features by split count and sweep the feature count",
         join({{"data", "dataset directory"},
               {"out", "output directory"},
               {"hosts", "comma-separated host subset"},
               {"seed", "random seed"},
               {"folds", "cross-validation folds, 0 to skip the sweep"}},
              hyper_options()),
         cmd_features},
        {"compare-theoretical", "compare learned predictions with the RC model on held-out rows",
         {{"models", "model directory"},
          {"data", "dataset directory"},
          {"out", "output directory"},
          {"n", "number of tuples"},
          {"seed", "random seed"},
          {"interval_s", "elapsed time for the RC model, s"},
          {"rc.r", "thermal resistance, K/W"},
          {"rc.c", "heat capacity, J/K"},
          {"rc.t_initial_k", "initial temperature, K"},
          {"guard.enabled", "1 to apply the prediction guard"},
          {"guard.margin", "guard margin, C"}},
         cmd_compare_theoretical},
        {"simulate", "run a scheduling policy over a VM trace",
         {{"policy", "tas, rr or granite"},
          {"models", "model directory"},
          {"trace", "VM trace file or directory"},
          {"out", "output directory"},
          {"preset", "desk or full (VM count default)"},
          {"seed", "random seed"},
          {"vms", "number of VMs"},
          {"hosts", "number of hosts (default: all models)"},
          {"intervals", "scheduling intervals"},
          {"interval_s", "interval length, s"},
          {"u_max", "utilization cap, fraction"},
          {"t_red", "temperature limit, C"},
          {"degradation", "performance loss during migration, fraction"},
          {"t_supply", "cooling supply temperature, C"},
          {"histogram_bin", "temperature histogram bin, C"},
          {"host_cores", "cores per host"},
          {"host_ram_mb", "RAM per host, MB"},
          {"bandwidth_mbps", "migration bandwidth, Mbit/s"},
          {"power_curve", "util:watts,... knots"},
          {"flavor_mix", "flavor:weight,..."},
          {"guard.enabled", "1 to apply the prediction guard"},
          {"guard.margin", "guard margin, C"},
          {"granite.s", "standard deviations in the dynamic threshold"},
          {"granite.min_threshold", "floor for the dynamic threshold, percent"}},
         cmd_simulate},
        {"compare", "tabulate simulate runs that share a configuration",
         {{"runs", "comma-separated run directories, reference first"}, {"out", "output directory"}},
         cmd_compare},
    };
  }();
  return table;
}

}  // namespace thermo::cli
