#pragma once

// Telemetry ingestion: delimited host logs -> cleaned HostRecords ->
// per-host Datasets with the ambient-temperature target.

#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "thermo/common.hpp"

namespace thermo {

struct HostRecord {
  std::string host_id;
  double timestamp = 0.0;  // seconds since epoch
  double cpu_load = 0.0;   // percent
  double ram_total = 0.0;  // MB
  double ram_used = 0.0;   // MB
  double n_cpu = 0.0;
  double n_cpu_used = 0.0;
  double net_rx = 0.0;  // Kbps
  double net_tx = 0.0;  // Kbps
  double power = 0.0;   // W
  double t_cpu1 = 0.0;  // degC
  double t_cpu2 = 0.0;  // degC
  std::array<double, 4> fan{};  // RPM
  double t_inlet = 0.0;  // degC
  double n_vms = 0.0;
};

inline double effective_cpu_temp(const HostRecord& r) { return std::max(r.t_cpu1, r.t_cpu2); }

// Inlet plus effective CPU temperature.
inline double ambient_target(const HostRecord& r) { return r.t_inlet + effective_cpu_temp(r); }

// Column order of every Dataset produced by ingestion. Models are only
// exchangeable between hosts because this order never changes.
enum Feature : std::size_t {
  kCpu = 0,
  kRam,
  kRamUsed,
  kNumCpu,
  kNumCpuUsed,
  kNetRx,
  kNetTx,
  kNumVms,
  kPower,
  kFan1,
  kFan2,
  kFan3,
  kFan4,
  kFeatureCount
};

inline const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> names = {"CPU",  "R",   "R_x",  "N_CPU", "N_CPUx",
                                                 "N_Rx", "N_Tx", "N_vm", "P_c",   "fs_1",
                                                 "fs_2", "fs_3", "fs_4"};
  return names;
}

inline constexpr std::string_view kTargetName = "T_amb";
inline constexpr std::string_view kInletName = "T_in";
inline constexpr std::string_view kCpuTempName = "T_cpu";

inline std::array<double, kFeatureCount> feature_vector(const HostRecord& r) {
  return {r.cpu_load, r.ram_total, r.ram_used, r.n_cpu,  r.n_cpu_used, r.net_rx, r.net_tx,
          r.n_vms,    r.power,     r.fan[0],   r.fan[1], r.fan[2],     r.fan[3]};
}

struct Bounds {
  double min = 0.0;
  double max = 0.0;
  bool operator==(const Bounds&) const = default;
  double clamp(double v) const { return std::clamp(v, min, max); }
  bool contains(double v) const { return v >= min && v <= max; }
};

// Row-major feature matrix plus target. t_inlet / t_cpu are auxiliary
// columns (never features) carried so analytical baselines can be scored on
// the same tuples; they are either empty or one entry per row.
struct Dataset {
  std::string host_id;
  std::vector<std::string> feature_names;
  std::vector<double> values;
  std::vector<double> target;
  std::vector<double> t_inlet;
  std::vector<double> t_cpu;
  std::vector<Bounds> bounds;
  Bounds target_bounds;

  std::size_t rows() const { return target.size(); }
  std::size_t cols() const { return feature_names.size(); }
  bool has_aux() const { return !t_inlet.empty(); }

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(values).subspan(i * cols(), cols());
  }
  double at(std::size_t i, std::size_t j) const { return values[i * cols() + j]; }

  std::vector<double> column(std::size_t j) const {
    std::vector<double> out(rows());
    for (std::size_t i = 0; i < rows(); ++i) out[i] = at(i, j);
    return out;
  }

  std::size_t column_index(std::string_view name) const {
    for (std::size_t j = 0; j < feature_names.size(); ++j) {
      if (feature_names[j] == name) return j;
    }
    throw InvalidArgument(concat("unknown feature '", name, "'"));
  }

  void recompute_bounds() {
    bounds.assign(cols(), Bounds{});
    for (std::size_t j = 0; j < cols(); ++j) {
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (std::size_t i = 0; i < rows(); ++i) {
        lo = std::min(lo, at(i, j));
        hi = std::max(hi, at(i, j));
      }
      bounds[j] = {lo, hi};
    }
    if (!target.empty()) {
      auto [lo, hi] = std::minmax_element(target.begin(), target.end());
      target_bounds = {*lo, *hi};
    }
  }

  void validate() const {
    if (rows() == 0) throw EmptyInputError("dataset '" + host_id + "' has no rows");
    if (values.size() != rows() * cols()) throw InvalidArgument("dataset shape mismatch");
    if (!t_inlet.empty() && (t_inlet.size() != rows() || t_cpu.size() != rows())) {
      throw InvalidArgument("auxiliary column length mismatch");
    }
  }

  Dataset subset_rows(std::span<const std::size_t> idx) const {
    Dataset out;
    out.host_id = host_id;
    out.feature_names = feature_names;
    out.values.reserve(idx.size() * cols());
    for (auto i : idx) {
      auto r = row(i);
      out.values.insert(out.values.end(), r.begin(), r.end());
      out.target.push_back(target[i]);
      if (has_aux()) {
        out.t_inlet.push_back(t_inlet[i]);
        out.t_cpu.push_back(t_cpu[i]);
      }
    }
    out.recompute_bounds();
    return out;
  }

  Dataset select_columns(std::span<const std::size_t> cols_idx) const {
    Dataset out;
    out.host_id = host_id;
    for (auto j : cols_idx) out.feature_names.push_back(feature_names.at(j));
    out.values.reserve(rows() * cols_idx.size());
    for (std::size_t i = 0; i < rows(); ++i) {
      for (auto j : cols_idx) out.values.push_back(at(i, j));
    }
    out.target = target;
    out.t_inlet = t_inlet;
    out.t_cpu = t_cpu;
    out.recompute_bounds();
    return out;
  }

  bool operator==(const Dataset&) const = default;
};

// Builds a dataset from raw columns; bounds are derived.
inline Dataset make_dataset(std::string host_id, std::vector<std::string> names,
                            std::vector<double> values, std::vector<double> target) {
  Dataset d;
  d.host_id = std::move(host_id);
  d.feature_names = std::move(names);
  d.values = std::move(values);
  d.target = std::move(target);
  d.validate();
  d.recompute_bounds();
  return d;
}

// ---------------------------------------------------------------------------
// parsing
// ---------------------------------------------------------------------------

// Logical record fields, in the order of the default header.
inline const std::vector<std::string>& record_fields() {
  static const std::vector<std::string> f = {
      "host_id", "timestamp", "cpu_load", "ram_total", "ram_used", "n_cpu",
      "n_cpu_used", "net_rx", "net_tx", "power", "t_cpu1", "t_cpu2",
      "fan1", "fan2", "fan3", "fan4", "t_inlet", "n_vms"};
  return f;
}

struct IngestConfig {
  char delimiter = ',';
  std::map<std::string, std::string> column_map;  // logical field -> header name

  // Keys: "delimiter" (a single character, or "tab"), "column.<field>".
  static IngestConfig from_config(const Config& cfg) {
    IngestConfig ic;
    const auto delim = cfg.get("delimiter", ",");
    if (delim == "tab" || delim == "\\t") {
      ic.delimiter = '\t';
    } else if (delim == "semicolon") {
      ic.delimiter = ';';
    } else if (delim.size() == 1) {
      ic.delimiter = delim[0];
    } else {
      throw InvalidArgument("delimiter must be a single character, 'tab' or 'semicolon'");
    }
    for (const auto& [k, v] : cfg.items()) {
      if (k.rfind("column.", 0) == 0) {
        const auto field = k.substr(7);
        const auto& known = record_fields();
        if (std::find(known.begin(), known.end(), field) == known.end()) {
          throw InvalidArgument("unknown record field in column map: " + field);
        }
        ic.column_map[field] = v;
      }
    }
    return ic;
  }

  std::string header_for(const std::string& field) const {
    auto it = column_map.find(field);
    return it == column_map.end() ? field : it->second;
  }
};

struct ParseResult {
  std::vector<HostRecord> records;
  std::size_t raw_rows = 0;
  std::size_t dropped = 0;
  std::map<std::string, std::size_t> drop_reasons;

  void drop(const std::string& reason, std::size_t n = 1) {
    dropped += n;
    drop_reasons[reason] += n;
  }
};

// Splits one delimited line; double-quoted fields may contain the delimiter
// and use "" as an escaped quote.
inline std::vector<std::string> split_fields(std::string_view line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delim) {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

// Keeps the last occurrence of each (host, timestamp); returns rows removed.
inline std::size_t drop_duplicate_timestamps(std::vector<HostRecord>& records) {
  std::map<std::pair<std::string, double>, std::size_t> last;
  for (std::size_t i = 0; i < records.size(); ++i) {
    last[{records[i].host_id, records[i].timestamp}] = i;
  }
  if (last.size() == records.size()) return 0;
  std::vector<HostRecord> kept;
  kept.reserve(last.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (last[{records[i].host_id, records[i].timestamp}] == i) kept.push_back(std::move(records[i]));
  }
  const auto removed = records.size() - kept.size();
  records = std::move(kept);
  return removed;
}

namespace detail {

// Returns an empty string when the record is valid, otherwise the reason.
inline std::string check_record(const HostRecord& r) {
  const double vals[] = {r.timestamp, r.cpu_load, r.ram_total, r.ram_used, r.n_cpu,
                         r.n_cpu_used, r.net_rx,  r.net_tx,    r.power,    r.t_cpu1,
                         r.t_cpu2,    r.fan[0],   r.fan[1],    r.fan[2],   r.fan[3],
                         r.t_inlet,   r.n_vms};
  for (double v : vals) {
    if (!std::isfinite(v)) return "non_finite";
  }
  if (r.host_id.empty()) return "missing_host";
  if (r.cpu_load < 0.0 || r.cpu_load > 100.0) return "out_of_range";
  if (r.ram_used > r.ram_total) return "out_of_range";
  for (double v : {r.ram_total, r.ram_used, r.n_cpu, r.n_cpu_used, r.net_rx, r.net_tx,
                   r.power, r.t_cpu1, r.t_cpu2, r.fan[0], r.fan[1], r.fan[2], r.fan[3],
                   r.t_inlet, r.n_vms}) {
    if (v < 0.0) return "out_of_range";
  }
  return {};
}

}  // namespace detail

inline ParseResult parse_log_text(std::string_view text, const IngestConfig& cfg) {
  std::vector<std::string> lines;
  for (auto& l : split(text, '\n')) {
    if (!l.empty() && l.back() == '\r') l.pop_back();
    lines.push_back(std::move(l));
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty() || trim(lines.front()).empty()) throw EmptyInputError("empty telemetry input");

  const auto header = split_fields(lines.front(), cfg.delimiter);
  const auto& fields = record_fields();
  std::vector<std::size_t> pos(fields.size());
  for (std::size_t f = 0; f < fields.size(); ++f) {
    const auto want = cfg.header_for(fields[f]);
    auto it = std::find_if(header.begin(), header.end(),
                           [&](const std::string& h) { return trim(h) == want; });
    if (it == header.end()) throw SchemaError(want);
    pos[f] = static_cast<std::size_t>(it - header.begin());
  }

  ParseResult res;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (trim(lines[li]).empty()) continue;
    ++res.raw_rows;
    const auto cells = split_fields(lines[li], cfg.delimiter);
    HostRecord r;
    bool ok = true;
    std::array<double, 17> num{};
    for (std::size_t f = 0; f < fields.size() && ok; ++f) {
      if (pos[f] >= cells.size()) {
        ok = false;
        break;
      }
      if (f == 0) {
        r.host_id = std::string(trim(cells[pos[f]]));
        continue;
      }
      auto v = parse_double(cells[pos[f]]);
      if (!v) {
        ok = false;
        break;
      }
      num[f - 1] = *v;
    }
    if (!ok) {
      res.drop("unparseable");
      continue;
    }
    r.timestamp = num[0];
    r.cpu_load = num[1];
    r.ram_total = num[2];
    r.ram_used = num[3];
    r.n_cpu = num[4];
    r.n_cpu_used = num[5];
    r.net_rx = num[6];
    r.net_tx = num[7];
    r.power = num[8];
    r.t_cpu1 = num[9];
    r.t_cpu2 = num[10];
    r.fan = {num[11], num[12], num[13], num[14]};
    r.t_inlet = num[15];
    r.n_vms = num[16];
    if (auto why = detail::check_record(r); !why.empty()) {
      res.drop(why);
      continue;
    }
    res.records.push_back(std::move(r));
  }
  if (auto dup = drop_duplicate_timestamps(res.records); dup > 0) res.drop("duplicate_timestamp", dup);
  return res;
}

inline ParseResult parse_log(const std::string& path, const IngestConfig& cfg) {
  if (!std::filesystem::exists(path)) throw Error("no such file: " + path);
  return parse_log_text(read_file(path), cfg);
}

// Groups by host; rows within a host are in timestamp order.
inline std::map<std::string, Dataset> partition_by_host(const std::vector<HostRecord>& records) {
  std::map<std::string, std::vector<const HostRecord*>> groups;
  for (const auto& r : records) groups[r.host_id].push_back(&r);

  std::map<std::string, Dataset> out;
  for (auto& [host, rows] : groups) {
    std::stable_sort(rows.begin(), rows.end(),
                     [](const HostRecord* a, const HostRecord* b) { return a->timestamp < b->timestamp; });
    Dataset d;
    d.host_id = host;
    d.feature_names = feature_names();
    d.values.reserve(rows.size() * kFeatureCount);
    for (const auto* r : rows) {
      const auto fv = feature_vector(*r);
      d.values.insert(d.values.end(), fv.begin(), fv.end());
      d.target.push_back(ambient_target(*r));
      d.t_inlet.push_back(r->t_inlet);
      d.t_cpu.push_back(effective_cpu_temp(*r));
    }
    d.recompute_bounds();
    out.emplace(host, std::move(d));
  }
  return out;
}

// ---------------------------------------------------------------------------
// canonical dataset file
// ---------------------------------------------------------------------------

// Header: feature names, the target name, then T_in,T_cpu when present.
// One comma-separated row per observation, shortest round-trip decimals,
// '\n' line endings.
inline std::string write_dataset(const Dataset& d) {
  d.validate();
  std::string out;
  for (std::size_t j = 0; j < d.cols(); ++j) out += d.feature_names[j] + ",";
  out += kTargetName;
  if (d.has_aux()) out += concat(",", kInletName, ",", kCpuTempName);
  out += '\n';
  for (std::size_t i = 0; i < d.rows(); ++i) {
    for (std::size_t j = 0; j < d.cols(); ++j) out += format_double(d.at(i, j)) + ",";
    out += format_double(d.target[i]);
    if (d.has_aux()) out += "," + format_double(d.t_inlet[i]) + "," + format_double(d.t_cpu[i]);
    out += '\n';
  }
  return out;
}

inline Dataset read_dataset(std::string_view text, std::string host_id) {
  auto lines = split(text, '\n');
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw EmptyInputError("empty dataset file for " + host_id);
  auto header = split(lines.front(), ',');
  std::size_t n_cols = 0;
  bool aux = false;
  if (header.size() >= 3 && header[header.size() - 2] == kInletName && header.back() == kCpuTempName) {
    aux = true;
    header.resize(header.size() - 2);
  }
  if (header.empty() || header.back() != kTargetName) {
    throw FormatError(concat("dataset header must end with ", kTargetName));
  }
  n_cols = header.size() - 1;
  Dataset d;
  d.host_id = std::move(host_id);
  d.feature_names.assign(header.begin(), header.end() - 1);
  const std::size_t width = n_cols + 1 + (aux ? 2 : 0);
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto cells = split(lines[li], ',');
    if (cells.size() != width) throw FormatError(concat("dataset row ", li, " has wrong width"));
    for (std::size_t j = 0; j < n_cols; ++j) d.values.push_back(require_double(cells[j], "feature"));
    d.target.push_back(require_double(cells[n_cols], "target"));
    if (aux) {
      d.t_inlet.push_back(require_double(cells[n_cols + 1], kInletName));
      d.t_cpu.push_back(require_double(cells[n_cols + 2], kCpuTempName));
    }
  }
  d.validate();
  d.recompute_bounds();
  return d;
}

inline void save_dataset(const Dataset& d, const std::string& path) { write_file(path, write_dataset(d)); }

inline Dataset load_dataset(const std::string& path) {
  return read_dataset(read_file(path), std::filesystem::path(path).stem().string());
}

// Loads every *.csv in a directory, keyed by host id (file stem).
inline std::map<std::string, Dataset> load_dataset_dir(const std::string& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error("not a directory: " + dir);
  std::map<std::string, Dataset> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() == ".csv") {
      auto d = load_dataset(e.path().string());
      out.emplace(d.host_id, std::move(d));
    }
  }
  if (out.empty()) throw EmptyInputError("no dataset files in " + dir);
  return out;
}

}  // namespace thermo
