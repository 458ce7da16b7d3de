#pragma once

// Shared plumbing: error types, seeded random helpers, exact number
// formatting and the key = value config reader used by every tool.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <type_traits>
#include <vector>

namespace thermo {

// ---------------------------------------------------------------------------
// errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SchemaError : public Error {
 public:
  explicit SchemaError(std::string column)
      : Error("missing required column: " + column), column_(std::move(column)) {}
  const std::string& column() const noexcept { return column_; }

 private:
  std::string column_;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

template <typename... Parts>
std::string concat(const Parts&... parts) {
  std::ostringstream os;
  (os << ... << parts);
  return os.str();
}

// ---------------------------------------------------------------------------
// random
// ---------------------------------------------------------------------------

// mt19937_64 is fully specified by the standard; the std distributions are
// not, so the few draws we need are derived from raw engine output here.
using Rng = std::mt19937_64;

// Independent sub-stream seed (splitmix64 finalizer over seed and stream).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

// Unbiased integer in [0, n) by rejection.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  if (n <= 1) return 0;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t v = 0;
  do {
    v = rng();
  } while (v >= limit);
  return v % n;
}

inline double normal(Rng& rng, double mean = 0.0, double sd = 1.0) {
  // Box-Muller; u1 kept away from zero.
  const double u1 = (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = uniform01(rng);
  return mean + sd * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_index(rng, i));
    std::swap(v[i - 1], v[j]);
  }
}

// ---------------------------------------------------------------------------
// text helpers
// ---------------------------------------------------------------------------

// Shortest representation that parses back to the identical double.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw Error("format_double failed");
  return std::string(buf, ptr);
}

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline double require_double(std::string_view s, std::string_view what) {
  auto v = parse_double(s);
  if (!v) throw FormatError(concat("expected a number for ", what, ", got '", s, "'"));
  return *v;
}

inline std::vector<std::string> split(std::string_view s, char delim) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(delim, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      break;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error("write failed: " + path);
}

// ---------------------------------------------------------------------------
// key = value config
// ---------------------------------------------------------------------------

// Flat key = value file. '#' starts a comment, blank lines ignored, later
// keys override earlier ones. Keys are kept sorted so that serialize() is a
// canonical form usable as a reproducibility record.
class Config {
 public:
  Config() = default;

  static Config parse(std::string_view text, std::string_view origin = "<string>") {
    Config cfg;
    std::size_t line_no = 0;
    for (const auto& raw : split(text, '\n')) {
      ++line_no;
      std::string_view line = raw;
      if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) {
        throw FormatError(concat(origin, ":", line_no, ": expected key = value"));
      }
      auto key = trim(line.substr(0, eq));
      auto value = trim(line.substr(eq + 1));
      if (key.empty()) throw FormatError(concat(origin, ":", line_no, ": empty key"));
      cfg.values_[std::string(key)] = std::string(value);
    }
    return cfg;
  }

  static Config load(const std::string& path) { return parse(read_file(path), path); }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  void set(const std::string& key, double value) { values_[key] = format_double(value); }

  std::string get(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  std::string get(const std::string& key, const char* fallback) const {
    return get(key, std::string(fallback));
  }

  double get(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : require_double(it->second, key);
  }

  std::int64_t get(const std::string& key, std::int64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const double v = require_double(it->second, key);
    if (v != std::floor(v)) throw FormatError("expected an integer for " + key);
    return static_cast<std::int64_t>(v);
  }

  std::int64_t get(const std::string& key, int fallback) const {
    return get(key, static_cast<std::int64_t>(fallback));
  }

  // Resolve a key: returns the configured value, records the fallback when
  // the key is absent, so serialize() always shows what was actually used.
  template <typename T>
  T resolve(const std::string& key, T fallback) {
    if constexpr (std::is_same_v<T, std::string>) {
      if (!has(key)) set(key, fallback);
      return get(key, fallback);
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!has(key)) set(key, static_cast<double>(fallback));
      return static_cast<T>(get(key, static_cast<double>(fallback)));
    } else {
      if (!has(key)) set(key, std::to_string(fallback));
      return static_cast<T>(get(key, static_cast<std::int64_t>(fallback)));
    }
  }

  const std::map<std::string, std::string>& items() const { return values_; }

  std::string serialize() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
  }

  bool operator==(const Config&) const = default;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace thermo
