#pragma once

// Line-oriented text model files: "key tok tok ..." per line, numbers in
// shortest round-trip form so a save/load cycle is bit-exact.

#include <string>
#include <string_view>
#include <vector>

#include "thermo/common.hpp"

namespace thermo::io {

class Writer {
 public:
  Writer& line(std::string_view key) {
    out_ += key;
    out_ += '\n';
    return *this;
  }

  template <typename... Ts>
  Writer& field(std::string_view key, const Ts&... toks) {
    out_ += key;
    (append(toks), ...);
    out_ += '\n';
    return *this;
  }

  Writer& numbers(std::string_view key, const std::vector<double>& v) {
    out_ += key;
    append(v.size());
    for (double x : v) append(x);
    out_ += '\n';
    return *this;
  }

  Writer& words(std::string_view key, const std::vector<std::string>& v) {
    out_ += key;
    append(v.size());
    for (const auto& w : v) append(w);
    out_ += '\n';
    return *this;
  }

  const std::string& str() const { return out_; }

 private:
  void append(double v) { out_ += ' ' + format_double(v); }
  void append(std::size_t v) { out_ += ' ' + std::to_string(v); }
  void append(int v) { out_ += ' ' + std::to_string(v); }
  void append(std::int64_t v) { out_ += ' ' + std::to_string(v); }
  void append(bool v) { out_ += v ? " 1" : " 0"; }
  void append(std::string_view v) {
    if (v.empty() || v.find_first_of(" \t\n") != std::string_view::npos) {
      throw FormatError(concat("token '", v, "' cannot contain whitespace"));
    }
    out_ += ' ';
    out_ += v;
  }
  void append(const std::string& v) { append(std::string_view(v)); }
  void append(const char* v) { append(std::string_view(v)); }

  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view text, std::string origin = "model")
      : origin_(std::move(origin)) {
    for (auto& l : split(text, '\n')) {
      if (!trim(l).empty()) lines_.push_back(std::move(l));
    }
  }

  bool done() const { return pos_ >= lines_.size(); }

  std::string peek_key() const {
    if (done()) return {};
    auto toks = tokens(lines_[pos_]);
    return toks.empty() ? std::string() : toks.front();
  }

  // Consumes the next line, which must start with `key`; returns the rest.
  std::vector<std::string> expect(std::string_view key) {
    if (done()) fail(concat("unexpected end of file, wanted '", key, "'"));
    auto toks = tokens(lines_[pos_]);
    if (toks.empty() || toks.front() != key) {
      fail(concat("line ", pos_ + 1, ": expected '", key, "'"));
    }
    ++pos_;
    toks.erase(toks.begin());
    return toks;
  }

  std::string word(std::string_view key) {
    auto t = expect(key);
    if (t.size() != 1) fail(concat("'", key, "' takes one value"));
    return t.front();
  }

  double number(std::string_view key) { return to_number(word(key), key); }

  std::int64_t integer(std::string_view key) {
    const double v = number(key);
    if (v != std::floor(v)) fail(concat("'", key, "' must be an integer"));
    return static_cast<std::int64_t>(v);
  }

  std::vector<double> numbers(std::string_view key) {
    auto t = expect(key);
    const auto n = count(t, key);
    std::vector<double> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(to_number(t[i + 1], key));
    return out;
  }

  std::vector<std::string> words(std::string_view key) {
    auto t = expect(key);
    count(t, key);
    return {t.begin() + 1, t.end()};
  }

  double to_number(const std::string& s, std::string_view key) const {
    auto v = parse_double(s);
    if (!v) fail(concat("'", key, "': bad number '", s, "'"));
    return *v;
  }

  [[noreturn]] void fail(const std::string& msg) const { throw FormatError(origin_ + ": " + msg); }

 private:
  static std::vector<std::string> tokens(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
      if (c == ' ' || c == '\t' || c == '\r') {
        if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
      } else {
        cur += c;
      }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
  }

  std::size_t count(const std::vector<std::string>& t, std::string_view key) const {
    if (t.empty()) fail(concat("'", key, "' missing count"));
    const double n = to_number(t.front(), key);
    if (n < 0 || n != std::floor(n) || static_cast<std::size_t>(n) + 1 != t.size()) {
      fail(concat("'", key, "' count does not match values"));
    }
    return static_cast<std::size_t>(n);
  }

  std::vector<std::string> lines_;
  std::size_t pos_ = 0;
  std::string origin_;
};

}  // namespace thermo::io
