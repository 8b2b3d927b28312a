#pragma once

#include <cctype>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "facet/error.hpp"

// Parser for the TOML subset used by run configs: [section] headers (one
// level), key = value pairs, '#' comments, and values that are strings,
// integers, floats, booleans or one-line arrays of those.

namespace facet::config {

namespace detail {

class LineParser {
 public:
  LineParser(std::string_view s, std::string where) : s_(s), where_(std::move(where)) {}

  [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(where_ + ": " + msg); }

  void skip_ws() {
    while (i_ < s_.size() && (s_[i_] == ' ' || s_[i_] == '\t')) ++i_;
  }
  bool at_end_or_comment() {
    skip_ws();
    return i_ >= s_.size() || s_[i_] == '#';
  }
  char peek() const { return i_ < s_.size() ? s_[i_] : '\0'; }

  std::string bare_key() {
    skip_ws();
    const std::size_t start = i_;
    while (i_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[i_])) || s_[i_] == '_' || s_[i_] == '-')) ++i_;
    if (i_ == start) fail("expected a key");
    return std::string(s_.substr(start, i_ - start));
  }

  void expect(char c) {
    skip_ws();
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++i_;
  }

  nlohmann::json value() {
    skip_ws();
    const char c = peek();
    if (c == '"') return string();
    if (c == '[') return array();
    if (s_.substr(i_, 4) == "true") {
      i_ += 4;
      return true;
    }
    if (s_.substr(i_, 5) == "false") {
      i_ += 5;
      return false;
    }
    return number();
  }

 private:
  nlohmann::json string() {
    ++i_;
    std::string out;
    while (true) {
      if (i_ >= s_.size()) fail("unterminated string");
      const char c = s_[i_++];
      if (c == '"') break;
      if (c != '\\') {
        out += c;
        continue;
      }
      if (i_ >= s_.size()) fail("unterminated escape");
      switch (s_[i_++]) {
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        default: fail("unsupported escape sequence");
      }
    }
    return out;
  }

  nlohmann::json array() {
    ++i_;
    nlohmann::json arr = nlohmann::json::array();
    skip_ws();
    if (peek() == ']') {
      ++i_;
      return arr;
    }
    while (true) {
      arr.push_back(value());
      skip_ws();
      if (peek() == ',') {
        ++i_;
        skip_ws();
        if (peek() == ']') {  // trailing comma
          ++i_;
          return arr;
        }
        continue;
      }
      if (peek() == ']') {
        ++i_;
        return arr;
      }
      fail("expected ',' or ']' in array");
    }
  }

  nlohmann::json number() {
    const std::size_t start = i_;
    while (i_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[i_])) || s_[i_] == '+' || s_[i_] == '-' ||
                              s_[i_] == '.' || s_[i_] == '_'))
      ++i_;
    std::string tok(s_.substr(start, i_ - start));
    std::erase(tok, '_');
    if (tok.empty()) fail("expected a value");
    const bool is_float = tok.find_first_of(".eE") != std::string::npos || tok == "inf" || tok == "nan";
    const char* b = tok.data();
    const char* e = tok.data() + tok.size();
    if (!is_float) {
      if (tok.front() == '+') ++b;
      std::int64_t v = 0;
      auto [p, ec] = std::from_chars(b, e, v);
      if (ec != std::errc() || p != e) fail("invalid value '" + tok + "'");
      return v;
    }
    double v = 0.0;
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e) fail("invalid number '" + tok + "'");
    return v;
  }

  std::string_view s_;
  std::string where_;
  std::size_t i_ = 0;
};

}  // namespace detail

/// Parses a config document into {key: value, section: {key: value}}.
inline nlohmann::json parse_toml(const std::string& text, const std::string& name = "config") {
  nlohmann::json root = nlohmann::json::object();
  nlohmann::json* table = &root;
  std::string section;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    detail::LineParser p(line, name + ":" + std::to_string(lineno));
    if (p.at_end_or_comment()) continue;
    if (p.peek() == '[') {
      p.expect('[');
      section = p.bare_key();
      p.expect(']');
      if (!p.at_end_or_comment()) p.fail("unexpected text after section header");
      if (root.contains(section)) p.fail("duplicate section [" + section + "]");
      root[section] = nlohmann::json::object();
      table = &root[section];
      continue;
    }
    const std::string key = p.bare_key();
    p.expect('=');
    nlohmann::json v = p.value();
    if (!p.at_end_or_comment()) p.fail("unexpected text after value of '" + key + "'");
    if (table->contains(key)) p.fail("duplicate key '" + (section.empty() ? key : section + "." + key) + "'");
    (*table)[key] = std::move(v);
  }
  return root;
}

inline nlohmann::json load_toml(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_toml(ss.str(), path.string());
}

}  // namespace facet::config
