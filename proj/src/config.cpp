#include "mirig/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mirig::config {

namespace {

[[noreturn]] void fail(int line, const std::string& what) {
  throw std::invalid_argument("toml: line " + std::to_string(line) + ": " + what);
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// Strips a trailing comment, respecting quoted strings.
std::string strip_comment(const std::string& s) {
  bool in_str = false;
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') in_str = !in_str;
    if (s[i] == '#' && !in_str) return s.substr(0, i);
  }
  return s;
}

TomlValue parse_scalar(const std::string& raw, int line) {
  TomlValue v;
  if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"') {
    v.kind = TomlValue::Kind::text;
    v.s = raw.substr(1, raw.size() - 2);
    if (v.s.find('"') != std::string::npos) fail(line, "embedded quote in string");
    return v;
  }
  if (raw == "true" || raw == "false") {
    v.kind = TomlValue::Kind::boolean;
    v.b = raw == "true";
    return v;
  }
  // integer first, then float; full-token match required
  char* end = nullptr;
  long long i = std::strtoll(raw.c_str(), &end, 10);
  if (end && *end == '\0' && !raw.empty()) {
    v.kind = TomlValue::Kind::integer;
    v.i = i;
    return v;
  }
  double d = std::strtod(raw.c_str(), &end);
  if (end && *end == '\0' && !raw.empty()) {
    v.kind = TomlValue::Kind::real;
    v.d = d;
    return v;
  }
  fail(line, "unparseable value '" + raw + "'");
}

TomlValue parse_value(const std::string& raw, int line) {
  if (!raw.empty() && raw.front() == '[') {
    if (raw.back() != ']') fail(line, "unterminated array");
    TomlValue v;
    v.kind = TomlValue::Kind::array;
    std::string body = raw.substr(1, raw.size() - 2);
    std::string cur;
    bool in_str = false;
    auto flush = [&]() {
      std::string t = trim(cur);
      if (!t.empty()) v.arr.push_back(parse_scalar(t, line));
      cur.clear();
    };
    for (char c : body) {
      if (c == '"') in_str = !in_str;
      if (c == ',' && !in_str) {
        flush();
        continue;
      }
      cur += c;
    }
    if (in_str) fail(line, "unterminated string in array");
    flush();
    return v;
  }
  return parse_scalar(raw, line);
}

}  // namespace

TomlFile TomlFile::parse(const std::string& content) {
  TomlFile f;
  std::istringstream in(content);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(strip_comment(line));
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']') fail(lineno, "unterminated section header");
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty()) fail(lineno, "empty section name");
      if (section.find('.') != std::string::npos) fail(lineno, "nested tables unsupported");
      f.sections_[section];
      continue;
    }
    size_t eq = std::string::npos;
    bool in_str = false;
    for (size_t i = 0; i < t.size(); ++i) {
      if (t[i] == '"') in_str = !in_str;
      if (t[i] == '=' && !in_str) {
        eq = i;
        break;
      }
    }
    if (eq == std::string::npos) fail(lineno, "expected key = value");
    std::string key = trim(t.substr(0, eq));
    std::string val = trim(t.substr(eq + 1));
    if (key.empty()) fail(lineno, "empty key");
    if (val.empty()) fail(lineno, "empty value");
    auto& sec = f.sections_[section];
    if (sec.count(key)) fail(lineno, "duplicate key '" + key + "'");
    sec[key] = parse_value(val, lineno);
  }
  return f;
}

TomlFile TomlFile::parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("toml: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

const TomlValue* TomlFile::find(const std::string& section, const std::string& key) const {
  auto s = sections_.find(section);
  if (s == sections_.end()) return nullptr;
  auto k = s->second.find(key);
  return k == s->second.end() ? nullptr : &k->second;
}

bool TomlFile::has(const std::string& section, const std::string& key) const {
  return find(section, key) != nullptr;
}

int64_t TomlFile::get_int(const std::string& section, const std::string& key, int64_t def) const {
  const TomlValue* v = find(section, key);
  if (!v) return def;
  if (v->kind != TomlValue::Kind::integer)
    throw std::invalid_argument("toml: " + section + "." + key + " is not an integer");
  return v->i;
}

double TomlFile::get_double(const std::string& section, const std::string& key, double def) const {
  const TomlValue* v = find(section, key);
  if (!v) return def;
  if (v->kind == TomlValue::Kind::integer) return double(v->i);
  if (v->kind != TomlValue::Kind::real)
    throw std::invalid_argument("toml: " + section + "." + key + " is not a number");
  return v->d;
}

bool TomlFile::get_bool(const std::string& section, const std::string& key, bool def) const {
  const TomlValue* v = find(section, key);
  if (!v) return def;
  if (v->kind != TomlValue::Kind::boolean)
    throw std::invalid_argument("toml: " + section + "." + key + " is not a bool");
  return v->b;
}

std::string TomlFile::get_str(const std::string& section, const std::string& key,
                              const std::string& def) const {
  const TomlValue* v = find(section, key);
  if (!v) return def;
  if (v->kind != TomlValue::Kind::text)
    throw std::invalid_argument("toml: " + section + "." + key + " is not a string");
  return v->s;
}

std::vector<int64_t> TomlFile::get_int_array(const std::string& section,
                                             const std::string& key) const {
  const TomlValue* v = find(section, key);
  std::vector<int64_t> out;
  if (!v) return out;
  if (v->kind != TomlValue::Kind::array)
    throw std::invalid_argument("toml: " + section + "." + key + " is not an array");
  for (const auto& e : v->arr) {
    if (e.kind != TomlValue::Kind::integer)
      throw std::invalid_argument("toml: " + section + "." + key + " has a non-integer element");
    out.push_back(e.i);
  }
  return out;
}

std::vector<double> TomlFile::get_double_array(const std::string& section,
                                               const std::string& key) const {
  const TomlValue* v = find(section, key);
  std::vector<double> out;
  if (!v) return out;
  if (v->kind != TomlValue::Kind::array)
    throw std::invalid_argument("toml: " + section + "." + key + " is not an array");
  for (const auto& e : v->arr) {
    if (e.kind == TomlValue::Kind::integer)
      out.push_back(double(e.i));
    else if (e.kind == TomlValue::Kind::real)
      out.push_back(e.d);
    else
      throw std::invalid_argument("toml: " + section + "." + key + " has a non-numeric element");
  }
  return out;
}

std::vector<std::string> TomlFile::get_str_array(const std::string& section,
                                                 const std::string& key) const {
  const TomlValue* v = find(section, key);
  std::vector<std::string> out;
  if (!v) return out;
  if (v->kind != TomlValue::Kind::array)
    throw std::invalid_argument("toml: " + section + "." + key + " is not an array");
  for (const auto& e : v->arr) {
    if (e.kind != TomlValue::Kind::text)
      throw std::invalid_argument("toml: " + section + "." + key + " has a non-string element");
    out.push_back(e.s);
  }
  return out;
}

}  // namespace mirig::config
