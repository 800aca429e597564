#pragma once
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace mirig::config {

// Minimal TOML subset: [section] headers and key = value lines where value is
// a string, bool, integer, float, or a flat array of those.  Covers sweep
// configs; nested tables, dates, and multi-line strings are rejected.
struct TomlValue {
  enum class Kind { boolean, integer, real, text, array };
  Kind kind = Kind::integer;
  bool b = false;
  int64_t i = 0;
  double d = 0.0;
  std::string s;
  std::vector<TomlValue> arr;
};

class TomlFile {
 public:
  static TomlFile parse(const std::string& content);
  static TomlFile parse_file(const std::string& path);

  bool has(const std::string& section, const std::string& key) const;
  int64_t get_int(const std::string& section, const std::string& key, int64_t def) const;
  double get_double(const std::string& section, const std::string& key, double def) const;
  bool get_bool(const std::string& section, const std::string& key, bool def) const;
  std::string get_str(const std::string& section, const std::string& key,
                      const std::string& def) const;
  std::vector<int64_t> get_int_array(const std::string& section, const std::string& key) const;
  std::vector<double> get_double_array(const std::string& section, const std::string& key) const;
  std::vector<std::string> get_str_array(const std::string& section, const std::string& key) const;

  const std::map<std::string, std::map<std::string, TomlValue>>& sections() const {
    return sections_;
  }

 private:
  const TomlValue* find(const std::string& section, const std::string& key) const;
  std::map<std::string, std::map<std::string, TomlValue>> sections_;
};

}  // namespace mirig::config
