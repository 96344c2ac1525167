#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "methanol/errors.hpp"

namespace methanol {

// Minimal TOML subset used for run configs: [sections], key = value with
// strings, integers, floats, booleans and flat arrays, plus # comments.
struct TomlValue {
  enum class Kind { boolean, integer, floating, string, array };
  Kind kind = Kind::string;
  bool b = false;
  long long i = 0;
  double f = 0.0;
  std::string s;
  std::vector<TomlValue> items;

  bool as_bool(const std::string& where) const;
  long long as_int(const std::string& where) const;
  double as_double(const std::string& where) const;  // accepts integers too
  const std::string& as_string(const std::string& where) const;
  const std::vector<TomlValue>& as_array(const std::string& where) const;
};

using TomlSection = std::map<std::string, TomlValue>;
using TomlTable = std::map<std::string, TomlSection>;

TomlTable parse_toml(const std::string& text);
TomlTable parse_toml_file(const std::filesystem::path& path);

}  // namespace methanol
