#include "methanol/toml.hpp"

#include <cctype>
#include <charconv>
#include <fstream>

namespace methanol {

bool TomlValue::as_bool(const std::string& where) const {
  if (kind != Kind::boolean) throw ConfigError("config: " + where + " must be a boolean");
  return b;
}

long long TomlValue::as_int(const std::string& where) const {
  if (kind != Kind::integer) throw ConfigError("config: " + where + " must be an integer");
  return i;
}

double TomlValue::as_double(const std::string& where) const {
  if (kind == Kind::integer) return static_cast<double>(i);
  if (kind != Kind::floating) throw ConfigError("config: " + where + " must be a number");
  return f;
}

const std::string& TomlValue::as_string(const std::string& where) const {
  if (kind != Kind::string) throw ConfigError("config: " + where + " must be a string");
  return s;
}

const std::vector<TomlValue>& TomlValue::as_array(const std::string& where) const {
  if (kind != Kind::array) throw ConfigError("config: " + where + " must be an array");
  return items;
}

namespace {

struct Cursor {
  const std::string& text;
  std::size_t pos = 0;
  int line = 1;

  bool done() const { return pos >= text.size(); }
  char peek() const { return text[pos]; }
  char take() {
    const char c = text[pos++];
    if (c == '\n') ++line;
    return c;
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError("config line " + std::to_string(line) + ": " + msg);
  }

  void skip_inline_ws() {
    while (!done() && (peek() == ' ' || peek() == '\t')) ++pos;
  }
  void skip_ws_and_comments() {
    while (!done()) {
      const char c = peek();
      if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        take();
      } else if (c == '#') {
        while (!done() && peek() != '\n') ++pos;
      } else {
        break;
      }
    }
  }
};

std::string parse_basic_string(Cursor& cur) {
  cur.take();  // opening quote
  std::string out;
  while (true) {
    if (cur.done()) cur.fail("unterminated string");
    const char c = cur.take();
    if (c == '"') break;
    if (c == '\n') cur.fail("newline inside string");
    if (c == '\\') {
      if (cur.done()) cur.fail("dangling escape");
      const char e = cur.take();
      switch (e) {
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        case 'r': out.push_back('\r'); break;
        case '"': out.push_back('"'); break;
        case '\\': out.push_back('\\'); break;
        default: cur.fail(std::string("unsupported escape \\") + e);
      }
    } else {
      out.push_back(c);
    }
  }
  return out;
}

TomlValue parse_value(Cursor& cur);

TomlValue parse_scalar_token(Cursor& cur) {
  std::string token;
  while (!cur.done()) {
    const char c = cur.peek();
    if (c == ',' || c == ']' || c == '#' || c == '\n' || c == '\r' || c == ' ' || c == '\t') break;
    token.push_back(cur.take());
  }
  if (token.empty()) cur.fail("expected a value");
  TomlValue v;
  if (token == "true" || token == "false") {
    v.kind = TomlValue::Kind::boolean;
    v.b = token == "true";
    return v;
  }
  const bool looks_float = token.find_first_of(".eE") != std::string::npos &&
                           token.find_first_not_of("+-0123456789.eE") == std::string::npos;
  if (!looks_float) {
    long long iv = 0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), iv);
    if (ec == std::errc() && ptr == token.data() + token.size()) {
      v.kind = TomlValue::Kind::integer;
      v.i = iv;
      return v;
    }
  }
  try {
    std::size_t used = 0;
    const double dv = std::stod(token, &used);
    if (used == token.size()) {
      v.kind = TomlValue::Kind::floating;
      v.f = dv;
      return v;
    }
  } catch (const std::exception&) {
  }
  cur.fail("cannot parse value '" + token + "'");
}

TomlValue parse_value(Cursor& cur) {
  cur.skip_inline_ws();
  if (cur.done()) cur.fail("expected a value");
  const char c = cur.peek();
  if (c == '"') {
    TomlValue v;
    v.kind = TomlValue::Kind::string;
    v.s = parse_basic_string(cur);
    return v;
  }
  if (c == '[') {
    cur.take();
    TomlValue v;
    v.kind = TomlValue::Kind::array;
    cur.skip_ws_and_comments();
    if (!cur.done() && cur.peek() == ']') {
      cur.take();
      return v;
    }
    while (true) {
      v.items.push_back(parse_value(cur));
      cur.skip_ws_and_comments();
      if (cur.done()) cur.fail("unterminated array");
      const char d = cur.take();
      if (d == ']') break;
      if (d != ',') cur.fail("expected ',' or ']' in array");
      cur.skip_ws_and_comments();
      if (!cur.done() && cur.peek() == ']') {  // trailing comma
        cur.take();
        break;
      }
    }
    return v;
  }
  return parse_scalar_token(cur);
}

std::string parse_key(Cursor& cur) {
  std::string key;
  while (!cur.done()) {
    const char c = cur.peek();
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.') {
      key.push_back(cur.take());
    } else {
      break;
    }
  }
  if (key.empty()) cur.fail("expected a key");
  return key;
}

}  // namespace

TomlTable parse_toml(const std::string& text) {
  TomlTable table;
  Cursor cur{text};
  std::string section;  // top-level keys live under ""
  while (true) {
    cur.skip_ws_and_comments();
    if (cur.done()) break;
    if (cur.peek() == '[') {
      cur.take();
      section = parse_key(cur);
      cur.skip_inline_ws();
      if (cur.done() || cur.take() != ']') cur.fail("unterminated section header");
      table[section];
      continue;
    }
    const std::string key = parse_key(cur);
    cur.skip_inline_ws();
    if (cur.done() || cur.take() != '=') cur.fail("expected '=' after key '" + key + "'");
    TomlValue value = parse_value(cur);
    cur.skip_inline_ws();
    if (!cur.done() && cur.peek() == '#') {
      while (!cur.done() && cur.peek() != '\n') cur.take();
    }
    if (!cur.done() && cur.peek() != '\n' && cur.peek() != '\r') {
      cur.fail("unexpected trailing characters after value for '" + key + "'");
    }
    if (table[section].count(key)) cur.fail("duplicate key '" + key + "'");
    table[section][key] = std::move(value);
  }
  return table;
}

TomlTable parse_toml_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_toml(text);
}

}  // namespace methanol
