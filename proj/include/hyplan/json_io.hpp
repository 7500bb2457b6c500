/* Copyright 2026 The hyplan Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Canonical JSON output and strict field access shared by every file format.
//
// Output is deterministic: keys appear in the container's iteration order
// (sorted for nlohmann::json, insertion order for ordered_json), floats carry
// 17 significant digits, and scalar-only arrays stay on one line.

#ifndef HYPLAN_JSON_IO_HPP_
#define HYPLAN_JSON_IO_HPP_

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>

#include "hyplan/error.hpp"
#include "json.hpp"

namespace hyplan {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

inline std::string format_double(double v) {
  if (!std::isfinite(v)) {
    throw ValidationError("cannot serialize non-finite number");
  }
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  std::string s(buf);
  if (s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

namespace detail {

template <class J>
bool is_scalar_array(const J& j) {
  for (const auto& e : j) {
    if (e.is_object() || e.is_array()) return false;
  }
  return true;
}

template <class J>
void write_json(const J& j, std::string& out, int level) {
  const std::string pad(2 * level, ' ');
  const std::string inner(2 * (level + 1), ' ');
  switch (j.type()) {
    case nlohmann::json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        out += inner;
        out += J(it.key()).dump();
        out += ": ";
        write_json(it.value(), out, level + 1);
      }
      out += "\n" + pad + "}";
      return;
    }
    case nlohmann::json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      if (is_scalar_array(j)) {
        out += "[";
        bool first = true;
        for (const auto& e : j) {
          if (!first) out += ", ";
          first = false;
          write_json(e, out, level + 1);
        }
        out += "]";
        return;
      }
      out += "[\n";
      bool first = true;
      for (const auto& e : j) {
        if (!first) out += ",\n";
        first = false;
        out += inner;
        write_json(e, out, level + 1);
      }
      out += "\n" + pad + "]";
      return;
    }
    case nlohmann::json::value_t::number_float:
      out += format_double(j.template get<double>());
      return;
    default:
      out += j.dump();
      return;
  }
}

}  // namespace detail

template <class J>
std::string to_canonical_string(const J& j) {
  std::string out;
  detail::write_json(j, out, 0);
  out += "\n";
  return out;
}

// Single-line form used for JSON-lines traces.
template <class J>
std::string to_compact_string(const J& j) {
  std::string out;
  if (j.is_object()) {
    out += "{";
    bool first = true;
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (!first) out += ",";
      first = false;
      out += J(it.key()).dump();
      out += ":";
      out += to_compact_string(it.value());
    }
    out += "}";
  } else if (j.is_number_float()) {
    out += format_double(j.template get<double>());
  } else {
    out += j.dump();
  }
  return out;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("failed reading '" + path + "'");
  return ss.str();
}

inline void write_text_file(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.flush();
  if (!out) throw IoError("failed writing '" + path + "'");
}

inline Json parse_json_text(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(what + ": " + e.what());
  }
}

inline Json read_json_file(const std::string& path) {
  return parse_json_text(read_text_file(path), path);
}

// Typed, strict access to the members of one JSON object. Every key that is
// read is recorded; finish() rejects the remaining ones unless lenient.
class FieldReader {
 public:
  FieldReader(const Json& obj, std::string where, bool lenient)
      : obj_(obj), where_(std::move(where)), lenient_(lenient) {
    if (!obj_.is_object()) {
      throw ValidationError(where_ + " must be a JSON object");
    }
  }

  bool has(const std::string& key) const { return obj_.contains(key); }

  const Json& at(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) {
      throw ValidationError(where_ + ": missing key '" + key + "'");
    }
    return *it;
  }

  double number(const std::string& key) {
    const Json& v = at(key);
    if (!v.is_number()) {
      throw ValidationError(where_ + ": '" + key + "' must be a number");
    }
    return v.get<double>();
  }

  double number_or(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    return number(key);
  }

  std::int64_t integer(const std::string& key) {
    const Json& v = at(key);
    if (!v.is_number_integer()) {
      throw ValidationError(where_ + ": '" + key + "' must be an integer");
    }
    return v.get<std::int64_t>();
  }

  bool boolean(const std::string& key) {
    const Json& v = at(key);
    if (!v.is_boolean()) {
      throw ValidationError(where_ + ": '" + key + "' must be a boolean");
    }
    return v.get<bool>();
  }

  std::string string(const std::string& key) {
    const Json& v = at(key);
    if (!v.is_string()) {
      throw ValidationError(where_ + ": '" + key + "' must be a string");
    }
    return v.get<std::string>();
  }

  const Json& array(const std::string& key) {
    const Json& v = at(key);
    if (!v.is_array()) {
      throw ValidationError(where_ + ": '" + key + "' must be an array");
    }
    return v;
  }

  void finish() const {
    if (lenient_) return;
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) {
        throw ValidationError(where_ + ": unknown key '" + it.key() + "'");
      }
    }
  }

  const std::string& where() const { return where_; }

 private:
  const Json& obj_;
  std::string where_;
  bool lenient_;
  std::set<std::string> seen_;
};

}  // namespace hyplan

#endif  // HYPLAN_JSON_IO_HPP_
