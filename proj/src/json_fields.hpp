#pragma once

// Strict field access over nlohmann::json objects. Every accessor records the
// key it consumed so `finish()` can reject keys nobody asked for.

#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "gidea/errors.hpp"

namespace gidea::detail {

class FieldReader {
 public:
  FieldReader(const nlohmann::json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw SchemaError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const std::string& key) const { return obj_.contains(key); }

  const nlohmann::json& required(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) throw SchemaError(child(key), "missing required field");
    return *it;
  }

  const nlohmann::json* optional(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end() || it->is_null()) return nullptr;
    return &*it;
  }

  std::string string(const std::string& key) { return as_string(required(key), child(key)); }

  std::string string_or(const std::string& key, std::string fallback) {
    const auto* v = optional(key);
    return v ? as_string(*v, child(key)) : fallback;
  }

  long long integer(const std::string& key) { return as_integer(required(key), child(key)); }

  std::vector<std::string> strings(const std::string& key) {
    const auto& v = required(key);
    return as_strings(v, child(key));
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) throw SchemaError(child(it.key()), "unknown key");
    }
  }

  static std::string as_string(const nlohmann::json& v, const std::string& path) {
    if (!v.is_string()) throw SchemaError(path, "expected a string");
    return v.get<std::string>();
  }

  static long long as_integer(const nlohmann::json& v, const std::string& path) {
    if (!v.is_number_integer()) throw SchemaError(path, "expected an integer");
    return v.get<long long>();
  }

  static double as_number(const nlohmann::json& v, const std::string& path) {
    if (!v.is_number()) throw SchemaError(path, "expected a number");
    return v.get<double>();
  }

  static std::vector<std::string> as_strings(const nlohmann::json& v, const std::string& path) {
    if (!v.is_array()) throw SchemaError(path, "expected an array of strings");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_string(v[i], path + "[" + std::to_string(i) + "]"));
    return out;
  }

 private:
  const nlohmann::json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace gidea::detail
