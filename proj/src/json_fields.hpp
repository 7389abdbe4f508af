// Copyright 2026 The Cloudbus Authors.
// SPDX-License-Identifier: Apache-2.0

// Typed field access for config documents. Every failure is a kConfigError
// whose message starts with the dotted key path.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>

#include "json.hpp"

#include "cloudbus/error.hpp"

namespace cloudbus::detail {

[[noreturn]] inline void config_fail(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::kConfigError, path + ": " + what);
}

inline std::string join_path(const std::string& base, std::string_view key) {
  return base.empty() ? std::string(key) : base + "." + std::string(key);
}

inline std::string index_path(const std::string& base, std::size_t i) {
  return base + "[" + std::to_string(i) + "]";
}

template <typename T>
T as(const nlohmann::json& v, const std::string& path) {
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) config_fail(path, "expected a boolean");
    return v.get<bool>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) config_fail(path, "expected an integer");
    if (v.is_number_unsigned()) {
      const auto u = v.get<std::uint64_t>();
      if (u > static_cast<std::uint64_t>(std::numeric_limits<T>::max())) config_fail(path, "integer out of range");
      return static_cast<T>(u);
    }
    const auto s = v.get<std::int64_t>();
    if constexpr (std::is_unsigned_v<T>) {
      if (s < 0) config_fail(path, "expected a non-negative integer");
      return static_cast<T>(s);
    } else {
      if (s < static_cast<std::int64_t>(std::numeric_limits<T>::min()) ||
          s > static_cast<std::int64_t>(std::numeric_limits<T>::max())) {
        config_fail(path, "integer out of range");
      }
      return static_cast<T>(s);
    }
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) config_fail(path, "expected a number");
    const T d = v.get<T>();
    if (!std::isfinite(d)) config_fail(path, "expected a finite number");
    return d;
  } else {
    static_assert(std::is_same_v<T, std::string>);
    if (!v.is_string()) config_fail(path, "expected a string");
    return v.get<std::string>();
  }
}

inline const nlohmann::json* member(const nlohmann::json& obj, std::string_view key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

inline void require_object(const nlohmann::json& v, const std::string& path) {
  if (!v.is_object()) config_fail(path.empty() ? "<root>" : path, "expected an object");
}

inline void require_array(const nlohmann::json& v, const std::string& path) {
  if (!v.is_array()) config_fail(path, "expected an array");
}

template <typename T>
T need(const nlohmann::json& obj, const std::string& base, std::string_view key) {
  const std::string path = join_path(base, key);
  const auto* v = member(obj, key);
  if (v == nullptr) config_fail(path, "missing required key");
  return as<T>(*v, path);
}

template <typename T>
T get_or(const nlohmann::json& obj, const std::string& base, std::string_view key, T fallback) {
  const auto* v = member(obj, key);
  return v == nullptr ? fallback : as<T>(*v, join_path(base, key));
}

template <typename T>
std::optional<T> maybe(const nlohmann::json& obj, const std::string& base, std::string_view key) {
  const auto* v = member(obj, key);
  if (v == nullptr || v->is_null()) return std::nullopt;
  return as<T>(*v, join_path(base, key));
}

}  // namespace cloudbus::detail
