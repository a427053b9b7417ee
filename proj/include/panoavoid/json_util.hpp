// Copyright 2026 The panoavoid Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <utility>

#include "json.hpp"

namespace panoavoid {

/// Throws on any key of `j` that `reference` (a serialized default) lacks,
/// recursing into nested objects.
inline void reject_unknown_config_keys(const nlohmann::json& j, const nlohmann::json& reference,
                                       const std::string& where = "config") {
  if (!j.is_object()) throw std::invalid_argument(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!reference.contains(key)) {
      throw std::invalid_argument(where + ": unknown key '" + key + "'");
    }
    if (value.is_object() && reference.at(key).is_object()) {
      reject_unknown_config_keys(value, reference.at(key), where + "." + key);
    }
  }
}

}  // namespace panoavoid

/// Like NLOHMANN_JSON_SERIALIZE_ENUM, but unknown names are errors.
#define PANOAVOID_JSON_ENUM(E, ...)                                                    \
  inline const auto& E##_json_names() {                                               \
    static const std::pair<E, const char*> names[] = __VA_ARGS__;                     \
    return names;                                                                      \
  }                                                                                    \
  inline void to_json(nlohmann::json& j, const E& e) {                                \
    for (const auto& [k, v] : E##_json_names()) {                                      \
      if (k == e) {                                                                    \
        j = v;                                                                         \
        return;                                                                        \
      }                                                                                \
    }                                                                                  \
    throw std::invalid_argument("unnamed " #E " value");                               \
  }                                                                                    \
  inline void from_json(const nlohmann::json& j, E& e) {                              \
    const std::string s = j.get<std::string>();                                        \
    for (const auto& [k, v] : E##_json_names()) {                                      \
      if (s == v) {                                                                    \
        e = k;                                                                         \
        return;                                                                        \
      }                                                                                \
    }                                                                                  \
    throw std::invalid_argument("unknown " #E " '" + s + "'");                         \
  }
