// Copyright 2026 The confbt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "confbt/util/error.hpp"

namespace confbt {

/// Parses a possibly partial object over the defaults of T. Keys that T
/// does not serialize are rejected so typos do not pass silently.
template <class T>
T FromJsonWithDefaults(const nlohmann::json& j, const std::string& context, const T& defaults = T{}) {
  nlohmann::json merged = defaults;
  if (j.is_null()) return merged.get<T>();
  if (!j.is_object()) Fail(ErrorKind::kConfig, context, ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!merged.contains(key)) Fail(ErrorKind::kConfig, context, ": unknown key '", key, "'");
    merged[key] = value;
  }
  try {
    return merged.get<T>();
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kConfig, context, ": ", e.what());
  }
}

}  // namespace confbt
