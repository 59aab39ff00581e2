// Copyright 2026 The confbt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace confbt {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace confbt
