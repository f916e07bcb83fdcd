// Copyright (C) 2026 tpskit contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace tps {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace tps
