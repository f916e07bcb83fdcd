// Copyright (C) 2026 tpskit contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace tps {

// Shape/dimension mismatches between tensors or weights.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration (bad schedule location, non-divisible dims, ...).
// Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// File-format and filesystem failures. Maps to CLI exit code 2.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// A runtime self-check failed (partition not a partition, non-finite
// logits, ...). Maps to CLI exit code 1.
class InvariantError : public std::runtime_error {
public:
    explicit InvariantError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace tps
