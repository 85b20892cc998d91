// Copyright (c) 2026 The d2ft authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace d2ft {

/// Error categories. The CLI maps each category to a distinct exit code.
enum class errc {
  config,     // invalid configuration (bad dims, bad budget, bad rank)
  input,      // missing/inconsistent runtime inputs (files, table dims)
  dimension,  // tensor shape mismatch
  state,      // operation called in an invalid state (e.g. missing cache)
  numeric,    // non-finite values where finite ones are required
  size,       // problem size exceeds a hard enumeration bound
};

class Error : public std::runtime_error {
 public:
  Error(errc kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  errc kind() const { return kind_; }

 private:
  errc kind_;
};

inline Error config_error(const std::string& msg) { return Error(errc::config, msg); }
inline Error input_error(const std::string& msg) { return Error(errc::input, msg); }
inline Error dimension_error(const std::string& msg) { return Error(errc::dimension, msg); }
inline Error state_error(const std::string& msg) { return Error(errc::state, msg); }
inline Error numeric_error(const std::string& msg) { return Error(errc::numeric, msg); }
inline Error size_error(const std::string& msg) { return Error(errc::size, msg); }

}  // namespace d2ft
