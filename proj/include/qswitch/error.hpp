#pragma once

#include <stdexcept>
#include <string>

namespace qswitch {

/// Malformed or schema-violating experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Enumeration or iteration budget exhausted before a result could be certified.
class BudgetError : public std::runtime_error {
 public:
  explicit BudgetError(const std::string& what) : std::runtime_error(what) {}
};

/// A proven invariant failed at runtime. Always an implementation bug, never bad input.
class InvariantViolation : public std::logic_error {
 public:
  explicit InvariantViolation(const std::string& what) : std::logic_error(what) {}
};

}  // namespace qswitch
