// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace mpicont {

/// Raised when a caller breaks an operation's precondition (relative path,
/// empty image, Incompatible decision passed where a launchable one is
/// required, ...).
class ContractViolation : public std::invalid_argument {
 public:
  explicit ContractViolation(const std::string& what) : std::invalid_argument(what) {}
};

/// Raised when an input document carries no usable content at all.
class MalformedInput : public std::runtime_error {
 public:
  explicit MalformedInput(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mpicont
