#pragma once

#include <stdexcept>
#include <string>

namespace heng {

/// Malformed or unreadable input (files, JSON, schema). CLI exit code 2.
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

/// Violated contract at runtime (CFL, cycles, dimension mismatch, divergence).
/// CLI exit code 1.
struct DomainError : std::runtime_error {
  explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace heng
