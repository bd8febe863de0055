#pragma once

#include <stdexcept>
#include <string>

namespace phbm {

/// Bad arguments or violated preconditions.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A density evaluated outside its support.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Factorization failure, non-finite state, or a sampler that cannot proceed.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-fatal diagnostics. The default sink writes to stderr.
using WarningSink = void (*)(const std::string& message);
void set_warning_sink(WarningSink sink);
void warn(const std::string& message);

}  // namespace phbm
