#pragma once

#include <stdexcept>
#include <string>

namespace hercules {

// Caller passed arguments that break an operation's preconditions.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Invalid index or workload configuration (bad lengths, ranges, sizes).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// On-disk index files disagree with each other or with their header.
class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hercules
