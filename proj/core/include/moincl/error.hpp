#pragma once

#include <stdexcept>
#include <string>

namespace moincl {

/// Raised for contract violations on public operations (bad inputs, shape
/// mismatches, malformed files). Messages name the offending value.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace moincl
