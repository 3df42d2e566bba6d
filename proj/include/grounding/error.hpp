#pragma once

#include <stdexcept>
#include <string>

namespace grounding {

// Malformed or out-of-range input (bad probabilities, boxes outside the map,
// dimension mismatches, unparseable files).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A size guard refused to run an operation (brute force on a large map,
// exact binomial tail with too many trials).
class GuardExceeded : public std::length_error {
 public:
  using std::length_error::length_error;
};

}  // namespace grounding
