#pragma once

#include <stdexcept>
#include <string>

namespace fklab {

// Input/data problems (bad CSV, bad config, degenerate columns). CLI exit 1.
struct input_error : std::runtime_error {
  explicit input_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failures (singular systems where the contract forbids fallback). CLI exit 2.
struct numeric_error : std::runtime_error {
  explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace fklab
