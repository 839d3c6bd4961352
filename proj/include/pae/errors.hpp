#pragma once

#include <stdexcept>
#include <string>

namespace pae {

// Invalid tensor shapes (mismatched dimensions, bad reshape targets).
struct ShapeError : std::invalid_argument {
  explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Out-of-range or otherwise invalid user-supplied parameter.
struct ParamError : std::invalid_argument {
  explicit ParamError(const std::string& msg) : std::invalid_argument(msg) {}
};

// A caller violated an API contract (e.g. backward on a non-scalar loss).
struct ContractError : std::logic_error {
  explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

// Non-finite values or failed numerical procedures; message names the stage.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem failures; message carries the path.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace pae
