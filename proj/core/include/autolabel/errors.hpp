#pragma once

#include <stdexcept>
#include <string>

namespace autolabel {

// Malformed or inconsistent input data (bundles, configs, artifact files).
// The CLI maps this to its data-error exit code.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// A processing stage failed on valid inputs.
class StageError : public std::runtime_error {
 public:
  explicit StageError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace autolabel
