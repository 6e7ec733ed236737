#pragma once

#include <stdexcept>
#include <string>

namespace ckfgait {

// Bad or inconsistent input data (files, configs, series).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Degenerate geometry (zero-length vectors, parallel axes, unreachable poses).
struct GeometryError : std::runtime_error {
  explicit GeometryError(const std::string& msg) : std::runtime_error(msg) {}
};

// Failed factorization or non-finite values inside the filter.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace ckfgait
