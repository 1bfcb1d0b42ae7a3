#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

// The library is compiled once per precision. DFD_DOUBLE selects 64-bit reals
// and a distinct inline namespace, so both builds can be linked into one binary.
#ifdef DFD_DOUBLE
#define DFD_PRECISION_NS f64
#else
#define DFD_PRECISION_NS f32
#endif

namespace dfd {

// Error kinds shared by both precision builds.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error("shape error: " + what) {}
};

class AxisError : public Error {
 public:
  explicit AxisError(const std::string& what) : Error("axis error: " + what) {}
};

class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error("contract error: " + what) {}
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error("parse error: " + what) {}
};

class LoadError : public Error {
 public:
  explicit LoadError(const std::string& what) : Error("load error: " + what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("I/O error: " + what) {}
};

inline namespace DFD_PRECISION_NS {

#ifdef DFD_DOUBLE
using Real = double;
#else
using Real = float;
#endif

constexpr const char* kPrecisionName = sizeof(Real) == 8 ? "f64" : "f32";

}  // namespace DFD_PRECISION_NS
}  // namespace dfd
