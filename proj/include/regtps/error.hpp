#ifndef REGTPS_ERROR_HPP
#define REGTPS_ERROR_HPP

#include <stdexcept>
#include <string>

namespace regtps {

// Bad arguments: wrong dimensions, out-of-range parameters, malformed points.
class InputError : public std::invalid_argument {
 public:
  explicit InputError(const std::string& what) : std::invalid_argument(what) {}
};

// A factorization or decomposition that should have succeeded did not.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Collinear or otherwise degenerate knot layouts.
class RankDeficiencyError : public NumericalError {
 public:
  explicit RankDeficiencyError(const std::string& what) : NumericalError(what) {}
};

// Input files that parse but carry unusable content.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

class SchemaError : public DataError {
 public:
  explicit SchemaError(const std::string& what) : DataError(what) {}
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

class SamplingError : public std::runtime_error {
 public:
  explicit SamplingError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace regtps

#endif
