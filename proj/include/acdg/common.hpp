#pragma once

// Shared primitives: shape arithmetic, the error taxonomy, and the numeric
// floors used across the library.

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace acdg {

using Shape = std::vector<int>;

inline long long numel(const Shape& s) {
  long long n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

// ===== Error taxonomy =====
//
// DimensionError  - arrays fed to an op do not fit together
// ConfigError     - a configuration value is out of its legal range
// UsageError      - an API contract was violated (call order, modes, ...)
// IoError         - filesystem trouble (missing path, unwritable, ...)
// SchemaError     - a file parsed but its layout is not the expected one

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

// Checkpoint loading distinguishes three failure classes so callers can
// report them separately.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

class CorruptManifestError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class ShapeMismatchError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class TruncatedPayloadError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

// Floor applied to every standard deviation before division (batch norm,
// per-channel style statistics, cosine norms, row normalization).
constexpr double kStdEps = 1e-5;

// Floor for mean-square powers (SNR denominator).
constexpr double kPowerEps = 1e-12;

inline void check_dim(bool ok, const std::string& msg) {
  if (!ok) throw DimensionError(msg);
}

inline void check_config(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

inline void check_usage(bool ok, const std::string& msg) {
  if (!ok) throw UsageError(msg);
}

}  // namespace acdg
