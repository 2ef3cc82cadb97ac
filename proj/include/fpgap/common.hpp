#pragma once

#include <stdexcept>
#include <string>

namespace fpgap {

/// Malformed files, truncated blobs, bad magic.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Double-precision pivoting degraded; callers may retry in rational mode.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace fpgap
