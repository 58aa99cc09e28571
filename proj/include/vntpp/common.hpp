#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace vntpp {

enum class ErrorCode {
  Parse,
  Validation,
  Io,
  Shape,
  NonFinite,
  NotScalar,
  IndexOutOfRange,
  TimeOrder,
  UnsupportedKernel,
  Explosion,
  DegenerateSplit,
  UnsupportedDataset,
  InvalidArgument,
};

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& msg)
      : std::runtime_error(msg), code_(code) {}
  ErrorCode code() const { return code_; }

private:
  ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& msg) {
  throw Error(code, msg);
}

// Fail-fast NaN/Inf detection in tensor primitives. On by default; timed
// training runs may switch it off via TrainConfig.
bool nonfinite_checks_enabled();
void set_nonfinite_checks(bool enabled);

// Worker cap for parallel primitives (matmul). 0 = hardware default.
int max_threads();
void set_max_threads(int n);

}  // namespace vntpp
