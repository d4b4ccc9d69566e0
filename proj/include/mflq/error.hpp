#pragma once

#include <stdexcept>
#include <string>

namespace mflq {

enum class ErrorKind {
  kInput,                  // malformed or inconsistent problem description
  kAssumption,             // standing assumptions violated (e.g. R not uniformly PD)
  kDivergence,             // non-finite value during integration
  kConvergence,            // iteration or sweep cap exceeded
  kNotPsd,                 // matrix expected PSD is not, beyond tolerance
  kDefiniteness,           // Cholesky of a weight matrix failed
  kStabilityPrecondition,  // operation requires a mean-square stable pair
  kNotStabilizable,        // no stabilizing seed found
  kInsufficientData,       // too few usable points for a fit
  kInternal,               // an invariant the algorithm guarantees was broken
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace mflq
