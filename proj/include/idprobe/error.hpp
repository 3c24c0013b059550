#pragma once

#include <stdexcept>
#include <string>

namespace idprobe {

// Failure category. The CLI maps these onto its exit-code contract.
enum class ErrorKind {
  input,       // malformed files, bad arguments, too few points
  io,          // filesystem failures
  estimation,  // the estimator ran but could not produce a finite positive slope
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error input_error(const std::string& what) {
  return Error(ErrorKind::input, what);
}

inline Error io_error(const std::string& what) {
  return Error(ErrorKind::io, what);
}

inline Error estimation_error(const std::string& what) {
  return Error(ErrorKind::estimation, what);
}

}  // namespace idprobe
