#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace taskgrasp {

enum class ErrorKind {
  InvalidInput,
  InvalidIntrinsics,
  InvalidConfig,
  InvalidPose,
  InvalidContact,
  InvalidScore,
  DegenerateGeometry,
  UndefinedDirection,
  FrameUndefined,
  EmptySurface,
  UnsupportedShape,
  NoGraspFound,
  Io,
  Numerical,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace taskgrasp
