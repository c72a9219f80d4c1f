#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ivdrf {

enum class ErrorKind {
  schema,
  parse,
  empty_data,
  invalid_plan,
  invalid_argument,
  insufficient_support,
  rank_deficiency,
  bandwidth_selection,
  conditioning,
  low_density,
  nuisance_training,
  fold,
  misuse,
  propensity,
  coverage_gap,
  refused,
  bootstrap,
  benchmark,
  unavailable,
  io,
  internal,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a kind so the CLI can map it
/// onto an exit code without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) throw Error(kind, message);
}

}  // namespace ivdrf
