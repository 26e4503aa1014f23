#pragma once

#include <stdexcept>
#include <string>

namespace saelab {

enum class ErrorKind {
  InvalidArgument,
  Usage,
  Io,
  Format,
  Consistency,
  Degenerate,
  Numeric,
  Contract,
};

const char* to_string(ErrorKind kind);

// Every failure raised by the library carries one of the kinds above so the
// C boundary can translate it to a stable status code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define SAELAB_DEFINE_ERROR(Name, Kind)                               \
  class Name : public Error {                                         \
   public:                                                            \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

SAELAB_DEFINE_ERROR(InvalidArgument, InvalidArgument)
SAELAB_DEFINE_ERROR(UsageError, Usage)
SAELAB_DEFINE_ERROR(IoError, Io)
SAELAB_DEFINE_ERROR(FormatError, Format)
SAELAB_DEFINE_ERROR(ConsistencyError, Consistency)
SAELAB_DEFINE_ERROR(DegenerateInput, Degenerate)
SAELAB_DEFINE_ERROR(ContractViolation, Contract)

#undef SAELAB_DEFINE_ERROR

/// Raised when training produces a non-finite value. Carries the step and the
/// batch offset so a diagnostic dump can point at the offending rows.
class NumericFailure : public Error {
 public:
  NumericFailure(const std::string& what, long step, long batch_index)
      : Error(ErrorKind::Numeric, what), step_(step), batch_index_(batch_index) {}
  long step() const noexcept { return step_; }
  long batch_index() const noexcept { return batch_index_; }

 private:
  long step_;
  long batch_index_;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw InvalidArgument(what);
}

}  // namespace saelab
