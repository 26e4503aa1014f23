#include "saelab/error.hpp"

namespace saelab {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::Usage: return "usage";
    case ErrorKind::Io: return "io";
    case ErrorKind::Format: return "format";
    case ErrorKind::Consistency: return "consistency";
    case ErrorKind::Degenerate: return "degenerate-input";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Contract: return "contract-violation";
  }
  return "unknown";
}

}  // namespace saelab
