#ifndef SIMPSONWF_ERROR_HPP
#define SIMPSONWF_ERROR_HPP

#include <stdexcept>
#include <string>

namespace simpsonwf {

enum class ErrorKind {
  invalid_argument,
  out_of_range,
  invalid_selection,
  invalid_scaling,
  numerical_domain,
  invalid_order,
  unsupported_regime,
  no_invariant_measure,
  grid_mismatch,
  config,
};

inline const char *to_string(ErrorKind kind) noexcept {
  switch (kind) {
  case ErrorKind::invalid_argument: return "invalid-argument";
  case ErrorKind::out_of_range: return "out-of-range";
  case ErrorKind::invalid_selection: return "invalid-selection";
  case ErrorKind::invalid_scaling: return "invalid-scaling";
  case ErrorKind::numerical_domain: return "numerical-domain";
  case ErrorKind::invalid_order: return "invalid-order";
  case ErrorKind::unsupported_regime: return "unsupported-regime";
  case ErrorKind::no_invariant_measure: return "no-invariant-measure";
  case ErrorKind::grid_mismatch: return "grid-mismatch";
  case ErrorKind::config: return "config";
  }
  return "unknown";
}

/// Single exception type for the library; `kind()` tells callers which
/// precondition failed.
class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string &message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

namespace detail {

inline void require(bool condition, ErrorKind kind, const std::string &message) {
  if (!condition) throw Error(kind, message);
}

} // namespace detail
} // namespace simpsonwf

#endif // SIMPSONWF_ERROR_HPP
