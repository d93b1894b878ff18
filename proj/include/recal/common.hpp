#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace recal {

#ifdef RECAL_SINGLE_PRECISION
using real = float;
#else
using real = double;
#endif

/// Base class for all errors raised by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid configuration: bad shapes, incompatible dimensions, bad config keys.
struct ConfigError : Error {
  using Error::Error;
};

/// Caller misused an API or the command line.
struct UsageError : Error {
  using Error::Error;
};

/// Non-finite values where finite ones are required (NaN loss, exploding grads).
struct NumericError : Error {
  using Error::Error;
};

/// A verification suite (gradient check, end-to-end claim) failed.
struct VerificationError : Error {
  using Error::Error;
};

/// File could not be read, written, or parsed.
struct IoError : Error {
  using Error::Error;
};

namespace detail {
inline void str_cat_impl(std::ostringstream&) {}
template <typename T, typename... Rest>
void str_cat_impl(std::ostringstream& os, const T& v, const Rest&... rest) {
  os << v;
  str_cat_impl(os, rest...);
}
}  // namespace detail

/// Concatenates arguments into a string via operator<<.
template <typename... Args>
std::string str_cat(const Args&... args) {
  std::ostringstream os;
  detail::str_cat_impl(os, args...);
  return os.str();
}

}  // namespace recal
