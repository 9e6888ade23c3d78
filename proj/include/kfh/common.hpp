#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace kfh {

// Error hierarchy. Each maps onto the std exception a caller would expect to
// catch, so generic handlers keep working.
struct LengthError : std::length_error {
  using std::length_error::length_error;
};

struct IndexError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

struct ValueError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DepthError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Raised when the reconstruction update is thresholded to nothing.
struct AllZeroError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr bool is_power_of_two(std::size_t n) noexcept {
  return n != 0 && (n & (n - 1)) == 0;
}

inline constexpr unsigned log2_exact(std::size_t n) noexcept {
  return static_cast<unsigned>(std::countr_zero(n));
}

inline void require_power_of_two(std::size_t n, const char* what) {
  if (!is_power_of_two(n)) {
    throw LengthError(std::string(what) + ": length " + std::to_string(n) +
                      " is not a power of two");
  }
}

}  // namespace kfh
