#pragma once

// Sylvester-Hadamard primitives.
//
// All transforms use the natural (Sylvester) ordering, H_2n = H_2 (x) H_n, and
// are unnormalized: fwht(fwht(v)) == n * v.

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "kfh/common.hpp"

namespace kfh {

namespace detail {

// Largest butterfly span handled inside one cache-resident block
// (2^13 doubles = 64 KiB).
inline constexpr std::size_t kFwhtBlock = std::size_t{1} << 13;

template <typename T>
inline void fwht_stage(T* v, std::size_t n, std::size_t h) {
  for (std::size_t i = 0; i < n; i += 2 * h) {
    T* a = v + i;
    T* b = a + h;
    for (std::size_t j = 0; j < h; ++j) {
      const T x = a[j];
      const T y = b[j];
      a[j] = x + y;
      b[j] = x - y;
    }
  }
}

// Two consecutive stages (h and 2h) fused into one pass over memory.
template <typename T>
inline void fwht_stage_pair(T* v, std::size_t n, std::size_t h) {
  for (std::size_t i = 0; i < n; i += 4 * h) {
    T* a = v + i;
    T* b = a + h;
    T* c = b + h;
    T* d = c + h;
    for (std::size_t j = 0; j < h; ++j) {
      const T s0 = a[j] + b[j];
      const T d0 = a[j] - b[j];
      const T s1 = c[j] + d[j];
      const T d1 = c[j] - d[j];
      a[j] = s0 + s1;
      b[j] = d0 + d1;
      c[j] = s0 - s1;
      d[j] = d0 - d1;
    }
  }
}

template <typename T>
inline void fwht_small(T* v, std::size_t n) {
  std::size_t h = 1;
  for (; 2 * h < n; h *= 4) fwht_stage_pair(v, n, h);
  if (h < n) fwht_stage(v, n, h);
}

}  // namespace detail

/// In-place unnormalized fast Walsh-Hadamard transform, natural ordering.
/// Iterative butterflies; the low stages run block by block so each block
/// stays in cache, the remaining stages are fused pairwise.
template <typename T>
void fwht_inplace(std::span<T> v) {
  const std::size_t n = v.size();
  require_power_of_two(n, "fwht");
  if (n == 1) return;
  T* data = v.data();
  const std::size_t block = std::min(n, detail::kFwhtBlock);
  for (std::size_t i = 0; i < n; i += block) detail::fwht_small(data + i, block);
  std::size_t h = block;
  for (; 2 * h < n; h *= 4) detail::fwht_stage_pair(data, n, h);
  if (h < n) detail::fwht_stage(data, n, h);
}

template <typename T>
std::vector<T> fwht(std::vector<T> v) {
  fwht_inplace(std::span<T>(v));
  return v;
}

/// Row `i` (1-based) of H_n, obtained by transforming the i-th basis vector.
inline std::vector<double> hadamard_row(std::size_t n, std::size_t i) {
  require_power_of_two(n, "hadamard_row");
  if (i < 1 || i > n) {
    throw IndexError("hadamard_row: row " + std::to_string(i) +
                     " outside [1, " + std::to_string(n) + "]");
  }
  std::vector<double> basis(n, 0.0);
  basis[i - 1] = 1.0;
  return fwht(std::move(basis));
}

/// A +/-1 row split into the two binary masks a binary modulator can show.
struct SignSplitRow {
  std::vector<double> positive;  // 1 where the row is +1
  std::vector<double> negative;  // 1 where the row is -1 (magnitude of H^-)
};

inline SignSplitRow split_signs(std::span<const double> row) {
  SignSplitRow out{std::vector<double>(row.size(), 0.0),
                   std::vector<double>(row.size(), 0.0)};
  for (std::size_t k = 0; k < row.size(); ++k) {
    if (row[k] == 1.0) {
      out.positive[k] = 1.0;
    } else if (row[k] == -1.0) {
      out.negative[k] = 1.0;
    } else {
      throw ValueError("split_signs: entry " + std::to_string(k) +
                       " is not +1 or -1");
    }
  }
  return out;
}

/// Small dense row-major matrix. Only used for explicit oracles in tests and
/// diagnostics; the reconstruction path never materializes one.
template <typename T>
struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  DenseMatrix() = default;
  DenseMatrix(std::size_t r, std::size_t c, T fill = T{})
      : rows(r), cols(c), data(r * c, fill) {}

  T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const T& operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }

  static DenseMatrix row_vector(std::span<const T> v) {
    DenseMatrix m(1, v.size());
    std::copy(v.begin(), v.end(), m.data.begin());
    return m;
  }

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;
};

/// Kronecker product: block (i, j) of the result is a(i, j) * b.
template <typename T>
DenseMatrix<T> kron(const DenseMatrix<T>& a, const DenseMatrix<T>& b) {
  DenseMatrix<T> out(a.rows * b.rows, a.cols * b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) {
      const T s = a(i, j);
      for (std::size_t k = 0; k < b.rows; ++k)
        for (std::size_t l = 0; l < b.cols; ++l)
          out(i * b.rows + k, j * b.cols + l) = s * b(k, l);
    }
  return out;
}

}  // namespace kfh
