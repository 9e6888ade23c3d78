#pragma once

// Information measures on joint pixel distributions. Logarithms are base 2.

#include <cmath>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "kfh/distribution.hpp"

namespace kfh {

struct Marginals {
  std::vector<double> signal;
  std::vector<double> idler;
};

/// Row and column sums of the N x N joint table.
inline Marginals marginals(std::span<const double> x, std::size_t n) {
  if (x.size() != n * n) throw ShapeError("marginals: length is not N^2");
  Marginals m{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = x.data() + i * n;
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      s += row[j];
      m.idler[j] += row[j];
    }
    m.signal[i] = s;
  }
  return m;
}

inline Marginals marginals(const JointDistribution& x) { return marginals(x.values, x.n()); }

inline double entropy_bits(std::span<const double> p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log2(v);
  return h;
}

/// Discrete mutual information of an N x N joint table. Zero joint entries
/// contribute nothing; the input must be nonnegative and sum to 1 within 1e-9.
inline double mutual_information(std::span<const double> x, std::size_t n) {
  double total = 0.0;
  for (double v : x) {
    if (!(v >= 0.0)) throw ValueError("mutual_information: negative or non-finite entry");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ValueError("mutual_information: distribution sums to " + std::to_string(total));
  }
  const Marginals m = marginals(x, n);
  double mi = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = x.data() + i * n;
    const double ps = m.signal[i];
    for (std::size_t j = 0; j < n; ++j) {
      const double p = row[j];
      if (p == 0.0) continue;
      mi += p * std::log2(p / (ps * m.idler[j]));
    }
  }
  // Rounding can leave a product distribution a hair below zero.
  return mi < 0.0 ? 0.0 : mi;
}

inline double mutual_information(const JointDistribution& x) {
  return mutual_information(x.values, x.n());
}

inline double schmidt_number(double mi_bits) { return std::exp2(mi_bits); }

/// Closed-form position-domain MI of a double-Gaussian biphoton,
/// log2((9 pi sigma_p^2 + L lambda) / (2 sigma_p sqrt(9 pi L lambda))), per
/// transverse dimension; two dimensions double it.
inline double theoretical_max_mi(const OpticalParams& p, int transverse_dims = 2) {
  if (!(p.lambda_p > 0 && p.crystal_length > 0 && p.sigma_p > 0)) {
    throw ValueError("theoretical_max_mi: parameters must be positive");
  }
  if (transverse_dims != 1 && transverse_dims != 2) {
    throw ValueError("theoretical_max_mi: transverse_dims must be 1 or 2");
  }
  constexpr double pi = std::numbers::pi;
  const double ll = p.crystal_length * p.lambda_p;
  const double num = 9.0 * pi * p.sigma_p * p.sigma_p + ll;
  const double den = 2.0 * p.sigma_p * std::sqrt(9.0 * pi * ll);
  return transverse_dims * std::log2(num / den);
}

struct InfoReport {
  double mutual_information_bits = 0.0;
  double schmidt_number = 1.0;
  std::vector<double> marginal_signal;
  std::vector<double> marginal_idler;
  std::optional<double> theoretical_max_bits;
};

inline InfoReport make_info_report(const JointDistribution& x,
                                   std::optional<OpticalParams> optics = std::nullopt) {
  InfoReport r;
  r.mutual_information_bits = mutual_information(x);
  r.schmidt_number = schmidt_number(r.mutual_information_bits);
  Marginals m = marginals(x);
  r.marginal_signal = std::move(m.signal);
  r.marginal_idler = std::move(m.idler);
  if (optics) r.theoretical_max_bits = theoretical_max_mi(*optics, 2);
  return r;
}

namespace detail {

struct MarginalSummary {
  double entropy = 0.0;
  double peak = 0.0;
  std::size_t peak_row = 0;
  std::size_t peak_col = 0;
  std::size_t support = 0;
};

inline MarginalSummary summarize(const std::vector<double>& m, std::size_t side) {
  MarginalSummary s;
  s.entropy = entropy_bits(m);
  for (std::size_t k = 0; k < m.size(); ++k) {
    if (m[k] > 0) ++s.support;
    if (m[k] > s.peak) {
      s.peak = m[k];
      s.peak_row = side ? k / side : 0;
      s.peak_col = side ? k % side : 0;
    }
  }
  return s;
}

}  // namespace detail

/// Plain `key: value` lines.
inline std::string format_report(const InfoReport& r) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(3);
  os << "mutual_information_bits: " << r.mutual_information_bits << '\n';
  os << "schmidt_number: " << r.schmidt_number << '\n';
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(double(r.marginal_signal.size()))));
  auto emit = [&](const char* name, const std::vector<double>& m) {
    const auto s = detail::summarize(m, side);
    os << name << "_entropy_bits: " << s.entropy << '\n';
    os << name << "_support_pixels: " << s.support << '\n';
    os << name << "_peak_pixel: " << s.peak_row << ',' << s.peak_col << '\n';
  };
  emit("marginal_signal", r.marginal_signal);
  emit("marginal_idler", r.marginal_idler);
  if (r.theoretical_max_bits) os << "theoretical_max_bits: " << *r.theoretical_max_bits << '\n';
  return os.str();
}

}  // namespace kfh
