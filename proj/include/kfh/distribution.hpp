#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "kfh/common.hpp"

namespace kfh {

/// Joint probability over signal x idler pixels. Each particle sees a
/// side x side grid (N = side^2 pixels, row-major); the joint vector has N^2
/// entries and entry N*(iS-1) + iI (1-based) is p(iS, iI).
struct JointDistribution {
  std::size_t side = 0;
  std::vector<double> values;

  std::size_t n() const { return side * side; }
  std::size_t size() const { return values.size(); }

  friend bool operator==(const JointDistribution&, const JointDistribution&) = default;
};

/// Optical setup. Lengths in metres, flux in coincidences per second,
/// t_proj is the dwell time of one displayed pattern pair in seconds.
struct OpticalParams {
  double lambda_p = 325e-9;
  double crystal_length = 1e-3;
  double sigma_p = 3e-4;
  double flux = 1.6e4;
  double t_proj = 2.0;

  friend bool operator==(const OpticalParams&, const OpticalParams&) = default;
};

inline void validate(const OpticalParams& p) {
  if (!(p.lambda_p > 0 && p.crystal_length > 0 && p.sigma_p > 0 && p.flux >= 0 && p.t_proj > 0)) {
    throw ValueError("optical parameters must be positive");
  }
}

inline std::size_t side_from_joint_size(std::size_t joint) {
  // joint = side^4
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(std::sqrt(static_cast<double>(joint)))));
  if (side * side * side * side != joint) {
    throw ShapeError("joint length " + std::to_string(joint) + " is not side^4");
  }
  return side;
}

}  // namespace kfh
