#pragma once

// Iterative thresholding reconstruction of joint (and marginal) pixel
// distributions from randomized Hadamard projections:
//
//   x_0     = c
//   x_{t+1} = eta2[ x_t * eta1[A^T (y - A x_t)] + x_t - min(x_t) ]
//
// eta1 is 2-level bior4.4 wavelet shrinkage at the universal threshold, the
// product is entry-wise, and eta2 hard-thresholds, clips negatives, applies the
// optional marginal support mask and renormalizes. The hard threshold ramps as
// t * step * max(update). The joint solver keeps the iterate with the largest
// mutual information and stops once the information stops growing, or once an
// update makes the data fit worse than the best fit so far (residual guard).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "kfh/distribution.hpp"
#include "kfh/info.hpp"
#include "kfh/sampler.hpp"
#include "kfh/spdc.hpp"
#include "kfh/wavelet.hpp"

namespace kfh {

struct ReconstructionConfig {
  std::size_t max_iterations = 200;
  std::size_t min_iterations = 5;
  double hard_threshold_step = 0.01;
  double initial_constant = 0.0;  // <= 0 selects 1 / (vector length)
  std::size_t wavelet_levels = 2;
  bool use_marginal_mask = false;
  bool residual_guard = true;
};

inline void validate(const ReconstructionConfig& c) {
  if (!(c.hard_threshold_step > 0.0 && c.hard_threshold_step < 1.0)) {
    throw ValueError("hard_threshold_step must lie in (0, 1)");
  }
  if (c.min_iterations < 1 || c.max_iterations < c.min_iterations) {
    throw ValueError("iteration limits must satisfy max >= min >= 1");
  }
  if (c.wavelet_levels < 1) throw ValueError("wavelet_levels must be at least 1");
}

struct MarginalMask {
  std::vector<std::uint8_t> support_signal;
  std::vector<std::uint8_t> support_idler;
  std::vector<std::uint8_t> joint;  // joint[N*i + j] = support_signal[i] * support_idler[j]
};

struct TraceEntry {
  std::size_t iteration = 0;
  double mutual_information = 0.0;
  double relative_residual = 0.0;
  std::size_t nonzero = 0;
  double threshold = 0.0;
};

struct ReconstructionResult {
  std::vector<double> values;
  std::vector<TraceEntry> trace;
  std::size_t best_iteration = 0;
  bool truncated = false;  // stopped because eta2 removed every entry
};

/// Tab-separated: iteration, MI (bits), relative residual, nonzero count, threshold.
inline void write_trace(std::ostream& os, std::span<const TraceEntry> trace) {
  const auto old_precision = os.precision(10);
  for (const auto& e : trace) {
    os << e.iteration << '\t' << e.mutual_information << '\t' << e.relative_residual << '\t'
       << e.nonzero << '\t' << e.threshold << '\n';
  }
  os.precision(old_precision);
}

/// Wavelet shrinkage of v viewed as a rows x cols image.
inline std::vector<double> eta1(std::span<const double> v, std::size_t rows, std::size_t cols,
                                std::size_t levels = 2) {
  if (v.size() != rows * cols) throw ShapeError("eta1: length does not match image shape");
  if (!is_power_of_two(rows) || !is_power_of_two(cols)) {
    throw ShapeError("eta1: image sides must be dyadic");
  }
  Image img(rows, cols, std::vector<double>(v.begin(), v.end()));
  WaveletPyramid pyr = dwt2(img, levels);
  img = Image();
  soft_threshold_details(pyr, universal_threshold(pyr));
  return idwt2(pyr).data;
}

/// Joint-space eta1: v is the N x N (signal x idler) image.
inline std::vector<double> eta1(std::span<const double> v, std::size_t levels = 2) {
  const auto n = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(v.size()))));
  if (n * n != v.size()) throw ShapeError("eta1: length is not a perfect square");
  return eta1(v, n, n, levels);
}

/// Hard threshold, clip negatives, mask, renormalize. Throws AllZeroError when
/// nothing survives.
inline std::vector<double> eta2(std::span<const double> v, double threshold,
                                const std::vector<std::uint8_t>* mask = nullptr) {
  if (mask && mask->size() != v.size()) throw ShapeError("eta2: mask length mismatch");
  std::vector<double> out(v.size(), 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    const double a = v[k];
    if (!std::isfinite(a)) throw ValueError("eta2: non-finite entry");
    if (a <= 0.0 || a < threshold) continue;
    if (mask && !(*mask)[k]) continue;
    out[k] = a;
    total += a;
  }
  if (total <= 0.0) throw AllZeroError("eta2: every entry was thresholded away");
  for (double& a : out) a /= total;
  return out;
}

inline std::vector<double> eta2(std::span<const double> v, double threshold,
                                const MarginalMask* mask) {
  return eta2(v, threshold, mask ? &mask->joint : nullptr);
}

/// x * f + x - min(x), entry-wise.
inline std::vector<double> thresholding_update(std::span<const double> x,
                                               std::span<const double> f) {
  const double lo = *std::min_element(x.begin(), x.end());
  std::vector<double> u(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) u[k] = x[k] * f[k] + x[k] - lo;
  return u;
}

/// One update with an absolute hard threshold.
inline std::vector<double> iterate(std::span<const double> x, std::span<const double> y,
                                   const JointSampler& sampler, double threshold,
                                   const MarginalMask* mask = nullptr, std::size_t levels = 2) {
  std::vector<double> r = apply_A(sampler, x);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = y[i] - r[i];
  const std::vector<double> f = eta1(apply_At(sampler, r), levels);
  return eta2(thresholding_update(x, f), threshold, mask);
}

namespace detail {

inline double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double a : v) s += a * a;
  return std::sqrt(s);
}

inline std::size_t count_nonzero(std::span<const double> v) {
  return static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [](double a) { return a != 0.0; }));
}

// Shared loop. `score` ranks iterates (higher is better). After burn-in the
// loop stops at the first iterate that does not beat its predecessor. With the
// residual guard on, an iterate whose relative residual exceeds the smallest
// residual among earlier iterates (t >= 1) is rejected and ends the run; the
// first update is always accepted.
template <class Forward, class Adjoint, class Score, class Info>
ReconstructionResult run_thresholding(std::span<const double> y, std::vector<double> x,
                                      std::size_t rows, std::size_t cols,
                                      const ReconstructionConfig& cfg,
                                      const std::vector<std::uint8_t>* mask, Forward forward,
                                      Adjoint adjoint, Score score, Info info) {
  validate(cfg);
  const double y_norm = norm2(y);
  auto relative_residual = [&](std::span<const double> ax) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - ax[i]) * (y[i] - ax[i]);
    return y_norm > 0 ? std::sqrt(s) / y_norm : std::sqrt(s);
  };

  ReconstructionResult res;
  std::vector<double> ax = forward(x);
  double x_score = score(x, ax);
  double best_score = x_score;
  res.values = x;
  res.trace.push_back({0, info(x), relative_residual(ax), count_nonzero(x), 0.0});
  double min_residual = std::numeric_limits<double>::infinity();

  for (std::size_t t = 1; t <= cfg.max_iterations; ++t) {
    std::vector<double> r(y.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = y[i] - ax[i];
    std::vector<double> u = thresholding_update(x, eta1(adjoint(r), rows, cols, cfg.wavelet_levels));
    const double peak = *std::max_element(u.begin(), u.end());
    const double threshold = static_cast<double>(t) * cfg.hard_threshold_step * std::max(peak, 0.0);
    std::vector<double> next;
    try {
      next = eta2(u, threshold, mask);
    } catch (const AllZeroError&) {
      res.truncated = true;
      break;
    }
    u = {};
    ax = forward(next);
    const double next_score = score(next, ax);
    const double residual = relative_residual(ax);
    res.trace.push_back({t, info(next), residual, count_nonzero(next), threshold});
    if (cfg.residual_guard && residual > min_residual) break;
    min_residual = std::min(min_residual, residual);
    if (next_score > best_score) {
      best_score = next_score;
      res.values = next;
      res.best_iteration = t;
    }
    const bool stalled = next_score <= x_score;
    x = std::move(next);
    x_score = next_score;
    if (t >= cfg.min_iterations && stalled) break;
  }
  return res;
}

}  // namespace detail

/// Joint reconstruction from projections already scaled to distribution units
/// (y ~ A x with sum(x) = 1).
inline ReconstructionResult reconstruct_joint(std::span<const double> y, const JointSampler& sampler,
                                              const ReconstructionConfig& cfg,
                                              const MarginalMask* mask = nullptr) {
  if (y.size() != sampler.m()) throw ShapeError("reconstruct: y length != M");
  const std::size_t n = sampler.n();
  if (mask && mask->joint.size() != n * n) throw ShapeError("reconstruct: mask length != N^2");
  const double c = cfg.initial_constant > 0 ? cfg.initial_constant : 1.0 / static_cast<double>(n * n);
  auto mi = [n](std::span<const double> x) { return mutual_information(x, n); };
  return detail::run_thresholding(
      y, std::vector<double>(n * n, c), n, n, cfg, mask ? &mask->joint : nullptr,
      [&](std::span<const double> x) { return apply_A(sampler, x); },
      [&](std::span<const double> r) { return apply_At(sampler, r); },
      [&](std::span<const double> x, std::span<const double>) { return mi(x); }, mi);
}

/// Per-measurement photon budget: the four coincidence channels together see
/// every joint pixel once, so their mean total is flux * t_proj.
inline double coincidence_scale(const MeasurementRecord& rec) {
  double total = 0.0;
  for (std::size_t i = 0; i < rec.m(); ++i)
    total += static_cast<double>(rec.counts_pp[i] + rec.counts_mm[i] + rec.counts_pm[i] + rec.counts_mp[i]);
  return rec.m() ? total / static_cast<double>(rec.m()) : 0.0;
}

inline std::vector<double> normalized_projections(const MeasurementRecord& rec) {
  const double scale = coincidence_scale(rec);
  std::vector<double> y = rec.y;
  if (scale > 0)
    for (double& v : y) v /= scale;
  return y;
}

/// Marginal reconstruction from one detector's singles.
///
/// The plus/minus counts are differenced into Hadamard projections and scaled
/// by the mean per-measurement singles total, which also pins the marginal's
/// mean level. Repeated rows are averaged so the operator has distinct rows.
/// The loop starts from the back-projection c + A^T y / N (clipped at zero)
/// rather than from the flat vector, whose first update would discard every
/// pixel below the mean; it then runs the joint update and keeps the iterate
/// with the smallest residual.
inline std::vector<double> reconstruct_marginal(std::span<const std::uint64_t> plus,
                                                std::span<const std::uint64_t> minus,
                                                const SubspaceSampler& sampler,
                                                const ReconstructionConfig& cfg) {
  if (plus.size() != sampler.m() || minus.size() != sampler.m()) {
    throw ShapeError("reconstruct_marginal: singles length != M");
  }
  const std::size_t n = sampler.n;
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
  if (side * side != n) throw ShapeError("reconstruct_marginal: N is not a square");

  double total = 0.0;
  for (std::size_t i = 0; i < plus.size(); ++i) total += static_cast<double>(plus[i] + minus[i]);
  const double scale = total > 0 ? total / static_cast<double>(plus.size()) : 1.0;

  SubspaceSampler unique = sampler;
  unique.r.clear();
  std::vector<double> y;
  {
    std::vector<std::size_t> slot(n + 1, 0);
    std::vector<double> hits;
    for (std::size_t i = 0; i < plus.size(); ++i) {
      const std::uint32_t row = sampler.r[i];
      if (slot[row] == 0) {
        unique.r.push_back(row);
        y.push_back(0.0);
        hits.push_back(0.0);
        slot[row] = unique.r.size();
      }
      y[slot[row] - 1] += (static_cast<double>(plus[i]) - static_cast<double>(minus[i])) / scale;
      hits[slot[row] - 1] += 1.0;
    }
    for (std::size_t k = 0; k < y.size(); ++k) y[k] /= hits[k];
  }

  const double c = 1.0 / static_cast<double>(n);
  std::vector<double> start = apply_At(unique, y);
  for (double& v : start) v = c + v / static_cast<double>(n);
  try {
    start = eta2(start, 0.0);
  } catch (const AllZeroError&) {
    start.assign(n, c);
  }

  auto residual = [&](std::span<const double> ax) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - ax[i]) * (y[i] - ax[i]);
    return -std::sqrt(s);
  };
  ReconstructionResult res = detail::run_thresholding(
      y, std::move(start), side, side, cfg, nullptr,
      [&](std::span<const double> x) { return apply_A(unique, x); },
      [&](std::span<const double> r) { return apply_At(unique, r); },
      [&](std::span<const double>, std::span<const double> ax) { return residual(ax); },
      [](std::span<const double>) { return 0.0; });
  return res.values;
}

/// Support where each marginal reaches 1/e^2 of its peak; the joint mask is
/// the outer product.
inline MarginalMask build_marginal_mask(std::span<const double> marginal_signal,
                                        std::span<const double> marginal_idler) {
  if (marginal_signal.size() != marginal_idler.size()) {
    throw ShapeError("build_marginal_mask: marginal lengths differ");
  }
  auto support = [](std::span<const double> m) {
    double peak = 0.0;
    for (double v : m) {
      if (v < 0.0) throw ValueError("build_marginal_mask: negative marginal entry");
      peak = std::max(peak, v);
    }
    if (peak <= 0.0) throw ValueError("build_marginal_mask: marginal is all zero");
    const double cut = peak * std::exp(-2.0);
    std::vector<std::uint8_t> s(m.size());
    for (std::size_t k = 0; k < m.size(); ++k) s[k] = m[k] >= cut ? 1 : 0;
    return s;
  };
  MarginalMask mask;
  mask.support_signal = support(marginal_signal);
  mask.support_idler = support(marginal_idler);
  const std::size_t n = marginal_signal.size();
  mask.joint.assign(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask.support_signal[i]) continue;
    for (std::size_t j = 0; j < n; ++j) mask.joint[i * n + j] = mask.support_idler[j];
  }
  return mask;
}

/// Mask from the singles channels of a record.
inline MarginalMask marginal_mask_from_singles(const MeasurementRecord& rec,
                                               const ReconstructionConfig& cfg) {
  const std::vector<double> ms =
      reconstruct_marginal(rec.singles_s_plus, rec.singles_s_minus, rec.sampler->signal(), cfg);
  const std::vector<double> mi =
      reconstruct_marginal(rec.singles_i_plus, rec.singles_i_minus, rec.sampler->idler(), cfg);
  return build_marginal_mask(ms, mi);
}

/// Full pipeline on a measurement record. With use_marginal_mask set and no
/// explicit mask, the mask is derived from the record's own singles.
inline ReconstructionResult reconstruct(const MeasurementRecord& rec, const ReconstructionConfig& cfg,
                                        const MarginalMask* mask = nullptr) {
  if (!rec.sampler) throw ValueError("reconstruct: record has no sampler");
  std::optional<MarginalMask> derived;
  if (!mask && cfg.use_marginal_mask) {
    derived = marginal_mask_from_singles(rec, cfg);
    mask = &*derived;
  }
  return reconstruct_joint(normalized_projections(rec), *rec.sampler, cfg, mask);
}

}  // namespace kfh
