#pragma once

// Synthetic biphoton distributions and photon-counting simulation of the
// four-pattern coincidence measurement.
//
// A +/-1 pattern row h is displayed as two binary masks, P+ = (1 + h) / 2 and
// |P-| = (1 - h) / 2. Coincidences are counted for all four mask pairs:
//   pp = (P+_S, P+_I)   mm = (|P-_S|, |P-_I|)
//   pm = (P+_S, |P-_I|) mp = (|P-_S|, P+_I)
// and y = pp + mm - pm - mp is the signed Hadamard projection.

#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "kfh/distribution.hpp"
#include "kfh/info.hpp"
#include "kfh/rng.hpp"
#include "kfh/sampler.hpp"

namespace kfh {

/// Per axis, p(uS, uI) ~ exp(-(uS + uI)^2 / (4 sp^2)) exp(-(uS - uI)^2 / (4 sm^2))
/// at pixel centres measured from the grid centre; the 2-D joint is the
/// product of the two axes. Widths share units with `pixel_pitch`.
inline JointDistribution double_gaussian_joint(std::size_t side, double sigma_plus,
                                               double sigma_minus, double pixel_pitch = 1.0) {
  if (side < 2) throw ValueError("double_gaussian_joint: side must be at least 2");
  if (!(sigma_plus > 0 && sigma_minus > 0 && pixel_pitch > 0)) {
    throw ValueError("double_gaussian_joint: widths and pitch must be positive");
  }
  std::vector<double> axis(side * side);
  const double centre = 0.5 * static_cast<double>(side - 1);
  for (std::size_t s = 0; s < side; ++s)
    for (std::size_t i = 0; i < side; ++i) {
      const double us = (static_cast<double>(s) - centre) * pixel_pitch;
      const double ui = (static_cast<double>(i) - centre) * pixel_pitch;
      const double sum = us + ui;
      const double diff = us - ui;
      axis[s * side + i] = std::exp(-sum * sum / (4 * sigma_plus * sigma_plus) -
                                    diff * diff / (4 * sigma_minus * sigma_minus));
    }

  const std::size_t n = side * side;
  JointDistribution out{side, std::vector<double>(n * n)};
  double total = 0.0;
  for (std::size_t rs = 0; rs < side; ++rs)
    for (std::size_t cs = 0; cs < side; ++cs) {
      double* row = out.values.data() + (rs * side + cs) * n;
      for (std::size_t ri = 0; ri < side; ++ri)
        for (std::size_t ci = 0; ci < side; ++ci) {
          const double v = axis[rs * side + ri] * axis[cs * side + ci];
          row[ri * side + ci] = v;
          total += v;
        }
    }
  for (double& v : out.values) v /= total;
  return out;
}

struct MeasurementRecord {
  std::vector<double> y;
  std::vector<std::uint64_t> counts_pp, counts_mm, counts_pm, counts_mp;
  // Singles per detector, split by which mask that detector's modulator was
  // showing: "plus" accumulates over the pp/pm (signal) or pp/mp (idler)
  // displays, "minus" over the other two.
  std::vector<std::uint64_t> singles_s_plus, singles_s_minus;
  std::vector<std::uint64_t> singles_i_plus, singles_i_minus;
  std::shared_ptr<const JointSampler> sampler;
  OpticalParams optics;

  std::size_t m() const { return y.size(); }
};

struct SimulationOptions {
  bool noise = true;            // false: counts are the rounded expectations
  double singles_flux = -1.0;   // singles rate; negative means "same as flux"
  double accidental_rate = 0.0; // extra uncorrelated coincidences per second per channel
};

/// Expected counts per unit (flux * t_proj) for the four channels.
struct ChannelMeans {
  std::vector<double> pp, mm, pm, mp;
  std::vector<double> signal_projection;  // <P_S[i], marginal_S>
  std::vector<double> idler_projection;   // <P_I[i], marginal_I>
  double total = 0.0;
};

inline ChannelMeans expected_channel_means(const JointDistribution& x, const JointSampler& s) {
  if (x.n() != s.n() || x.size() != s.joint_dim()) {
    throw ShapeError("expected_channel_means: distribution and sampler sizes differ");
  }
  const Marginals marg = marginals(x);
  ChannelMeans c;
  c.total = std::accumulate(x.values.begin(), x.values.end(), 0.0);
  c.signal_projection = apply_A(s.signal(), marg.signal);
  c.idler_projection = apply_A(s.idler(), marg.idler);
  const std::vector<double> joint = apply_A(s, x.values);
  const std::size_t m = s.m();
  c.pp.resize(m);
  c.mm.resize(m);
  c.pm.resize(m);
  c.mp.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double t = c.total;
    const double a = c.signal_projection[i];
    const double b = c.idler_projection[i];
    const double ab = joint[i];
    c.pp[i] = 0.25 * (t + a + b + ab);
    c.mm[i] = 0.25 * (t - a - b + ab);
    c.pm[i] = 0.25 * (t + a - b - ab);
    c.mp[i] = 0.25 * (t - a + b - ab);
  }
  return c;
}

namespace detail {

inline std::uint64_t draw_count(Engine& eng, double mean, bool noise) {
  if (!(mean > 0.0)) return 0;
  if (!noise) return static_cast<std::uint64_t>(std::llround(mean));
  std::poisson_distribution<std::uint64_t> dist(mean);
  return dist(eng);
}

}  // namespace detail

/// Each measurement index draws from its own substream, so results do not
/// depend on evaluation order.
inline MeasurementRecord simulate_measurement(const JointDistribution& x_true,
                                              std::shared_ptr<const JointSampler> sampler,
                                              const OpticalParams& optics, std::uint64_t seed,
                                              const SimulationOptions& opts = {}) {
  if (!sampler) throw ValueError("simulate_measurement: no sampler");
  if (!(optics.flux >= 0 && optics.t_proj > 0)) {
    throw ValueError("simulate_measurement: flux must be >= 0 and t_proj > 0");
  }
  const ChannelMeans c = expected_channel_means(x_true, *sampler);
  const double scale = optics.flux * optics.t_proj;
  const double singles_scale = (opts.singles_flux < 0 ? optics.flux : opts.singles_flux) * optics.t_proj;
  const double accidental = opts.accidental_rate * optics.t_proj;

  MeasurementRecord rec;
  rec.sampler = sampler;
  rec.optics = optics;
  const std::size_t m = sampler->m();
  for (auto* v : {&rec.counts_pp, &rec.counts_mm, &rec.counts_pm, &rec.counts_mp,
                  &rec.singles_s_plus, &rec.singles_s_minus, &rec.singles_i_plus,
                  &rec.singles_i_minus})
    v->resize(m);
  rec.y.resize(m);

  for (std::size_t i = 0; i < m; ++i) {
    Engine eng(substream_seed(seed, i));
    rec.counts_pp[i] = detail::draw_count(eng, scale * c.pp[i] + accidental, opts.noise);
    rec.counts_mm[i] = detail::draw_count(eng, scale * c.mm[i] + accidental, opts.noise);
    rec.counts_pm[i] = detail::draw_count(eng, scale * c.pm[i] + accidental, opts.noise);
    rec.counts_mp[i] = detail::draw_count(eng, scale * c.mp[i] + accidental, opts.noise);
    // Two displays per mask, each t_proj long: 2 * <P+, m> = total + projection.
    const double a = c.signal_projection[i];
    const double b = c.idler_projection[i];
    rec.singles_s_plus[i] = detail::draw_count(eng, singles_scale * (c.total + a), opts.noise);
    rec.singles_s_minus[i] = detail::draw_count(eng, singles_scale * (c.total - a), opts.noise);
    rec.singles_i_plus[i] = detail::draw_count(eng, singles_scale * (c.total + b), opts.noise);
    rec.singles_i_minus[i] = detail::draw_count(eng, singles_scale * (c.total - b), opts.noise);
    rec.y[i] = static_cast<double>(rec.counts_pp[i]) + static_cast<double>(rec.counts_mm[i]) -
               static_cast<double>(rec.counts_pm[i]) - static_cast<double>(rec.counts_mp[i]);
  }
  return rec;
}

/// First `m` measurements of a record, with a sampler trimmed to match.
inline MeasurementRecord truncate_record(const MeasurementRecord& rec, std::size_t m) {
  if (m < 1 || m > rec.m()) throw ValueError("truncate_record: count out of range");
  SubspaceSampler sig = rec.sampler->signal();
  SubspaceSampler idl = rec.sampler->idler();
  sig.r.resize(m);
  idl.r.resize(m);
  MeasurementRecord out;
  out.sampler = std::make_shared<const JointSampler>(build_joint(sig, idl, rec.sampler->seed()));
  out.optics = rec.optics;
  auto head = [m](const auto& v) { return std::vector(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m)); };
  out.y = head(rec.y);
  out.counts_pp = head(rec.counts_pp);
  out.counts_mm = head(rec.counts_mm);
  out.counts_pm = head(rec.counts_pm);
  out.counts_mp = head(rec.counts_mp);
  out.singles_s_plus = head(rec.singles_s_plus);
  out.singles_s_minus = head(rec.singles_s_minus);
  out.singles_i_plus = head(rec.singles_i_plus);
  out.singles_i_minus = head(rec.singles_i_minus);
  return out;
}

/// flux * t_proj at which the spread of the noiseless projections over the
/// measurements is `ratio` times the shot noise of one projection.
/// Shot-noise variance of y is flux * t (the four masks tile the joint space),
/// so ratio = sqrt(flux * t) * std(A x).
inline double flux_time_for_contrast(const JointDistribution& x, const JointSampler& s,
                                     double ratio) {
  const std::vector<double> ax = apply_A(s, x.values);
  double mean = 0.0;
  for (double v : ax) mean += v;
  mean /= static_cast<double>(ax.size());
  double var = 0.0;
  for (double v : ax) var += (v - mean) * (v - mean);
  var /= static_cast<double>(ax.size());
  if (var <= 0.0) throw ValueError("flux_time_for_contrast: projections have no spread");
  const double total = std::accumulate(x.values.begin(), x.values.end(), 0.0);
  return ratio * ratio * total / var;
}

/// Raster-scan time to reach `snr` over an N x N joint space: N^3 snr^2 / flux.
inline double estimate_raster_time(double n, double snr, double flux) {
  return n * n * n * snr * snr / flux;
}

/// Compressive acquisition time: one measurement element takes t_per_element.
inline double estimate_cs_time(double m, double t_per_element) { return m * t_per_element; }

}  // namespace kfh
