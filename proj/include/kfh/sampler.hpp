#pragma once

// Randomized Hadamard measurement plans and their matrix-free operators.
//
// Every index vector here is 1-based, as in the persisted file formats:
//   r  row selections in [2, N] (or [1, N] when the all-ones row is allowed)
//   p  column permutation of [1..N]
//   q  its inverse, q[p[i]] = i
//
// A subspace plan selects the patterns P[i] = H_N[r[i], p]. Two subspace plans
// combine into the joint plan A = H_{N^2}[r_SI, p_SI] with
//   r_SI[i]          = N (r_S[i] - 1) + r_I[i]
//   p_SI[N(i-1) + j] = N (p_S[i] - 1) + p_I[j]
// so that row i of A is kron(P_S[i], P_I[i]).

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "kfh/common.hpp"
#include "kfh/hadamard.hpp"
#include "kfh/rng.hpp"

namespace kfh {

using IndexVector = std::vector<std::uint32_t>;

struct SubspaceSampler {
  std::uint32_t n = 0;  // subspace dimension, side^2
  IndexVector r;        // length M
  IndexVector p;        // length N
  IndexVector q;        // length N
  std::uint64_t seed = 0;

  std::uint32_t m() const { return static_cast<std::uint32_t>(r.size()); }

  friend bool operator==(const SubspaceSampler&, const SubspaceSampler&) = default;
};

/// q[p[i]] = i for a 1-based permutation p.
inline IndexVector inverse_permutation(std::span<const std::uint32_t> p) {
  IndexVector q(p.size(), 0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const std::uint32_t v = p[i];
    if (v < 1 || v > p.size() || q[v - 1] != 0) {
      throw ValueError("inverse_permutation: input is not a permutation of [1.." +
                       std::to_string(p.size()) + "]");
    }
    q[v - 1] = static_cast<std::uint32_t>(i + 1);
  }
  return q;
}

/// Draws r (uniform with replacement) and then p (Fisher-Yates) from one
/// mt19937_64 stream seeded with `seed`.
inline SubspaceSampler generate_subspace_sampler(std::uint32_t n, std::uint32_t m,
                                                 std::uint64_t seed,
                                                 bool include_first_row = false) {
  require_power_of_two(n, "generate_subspace_sampler");
  if (n < 2) throw LengthError("generate_subspace_sampler: N must be at least 2");
  if (m < 1) throw ValueError("generate_subspace_sampler: M must be positive");

  Engine eng(seed);
  SubspaceSampler s;
  s.n = n;
  s.seed = seed;
  s.r.resize(m);
  const std::uint32_t lo = include_first_row ? 1 : 2;
  const std::uint64_t span = n - lo + 1;
  for (auto& ri : s.r) ri = lo + static_cast<std::uint32_t>(uniform_below(eng, span));
  s.p = random_permutation(eng, n);
  s.q = inverse_permutation(s.p);
  return s;
}

inline void validate(const SubspaceSampler& s) {
  if (!is_power_of_two(s.n) || s.n < 2) {
    throw LengthError("sampler: N must be a power of two >= 2");
  }
  if (s.p.size() != s.n) throw ShapeError("sampler: permutation length != N");
  for (auto ri : s.r) {
    if (ri < 1 || ri > s.n) throw IndexError("sampler: row index outside [1, N]");
  }
  const IndexVector q = inverse_permutation(s.p);
  if (q != s.q) throw ValueError("sampler: q is not the inverse of p");
}

/// Optional sparsifying basis. `inverse` maps sparse coefficients to the pixel
/// basis, `forward` maps pixels to coefficients. Either may be empty only when
/// both are (identity).
struct SparseBasis {
  std::function<void(std::span<double>)> forward;
  std::function<void(std::span<double>)> inverse;
};

class JointSampler;
JointSampler build_joint(const SubspaceSampler& signal, const SubspaceSampler& idler,
                         std::uint64_t seed);

/// Joint-space plan. Immutable; produced only by build_joint.
class JointSampler {
 public:
  std::uint32_t n() const { return n_; }
  std::size_t joint_dim() const { return std::size_t{n_} * n_; }
  std::uint32_t m() const { return static_cast<std::uint32_t>(r_si_.size()); }

  const IndexVector& r_si() const { return r_si_; }
  const IndexVector& p_si() const { return p_si_; }
  const IndexVector& q_si() const { return q_si_; }
  const SubspaceSampler& signal() const { return signal_; }
  const SubspaceSampler& idler() const { return idler_; }
  std::uint64_t seed() const { return seed_; }  // master seed, 0 if built by hand

 private:
  friend JointSampler build_joint(const SubspaceSampler&, const SubspaceSampler&, std::uint64_t);

  std::uint32_t n_ = 0;
  std::uint64_t seed_ = 0;
  IndexVector r_si_;
  IndexVector p_si_;
  IndexVector q_si_;
  SubspaceSampler signal_;
  SubspaceSampler idler_;
};

/// Combines two subspace plans. Repeated joint rows are dropped, first
/// occurrence wins, and the matching entries of r_S and r_I go with them, so
/// the stored signal/idler plans have the post-dedup length.
inline JointSampler build_joint(const SubspaceSampler& signal,
                                const SubspaceSampler& idler, std::uint64_t seed = 0) {
  if (signal.n != idler.n) throw ShapeError("build_joint: signal and idler N differ");
  if (signal.m() != idler.m()) throw ShapeError("build_joint: signal and idler M differ");
  validate(signal);
  validate(idler);
  if (std::uint64_t{signal.n} * signal.n > 0xffffffffULL) {
    throw LengthError("build_joint: joint dimension exceeds 32-bit indexing");
  }

  const std::uint32_t n = signal.n;
  JointSampler js;
  js.n_ = n;
  js.seed_ = seed;
  js.signal_ = signal;
  js.idler_ = idler;
  js.signal_.r.clear();
  js.idler_.r.clear();

  std::vector<bool> seen(std::size_t{n} * n, false);
  for (std::size_t i = 0; i < signal.r.size(); ++i) {
    const std::uint32_t rsi = n * (signal.r[i] - 1) + idler.r[i];
    if (seen[rsi - 1]) continue;
    seen[rsi - 1] = true;
    js.r_si_.push_back(rsi);
    js.signal_.r.push_back(signal.r[i]);
    js.idler_.r.push_back(idler.r[i]);
  }

  js.p_si_.resize(std::size_t{n} * n);
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = 0; j < n; ++j)
      js.p_si_[std::size_t{n} * i + j] = n * (signal.p[i] - 1) + idler.p[j];
  js.q_si_ = inverse_permutation(js.p_si_);
  return js;
}

/// Signal and idler plans drawn independently from substreams 0 and 1 of
/// `seed`, then combined. M is the requested count; the result may be shorter.
inline JointSampler generate_joint_sampler(std::uint32_t n, std::uint32_t m, std::uint64_t seed,
                                           bool include_first_row = false) {
  const SubspaceSampler s = generate_subspace_sampler(n, m, substream_seed(seed, 0), include_first_row);
  const SubspaceSampler i = generate_subspace_sampler(n, m, substream_seed(seed, 1), include_first_row);
  return build_joint(s, i, seed);
}

// ---------------------------------------------------------------------------
// Matrix-free operators.
//
// The joint permutations factor as (i, j) -> (p_S[i], p_I[j]), so the gathers
// below walk x one contiguous row of N entries at a time instead of chasing
// p_SI / q_SI across the whole vector.

/// y = H_{N^2}[r_SI, p_SI] * basis^{-1}(x).
inline std::vector<double> apply_A(const JointSampler& s, std::span<const double> x,
                                   const SparseBasis* basis = nullptr) {
  const std::size_t n = s.n();
  if (x.size() != n * n) {
    throw ShapeError("apply_A: expected length " + std::to_string(n * n) + ", got " +
                     std::to_string(x.size()));
  }
  std::vector<double> pixels;
  if (basis && basis->inverse) {
    pixels.assign(x.begin(), x.end());
    basis->inverse(pixels);
    x = pixels;
  }
  const auto& qs = s.signal().q;
  const auto& qi = s.idler().q;
  std::vector<double> z(n * n);
  for (std::size_t a = 0; a < n; ++a) {
    const double* src = x.data() + n * (qs[a] - 1);
    double* dst = z.data() + n * a;
    for (std::size_t b = 0; b < n; ++b) dst[b] = src[qi[b] - 1];
  }
  fwht_inplace(std::span<double>(z));
  std::vector<double> y(s.m());
  const auto& r = s.r_si();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = z[r[i] - 1];
  return y;
}

/// x = basis(H_{N^2}[r_SI, p_SI]^T * y), unnormalized.
inline std::vector<double> apply_At(const JointSampler& s, std::span<const double> y,
                                    const SparseBasis* basis = nullptr) {
  const std::size_t n = s.n();
  if (y.size() != s.m()) {
    throw ShapeError("apply_At: expected length " + std::to_string(s.m()) + ", got " +
                     std::to_string(y.size()));
  }
  std::vector<double> beta(n * n, 0.0);
  const auto& r = s.r_si();
  for (std::size_t i = 0; i < y.size(); ++i) beta[r[i] - 1] = y[i];
  fwht_inplace(std::span<double>(beta));
  const auto& ps = s.signal().p;
  const auto& pi = s.idler().p;
  std::vector<double> x(n * n);
  for (std::size_t a = 0; a < n; ++a) {
    const double* src = beta.data() + n * (ps[a] - 1);
    double* dst = x.data() + n * a;
    for (std::size_t b = 0; b < n; ++b) dst[b] = src[pi[b] - 1];
  }
  if (basis && basis->forward) basis->forward(x);
  return x;
}

/// Subspace projections: y[i] = <P[i], v> with P[i] = H_N[r[i], p].
inline std::vector<double> apply_A(const SubspaceSampler& s, std::span<const double> v) {
  if (v.size() != s.n) throw ShapeError("apply_A: subspace length mismatch");
  std::vector<double> z(s.n);
  for (std::size_t k = 0; k < s.n; ++k) z[k] = v[s.q[k] - 1];
  fwht_inplace(std::span<double>(z));
  std::vector<double> y(s.r.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = z[s.r[i] - 1];
  return y;
}

/// Subspace adjoint. Repeated rows accumulate.
inline std::vector<double> apply_At(const SubspaceSampler& s, std::span<const double> y) {
  if (y.size() != s.r.size()) throw ShapeError("apply_At: subspace length mismatch");
  std::vector<double> beta(s.n, 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) beta[s.r[i] - 1] += y[i];
  fwht_inplace(std::span<double>(beta));
  std::vector<double> v(s.n);
  for (std::size_t k = 0; k < s.n; ++k) v[k] = beta[s.p[k] - 1];
  return v;
}

/// The i-th (1-based) pattern of a subspace plan, split for a binary modulator.
inline SignSplitRow subspace_pattern_pair(const SubspaceSampler& s, std::size_t i) {
  if (i < 1 || i > s.r.size()) {
    throw IndexError("subspace_pattern_pair: measurement " + std::to_string(i) +
                     " outside [1, " + std::to_string(s.r.size()) + "]");
  }
  const std::vector<double> row = hadamard_row(s.n, s.r[i - 1]);
  std::vector<double> permuted(s.n);
  for (std::size_t k = 0; k < s.n; ++k) permuted[k] = row[s.p[k] - 1];
  return split_signs(permuted);
}

}  // namespace kfh
