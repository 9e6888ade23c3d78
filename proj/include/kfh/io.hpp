#pragma once

// File formats, run configuration and graymap rendering.
//
// Binary files are little-endian throughout and are written byte by byte, so
// the layout does not depend on the host. Index vectors are stored 1-based.
//
//   sampler      "KFHS" u16 version | u32 N | u32 M | u64 seed |
//                u32 r_S[M] | u32 r_I[M] | u32 p_S[N] | u32 p_I[N]
//   distribution "KFHD" u16 version | u32 side_S | u32 side_I | f64 x[N^2]
//   measurement  "KFHM" u16 version | u32 M | sampler block |
//                f64 lambda_p, crystal_length, sigma_p, flux, t_proj |
//                u64 pp[M] | u64 mm[M] | u64 pm[M] | u64 mp[M] | f64 y[M] |
//                u64 singles_s_plus[M] | u64 singles_s_minus[M] |
//                u64 singles_i_plus[M] | u64 singles_i_minus[M]
//
// The sampler block stores the post-dedup r_S / r_I, so reading it back
// rebuilds the same joint plan. r_SI, p_SI and q_SI are never stored.

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <iterator>
#include <map>
#include <memory>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "kfh/common.hpp"
#include "kfh/distribution.hpp"
#include "kfh/reconstruct.hpp"
#include "kfh/sampler.hpp"
#include "kfh/spdc.hpp"

namespace kfh {

inline constexpr std::uint16_t kFormatVersion = 1;

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " at byte " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class IoError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

using Bytes = std::vector<std::uint8_t>;

class ByteWriter {
 public:
  void magic(std::string_view m) { buf_.insert(buf_.end(), m.begin(), m.end()); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void u32s(std::span<const std::uint32_t> v) { for (auto a : v) u32(a); }
  void u64s(std::span<const std::uint64_t> v) { for (auto a : v) u64(a); }
  void f64s(std::span<const double> v) { for (auto a : v) f64(a); }

  const Bytes& bytes() const { return buf_; }
  Bytes take() { return std::move(buf_); }

 private:
  void put(std::uint64_t v, int width) {
    for (int k = 0; k < width; ++k) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  Bytes buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::size_t offset() const { return pos_; }
  bool at_end() const { return pos_ == data_.size(); }

  void magic(std::string_view m) {
    need(m.size(), "magic");
    if (std::memcmp(data_.data() + pos_, m.data(), m.size()) != 0) {
      throw ParseError("bad magic, expected \"" + std::string(m) + "\"", pos_);
    }
    pos_ += m.size();
  }
  void version() {
    const std::size_t at = pos_;
    const auto v = u16();
    if (v != kFormatVersion) throw ParseError("unsupported format version " + std::to_string(v), at);
  }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2, "u16")); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4, "u32")); }
  std::uint64_t u64() { return get(8, "u64"); }
  double f64() { return std::bit_cast<double>(get(8, "f64")); }

  std::vector<std::uint32_t> u32s(std::size_t n) {
    need(4 * n, "u32 array");
    std::vector<std::uint32_t> v(n);
    for (auto& a : v) a = u32();
    return v;
  }
  std::vector<std::uint64_t> u64s(std::size_t n) {
    need(8 * n, "u64 array");
    std::vector<std::uint64_t> v(n);
    for (auto& a : v) a = u64();
    return v;
  }
  std::vector<double> f64s(std::size_t n) {
    need(8 * n, "f64 array");
    std::vector<double> v(n);
    for (auto& a : v) a = f64();
    return v;
  }

  void expect_end() const {
    if (!at_end()) throw ParseError("trailing bytes", pos_);
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (n > data_.size() - pos_) throw ParseError(std::string("truncated ") + what, pos_);
  }
  std::uint64_t get(int width, const char* what) {
    need(static_cast<std::size_t>(width), what);
    std::uint64_t v = 0;
    for (int k = 0; k < width; ++k) v |= std::uint64_t{data_[pos_ + static_cast<std::size_t>(k)]} << (8 * k);
    pos_ += static_cast<std::size_t>(width);
    return v;
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

// --- sampler ---------------------------------------------------------------

inline void encode_sampler(ByteWriter& w, const JointSampler& s) {
  w.magic("KFHS");
  w.u16(kFormatVersion);
  w.u32(s.n());
  w.u32(s.m());
  w.u64(s.seed());
  w.u32s(s.signal().r);
  w.u32s(s.idler().r);
  w.u32s(s.signal().p);
  w.u32s(s.idler().p);
}

inline JointSampler decode_sampler(ByteReader& rd) {
  rd.magic("KFHS");
  rd.version();
  const std::size_t n_at = rd.offset();
  const std::uint32_t n = rd.u32();
  if (!is_power_of_two(n) || n < 2) throw ParseError("N is not a power of two >= 2", n_at);
  const std::uint32_t m = rd.u32();
  const std::uint64_t seed = rd.u64();
  SubspaceSampler sig, idl;
  sig.n = idl.n = n;
  sig.seed = substream_seed(seed, 0);
  idl.seed = substream_seed(seed, 1);
  const std::size_t r_at = rd.offset();
  sig.r = rd.u32s(m);
  idl.r = rd.u32s(m);
  const std::size_t p_at = rd.offset();
  sig.p = rd.u32s(n);
  idl.p = rd.u32s(n);
  for (std::size_t i = 0; i < m; ++i) {
    if (sig.r[i] < 1 || sig.r[i] > n || idl.r[i] < 1 || idl.r[i] > n) {
      throw ParseError("row index outside [1, N]", r_at);
    }
  }
  try {
    sig.q = inverse_permutation(sig.p);
    idl.q = inverse_permutation(idl.p);
  } catch (const ValueError&) {
    throw ParseError("column order is not a permutation", p_at);
  }
  JointSampler js = build_joint(sig, idl, seed);
  if (js.m() != m) throw ParseError("repeated joint rows in stored plan", r_at);
  return js;
}

// --- distribution ----------------------------------------------------------

inline void encode_distribution(ByteWriter& w, const JointDistribution& d) {
  if (d.values.size() != d.size()) throw ShapeError("distribution: value count != N^2");
  w.magic("KFHD");
  w.u16(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(d.side));
  w.u32(static_cast<std::uint32_t>(d.side));
  w.f64s(d.values);
}

inline JointDistribution decode_distribution(ByteReader& rd) {
  rd.magic("KFHD");
  rd.version();
  const std::size_t at = rd.offset();
  const std::uint32_t side_s = rd.u32();
  const std::uint32_t side_i = rd.u32();
  if (side_s != side_i) throw ParseError("signal and idler sides differ", at);
  if (side_s < 1 || side_s > 256) throw ParseError("side out of range", at);
  JointDistribution d;
  d.side = side_s;
  d.values = rd.f64s(std::size_t(side_s) * side_s * side_s * side_s);
  return d;
}

// --- measurement -----------------------------------------------------------

inline void encode_measurement(ByteWriter& w, const MeasurementRecord& rec) {
  if (!rec.sampler || rec.sampler->m() != rec.m()) throw ShapeError("measurement: sampler length != M");
  w.magic("KFHM");
  w.u16(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(rec.m()));
  encode_sampler(w, *rec.sampler);
  const OpticalParams& o = rec.optics;
  for (double v : {o.lambda_p, o.crystal_length, o.sigma_p, o.flux, o.t_proj}) w.f64(v);
  w.u64s(rec.counts_pp);
  w.u64s(rec.counts_mm);
  w.u64s(rec.counts_pm);
  w.u64s(rec.counts_mp);
  w.f64s(rec.y);
  w.u64s(rec.singles_s_plus);
  w.u64s(rec.singles_s_minus);
  w.u64s(rec.singles_i_plus);
  w.u64s(rec.singles_i_minus);
}

inline MeasurementRecord decode_measurement(ByteReader& rd) {
  rd.magic("KFHM");
  rd.version();
  const std::size_t m_at = rd.offset();
  const std::uint32_t m = rd.u32();
  MeasurementRecord rec;
  rec.sampler = std::make_shared<const JointSampler>(decode_sampler(rd));
  if (rec.sampler->m() != m) throw ParseError("sampler length differs from record length", m_at);
  rec.optics.lambda_p = rd.f64();
  rec.optics.crystal_length = rd.f64();
  rec.optics.sigma_p = rd.f64();
  rec.optics.flux = rd.f64();
  rec.optics.t_proj = rd.f64();
  rec.counts_pp = rd.u64s(m);
  rec.counts_mm = rd.u64s(m);
  rec.counts_pm = rd.u64s(m);
  rec.counts_mp = rd.u64s(m);
  const std::size_t y_at = rd.offset();
  rec.y = rd.f64s(m);
  rec.singles_s_plus = rd.u64s(m);
  rec.singles_s_minus = rd.u64s(m);
  rec.singles_i_plus = rd.u64s(m);
  rec.singles_i_minus = rd.u64s(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double y = static_cast<double>(rec.counts_pp[i]) + static_cast<double>(rec.counts_mm[i]) -
                     static_cast<double>(rec.counts_pm[i]) - static_cast<double>(rec.counts_mp[i]);
    if (y != rec.y[i]) throw ParseError("y differs from pp + mm - pm - mp", y_at + 8 * i);
  }
  return rec;
}

// --- whole-file helpers ----------------------------------------------------

inline Bytes read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  Bytes b((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return b;
}

inline void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

template <class T, class Encode>
Bytes to_bytes(const T& v, Encode encode) {
  ByteWriter w;
  encode(w, v);
  return w.take();
}

template <class Decode>
auto from_bytes(std::span<const std::uint8_t> b, Decode decode) {
  ByteReader rd(b);
  auto v = decode(rd);
  rd.expect_end();
  return v;
}

inline Bytes sampler_bytes(const JointSampler& s) { return to_bytes(s, encode_sampler); }
inline Bytes distribution_bytes(const JointDistribution& d) { return to_bytes(d, encode_distribution); }
inline Bytes measurement_bytes(const MeasurementRecord& r) { return to_bytes(r, encode_measurement); }

inline JointSampler parse_sampler(std::span<const std::uint8_t> b) { return from_bytes(b, decode_sampler); }
inline JointDistribution parse_distribution(std::span<const std::uint8_t> b) {
  return from_bytes(b, decode_distribution);
}
inline MeasurementRecord parse_measurement(std::span<const std::uint8_t> b) {
  return from_bytes(b, decode_measurement);
}

inline void save_sampler(const std::filesystem::path& p, const JointSampler& s) { write_bytes(p, sampler_bytes(s)); }
inline void save_distribution(const std::filesystem::path& p, const JointDistribution& d) {
  write_bytes(p, distribution_bytes(d));
}
inline void save_measurement(const std::filesystem::path& p, const MeasurementRecord& r) {
  write_bytes(p, measurement_bytes(r));
}
inline JointSampler load_sampler(const std::filesystem::path& p) { return parse_sampler(read_bytes(p)); }
inline JointDistribution load_distribution(const std::filesystem::path& p) {
  return parse_distribution(read_bytes(p));
}
inline MeasurementRecord load_measurement(const std::filesystem::path& p) {
  return parse_measurement(read_bytes(p));
}

// --- run configuration -----------------------------------------------------

struct ExperimentConfig {
  std::size_t side = 16;
  std::uint32_t measurements = 3000;
  std::uint64_t seed = 1;
  OpticalParams optics;
  double sigma_plus = 4.0;   // pixels
  double sigma_minus = 0.75; // pixels
  double contrast = 0.0;     // > 0: choose flux so std(Ax)/shot noise hits this
  double snr = 1.0;          // raster-time target
  SimulationOptions simulation;
  ReconstructionConfig reconstruction;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string_view::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

template <class T>
T parse_number(std::string_view key, std::string_view text) {
  T v{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("config: bad value for " + std::string(key) + ": '" + std::string(text) + "'");
  }
  return v;
}

inline bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "1" || text == "true" || text == "yes" || text == "on") return true;
  if (text == "0" || text == "false" || text == "no" || text == "off") return false;
  throw ConfigError("config: bad boolean for " + std::string(key) + ": '" + std::string(text) + "'");
}

}  // namespace detail

/// Sets one key. Unknown keys are errors.
inline void set_config_value(ExperimentConfig& c, std::string_view key, std::string_view value) {
  using detail::parse_bool;
  using detail::parse_number;
  auto& o = c.optics;
  auto& r = c.reconstruction;
  auto& s = c.simulation;
  if (key == "side") c.side = parse_number<std::size_t>(key, value);
  else if (key == "measurements" || key == "M") c.measurements = parse_number<std::uint32_t>(key, value);
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "lambda_p") o.lambda_p = parse_number<double>(key, value);
  else if (key == "crystal_length") o.crystal_length = parse_number<double>(key, value);
  else if (key == "sigma_p") o.sigma_p = parse_number<double>(key, value);
  else if (key == "flux") o.flux = parse_number<double>(key, value);
  else if (key == "t_proj") o.t_proj = parse_number<double>(key, value);
  else if (key == "sigma_plus") c.sigma_plus = parse_number<double>(key, value);
  else if (key == "sigma_minus") c.sigma_minus = parse_number<double>(key, value);
  else if (key == "contrast") c.contrast = parse_number<double>(key, value);
  else if (key == "snr") c.snr = parse_number<double>(key, value);
  else if (key == "noise") s.noise = parse_bool(key, value);
  else if (key == "singles_flux") s.singles_flux = parse_number<double>(key, value);
  else if (key == "accidental_rate") s.accidental_rate = parse_number<double>(key, value);
  else if (key == "max_iterations") r.max_iterations = parse_number<std::size_t>(key, value);
  else if (key == "min_iterations") r.min_iterations = parse_number<std::size_t>(key, value);
  else if (key == "hard_threshold_step") r.hard_threshold_step = parse_number<double>(key, value);
  else if (key == "initial_constant") r.initial_constant = parse_number<double>(key, value);
  else if (key == "wavelet_levels") r.wavelet_levels = parse_number<std::size_t>(key, value);
  else if (key == "use_marginal_mask") r.use_marginal_mask = parse_bool(key, value);
  else if (key == "residual_guard") r.residual_guard = parse_bool(key, value);
  else throw ConfigError("config: unknown key '" + std::string(key) + "'");
}

inline void validate(const ExperimentConfig& c) {
  if (!is_power_of_two(c.side) || c.side < 2) throw ConfigError("config: side must be a power of two >= 2");
  if (c.side > 256) throw ConfigError("config: side above 256 is not supported");
  if (c.measurements < 1) throw ConfigError("config: measurements must be positive");
  if (!(c.sigma_plus > 0 && c.sigma_minus > 0)) throw ConfigError("config: widths must be positive");
  if (!(c.snr > 0) || c.contrast < 0) throw ConfigError("config: snr must be positive, contrast >= 0");
  if (c.simulation.accidental_rate < 0) throw ConfigError("config: accidental_rate must be >= 0");
  try {
    validate(c.optics);
    validate(c.reconstruction);
  } catch (const ValueError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

/// Flat `key = value` lines; `#` starts a comment.
inline ExperimentConfig parse_config(std::istream& in, ExperimentConfig c = {}) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view v = line;
    if (const auto hash = v.find('#'); hash != std::string_view::npos) v = v.substr(0, hash);
    v = detail::trim(v);
    if (v.empty()) continue;
    const auto eq = v.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    set_config_value(c, detail::trim(v.substr(0, eq)), detail::trim(v.substr(eq + 1)));
  }
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig c = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  return parse_config(in, std::move(c));
}

// --- graymap images --------------------------------------------------------

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

/// Linear map of `v` (rows x cols, row-major) onto 0..255 with the maximum at 255.
inline GrayImage to_gray(std::span<const double> v, std::size_t rows, std::size_t cols) {
  if (v.size() != rows * cols) throw ShapeError("to_gray: size mismatch");
  GrayImage img{cols, rows, std::vector<std::uint8_t>(v.size(), 0)};
  const double peak = v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
  if (peak <= 0.0) return img;
  for (std::size_t k = 0; k < v.size(); ++k) {
    const double s = std::clamp(v[k] / peak, 0.0, 1.0);
    img.pixels[k] = static_cast<std::uint8_t>(std::lround(255.0 * s));
  }
  return img;
}

struct Crop {
  std::size_t row0 = 0, rows = 0, col0 = 0, cols = 0;
};

/// Bounding box of the fewest largest entries that together hold `fraction`
/// of the total mass.
inline Crop mass_bounding_box(std::span<const double> v, std::size_t rows, std::size_t cols,
                              double fraction = 0.99) {
  if (v.size() != rows * cols) throw ShapeError("mass_bounding_box: size mismatch");
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
  double total = 0.0;
  for (double a : v) total += std::max(a, 0.0);
  if (total <= 0.0) return {0, rows, 0, cols};
  std::size_t r0 = rows, r1 = 0, c0 = cols, c1 = 0;
  double acc = 0.0;
  for (std::size_t k : order) {
    const std::size_t r = k / cols, c = k % cols;
    r0 = std::min(r0, r);
    r1 = std::max(r1, r);
    c0 = std::min(c0, c);
    c1 = std::max(c1, c);
    acc += std::max(v[k], 0.0);
    if (acc >= fraction * total) break;
  }
  return {r0, r1 - r0 + 1, c0, c1 - c0 + 1};
}

/// The joint distribution as an N x N image: row = signal pixel, column = idler pixel.
inline GrayImage render_joint(const JointDistribution& d, bool zoom = false) {
  const std::size_t n = d.n();
  if (!zoom) return to_gray(d.values, n, n);
  const Crop b = mass_bounding_box(d.values, n, n);
  std::vector<double> sub(b.rows * b.cols);
  for (std::size_t r = 0; r < b.rows; ++r)
    for (std::size_t c = 0; c < b.cols; ++c) sub[r * b.cols + c] = d.values[(b.row0 + r) * n + b.col0 + c];
  return to_gray(sub, b.rows, b.cols);
}

/// side x side image of the signal ('S') or idler ('I') marginal.
inline GrayImage render_marginal(const JointDistribution& d, char which) {
  const Marginals m = marginals(d);
  if (which == 'S' || which == 's') return to_gray(m.signal, d.side, d.side);
  if (which == 'I' || which == 'i') return to_gray(m.idler, d.side, d.side);
  throw ValueError(std::string("render_marginal: expected S or I, got '") + which + "'");
}

inline Bytes pgm_bytes(const GrayImage& img) {
  const std::string header = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  Bytes b(header.begin(), header.end());
  b.insert(b.end(), img.pixels.begin(), img.pixels.end());
  return b;
}

inline void save_pgm(const std::filesystem::path& p, const GrayImage& img) { write_bytes(p, pgm_bytes(img)); }

}  // namespace kfh
