#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "hash.hpp"
#include "wire.hpp"

namespace gssgd {

/// Shape and hash seed of a Count-Sketch. Sketches merge only when every
/// field matches.
struct SketchConfig {
  std::size_t rows = 7;
  std::size_t cols = 64;
  std::size_t dimension = 1;
  std::uint64_t seed = 0;

  void validate() const {
    if (rows < 1) throw ConfigError("sketch rows must be >= 1");
    if (cols < 1) throw ConfigError("sketch cols must be >= 1");
    if (dimension < 1) throw ConfigError("sketch dimension must be >= 1");
  }

  std::size_t cells() const noexcept { return rows * cols; }

  friend bool operator==(const SketchConfig&, const SketchConfig&) = default;
};

inline std::size_t next_pow2(std::size_t x) noexcept { return std::bit_ceil(std::max<std::size_t>(x, 1)); }

/// Benchmark default: 7 rows and max(64, next_pow2(20k)) columns.
inline SketchConfig default_sketch_config(std::size_t dimension, std::size_t k, std::uint64_t seed) {
  return SketchConfig{7, std::max<std::size_t>(64, next_pow2(20 * k)), dimension, seed};
}

/// Count-Sketch over a d-dimensional real vector.
///
/// Row j hashes coordinate i to bucket h_j(i) in [0, cols) with sign
/// s_j(i) in {-1, +1}. Both come from one 64-bit mix of (seed, j, i): the
/// bucket from the value modulo cols, the sign from its top bit. Every cell
/// is a fixed linear functional of the input, so S(a) + S(b) == S(a + b)
/// and merging is plain element-wise addition.
class CountSketch {
 public:
  explicit CountSketch(const SketchConfig& config) : config_(config) {
    config_.validate();
    table_.assign(config_.cells(), 0.0);
  }

  const SketchConfig& config() const noexcept { return config_; }
  std::size_t rows() const noexcept { return config_.rows; }
  std::size_t cols() const noexcept { return config_.cols; }
  std::size_t dimension() const noexcept { return config_.dimension; }

  /// Row-major rows x cols counters.
  std::span<const double> table() const noexcept { return table_; }
  std::span<const double> row(std::size_t j) const noexcept {
    return std::span<const double>(table_).subspan(j * cols(), cols());
  }

  std::size_t bucket(std::size_t row, std::size_t index) const noexcept {
    return static_cast<std::size_t>(cell_hash(row, index) % config_.cols);
  }

  double sign(std::size_t row, std::size_t index) const noexcept {
    return (cell_hash(row, index) >> 63) ? -1.0 : 1.0;
  }

  CountSketch& update(std::size_t index, double value) {
    check_index(index);
    if (value == 0.0) return *this;
    for (std::size_t j = 0; j < rows(); ++j)
      table_[j * cols() + bucket(j, index)] += sign(j, index) * value;
    return *this;
  }

  CountSketch& insert(std::span<const double> vec) {
    if (vec.size() != dimension())
      throw RangeError("vector length " + std::to_string(vec.size()) + " != sketch dimension " +
                       std::to_string(dimension()));
    for (std::size_t i = 0; i < vec.size(); ++i) update(i, vec[i]);
    return *this;
  }

  /// Median over rows of the signed counter the coordinate hashes to.
  double query(std::size_t index) const {
    check_index(index);
    std::vector<double> est(rows());
    for (std::size_t j = 0; j < rows(); ++j)
      est[j] = sign(j, index) * table_[j * cols() + bucket(j, index)];
    return median(est);
  }

  /// Median over rows of the Euclidean norm of each row; estimates ||g||_2.
  double l2_estimate() const {
    std::vector<double> norms(rows());
    for (std::size_t j = 0; j < rows(); ++j) {
      double sq = 0.0;
      for (double c : row(j)) sq += c * c;
      norms[j] = std::sqrt(sq);
    }
    return median(norms);
  }

  /// Median over rows of the squared row norm. For an odd row count this is
  /// l2_estimate() squared, without the rounding of a sqrt round trip.
  double l2_squared_estimate() const {
    std::vector<double> sq(rows());
    for (std::size_t j = 0; j < rows(); ++j) {
      double acc = 0.0;
      for (double c : row(j)) acc += c * c;
      sq[j] = acc;
    }
    return median(sq);
  }

  CountSketch& merge(const CountSketch& other) {
    if (!(config_ == other.config_))
      throw MergeError("cannot merge sketches with different configs (rows/cols/dimension/seed)");
    for (std::size_t c = 0; c < table_.size(); ++c) table_[c] += other.table_[c];
    return *this;
  }

  CountSketch& scale(double factor) noexcept {
    for (double& c : table_) c *= factor;
    return *this;
  }

  bool is_zero() const noexcept {
    return std::all_of(table_.begin(), table_.end(), [](double c) { return c == 0.0; });
  }

  /// rows, cols, dimension, seed as little-endian u64, then the table as f64.
  wire::Bytes serialize() const {
    wire::Bytes out;
    out.reserve(8 * (4 + table_.size()));
    wire::put_u64(out, config_.rows);
    wire::put_u64(out, config_.cols);
    wire::put_u64(out, config_.dimension);
    wire::put_u64(out, config_.seed);
    for (double c : table_) wire::put_f64(out, c);
    return out;
  }

  static CountSketch deserialize(std::span<const std::byte> bytes) {
    wire::Reader in(bytes);
    SketchConfig cfg;
    cfg.rows = in.u64();
    cfg.cols = in.u64();
    cfg.dimension = in.u64();
    cfg.seed = in.u64();
    try {
      cfg.validate();
    } catch (const ConfigError& e) {
      throw DecodeError(std::string("bad sketch header: ") + e.what());
    }
    if (in.remaining() / 8 != cfg.cells() || in.remaining() % 8 != 0)
      throw DecodeError("sketch frame holds " + std::to_string(in.remaining()) + " table bytes, expected " +
                        std::to_string(8 * cfg.cells()));
    CountSketch s(cfg);
    for (double& c : s.table_) c = in.f64();
    return s;
  }

  friend bool operator==(const CountSketch&, const CountSketch&) = default;

 private:
  std::uint64_t cell_hash(std::size_t row, std::size_t index) const noexcept {
    return hash_combine({config_.seed, static_cast<std::uint64_t>(row), static_cast<std::uint64_t>(index)});
  }

  void check_index(std::size_t index) const {
    if (index >= dimension())
      throw RangeError("coordinate " + std::to_string(index) + " out of range for dimension " +
                       std::to_string(dimension()));
  }

  static double median(std::vector<double>& v) {
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    if (v.size() % 2 == 1) return v[mid];
    const double hi = v[mid];
    const double lo = *std::max_element(v.begin(), v.begin() + mid);
    return 0.5 * (lo + hi);
  }

  SketchConfig config_;
  std::vector<double> table_;
};

inline CountSketch sketch_of(const SketchConfig& config, std::span<const double> vec) {
  CountSketch s(config);
  s.insert(vec);
  return s;
}

inline CountSketch merged(CountSketch a, const CountSketch& b) { return std::move(a.merge(b)); }

inline CountSketch scaled(CountSketch s, double factor) { return std::move(s.scale(factor)); }

}  // namespace gssgd
