#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "wire.hpp"

namespace gssgd {

/// (coordinate, value) pairs kept sorted by coordinate with no duplicates.
class SparseGradient {
 public:
  struct Entry {
    std::size_t index;
    double value;
    friend bool operator==(const Entry&, const Entry&) = default;
  };

  SparseGradient() = default;

  /// Values of `dense` at `coords` (any order; duplicates are an error).
  static SparseGradient gather(std::span<const double> dense, std::span<const std::size_t> coords) {
    std::vector<std::size_t> sorted(coords.begin(), coords.end());
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw RangeError("gather: duplicate coordinate");
    SparseGradient out;
    out.entries_.reserve(sorted.size());
    for (std::size_t i : sorted) {
      if (i >= dense.size()) throw RangeError("gather: coordinate " + std::to_string(i) + " out of range");
      out.entries_.push_back({i, dense[i]});
    }
    return out;
  }

  /// The k largest-magnitude coordinates of `dense`; ties go to the lower index.
  static SparseGradient top_k(std::span<const double> dense, std::size_t k) {
    return gather(dense, top_k_indices(dense, k));
  }

  static std::vector<std::size_t> top_k_indices(std::span<const double> dense, std::size_t k) {
    std::vector<std::size_t> idx(dense.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    k = std::min(k, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](std::size_t a, std::size_t b) {
                        const double ma = std::abs(dense[a]);
                        const double mb = std::abs(dense[b]);
                        return ma != mb ? ma > mb : a < b;
                      });
    idx.resize(k);
    return idx;
  }

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  /// Coordinate-wise sum over the union of supports. For shared coordinates
  /// the result is `this->value + other.value`, in that order.
  SparseGradient plus(const SparseGradient& other) const {
    SparseGradient out;
    out.entries_.reserve(entries_.size() + other.entries_.size());
    auto a = entries_.begin();
    auto b = other.entries_.begin();
    while (a != entries_.end() || b != other.entries_.end()) {
      if (b == other.entries_.end() || (a != entries_.end() && a->index < b->index)) {
        out.entries_.push_back(*a++);
      } else if (a == entries_.end() || b->index < a->index) {
        out.entries_.push_back(*b++);
      } else {
        out.entries_.push_back({a->index, a->value + b->value});
        ++a;
        ++b;
      }
    }
    return out;
  }

  /// Keep the k largest-magnitude entries (ties to the lower index).
  SparseGradient truncated(std::size_t k) const {
    if (entries_.size() <= k) return *this;
    std::vector<Entry> kept(entries_);
    std::partial_sort(kept.begin(), kept.begin() + static_cast<std::ptrdiff_t>(k), kept.end(),
                      [](const Entry& x, const Entry& y) {
                        const double mx = std::abs(x.value);
                        const double my = std::abs(y.value);
                        return mx != my ? mx > my : x.index < y.index;
                      });
    kept.resize(k);
    std::sort(kept.begin(), kept.end(), [](const Entry& x, const Entry& y) { return x.index < y.index; });
    SparseGradient out;
    out.entries_ = std::move(kept);
    return out;
  }

  /// 8-byte count, then (8-byte index, 8-byte float) pairs.
  wire::Bytes serialize() const {
    wire::Bytes out;
    out.reserve(8 + 16 * entries_.size());
    wire::put_u64(out, entries_.size());
    for (const Entry& e : entries_) {
      wire::put_u64(out, e.index);
      wire::put_f64(out, e.value);
    }
    return out;
  }

  static SparseGradient deserialize(std::span<const std::byte> bytes) {
    wire::Reader in(bytes);
    const std::uint64_t n = in.u64();
    if (in.remaining() != 16 * n)
      throw DecodeError("sparse frame declares " + std::to_string(n) + " pairs but carries " +
                        std::to_string(in.remaining()) + " bytes");
    SparseGradient out;
    out.entries_.reserve(n);
    for (std::uint64_t j = 0; j < n; ++j) {
      const std::size_t idx = in.u64();
      const double v = in.f64();
      if (!out.entries_.empty() && out.entries_.back().index >= idx)
        throw DecodeError("sparse frame coordinates not strictly increasing");
      out.entries_.push_back({idx, v});
    }
    return out;
  }

  friend bool operator==(const SparseGradient&, const SparseGradient&) = default;

 private:
  std::vector<Entry> entries_;
};

}  // namespace gssgd
