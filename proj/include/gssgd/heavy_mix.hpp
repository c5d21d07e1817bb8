#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <vector>

#include "count_sketch.hpp"
#include "errors.hpp"
#include "hash.hpp"

namespace gssgd {

/// Coordinates chosen from an aggregated sketch: the heavy set H (ordered by
/// decreasing estimate magnitude) and the random padding drawn from the
/// non-heavy remainder (in draw order).
struct TopKSelection {
  std::vector<std::size_t> heavy;
  std::vector<std::size_t> padding;
  std::size_t k = 0;

  std::size_t size() const noexcept { return heavy.size() + padding.size(); }

  /// H and padding together, ascending by coordinate.
  std::vector<std::size_t> coordinates() const {
    std::vector<std::size_t> all(heavy);
    all.insert(all.end(), padding.begin(), padding.end());
    std::sort(all.begin(), all.end());
    return all;
  }

  friend bool operator==(const TopKSelection&, const TopKSelection&) = default;
};

/// HEAVYMIX candidate selection.
///
/// Every coordinate is queried; with L^2 the sketch's squared l2 estimate,
/// coordinate i is heavy when est_i^2 >= L^2 / k (evaluated as
/// est_i^2 * k >= L^2 so integer-valued inputs sit exactly on the boundary). If more than k are heavy the k largest
/// |est_i| are kept (ties to the lower index). Otherwise the remaining
/// k - |H| slots are filled by a seeded partial Fisher-Yates draw from the
/// non-heavy coordinates. The output depends only on (sketch, k, seed), so
/// every worker holding the same summed sketch picks the same set.
inline TopKSelection heavy_mix(const CountSketch& sketch, std::size_t k, std::uint64_t selection_seed) {
  if (k < 1) throw ConfigError("heavy_mix: k must be >= 1");
  const std::size_t d = sketch.dimension();
  const std::size_t want = std::min(k, d);

  std::vector<double> est(d);
  for (std::size_t i = 0; i < d; ++i) est[i] = sketch.query(i);

  const double l2_sq = sketch.l2_squared_estimate();
  const double kd = static_cast<double>(k);

  std::vector<std::size_t> heavy;
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < d; ++i) (est[i] * est[i] * kd >= l2_sq ? heavy : rest).push_back(i);

  TopKSelection out;
  out.k = k;
  auto by_magnitude = [&](std::size_t a, std::size_t b) {
    const double ma = std::abs(est[a]);
    const double mb = std::abs(est[b]);
    return ma != mb ? ma > mb : a < b;
  };
  if (heavy.size() >= want) {
    std::partial_sort(heavy.begin(), heavy.begin() + static_cast<std::ptrdiff_t>(want), heavy.end(), by_magnitude);
    heavy.resize(want);
    out.heavy = std::move(heavy);
    return out;
  }

  std::sort(heavy.begin(), heavy.end(), by_magnitude);
  const std::size_t pad = want - heavy.size();
  SplitMix64 rng(selection_seed);
  for (std::size_t j = 0; j < pad; ++j) {
    const std::size_t pick = j + static_cast<std::size_t>(rng.below(rest.size() - j));
    std::swap(rest[j], rest[pick]);
  }
  rest.resize(pad);
  out.heavy = std::move(heavy);
  out.padding = std::move(rest);
  return out;
}

}  // namespace gssgd
