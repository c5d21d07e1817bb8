#pragma once

#include <concepts>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "count_sketch.hpp"
#include "sparse_gradient.hpp"
#include "wire.hpp"

namespace gssgd {

/// How a payload type travels through a collective: byte encoding, the
/// element count charged to the ledger, and how a receiver folds in a
/// sender's value (receiver first).
template <typename C>
concept PayloadCodec = requires(const C& c, const typename C::value_type& v, std::span<const std::byte> b) {
  { c.encode(v) } -> std::same_as<wire::Bytes>;
  { c.elements(v) } -> std::convertible_to<std::size_t>;
  { c.decode(b) } -> std::same_as<typename C::value_type>;
  { c.combine(v, v) } -> std::same_as<typename C::value_type>;
};

/// Count-Sketch payloads; charged rows * cols elements.
struct SketchCodec {
  using value_type = CountSketch;
  wire::Bytes encode(const CountSketch& s) const { return s.serialize(); }
  std::size_t elements(const CountSketch& s) const { return s.config().cells(); }
  CountSketch decode(std::span<const std::byte> b) const { return CountSketch::deserialize(b); }
  CountSketch combine(const CountSketch& mine, const CountSketch& theirs) const { return merged(mine, theirs); }
};

/// Dense f64 vectors: 8-byte count then the values; charged d elements.
struct DenseCodec {
  using value_type = std::vector<double>;
  wire::Bytes encode(const std::vector<double>& v) const {
    wire::Bytes out;
    out.reserve(8 + 8 * v.size());
    wire::put_u64(out, v.size());
    for (double x : v) wire::put_f64(out, x);
    return out;
  }
  std::size_t elements(const std::vector<double>& v) const { return v.size(); }
  std::vector<double> decode(std::span<const std::byte> b) const {
    wire::Reader in(b);
    const std::uint64_t n = in.u64();
    if (in.remaining() != 8 * n) throw DecodeError("dense frame length mismatch");
    std::vector<double> v(n);
    for (double& x : v) x = in.f64();
    return v;
  }
  std::vector<double> combine(const std::vector<double>& mine, const std::vector<double>& theirs) const {
    if (mine.size() != theirs.size()) throw DecodeError("dense payload length mismatch");
    std::vector<double> out(mine.size());
    for (std::size_t i = 0; i < mine.size(); ++i) out[i] = mine[i] + theirs[i];
    return out;
  }
};

/// Sparse (index, value) frames summed over the union of supports; charged
/// two elements per pair. With `keep` > 0 every combine keeps only the `keep`
/// largest magnitudes, which is the gTop-k merge.
struct SparseCodec {
  using value_type = SparseGradient;
  std::size_t keep = 0;

  wire::Bytes encode(const SparseGradient& g) const { return g.serialize(); }
  std::size_t elements(const SparseGradient& g) const { return 2 * g.size(); }
  SparseGradient decode(std::span<const std::byte> b) const { return SparseGradient::deserialize(b); }
  SparseGradient combine(const SparseGradient& mine, const SparseGradient& theirs) const {
    SparseGradient sum = mine.plus(theirs);
    return keep > 0 ? sum.truncated(keep) : sum;
  }
};

/// Coordinate lists (a broadcast Top_k): 8-byte count then 8-byte indices.
struct IndexCodec {
  using value_type = std::vector<std::size_t>;
  wire::Bytes encode(const std::vector<std::size_t>& v) const {
    wire::Bytes out;
    wire::put_u64(out, v.size());
    for (std::size_t i : v) wire::put_u64(out, i);
    return out;
  }
  std::size_t elements(const std::vector<std::size_t>& v) const { return v.size(); }
  std::vector<std::size_t> decode(std::span<const std::byte> b) const {
    wire::Reader in(b);
    const std::uint64_t n = in.u64();
    if (in.remaining() != 8 * n) throw DecodeError("index frame length mismatch");
    std::vector<std::size_t> v(n);
    for (auto& i : v) i = in.u64();
    return v;
  }
  std::vector<std::size_t> combine(const std::vector<std::size_t>& mine, const std::vector<std::size_t>&) const {
    return mine;
  }
};

/// Stand-in payload that carries only its element count. Used to evaluate
/// the traffic of configurations too large to materialize.
struct PhantomCodec {
  using value_type = std::size_t;
  std::function<std::size_t(std::size_t, std::size_t)> merge_size = [](std::size_t a, std::size_t) { return a; };

  wire::Bytes encode(const std::size_t& n) const {
    wire::Bytes out;
    wire::put_u64(out, n);
    return out;
  }
  std::size_t elements(const std::size_t& n) const { return n; }
  std::size_t decode(std::span<const std::byte> b) const {
    wire::Reader in(b);
    const std::size_t n = in.u64();
    in.expect_end();
    return n;
  }
  std::size_t combine(const std::size_t& a, const std::size_t& b) const { return merge_size(a, b); }
};

}  // namespace gssgd
