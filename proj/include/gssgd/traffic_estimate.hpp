#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "codecs.hpp"
#include "collective.hpp"
#include "count_sketch.hpp"
#include "trainer.hpp"
#include "transport.hpp"

namespace gssgd {

/// Traffic of one training iteration, computed by running the trainer's
/// collective schedule with size-only payloads. Nothing of size d is
/// allocated, so this works for d in the millions.
///
/// Exact for dense, gs_sgd, sketched_star and gtopk. For local_topk the
/// merged support depends on the data; the estimate assumes disjoint
/// supports (merge size a + b, capped at 2d), which is an upper bound.
inline TrafficLedger estimate_iteration_traffic(Compressor c, std::size_t world_size, std::size_t dimension,
                                                std::size_t k, const SketchConfig& sketch) {
  InProcessTransport t(world_size);
  TreeCollective tree(build_reduce_plan({world_size}), t);
  StarCollective star(t);
  const std::size_t P = world_size;
  auto fill = [P](std::size_t n) { return std::vector<std::size_t>(P, n); };
  const std::size_t cells = sketch.rows * sketch.cols;
  k = std::min(k, dimension);

  switch (c) {
    case Compressor::dense: {
      auto p = fill(dimension);
      tree.allreduce(PhantomCodec{}, p, Phase::dense);
      break;
    }
    case Compressor::gs_sgd: {
      auto s = fill(cells);
      tree.allreduce(PhantomCodec{}, s, Phase::sketch);
      auto v = fill(2 * k);
      tree.allreduce(PhantomCodec{}, v, Phase::exact_values);
      break;
    }
    case Compressor::sketched_star: {
      auto s = fill(cells);
      star.gather(PhantomCodec{}, s, Phase::sketch);
      auto i = fill(k);
      star.broadcast(PhantomCodec{}, i, Phase::indices);
      auto v = fill(2 * k);
      star.gather(PhantomCodec{}, v, Phase::exact_values);
      star.broadcast(PhantomCodec{}, v, Phase::exact_values);
      break;
    }
    case Compressor::local_topk: {
      auto v = fill(2 * k);
      PhantomCodec codec{[dimension](std::size_t a, std::size_t b) { return std::min(2 * dimension, a + b); }};
      tree.allreduce(codec, v, Phase::sparse);
      break;
    }
    case Compressor::gtopk: {
      auto v = fill(2 * k);
      tree.allreduce(PhantomCodec{}, v, Phase::sparse);
      break;
    }
  }
  return t.ledger();
}

inline double estimate_iteration_time(Compressor c, std::size_t world_size, std::size_t dimension, std::size_t k,
                                      const SketchConfig& sketch, const CostModel& cost) {
  return estimate_iteration_traffic(c, world_size, dimension, k, sketch).modeled_time(cost);
}

}  // namespace gssgd
