#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "codecs.hpp"
#include "collective.hpp"
#include "count_sketch.hpp"
#include "hash.hpp"
#include "objectives.hpp"
#include "tcp_transport.hpp"
#include "trainer.hpp"
#include "transport.hpp"

namespace gssgd {

/// Outcome of one invariant check, with a one-line explanation.
struct CheckResult {
  bool passed = true;
  std::string detail;
};

namespace detail {

inline std::vector<double> seeded_vector(std::size_t d, std::uint64_t seed, bool integer) {
  SplitMix64 rng(seed);
  std::vector<double> v(d);
  for (auto& x : v)
    x = integer ? static_cast<double>(static_cast<std::int64_t>(rng.below(201)) - 100) : (rng.uniform() * 2.0 - 1.0) * 100.0;
  return v;
}

inline std::size_t ceil_log2(std::size_t p) {
  std::size_t l = 0;
  while ((std::size_t{1} << l) < p) ++l;
  return l;
}

}  // namespace detail

/// merge(S(a), S(b)) against S(a + b) for `pairs` seeded pairs per
/// dimension. Integer entries must agree bit for bit; real entries per cell
/// within `tolerance`.
inline CheckResult check_sketch_linearity(std::size_t pairs, const std::vector<std::size_t>& dims, std::uint64_t seed,
                                          double tolerance = 1e-9) {
  std::size_t int_bad = 0, real_bad = 0;
  double worst = 0.0;
  for (std::size_t d : dims) {
    for (std::size_t t = 0; t < pairs; ++t) {
      const SketchConfig cfg{7, 64, d, hash_combine({seed, d, t})};
      for (bool integer : {true, false}) {
        const auto a = detail::seeded_vector(d, hash_combine({seed, d, t, integer, 1}), integer);
        const auto b = detail::seeded_vector(d, hash_combine({seed, d, t, integer, 2}), integer);
        std::vector<double> sum(d);
        for (std::size_t i = 0; i < d; ++i) sum[i] = a[i] + b[i];
        const CountSketch lhs = merged(sketch_of(cfg, a), sketch_of(cfg, b));
        const CountSketch rhs = sketch_of(cfg, sum);
        if (integer) {
          if (!(lhs == rhs)) ++int_bad;
        } else {
          double err = 0.0;
          for (std::size_t c = 0; c < lhs.table().size(); ++c) err = std::max(err, std::abs(lhs.table()[c] - rhs.table()[c]));
          worst = std::max(worst, err);
          if (err > tolerance) ++real_bad;
        }
      }
    }
  }
  std::ostringstream o;
  o << pairs * dims.size() << " pairs per kind, integer mismatches " << int_bad << ", real over tolerance "
    << real_bad << " (worst cell error " << worst << ")";
  return {int_bad == 0 && real_bad == 0, o.str()};
}

/// Tree reduce of integer sketches for every P in [1, max_world] against the
/// sketch of the exact sum; checks round count and messages per direction.
inline CheckResult check_tree_reduce(std::size_t max_world, std::size_t seeds, std::size_t d = 256) {
  std::size_t bad = 0;
  std::ostringstream why;
  for (std::size_t P = 1; P <= max_world; ++P) {
    for (std::size_t s = 0; s < seeds; ++s) {
      const SketchConfig cfg{5, 64, d, hash_combine({P, s, 0xc011})};
      std::vector<CountSketch> payloads;
      std::vector<double> total(d, 0.0);
      for (Rank r = 0; r < P; ++r) {
        const auto v = detail::seeded_vector(d, hash_combine({P, s, r}), true);
        for (std::size_t i = 0; i < d; ++i) total[i] += v[i];
        payloads.push_back(sketch_of(cfg, v));
      }
      InProcessTransport t(P);
      TreeCollective tree(build_reduce_plan({P}), t);
      const CountSketch root = tree.reduce(SketchCodec{}, payloads, Phase::sketch);
      const TrafficLedger up = t.ledger();
      tree.broadcast(SketchCodec{}, payloads, Phase::sketch);
      const TrafficLedger down = t.ledger().since(up);
      const bool ok = root == sketch_of(cfg, total) && up.rounds() == detail::ceil_log2(P) &&
                      up.messages() == P - 1 && down.messages() == P - 1 && down.rounds() == detail::ceil_log2(P);
      if (!ok && bad++ == 0)
        why << "; first failure at P=" << P << " (rounds " << up.rounds() << ", messages " << up.messages() << ")";
    }
  }
  std::ostringstream o;
  o << "P=1.." << max_world << " x " << seeds << " seeds, failures " << bad << why.str();
  return {bad == 0, o.str()};
}

/// Ledger time of a sketch-only allreduce against 2*ceil(log2 P)*(alpha + beta*rows*cols).
inline CheckResult check_allreduce_cost(const std::vector<std::size_t>& worlds, const std::vector<CostModel>& models,
                                        const SketchConfig& cfg) {
  std::size_t bad = 0;
  std::ostringstream o;
  for (std::size_t P : worlds) {
    InProcessTransport t(P);
    TreeCollective tree(build_reduce_plan({P}), t);
    std::vector<CountSketch> payloads(P, CountSketch(cfg));
    tree.allreduce(SketchCodec{}, payloads, Phase::sketch);
    for (const auto& cm : models) {
      const double expect = 2.0 * static_cast<double>(detail::ceil_log2(P)) *
                            (cm.alpha_startup + cm.beta_per_element * static_cast<double>(cfg.rows * cfg.cols));
      const double got = t.ledger().modeled_time(cm);
      if (got != expect) {
        ++bad;
        o << "P=" << P << " got " << got << " expected " << expect << "; ";
      }
    }
  }
  o << worlds.size() * models.size() << " cases, mismatches " << bad;
  return {bad == 0, o.str()};
}

/// Runs the least-squares objective twice, gs_sgd with k = d and dense,
/// and requires identical weights on every rank after every iteration.
inline CheckResult check_degenerate_equivalence(std::size_t world_size, std::size_t iterations, std::size_t d = 64,
                                                std::uint64_t seed = 7) {
  const LeastSquares obj({.dimension = d, .samples = 512, .noise = 0.1, .seed = seed});
  TrainConfig cfg;
  cfg.world_size = world_size;
  cfg.k = d;
  cfg.learning_rate = 0.05;
  cfg.batch_size = 16;
  cfg.iters_per_epoch = iterations;
  cfg.seed = seed;
  InProcessTransport t1(world_size), t2(world_size);
  cfg.compressor = Compressor::gs_sgd;
  Trainer gs(obj, cfg, t1);
  cfg.compressor = Compressor::dense;
  Trainer dense(obj, cfg, t2);
  for (std::size_t i = 0; i < iterations; ++i) {
    gs.step();
    dense.step();
    if (gs.replicas() != dense.replicas())
      return {false, "trajectories split at iteration " + std::to_string(i + 1)};
  }
  return {true, std::to_string(iterations) + " iterations at P=" + std::to_string(world_size) + ", d=" +
                    std::to_string(d) + ", identical weights"};
}

/// Every compressor at `world_size` ranks keeps all replicas equal after
/// every iteration.
inline CheckResult check_replica_consistency(const Objective& obj, std::size_t world_size, std::size_t iterations,
                                             std::size_t k, double learning_rate, std::size_t batch) {
  for (Compressor c : {Compressor::dense, Compressor::gs_sgd, Compressor::sketched_star, Compressor::local_topk,
                       Compressor::gtopk}) {
    TrainConfig cfg;
    cfg.world_size = world_size;
    cfg.k = k;
    cfg.learning_rate = learning_rate;
    cfg.batch_size = batch;
    cfg.iters_per_epoch = iterations;
    cfg.compressor = c;
    InProcessTransport t(world_size);
    Trainer tr(obj, cfg, t);
    for (std::size_t i = 0; i < iterations; ++i) {
      tr.step();
      if (!tr.replicas_identical())
        return {false, std::string(compressor_name(c)) + " replicas differ after iteration " + std::to_string(i + 1)};
    }
  }
  return {true, "5 compressors x " + std::to_string(iterations) + " iterations at P=" + std::to_string(world_size) +
                    ", all replicas equal"};
}

/// Same training run over the in-process and TCP transports: ledgers,
/// per-iteration records and final weights must match exactly.
inline CheckResult check_transport_equivalence(const Objective& obj, const TrainConfig& cfg) {
  InProcessTransport mem(cfg.world_size);
  TcpLoopbackTransport tcp(cfg.world_size);
  Trainer a(obj, cfg, mem);
  Trainer b(obj, cfg, tcp);
  for (std::size_t i = 0; i < cfg.iterations(); ++i) {
    const IterationRecord ra = a.step();
    const IterationRecord rb = b.step();
    if (ra.loss != rb.loss || ra.grad_norm != rb.grad_norm || ra.topk_overlap != rb.topk_overlap ||
        ra.modeled_time != rb.modeled_time || !(ra.traffic == rb.traffic))
      return {false, "records differ at iteration " + std::to_string(i + 1)};
  }
  if (!(mem.ledger() == tcp.ledger())) return {false, "ledgers differ"};
  if (a.replicas() != b.replicas()) return {false, "final weights differ"};
  std::ostringstream o;
  o << cfg.iterations() << " iterations of " << compressor_name(cfg.compressor) << " at P=" << cfg.world_size
    << ": " << mem.ledger().messages() << " messages, " << mem.ledger().bytes() << " bytes, digest match";
  return {true, o.str()};
}

/// Small-instance invariant suite behind `gssgd_bench --verify`.
inline bool run_verify_suite(std::ostream& out) {
  bool all = true;
  auto report = [&](const char* name, const CheckResult& r) {
    out << (r.passed ? "[PASS] " : "[FAIL] ") << name << ": " << r.detail << '\n';
    all = all && r.passed;
  };
  auto guarded = [&](const char* name, auto&& fn) {
    try {
      report(name, fn());
    } catch (const std::exception& e) {
      report(name, {false, std::string("threw: ") + e.what()});
    }
  };

  guarded("sketch linearity", [] { return check_sketch_linearity(20, {16, 256}, 1); });
  guarded("tree reduce", [] { return check_tree_reduce(9, 2); });
  guarded("allreduce cost", [] {
    return check_allreduce_cost({2, 4, 8}, {CostModel{}, CostModel{1e-4, 1e-9}}, SketchConfig{7, 128, 256, 3});
  });
  guarded("k=d matches dense", [] { return check_degenerate_equivalence(4, 10); });
  guarded("replica consistency", [] {
    const LeastSquares obj({.dimension = 64, .samples = 512, .seed = 3});
    return check_replica_consistency(obj, 4, 5, 8, 0.05, 16);
  });
  guarded("transport equivalence", [] {
    const LeastSquares obj({.dimension = 64, .samples = 512, .seed = 5});
    TrainConfig cfg;
    cfg.world_size = 3;
    cfg.k = 8;
    cfg.batch_size = 16;
    cfg.iters_per_epoch = 3;
    return check_transport_equivalence(obj, cfg);
  });
  out << (all ? "all checks passed" : "some checks failed") << '\n';
  return all;
}

}  // namespace gssgd
