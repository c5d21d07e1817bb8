#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "codecs.hpp"
#include "collective.hpp"
#include "count_sketch.hpp"
#include "errors.hpp"
#include "hash.hpp"
#include "heavy_mix.hpp"
#include "objectives.hpp"
#include "sparse_gradient.hpp"
#include "transport.hpp"

namespace gssgd {

enum class Compressor { dense, gs_sgd, sketched_star, local_topk, gtopk };

inline std::string_view compressor_name(Compressor c) noexcept {
  switch (c) {
    case Compressor::dense: return "dense";
    case Compressor::gs_sgd: return "gs_sgd";
    case Compressor::sketched_star: return "sketched_star";
    case Compressor::local_topk: return "local_topk";
    case Compressor::gtopk: return "gtopk";
  }
  return "?";
}

inline Compressor parse_compressor(std::string_view s) {
  if (s == "dense") return Compressor::dense;
  if (s == "gs" || s == "gs_sgd") return Compressor::gs_sgd;
  if (s == "star" || s == "sketched_star") return Compressor::sketched_star;
  if (s == "topk" || s == "local_topk") return Compressor::local_topk;
  if (s == "gtopk") return Compressor::gtopk;
  throw ConfigError("unknown compressor '" + std::string(s) + "' (expected dense, gs_sgd, sketched_star, local_topk, gtopk)");
}

/// Warmup densities and learning rates for the first epochs. The rate list
/// is shorter than the density list; its last entry repeats.
struct WarmupSchedule {
  std::vector<double> densities{0.25, 0.0725, 0.015, 0.004};
  std::vector<double> rates{0.1, 0.03, 0.01};

  std::size_t epochs() const noexcept { return densities.size(); }

  /// (density, rate) for a 1-based warmup epoch, nullopt past the warmup.
  std::optional<std::pair<double, double>> at(std::size_t epoch) const {
    if (epoch < 1 || epoch > densities.size()) return std::nullopt;
    double rate = 0.0;
    if (!rates.empty()) rate = rates[std::min(epoch, rates.size()) - 1];
    return std::pair{densities[epoch - 1], rate};
  }
};

struct TrainConfig {
  std::size_t world_size = 4;
  std::size_t k = 16;
  std::size_t sketch_rows = 7;
  std::size_t sketch_cols = 0;  // 0 -> max(64, next_pow2(20k))
  double learning_rate = 0.05;
  /// (first epoch, rate) steps applied after warmup; overrides learning_rate
  /// from the listed epoch on.
  std::vector<std::pair<std::size_t, double>> lr_schedule;
  bool warmup = false;
  WarmupSchedule warmup_schedule;
  std::size_t epochs = 1;
  std::size_t iters_per_epoch = 100;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  Compressor compressor = Compressor::gs_sgd;

  std::size_t iterations() const noexcept { return epochs * iters_per_epoch; }

  SketchConfig sketch_config(std::size_t dimension) const {
    SketchConfig s = default_sketch_config(dimension, k, hash_combine({seed, 0x5ce7c4}));
    s.rows = sketch_rows;
    if (sketch_cols > 0) s.cols = sketch_cols;
    return s;
  }

  void validate(std::size_t dimension) const {
    if (world_size < 1) throw ConfigError("world size must be >= 1");
    if (k < 1 || k > dimension)
      throw ConfigError("k must satisfy 1 <= k <= d (k=" + std::to_string(k) + ", d=" + std::to_string(dimension) + ")");
    if (sketch_rows < 1) throw ConfigError("sketch rows must be >= 1");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (iters_per_epoch < 1) throw ConfigError("iterations per epoch must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be > 0");
    for (double d : warmup_schedule.densities)
      if (!(d > 0.0 && d <= 1.0)) throw ConfigError("warmup densities must lie in (0, 1]");
    for (const auto& [epoch, rate] : lr_schedule)
      if (epoch < 1 || !(rate > 0.0)) throw ConfigError("lr schedule entries need epoch >= 1 and rate > 0");
  }
};

/// Density and learning rate in force for a 1-based epoch.
struct EpochSettings {
  double density = 1.0;
  std::size_t k = 1;
  double learning_rate = 0.0;
};

inline std::size_t k_for_density(double density, std::size_t dimension) {
  const auto k = static_cast<std::size_t>(std::ceil(density * static_cast<double>(dimension)));
  return std::clamp<std::size_t>(k, 1, dimension);
}

inline EpochSettings epoch_settings(const TrainConfig& cfg, std::size_t epoch, std::size_t dimension) {
  if (cfg.warmup) {
    if (auto w = cfg.warmup_schedule.at(epoch))
      return {w->first, k_for_density(w->first, dimension), w->second};
  }
  double rate = cfg.learning_rate;
  for (const auto& [from, r] : cfg.lr_schedule)
    if (epoch >= from) rate = r;
  return {static_cast<double>(cfg.k) / static_cast<double>(dimension), cfg.k, rate};
}

/// Minibatch for one rank. Rank r owns the contiguous shard
/// [r*n/P, (r+1)*n/P), reshuffled at the start of every epoch with a stream
/// seeded by (seed, epoch, rank); iteration j of the epoch takes the next
/// `batch_size` positions of that order, wrapping around.
inline std::vector<std::size_t> sample_batch(std::size_t num_samples, std::size_t world_size, Rank rank,
                                             std::size_t epoch, std::size_t in_epoch, std::size_t batch_size,
                                             std::uint64_t seed) {
  const std::size_t lo = rank * num_samples / world_size;
  const std::size_t hi = (rank + 1) * num_samples / world_size;
  std::vector<std::size_t> order(hi - lo);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = lo + i;
  SplitMix64 rng(hash_combine({seed, epoch, rank, 0x5a4d}));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  std::vector<std::size_t> batch(batch_size);
  const std::size_t start = in_epoch * batch_size;
  for (std::size_t j = 0; j < batch_size; ++j) batch[j] = order[(start + j) % order.size()];
  return batch;
}

struct IterationRecord {
  std::size_t iter = 0;   // 1-based
  std::size_t epoch = 0;  // 1-based
  Compressor compressor = Compressor::dense;
  std::size_t k = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double topk_overlap = 0.0;
  double modeled_time = 0.0;
  TrafficLedger traffic;               // this iteration only
  std::vector<std::size_t> selected;   // applied coordinates; empty for dense
};

/// Synchronous data-parallel SGD over P simulated workers.
///
/// Each rank keeps its own weight replica and shard. Ranks run in lock-step
/// on the calling thread and exchange every byte through the transport, so
/// the replicas only agree because the collectives make them agree.
class Trainer {
 public:
  Trainer(const Objective& objective, TrainConfig config, Transport& transport, CostModel cost = {})
      : obj_(&objective),
        cfg_(std::move(config)),
        cost_(cost),
        transport_(&transport),
        tree_(build_reduce_plan({cfg_.world_size}), transport),
        star_(transport),
        sketch_cfg_(cfg_.sketch_config(objective.dimension())) {
    cfg_.validate(objective.dimension());
    cost_.validate();
    if (transport.world_size() != cfg_.world_size) throw ConfigError("transport world size differs from config");
    if (objective.num_samples() < cfg_.world_size) throw ConfigError("fewer samples than workers");
    sketch_cfg_.validate();
    replicas_.assign(cfg_.world_size, objective.initial_weights());
    grads_.assign(cfg_.world_size, std::vector<double>(objective.dimension()));
  }

  const TrainConfig& config() const noexcept { return cfg_; }
  const SketchConfig& sketch_config() const noexcept { return sketch_cfg_; }
  const std::vector<std::vector<double>>& replicas() const noexcept { return replicas_; }
  std::size_t iteration() const noexcept { return t_; }

  bool replicas_identical() const {
    return std::all_of(replicas_.begin(), replicas_.end(), [&](const auto& w) { return w == replicas_[0]; });
  }

  IterationRecord step() {
    const std::size_t d = obj_->dimension();
    const std::size_t P = cfg_.world_size;
    const std::size_t epoch = t_ / cfg_.iters_per_epoch + 1;
    const std::size_t in_epoch = t_ % cfg_.iters_per_epoch;
    const EpochSettings settings = epoch_settings(cfg_, epoch, d);
    const TrafficLedger before = transport_->ledger();

    for (Rank r = 0; r < P; ++r) {
      const auto batch = sample_batch(obj_->num_samples(), P, r, epoch, in_epoch, cfg_.batch_size, cfg_.seed);
      obj_->gradient(replicas_[r], batch, grads_[r]);
    }

    std::vector<double> mean_grad(d, 0.0);
    for (const auto& g : grads_)
      for (std::size_t i = 0; i < d; ++i) mean_grad[i] += g[i];
    for (double& v : mean_grad) v /= static_cast<double>(P);

    std::vector<std::size_t> applied;
    lr_ = settings.learning_rate;
    const std::uint64_t selection_seed = hash_combine({cfg_.seed, t_, 0x5e1ec7});

    switch (cfg_.compressor) {
      case Compressor::dense: {
        std::vector<std::vector<double>> payload(grads_);
        tree_.allreduce(DenseCodec{}, payload, Phase::dense);
        for (Rank r = 0; r < P; ++r)
          for (std::size_t i = 0; i < d; ++i) apply(replicas_[r], i, payload[r][i]);
        applied.resize(d);
        for (std::size_t i = 0; i < d; ++i) applied[i] = i;
        break;
      }
      case Compressor::gs_sgd: {
        std::vector<CountSketch> sketches;
        sketches.reserve(P);
        for (Rank r = 0; r < P; ++r) sketches.push_back(sketch_of(sketch_cfg_, grads_[r]));
        tree_.allreduce(SketchCodec{}, sketches, Phase::sketch);
        std::vector<SparseGradient> frames(P);
        for (Rank r = 0; r < P; ++r) {
          const auto coords = heavy_mix(sketches[r], settings.k, selection_seed).coordinates();
          frames[r] = SparseGradient::gather(grads_[r], coords);
        }
        tree_.allreduce(SparseCodec{}, frames, Phase::exact_values);
        applied = apply_sparse(frames);
        break;
      }
      case Compressor::sketched_star: {
        std::vector<CountSketch> sketches;
        sketches.reserve(P);
        for (Rank r = 0; r < P; ++r) sketches.push_back(sketch_of(sketch_cfg_, grads_[r]));
        const CountSketch total = star_.gather(SketchCodec{}, sketches, Phase::sketch);
        std::vector<std::vector<std::size_t>> coords(P);
        coords[0] = heavy_mix(total, settings.k, selection_seed).coordinates();
        star_.broadcast(IndexCodec{}, coords, Phase::indices);
        std::vector<SparseGradient> frames(P);
        for (Rank r = 0; r < P; ++r) frames[r] = SparseGradient::gather(grads_[r], coords[r]);
        star_.gather(SparseCodec{}, frames, Phase::exact_values);
        star_.broadcast(SparseCodec{}, frames, Phase::exact_values);
        applied = apply_sparse(frames);
        break;
      }
      case Compressor::local_topk:
      case Compressor::gtopk: {
        std::vector<SparseGradient> frames(P);
        for (Rank r = 0; r < P; ++r) frames[r] = SparseGradient::top_k(grads_[r], settings.k);
        const SparseCodec codec{cfg_.compressor == Compressor::gtopk ? settings.k : 0};
        tree_.allreduce(codec, frames, Phase::sparse);
        applied = apply_sparse(frames);
        break;
      }
    }

    IterationRecord rec;
    rec.iter = t_ + 1;
    rec.epoch = epoch;
    rec.compressor = cfg_.compressor;
    rec.k = cfg_.compressor == Compressor::dense ? d : settings.k;
    rec.loss = obj_->full_loss(replicas_[0]);
    double sq = 0.0;
    for (double v : mean_grad) sq += v * v;
    rec.grad_norm = std::sqrt(sq);
    rec.topk_overlap = overlap(mean_grad, applied, settings.k);
    rec.traffic = transport_->ledger().since(before);
    if (cfg_.compressor != Compressor::dense) rec.selected = std::move(applied);
    rec.modeled_time = rec.traffic.modeled_time(cost_);
    ++t_;
    if (!std::isfinite(rec.loss))
      throw DivergenceError("loss became non-finite at iteration " + std::to_string(rec.iter), rec.iter);
    return rec;
  }

 private:
  /// w_i -= lr * (sum_i / P); dense and sparse paths share this expression.
  void apply(std::vector<double>& w, std::size_t i, double summed) const {
    w[i] -= lr_ * (summed / static_cast<double>(cfg_.world_size));
  }

  std::vector<std::size_t> apply_sparse(const std::vector<SparseGradient>& frames) {
    for (Rank r = 0; r < cfg_.world_size; ++r)
      for (const auto& e : frames[r].entries()) apply(replicas_[r], e.index, e.value);
    std::vector<std::size_t> idx;
    idx.reserve(frames[0].size());
    for (const auto& e : frames[0].entries()) idx.push_back(e.index);
    return idx;
  }

  static double overlap(const std::vector<double>& mean_grad, const std::vector<std::size_t>& applied, std::size_t k) {
    auto exact = SparseGradient::top_k_indices(mean_grad, k);
    std::sort(exact.begin(), exact.end());
    std::size_t hit = 0;
    for (std::size_t i : applied)
      if (std::binary_search(exact.begin(), exact.end(), i)) ++hit;
    return static_cast<double>(hit) / static_cast<double>(exact.size());
  }

  const Objective* obj_;
  TrainConfig cfg_;
  CostModel cost_;
  Transport* transport_;
  TreeCollective tree_;
  StarCollective star_;
  SketchConfig sketch_cfg_;
  std::vector<std::vector<double>> replicas_;
  std::vector<std::vector<double>> grads_;
  std::size_t t_ = 0;
  double lr_ = 0.0;
};

}  // namespace gssgd
