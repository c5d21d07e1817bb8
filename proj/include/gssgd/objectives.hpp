#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "hash.hpp"

namespace gssgd {

/// Standard normal draws from a SplitMix64 stream (Box-Muller).
class NormalSampler {
 public:
  explicit NormalSampler(std::uint64_t seed) : rng_(seed) {}

  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = rng_.uniform();
    while (u1 <= 0.0) u1 = rng_.uniform();
    const double u2 = rng_.uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

  SplitMix64& engine() noexcept { return rng_; }

 private:
  SplitMix64 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Dot product with four independent accumulators (fixed summation order).
inline double dot(std::span<const double> a, std::span<const double> b) noexcept {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  const std::size_t n = a.size();
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

/// A differentiable empirical loss over an indexed dataset.
class Objective {
 public:
  virtual ~Objective() = default;

  virtual std::string_view name() const noexcept = 0;
  virtual std::size_t dimension() const noexcept = 0;
  virtual std::size_t num_samples() const noexcept = 0;

  /// Mean loss over the samples in `batch`.
  virtual double loss(std::span<const double> w, std::span<const std::size_t> batch) const = 0;
  /// Mean gradient over `batch`, written to `out` (length d).
  virtual void gradient(std::span<const double> w, std::span<const std::size_t> batch, std::span<double> out) const = 0;

  virtual std::vector<double> initial_weights() const { return std::vector<double>(dimension(), 0.0); }
  virtual std::optional<std::vector<double>> optimum() const { return std::nullopt; }

  double full_loss(std::span<const double> w) const { return loss(w, all_samples()); }

  const std::vector<std::size_t>& all_samples() const {
    if (all_.size() != num_samples()) {
      all_.resize(num_samples());
      for (std::size_t i = 0; i < all_.size(); ++i) all_[i] = i;
    }
    return all_;
  }

 private:
  mutable std::vector<std::size_t> all_;
};

/// Linear regression 0.5 * mean (x.w - y)^2 on Gaussian features. The
/// generating weights have `support` nonzero coordinates; targets carry
/// Gaussian noise of std `noise`. With zero noise the generator is the exact
/// minimizer.
class LeastSquares final : public Objective {
 public:
  struct Params {
    std::size_t dimension = 256;
    std::size_t samples = 2048;
    std::size_t support = 0;  // 0 -> max(1, d / 32)
    double noise = 0.1;
    std::uint64_t seed = 1;
  };

  explicit LeastSquares(Params p) : p_(p) {
    if (p_.dimension < 1 || p_.samples < 1) throw ConfigError("least squares: dimension and samples must be >= 1");
    if (p_.support == 0) p_.support = std::max<std::size_t>(1, p_.dimension / 32);
    p_.support = std::min(p_.support, p_.dimension);
    NormalSampler normal(hash_combine({p_.seed, 0x15a}));
    truth_.assign(p_.dimension, 0.0);
    std::vector<std::size_t> coords(p_.dimension);
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    for (std::size_t j = 0; j < p_.support; ++j) {
      std::swap(coords[j], coords[j + normal.engine().below(coords.size() - j)]);
      const double mag = 1.0 + normal.engine().uniform();
      truth_[coords[j]] = (normal.engine()() & 1U) ? mag : -mag;
    }
    x_.resize(p_.samples * p_.dimension);
    for (double& v : x_) v = normal();
    y_.resize(p_.samples);
    for (std::size_t s = 0; s < p_.samples; ++s) y_[s] = dot(row(s), truth_) + p_.noise * normal();
  }

  std::string_view name() const noexcept override { return "lsq"; }
  std::size_t dimension() const noexcept override { return p_.dimension; }
  std::size_t num_samples() const noexcept override { return p_.samples; }

  double loss(std::span<const double> w, std::span<const std::size_t> batch) const override {
    double acc = 0.0;
    for (std::size_t s : batch) {
      const double r = dot(row(s), w) - y_[s];
      acc += 0.5 * r * r;
    }
    return acc / static_cast<double>(batch.size());
  }

  void gradient(std::span<const double> w, std::span<const std::size_t> batch, std::span<double> out) const override {
    std::fill(out.begin(), out.end(), 0.0);
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (std::size_t s : batch) {
      const auto x = row(s);
      const double r = (dot(x, w) - y_[s]) * inv;
      for (std::size_t i = 0; i < x.size(); ++i) out[i] += r * x[i];
    }
  }

  std::optional<std::vector<double>> optimum() const override {
    if (p_.noise == 0.0) return truth_;
    return std::nullopt;
  }

  const std::vector<double>& generating_weights() const noexcept { return truth_; }

 private:
  std::span<const double> row(std::size_t s) const {
    return std::span<const double>(x_).subspan(s * p_.dimension, p_.dimension);
  }
  Params p_;
  std::vector<double> truth_;
  std::vector<double> x_;
  std::vector<double> y_;
};

/// Two Gaussian blobs with class means +-mu, where mu is nonzero on a few
/// informative features. Shared by the logistic and MLP objectives.
struct BlobData {
  std::size_t features = 0;
  std::vector<double> x;      // samples x features
  std::vector<double> label;  // +1 / -1

  static BlobData make(std::size_t features, std::size_t samples, std::size_t informative, double separation,
                       std::uint64_t seed) {
    BlobData b;
    b.features = features;
    NormalSampler normal(hash_combine({seed, 0xb10b}));
    std::vector<double> mu(features, 0.0);
    informative = std::min(informative, features);
    for (std::size_t j = 0; j < informative; ++j) mu[j] = separation / std::sqrt(static_cast<double>(informative));
    b.x.resize(samples * features);
    b.label.resize(samples);
    for (std::size_t s = 0; s < samples; ++s) {
      const double y = (s % 2 == 0) ? 1.0 : -1.0;
      b.label[s] = y;
      for (std::size_t f = 0; f < features; ++f) b.x[s * features + f] = y * mu[f] + normal();
    }
    return b;
  }

  std::span<const double> row(std::size_t s) const {
    return std::span<const double>(x).subspan(s * features, features);
  }
};

inline double log1p_exp(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }
inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Logistic regression; the last weight is a bias, so the blobs have d - 1 features.
class LogisticRegression final : public Objective {
 public:
  struct Params {
    std::size_t dimension = 512;
    std::size_t samples = 2048;
    std::size_t informative = 0;  // 0 -> max(1, d / 32)
    double separation = 3.0;
    std::uint64_t seed = 1;
  };

  explicit LogisticRegression(Params p) : p_(p) {
    if (p_.dimension < 2 || p_.samples < 1) throw ConfigError("logistic: dimension must be >= 2 and samples >= 1");
    if (p_.informative == 0) p_.informative = std::max<std::size_t>(1, p_.dimension / 32);
    data_ = BlobData::make(p_.dimension - 1, p_.samples, p_.informative, p_.separation, p_.seed);
  }

  std::string_view name() const noexcept override { return "logreg"; }
  std::size_t dimension() const noexcept override { return p_.dimension; }
  std::size_t num_samples() const noexcept override { return p_.samples; }

  double loss(std::span<const double> w, std::span<const std::size_t> batch) const override {
    double acc = 0.0;
    for (std::size_t s : batch) acc += log1p_exp(-data_.label[s] * margin(w, s));
    return acc / static_cast<double>(batch.size());
  }

  void gradient(std::span<const double> w, std::span<const std::size_t> batch, std::span<double> out) const override {
    std::fill(out.begin(), out.end(), 0.0);
    const double inv = 1.0 / static_cast<double>(batch.size());
    const std::size_t f = data_.features;
    for (std::size_t s : batch) {
      const double y = data_.label[s];
      const double c = -y * sigmoid(-y * margin(w, s)) * inv;
      const auto x = data_.row(s);
      for (std::size_t i = 0; i < f; ++i) out[i] += c * x[i];
      out[f] += c;
    }
  }

 private:
  double margin(std::span<const double> w, std::size_t s) const {
    return w[data_.features] + dot(data_.row(s), w.first(data_.features));
  }

  Params p_;
  BlobData data_;
};

/// One tanh hidden layer, logistic output. Parameter layout:
/// W1 (hidden x inputs, row-major) | b1 (hidden) | w2 (hidden) | b2.
class Mlp final : public Objective {
 public:
  struct Params {
    std::size_t inputs = 64;
    std::size_t hidden = 150;
    std::size_t samples = 2048;
    std::size_t informative = 8;
    double separation = 3.0;
    std::uint64_t seed = 1;
  };

  explicit Mlp(Params p) : p_(p) {
    if (p_.inputs < 1 || p_.hidden < 1 || p_.samples < 1) throw ConfigError("mlp: sizes must be >= 1");
    data_ = BlobData::make(p_.inputs, p_.samples, p_.informative, p_.separation, p_.seed);
  }

  std::string_view name() const noexcept override { return "mlp"; }
  std::size_t dimension() const noexcept override { return p_.hidden * p_.inputs + 2 * p_.hidden + 1; }
  std::size_t num_samples() const noexcept override { return p_.samples; }

  std::vector<double> initial_weights() const override {
    std::vector<double> w(dimension(), 0.0);
    NormalSampler normal(hash_combine({p_.seed, 0x1417}));
    const double s1 = 1.0 / std::sqrt(static_cast<double>(p_.inputs));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(p_.hidden));
    for (std::size_t i = 0; i < p_.hidden * p_.inputs; ++i) w[i] = s1 * normal();
    for (std::size_t i = 0; i < p_.hidden; ++i) w[w2_offset() + i] = s2 * normal();
    return w;
  }

  double loss(std::span<const double> w, std::span<const std::size_t> batch) const override {
    std::vector<double> h(p_.hidden);
    double acc = 0.0;
    for (std::size_t s : batch) acc += log1p_exp(-data_.label[s] * forward(w, s, h));
    return acc / static_cast<double>(batch.size());
  }

  void gradient(std::span<const double> w, std::span<const std::size_t> batch, std::span<double> out) const override {
    std::fill(out.begin(), out.end(), 0.0);
    std::vector<double> h(p_.hidden);
    const double inv = 1.0 / static_cast<double>(batch.size());
    const std::size_t H = p_.hidden;
    const std::size_t I = p_.inputs;
    for (std::size_t s : batch) {
      const double y = data_.label[s];
      const double z = forward(w, s, h);
      const double dz = -y * sigmoid(-y * z) * inv;
      const auto x = data_.row(s);
      for (std::size_t j = 0; j < H; ++j) {
        out[w2_offset() + j] += dz * h[j];
        const double da = dz * w[w2_offset() + j] * (1.0 - h[j] * h[j]);
        out[b1_offset() + j] += da;
        double* gw = &out[j * I];
        for (std::size_t i = 0; i < I; ++i) gw[i] += da * x[i];
      }
      out[b2_offset()] += dz;
    }
  }

 private:
  std::size_t b1_offset() const noexcept { return p_.hidden * p_.inputs; }
  std::size_t w2_offset() const noexcept { return b1_offset() + p_.hidden; }
  std::size_t b2_offset() const noexcept { return w2_offset() + p_.hidden; }

  double forward(std::span<const double> w, std::size_t s, std::vector<double>& h) const {
    const auto x = data_.row(s);
    double z = w[b2_offset()];
    for (std::size_t j = 0; j < p_.hidden; ++j) {
      h[j] = std::tanh(w[b1_offset() + j] + dot(w.subspan(j * p_.inputs, p_.inputs), x));
      z += w[w2_offset() + j] * h[j];
    }
    return z;
  }

  Params p_;
  BlobData data_;
};

/// Objective names accepted by make_objective.
inline std::vector<std::string> objective_names() { return {"lsq", "logreg", "mlp"}; }

/// Size and optimizer settings each objective is tuned for.
struct ObjectiveDefaults {
  std::size_t dimension = 0;
  std::size_t samples = 0;
  std::size_t batch_size = 0;
  double learning_rate = 0.0;
};

inline ObjectiveDefaults objective_defaults(std::string_view name) {
  if (name == "lsq") return {256, 8192, 512, 0.05};
  if (name == "logreg") return {512, 16384, 512, 1.0};
  if (name == "mlp") return {9901, 4096, 128, 0.5};
  throw ConfigError("unknown objective '" + std::string(name) + "' (expected lsq, logreg or mlp)");
}

/// Builds a named objective; zero dimension or samples selects the default.
/// `dimension` applies to lsq and logreg; the MLP has a fixed 64-150-1 shape.
inline std::unique_ptr<Objective> make_objective(std::string_view name, std::size_t dimension, std::size_t samples,
                                                 std::uint64_t seed) {
  const ObjectiveDefaults def = objective_defaults(name);
  if (dimension == 0) dimension = def.dimension;
  if (samples == 0) samples = def.samples;
  if (name == "lsq") return std::make_unique<LeastSquares>(LeastSquares::Params{dimension, samples, 0, 0.5, seed});
  if (name == "logreg")
    return std::make_unique<LogisticRegression>(LogisticRegression::Params{dimension, samples, 0, 1.0, seed});
  if (dimension != def.dimension)
    throw ConfigError("mlp has a fixed dimension of " + std::to_string(def.dimension));
  return std::make_unique<Mlp>(Mlp::Params{64, 150, samples, 8, 1.0, seed});
}

}  // namespace gssgd
