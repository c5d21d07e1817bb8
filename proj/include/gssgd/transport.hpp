#pragma once

#include <chrono>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "blocking_queue.hpp"
#include "errors.hpp"
#include "hash.hpp"
#include "wire.hpp"

namespace gssgd {

using Rank = std::size_t;

/// alpha + n * beta per message. alpha is the startup latency in seconds,
/// beta the seconds per payload element (one 8-byte value).
struct CostModel {
  double alpha_startup = 1e-3;
  double beta_per_element = 6.4e-8;

  void validate() const {
    if (!(alpha_startup >= 0.0)) throw ConfigError("alpha_startup must be >= 0");
    if (!(beta_per_element >= 0.0)) throw ConfigError("beta_per_element must be >= 0");
  }

  double message_time(std::size_t elements) const noexcept {
    return alpha_startup + beta_per_element * static_cast<double>(elements);
  }
};

/// Traffic classes tallied separately so that sketch traffic can be checked
/// on its own against the round-cost formula.
enum class Phase : std::uint8_t { dense, sketch, exact_values, indices, sparse };

inline std::string_view phase_name(Phase p) noexcept {
  switch (p) {
    case Phase::dense: return "dense";
    case Phase::sketch: return "sketch";
    case Phase::exact_values: return "exact_values";
    case Phase::indices: return "indices";
    case Phase::sparse: return "sparse";
  }
  return "?";
}

/// Identifies one synchronous communication round. `op` is a per-collective
/// sequence number so that every rank derives the same key independently.
struct RoundKey {
  Phase phase = Phase::dense;
  std::uint64_t op = 0;
  std::uint32_t round = 0;
  friend auto operator<=>(const RoundKey&, const RoundKey&) = default;
};

/// A payload plus the element count it declares for accounting.
struct Message {
  wire::Bytes bytes;
  std::size_t elements = 0;
};

struct DeliveryReceipt {
  Rank from = 0;
  Rank to = 0;
  std::size_t bytes = 0;
  std::size_t elements = 0;
};

/// Counters for a run. Rounds are synchronous: all transfers inside one round
/// overlap, so a round costs alpha + beta * (largest payload in the round).
class TrafficLedger {
 public:
  std::uint64_t messages() const noexcept { return messages_; }
  std::uint64_t payload_elements() const noexcept { return payload_elements_; }
  std::uint64_t received_elements() const noexcept { return received_elements_; }
  std::uint64_t bytes() const noexcept { return bytes_; }
  std::uint64_t rounds() const noexcept { return round_max_.size(); }
  /// Order-independent digest of every delivered (from, to, bytes) triple.
  std::uint64_t digest() const noexcept { return digest_; }
  const std::map<RoundKey, std::size_t>& round_max() const& noexcept { return round_max_; }
  std::map<RoundKey, std::size_t> round_max() const&& { return round_max_; }

  /// Sum over rounds of alpha + beta * max_payload. Rounds with equal payload
  /// are grouped so a uniform run of n rounds evaluates as n * (alpha + beta * s).
  double modeled_time(const CostModel& cm) const {
    std::map<std::size_t, std::uint64_t> histogram;
    for (const auto& [key, max_elems] : round_max_) ++histogram[max_elems];
    double t = 0.0;
    for (const auto& [elems, count] : histogram) t += static_cast<double>(count) * cm.message_time(elems);
    return t;
  }

  void record_send(const RoundKey& key, std::size_t elements, std::size_t bytes, std::uint64_t message_digest) {
    ++messages_;
    payload_elements_ += elements;
    bytes_ += bytes;
    digest_ += message_digest;
    auto [it, inserted] = round_max_.try_emplace(key, elements);
    if (!inserted && it->second < elements) it->second = elements;
  }

  void record_receive(std::size_t elements) noexcept { received_elements_ += elements; }

  /// Only the rounds and counters of one phase. Received elements are not
  /// tracked per phase and are left at zero.
  TrafficLedger only(Phase p) const {
    TrafficLedger out;
    for (const auto& [key, m] : round_max_)
      if (key.phase == p) out.round_max_.emplace(key, m);
    auto it = phase_totals_.find(p);
    if (it != phase_totals_.end()) {
      out.messages_ = it->second.messages;
      out.payload_elements_ = it->second.elements;
      out.bytes_ = it->second.bytes;
      out.phase_totals_.emplace(p, it->second);
    }
    return out;
  }

  /// Traffic recorded after `earlier` was snapshotted from this ledger.
  TrafficLedger since(const TrafficLedger& earlier) const {
    TrafficLedger out;
    out.messages_ = messages_ - earlier.messages_;
    out.payload_elements_ = payload_elements_ - earlier.payload_elements_;
    out.received_elements_ = received_elements_ - earlier.received_elements_;
    out.bytes_ = bytes_ - earlier.bytes_;
    out.digest_ = digest_ - earlier.digest_;
    for (const auto& [key, m] : round_max_)
      if (!earlier.round_max_.contains(key)) out.round_max_.emplace(key, m);
    for (const auto& [p, tot] : phase_totals_) {
      PhaseTotals d = tot;
      if (auto it = earlier.phase_totals_.find(p); it != earlier.phase_totals_.end()) {
        d.messages -= it->second.messages;
        d.elements -= it->second.elements;
        d.bytes -= it->second.bytes;
      }
      out.phase_totals_.emplace(p, d);
    }
    return out;
  }

  void record_phase(Phase p, std::size_t elements, std::size_t bytes) {
    auto& t = phase_totals_[p];
    ++t.messages;
    t.elements += elements;
    t.bytes += bytes;
  }

  friend bool operator==(const TrafficLedger&, const TrafficLedger&) = default;

 private:
  struct PhaseTotals {
    std::uint64_t messages = 0;
    std::uint64_t elements = 0;
    std::uint64_t bytes = 0;
    friend bool operator==(const PhaseTotals&, const PhaseTotals&) = default;
  };

  std::uint64_t messages_ = 0;
  std::uint64_t payload_elements_ = 0;
  std::uint64_t received_elements_ = 0;
  std::uint64_t bytes_ = 0;
  std::uint64_t digest_ = 0;
  std::map<RoundKey, std::size_t> round_max_;
  std::map<Phase, PhaseTotals> phase_totals_;
};

inline double ledger_model_time(const TrafficLedger& ledger, const CostModel& cm) { return ledger.modeled_time(cm); }

/// Point-to-point byte transport between ranks with a shared accounting sink.
///
/// Concrete transports supply raw delivery; this base validates ranks, keeps
/// the ledger and tracks declared element counts per ordered pair so the
/// receiving side can tally them. Channels are FIFO per ordered pair.
class Transport {
 public:
  explicit Transport(std::size_t world_size) : world_size_(world_size), pending_(world_size * world_size) {
    if (world_size < 1) throw ConfigError("transport world size must be >= 1");
  }
  virtual ~Transport() = default;
  Transport(const Transport&) = delete;
  Transport& operator=(const Transport&) = delete;

  std::size_t world_size() const noexcept { return world_size_; }

  DeliveryReceipt send(Rank from, Rank to, const Message& msg, const RoundKey& key) {
    check_pair(from, to);
    {
      std::lock_guard lock(ledger_mu_);
      ledger_.record_send(key, msg.elements, msg.bytes.size(), message_digest(from, to, msg.bytes));
      ledger_.record_phase(key.phase, msg.elements, msg.bytes.size());
      pending_[from * world_size_ + to].push_back(msg.elements);
    }
    deliver(from, to, msg.bytes);
    return {from, to, msg.bytes.size(), msg.elements};
  }

  wire::Bytes recv(Rank to, Rank from) {
    check_pair(from, to);
    wire::Bytes bytes = take(to, from);
    std::lock_guard lock(ledger_mu_);
    auto& q = pending_[from * world_size_ + to];
    if (!q.empty()) {
      ledger_.record_receive(q.front());
      q.pop_front();
    }
    return bytes;
  }

  TrafficLedger ledger() const {
    std::lock_guard lock(ledger_mu_);
    return ledger_;
  }

  virtual std::string_view kind() const noexcept = 0;

 protected:
  virtual void deliver(Rank from, Rank to, const wire::Bytes& bytes) = 0;
  virtual wire::Bytes take(Rank to, Rank from) = 0;

  void check_pair(Rank from, Rank to) const {
    if (from >= world_size_ || to >= world_size_)
      throw TransportError("unknown rank in pair " + std::to_string(from) + "->" + std::to_string(to) +
                           " (world size " + std::to_string(world_size_) + ")");
    if (from == to) throw TransportError("rank " + std::to_string(from) + " cannot send to itself");
  }

 private:
  static std::uint64_t message_digest(Rank from, Rank to, const wire::Bytes& bytes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::byte b : bytes) h = (h ^ std::to_integer<std::uint64_t>(b)) * 0x100000001b3ULL;
    return hash_combine({from, to, h, bytes.size()});
  }

  std::size_t world_size_;
  mutable std::mutex ledger_mu_;
  TrafficLedger ledger_;
  std::vector<std::deque<std::size_t>> pending_;
};

/// Channels are bounded in-memory FIFOs, one per ordered pair.
class InProcessTransport final : public Transport {
 public:
  explicit InProcessTransport(std::size_t world_size, std::size_t capacity = 64,
                              std::chrono::milliseconds recv_timeout = std::chrono::seconds(60))
      : Transport(world_size), recv_timeout_(recv_timeout) {
    channels_.reserve(world_size * world_size);
    for (std::size_t i = 0; i < world_size * world_size; ++i)
      channels_.push_back(std::make_unique<BlockingQueue<wire::Bytes>>(capacity));
  }

  std::string_view kind() const noexcept override { return "inproc"; }

 protected:
  void deliver(Rank from, Rank to, const wire::Bytes& bytes) override { channel(from, to).push(bytes); }

  wire::Bytes take(Rank to, Rank from) override {
    auto v = channel(from, to).pop(recv_timeout_);
    if (!v)
      throw TransportError("receive timed out on channel " + std::to_string(from) + "->" + std::to_string(to));
    return std::move(*v);
  }

 private:
  BlockingQueue<wire::Bytes>& channel(Rank from, Rank to) { return *channels_[from * world_size() + to]; }

  std::chrono::milliseconds recv_timeout_;
  std::vector<std::unique_ptr<BlockingQueue<wire::Bytes>>> channels_;
};

}  // namespace gssgd
