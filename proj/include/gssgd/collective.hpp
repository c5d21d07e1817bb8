#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "codecs.hpp"
#include "errors.hpp"
#include "transport.hpp"

namespace gssgd {

struct ClusterSpec {
  std::size_t world_size = 1;

  void validate() const {
    if (world_size < 1) throw ConfigError("world size must be >= 1");
  }
};

/// One point-to-point transfer in the reduce direction.
struct Transfer {
  Rank receiver = 0;
  Rank sender = 0;
  friend bool operator==(const Transfer&, const Transfer&) = default;
};

struct PlanRound {
  std::vector<Transfer> pairs;
  std::vector<Rank> idle;
  friend bool operator==(const PlanRound&, const PlanRound&) = default;
};

/// Reduce schedule toward rank 0. Broadcast replays it in reverse.
struct ReducePlan {
  std::size_t world_size = 1;
  std::vector<PlanRound> rounds;

  std::size_t messages() const {
    std::size_t n = 0;
    for (const auto& r : rounds) n += r.pairs.size();
    return n;
  }
};

/// Recursive-halving reduce plan.
///
/// Survivors start as all ranks in order. Each round pairs them up
/// positionally: position 2m receives from position 2m+1. With an odd
/// survivor count the last (largest-id) survivor sits the round out and
/// carries over. Receivers and the idle rank survive; the loop ends with
/// rank 0 alone, after ceil(log2 P) rounds.
inline ReducePlan build_reduce_plan(const ClusterSpec& spec) {
  spec.validate();
  ReducePlan plan;
  plan.world_size = spec.world_size;
  std::vector<Rank> survivors(spec.world_size);
  for (Rank r = 0; r < spec.world_size; ++r) survivors[r] = r;
  while (survivors.size() > 1) {
    PlanRound round;
    std::vector<Rank> next;
    for (std::size_t pos = 0; pos + 1 < survivors.size(); pos += 2) {
      round.pairs.push_back({survivors[pos], survivors[pos + 1]});
      next.push_back(survivors[pos]);
    }
    if (survivors.size() % 2 == 1) {
      round.idle.push_back(survivors.back());
      next.push_back(survivors.back());
    }
    plan.rounds.push_back(std::move(round));
    survivors = std::move(next);
  }
  return plan;
}

/// Tree all-reduce over a transport.
///
/// Two execution styles share one schedule and one set of round keys:
/// the vector overloads drive every rank in lock-step from one thread, the
/// `_rank` overloads run a single rank and are meant to be called from P
/// concurrent contexts, each with its own TreeCollective over the same
/// transport. In both, the receiver's value is the left operand of combine,
/// so the result is a pure function of the plan and the inputs.
class TreeCollective {
 public:
  TreeCollective(ReducePlan plan, Transport& transport) : plan_(std::move(plan)), transport_(&transport) {
    if (plan_.world_size != transport.world_size())
      throw ConfigError("plan world size " + std::to_string(plan_.world_size) + " != transport world size " +
                        std::to_string(transport.world_size()));
  }

  const ReducePlan& plan() const noexcept { return plan_; }

  template <PayloadCodec C>
  typename C::value_type reduce(const C& codec, std::vector<typename C::value_type>& payloads, Phase phase) {
    check_size(payloads.size());
    const std::uint64_t op = next_op_++;
    for (std::uint32_t r = 0; r < plan_.rounds.size(); ++r) {
      for (const Transfer& t : plan_.rounds[r].pairs) {
        guarded("reduce", r, t.sender, t.receiver, [&] {
          const auto& v = payloads[t.sender];
          transport_->send(t.sender, t.receiver, {codec.encode(v), codec.elements(v)}, {phase, op, r});
          auto got = codec.decode(transport_->recv(t.receiver, t.sender));
          payloads[t.receiver] = codec.combine(payloads[t.receiver], got);
        });
      }
    }
    return payloads[0];
  }

  template <PayloadCodec C>
  void broadcast(const C& codec, std::vector<typename C::value_type>& payloads, Phase phase) {
    check_size(payloads.size());
    const std::uint64_t op = next_op_++;
    for (std::size_t i = plan_.rounds.size(); i-- > 0;) {
      const auto r = static_cast<std::uint32_t>(plan_.rounds.size() - 1 - i);
      for (const Transfer& t : plan_.rounds[i].pairs) {
        guarded("broadcast", r, t.receiver, t.sender, [&] {
          const auto& v = payloads[t.receiver];
          transport_->send(t.receiver, t.sender, {codec.encode(v), codec.elements(v)}, {phase, op, r});
          payloads[t.sender] = codec.decode(transport_->recv(t.sender, t.receiver));
        });
      }
    }
  }

  template <PayloadCodec C>
  void allreduce(const C& codec, std::vector<typename C::value_type>& payloads, Phase phase) {
    reduce(codec, payloads, phase);
    broadcast(codec, payloads, phase);
  }

  /// One rank's share of reduce. Returns the rank's value afterwards, which
  /// at rank 0 is the full aggregate.
  template <PayloadCodec C>
  typename C::value_type reduce_rank(const C& codec, Rank rank, typename C::value_type local, Phase phase) {
    const std::uint64_t op = next_op_++;
    for (std::uint32_t r = 0; r < plan_.rounds.size(); ++r) {
      for (const Transfer& t : plan_.rounds[r].pairs) {
        if (t.receiver == rank) {
          guarded("reduce", r, t.sender, t.receiver, [&] {
            auto got = codec.decode(transport_->recv(t.receiver, t.sender));
            local = codec.combine(local, got);
          });
        } else if (t.sender == rank) {
          guarded("reduce", r, t.sender, t.receiver, [&] {
            transport_->send(t.sender, t.receiver, {codec.encode(local), codec.elements(local)}, {phase, op, r});
          });
        }
      }
    }
    return local;
  }

  template <PayloadCodec C>
  typename C::value_type broadcast_rank(const C& codec, Rank rank, typename C::value_type local, Phase phase) {
    const std::uint64_t op = next_op_++;
    for (std::size_t i = plan_.rounds.size(); i-- > 0;) {
      const auto r = static_cast<std::uint32_t>(plan_.rounds.size() - 1 - i);
      for (const Transfer& t : plan_.rounds[i].pairs) {
        if (t.receiver == rank) {
          guarded("broadcast", r, t.receiver, t.sender, [&] {
            transport_->send(t.receiver, t.sender, {codec.encode(local), codec.elements(local)}, {phase, op, r});
          });
        } else if (t.sender == rank) {
          guarded("broadcast", r, t.receiver, t.sender,
                  [&] { local = codec.decode(transport_->recv(t.sender, t.receiver)); });
        }
      }
    }
    return local;
  }

  template <PayloadCodec C>
  typename C::value_type allreduce_rank(const C& codec, Rank rank, typename C::value_type local, Phase phase) {
    return broadcast_rank(codec, rank, reduce_rank(codec, rank, std::move(local), phase), phase);
  }

 private:
  void check_size(std::size_t n) const {
    if (n != plan_.world_size)
      throw ConfigError("expected " + std::to_string(plan_.world_size) + " payloads, got " + std::to_string(n));
  }

  template <typename F>
  static void guarded(const char* what, std::uint32_t round, Rank from, Rank to, F&& f) {
    try {
      f();
    } catch (const TransportError& e) {
      throw CollectiveError(std::string(what) + " round " + std::to_string(round + 1) + " pair " +
                            std::to_string(from) + "->" + std::to_string(to) + ": " + e.what());
    } catch (const DecodeError& e) {
      throw CollectiveError(std::string(what) + " round " + std::to_string(round + 1) + " pair " +
                            std::to_string(from) + "->" + std::to_string(to) + ": " + e.what());
    }
  }

  ReducePlan plan_;
  Transport* transport_;
  std::uint64_t next_op_ = 0;
};

/// Star topology rooted at rank 0. The root handles one peer at a time, so
/// every transfer is its own round: P-1 rounds per gather or broadcast.
class StarCollective {
 public:
  explicit StarCollective(Transport& transport) : transport_(&transport) {}

  template <PayloadCodec C>
  typename C::value_type gather(const C& codec, std::vector<typename C::value_type>& payloads, Phase phase) {
    const std::uint64_t op = next_op_++;
    for (Rank s = 1; s < payloads.size(); ++s) {
      const auto r = static_cast<std::uint32_t>(s - 1);
      wrap("gather", r, s, 0, [&] {
        transport_->send(s, 0, {codec.encode(payloads[s]), codec.elements(payloads[s])}, {phase, op, r});
        payloads[0] = codec.combine(payloads[0], codec.decode(transport_->recv(0, s)));
      });
    }
    return payloads[0];
  }

  template <PayloadCodec C>
  void broadcast(const C& codec, std::vector<typename C::value_type>& payloads, Phase phase) {
    const std::uint64_t op = next_op_++;
    for (Rank s = 1; s < payloads.size(); ++s) {
      const auto r = static_cast<std::uint32_t>(s - 1);
      wrap("star broadcast", r, 0, s, [&] {
        transport_->send(0, s, {codec.encode(payloads[0]), codec.elements(payloads[0])}, {phase, op, r});
        payloads[s] = codec.decode(transport_->recv(s, 0));
      });
    }
  }

 private:
  template <typename F>
  static void wrap(const char* what, std::uint32_t round, Rank from, Rank to, F&& f) {
    try {
      f();
    } catch (const TransportError& e) {
      throw CollectiveError(std::string(what) + " round " + std::to_string(round + 1) + " pair " +
                            std::to_string(from) + "->" + std::to_string(to) + ": " + e.what());
    }
  }

  Transport* transport_;
  std::uint64_t next_op_ = 0;
};

/// Runs fn(rank) on `world_size` threads and rethrows the first failure.
inline void run_ranks_concurrently(std::size_t world_size, const std::function<void(Rank)>& fn) {
  std::vector<std::exception_ptr> errors(world_size);
  {
    std::vector<std::jthread> threads;
    threads.reserve(world_size);
    for (Rank r = 0; r < world_size; ++r)
      threads.emplace_back([&, r] {
        try {
          fn(r);
        } catch (...) {
          errors[r] = std::current_exception();
        }
      });
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace gssgd
