#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <thread>
#include <utility>
#include <vector>

#include "blocking_queue.hpp"
#include "transport.hpp"

namespace gssgd {

/// Loopback TCP transport. Every rank listens on an ephemeral 127.0.0.1 port;
/// the first send on an ordered pair opens a dedicated connection and writes
/// the sender's rank as an 8-byte handshake. Frames are an 8-byte
/// little-endian length followed by the payload bytes. A reader thread per
/// inbound connection drains frames into the receiver's per-pair queue, so a
/// lock-step caller can send and then receive on one thread.
class TcpLoopbackTransport final : public Transport {
 public:
  explicit TcpLoopbackTransport(std::size_t world_size,
                                std::chrono::milliseconds recv_timeout = std::chrono::seconds(60))
      : Transport(world_size), recv_timeout_(recv_timeout), out_fds_(world_size * world_size, -1) {
    for (std::size_t i = 0; i < world_size * world_size; ++i)
      inbox_.push_back(std::make_unique<BlockingQueue<wire::Bytes>>(1024));
    try {
      for (Rank r = 0; r < world_size; ++r) listen_on(r);
    } catch (...) {
      shutdown_all();
      throw;
    }
    for (Rank r = 0; r < world_size; ++r) acceptors_.emplace_back([this, r] { accept_loop(r); });
  }

  ~TcpLoopbackTransport() override { shutdown_all(); }

  std::string_view kind() const noexcept override { return "tcp"; }

  std::uint16_t port(Rank r) const { return ports_.at(r); }

 protected:
  void deliver(Rank from, Rank to, const wire::Bytes& bytes) override {
    std::lock_guard lock(out_mu_);
    int& fd = out_fds_[from * world_size() + to];
    if (fd < 0) fd = connect_to(from, to);
    wire::Bytes header;
    wire::put_u64(header, bytes.size());
    if (!write_all(fd, header.data(), header.size()) || !write_all(fd, bytes.data(), bytes.size()))
      throw TransportError("tcp write failed on pair " + pair_name(from, to) + ": " + std::strerror(errno));
  }

  wire::Bytes take(Rank to, Rank from) override {
    auto v = inbox_[from * world_size() + to]->pop(recv_timeout_);
    if (!v) throw TransportError("tcp receive timed out on pair " + pair_name(from, to));
    return std::move(*v);
  }

 private:
  static std::string pair_name(Rank from, Rank to) { return std::to_string(from) + "->" + std::to_string(to); }

  void listen_on(Rank r) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw TransportError(std::string("socket: ") + std::strerror(errno));
    listen_fds_.push_back(fd);
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
      throw TransportError("bind for rank " + std::to_string(r) + ": " + std::strerror(errno));
    if (::listen(fd, static_cast<int>(world_size()) + 4) != 0)
      throw TransportError("listen for rank " + std::to_string(r) + ": " + std::strerror(errno));
    socklen_t len = sizeof addr;
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    ports_.push_back(ntohs(addr.sin_port));
  }

  int connect_to(Rank from, Rank to) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw TransportError("socket for pair " + pair_name(from, to) + ": " + std::strerror(errno));
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(ports_[to]);
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
      const int err = errno;
      ::close(fd);
      throw TransportError("tcp connect failed on pair " + pair_name(from, to) + ": " + std::strerror(err));
    }
    wire::Bytes hello;
    wire::put_u64(hello, from);
    if (!write_all(fd, hello.data(), hello.size())) {
      ::close(fd);
      throw TransportError("tcp handshake failed on pair " + pair_name(from, to));
    }
    return fd;
  }

  void accept_loop(Rank to) {
    while (!stopping_) {
      int fd = ::accept(listen_fds_[to], nullptr, nullptr);
      if (fd < 0) {
        if (stopping_ || errno == EBADF || errno == EINVAL) return;
        continue;
      }
      std::lock_guard lock(readers_mu_);
      if (stopping_) {
        ::close(fd);
        return;
      }
      in_fds_.push_back(fd);
      readers_.emplace_back([this, fd, to] { read_loop(fd, to); });
    }
  }

  void read_loop(int fd, Rank to) {
    std::byte hdr[8];
    if (!read_all(fd, hdr, 8)) return;
    const Rank from = wire::Reader(hdr).u64();
    if (from >= world_size()) return;
    auto& q = *inbox_[from * world_size() + to];
    while (true) {
      if (!read_all(fd, hdr, 8)) return;
      const std::uint64_t n = wire::Reader(hdr).u64();
      wire::Bytes body(n);
      if (n > 0 && !read_all(fd, body.data(), n)) return;
      q.push(std::move(body));
    }
  }

  static bool write_all(int fd, const std::byte* p, std::size_t n) {
    while (n > 0) {
      const ssize_t w = ::send(fd, p, n, MSG_NOSIGNAL);
      if (w < 0) {
        if (errno == EINTR) continue;
        return false;
      }
      p += w;
      n -= static_cast<std::size_t>(w);
    }
    return true;
  }

  static bool read_all(int fd, std::byte* p, std::size_t n) {
    while (n > 0) {
      const ssize_t r = ::recv(fd, p, n, 0);
      if (r == 0) return false;
      if (r < 0) {
        if (errno == EINTR) continue;
        return false;
      }
      p += r;
      n -= static_cast<std::size_t>(r);
    }
    return true;
  }

  void shutdown_all() {
    if (stopping_.exchange(true)) return;
    for (int fd : listen_fds_) ::shutdown(fd, SHUT_RDWR);
    for (auto& t : acceptors_) t.join();
    {
      std::lock_guard lock(out_mu_);
      for (int& fd : out_fds_) {
        if (fd >= 0) {
          ::shutdown(fd, SHUT_RDWR);
          ::close(fd);
          fd = -1;
        }
      }
    }
    for (auto& q : inbox_) q->close();
    std::vector<std::thread> readers;
    {
      std::lock_guard lock(readers_mu_);
      for (int fd : in_fds_) ::shutdown(fd, SHUT_RDWR);
      readers = std::move(readers_);
    }
    for (auto& t : readers) t.join();
    for (int fd : in_fds_) ::close(fd);
    for (int fd : listen_fds_) ::close(fd);
  }

  std::chrono::milliseconds recv_timeout_;
  std::atomic<bool> stopping_{false};
  std::vector<int> listen_fds_;
  std::vector<std::uint16_t> ports_;
  std::vector<std::thread> acceptors_;

  std::mutex out_mu_;
  std::vector<int> out_fds_;

  std::mutex readers_mu_;
  std::vector<int> in_fds_;
  std::vector<std::thread> readers_;

  std::vector<std::unique_ptr<BlockingQueue<wire::Bytes>>> inbox_;
};

}  // namespace gssgd
