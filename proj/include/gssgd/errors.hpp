#pragma once

#include <stdexcept>
#include <string>

namespace gssgd {

/// Invalid configuration values (sketch shape, cluster size, training knobs).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Coordinate outside [0, d) or vector of the wrong length.
class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Two sketches built under different configs.
class MergeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed bytes on the wire.
class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A transport failure inside a collective; the message names the round and pair.
class CollectiveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by the trainer when the loss stops being finite.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::size_t iteration)
      : std::runtime_error(what), iteration_(iteration) {}
  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

}  // namespace gssgd
