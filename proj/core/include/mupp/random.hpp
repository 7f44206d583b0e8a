#pragma once

#include <cstdint>

namespace mupp {

/// Stream domains, combined with an index into a 64-bit stream id.
enum class StreamDomain : std::uint32_t {
  init = 1,
  data_means = 2,
  data_noise = 3,
  batch_order = 4,
  probe = 5,
  power_iteration = 6,
};

inline std::uint64_t stream_id(StreamDomain domain, std::uint32_t index) {
  return (static_cast<std::uint64_t>(domain) << 32) | index;
}

std::uint64_t splitmix64(std::uint64_t x);

/// Counter-based generator: every draw is a pure function of
/// (seed, stream, counter), so substreams never interfere.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t bits(std::uint64_t counter) const;
  /// Uniform on the open interval (0, 1).
  double uniform(std::uint64_t counter) const;
  /// Standard normal via Box–Muller: draws 2k and 2k+1 share the uniform
  /// pair (2k, 2k+1) and take the cosine and sine branch respectively.
  double normal(std::uint64_t index) const;

 private:
  std::uint64_t key_;
};

}  // namespace mupp
