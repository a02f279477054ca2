#pragma once

#include <cstdint>
#include <random>

#include "mpcrl/types.hpp"

namespace mpcrl {

namespace detail {

// splitmix64; used to spread structured stream ids over the seed space.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Deterministic random stream addressed by (experiment seed, RL step,
/// rollout index, time index). Streams with distinct addresses are
/// statistically independent; identical addresses reproduce identical draws.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t rl_step, std::uint64_t rollout,
            std::uint64_t time_index)
      : engine_(derive(seed, rl_step, rollout, time_index)) {}

  explicit RngStream(std::uint64_t raw_seed) : engine_(raw_seed) {}

  double normal() { return normal_(engine_); }

  double uniform() { return uniform_(engine_); }

  /// Standard-normal vector of length n.
  Vec normal_vec(int n) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  std::mt19937_64& engine() { return engine_; }

  static std::uint64_t derive(std::uint64_t seed, std::uint64_t a,
                              std::uint64_t b, std::uint64_t c) {
    std::uint64_t h = detail::splitmix64(seed);
    h = detail::splitmix64(h ^ detail::splitmix64(a + 0x1000000001ULL));
    h = detail::splitmix64(h ^ detail::splitmix64(b + 0x2000000002ULL));
    h = detail::splitmix64(h ^ detail::splitmix64(c + 0x3000000003ULL));
    return h;
  }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace mpcrl
