#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

namespace coalgp {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive well-separated seeds for sub-streams.
constexpr auto splitmix64(std::uint64_t x) -> std::uint64_t {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream `stream_id` of the run seeded with `seed`.  Every component that needs
// randomness takes its own stream so that results do not depend on scheduling.
inline auto make_stream(std::uint64_t seed, std::uint64_t stream_id) -> Rng {
  auto s0 = splitmix64(seed ^ splitmix64(stream_id + 0x632be59bd9b4e019ULL));
  auto s1 = splitmix64(s0);
  auto seq = std::seed_seq{static_cast<std::uint32_t>(s0), static_cast<std::uint32_t>(s0 >> 32),
                           static_cast<std::uint32_t>(s1), static_cast<std::uint32_t>(s1 >> 32)};
  return Rng{seq};
}

// Stream ids for the components of a run.
namespace streams {
inline constexpr std::uint64_t k_simulate = 1;
inline constexpr std::uint64_t k_oracle = 2;
inline constexpr std::uint64_t k_mcmc = 3;
inline constexpr std::uint64_t k_summary = 4;
inline constexpr std::uint64_t k_replicate_base = 1'000'000;
inline constexpr std::uint64_t k_chain_base = 2'000'000;
}  // namespace streams

// Uniform on the open interval (0, 1).
inline auto uniform_open(Rng& rng) -> double {
  auto u = 0.0;
  do {
    u = std::generate_canonical<double, 64>(rng);
  } while (u <= 0.0);
  return u;
}

inline auto uniform(Rng& rng, double lo, double hi) -> double {
  return lo + (hi - lo) * std::generate_canonical<double, 64>(rng);
}

// Exponential with the given rate; rate 0 yields +inf.
inline auto exponential(Rng& rng, double rate) -> double {
  if (rate <= 0.0) {
    return std::numeric_limits<double>::infinity();
  }
  return -std::log(uniform_open(rng)) / rate;
}

inline auto standard_normal(Rng& rng) -> double {
  return std::normal_distribution<double>{0.0, 1.0}(rng);
}

// log of a Gamma(shape, rate) draw, accurate for shapes far below 1 where the draw itself
// underflows: G(a) = G(a + 1) * U^(1/a).
inline auto log_gamma_draw(Rng& rng, double shape, double rate) -> double {
  if (shape >= 1.0) {
    return std::log(std::gamma_distribution<double>{shape, 1.0}(rng)) - std::log(rate);
  }
  auto g = std::gamma_distribution<double>{shape + 1.0, 1.0}(rng);
  return std::log(g) + std::log(uniform_open(rng)) / shape - std::log(rate);
}

}  // namespace coalgp
