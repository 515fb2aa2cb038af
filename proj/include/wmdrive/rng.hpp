#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>

namespace wmdrive {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Counter-style stream derivation: every (run seed, purpose, ids...) tuple maps
// to an independent engine, so results never depend on scheduling order.
inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x6a09e667f3bcc908ULL;
  for (auto p : parts) h = splitmix64(h ^ splitmix64(p));
  return h;
}

inline Rng make_rng(std::initializer_list<std::uint64_t> parts) {
  return Rng(derive_seed(parts));
}

inline void fill_normal(Rng& rng, std::span<double> out) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& v : out) v = n(rng);
}

inline double uniform(Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  return u(rng);
}

// Stream purposes, kept distinct so that streams never alias.
namespace stream {
inline constexpr std::uint64_t kScenario = 1;
inline constexpr std::uint64_t kEncoder = 2;
inline constexpr std::uint64_t kInit = 3;
inline constexpr std::uint64_t kStage1 = 4;
inline constexpr std::uint64_t kStage2 = 5;
inline constexpr std::uint64_t kEval = 6;
inline constexpr std::uint64_t kClassTable = 7;
}  // namespace stream

}  // namespace wmdrive
