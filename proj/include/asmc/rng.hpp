#pragma once

#include <cstdint>

namespace asmc {

/// Which draw a key addresses within one (time, particle) slot.
enum class Role : std::uint64_t {
  init = 1,
  mutation = 2,
  keep = 3,
  selection = 4,
  threshold = 5,
};

namespace detail {

inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Stateless counter-based generator. Every uniform is a pure function of
/// (seed, replicate, time, particle, role), so draws can be consumed in any
/// order, skipped, or re-issued without shifting any other draw. Two runs
/// that consume the same keys see the same randomness; this is what makes
/// the adaptive/reference coupling exact.
class KeyedRng {
 public:
  explicit KeyedRng(std::uint64_t seed, std::uint64_t replicate = 0)
      : base_(detail::mix64(detail::mix64(seed ^ 0x5bf0f3b7a9d51c2dULL) ^ replicate)) {}

  std::uint64_t word(std::uint64_t time, std::uint64_t particle, Role role) const {
    std::uint64_t h = detail::mix64(base_ ^ time);
    h = detail::mix64(h ^ particle);
    return detail::mix64(h ^ static_cast<std::uint64_t>(role));
  }

  /// Uniform draw in [0, 1) with 53 significant bits.
  double uniform(std::uint64_t time, std::uint64_t particle, Role role) const {
    return static_cast<double>(word(time, particle, role) >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t base_;
};

}  // namespace asmc
