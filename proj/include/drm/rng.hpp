#pragma once

#include <cstdint>

#include "drm/math.hpp"

namespace drm {

/// Counter-based generator (splitmix64). State advances by a fixed golden-ratio
/// increment and the output is a bijective mix of the counter, so streams can be
/// derived by re-keying instead of jumping. Normal variates use the inverse CDF,
/// which keeps every sample reproducible across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(mix(seed ^ 0x6a09e667f3bcc909ULL)) {}

  /// Independent child stream keyed by (this seed, id).
  Rng stream(std::uint64_t id) const {
    Rng child(0);
    child.state_ = mix(state_ ^ mix(id * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL));
    return child;
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  /// Uniform on the open interval (0,1).
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() { return normal_quantile(uniform()); }

  /// Uniform integer in {0,...,n-1}.
  std::uint64_t uniform_int(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

}  // namespace drm
