#pragma once

#include <cstddef>
#include <vector>

#include "spade/core.hpp"
#include "spade/rng.hpp"

namespace spade::fixtures {

inline PointSet uniform_points(std::size_t n, std::size_t d, RngStream& rng) {
  PointSet p(d);
  std::vector<double> x(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : x) v = rng.uniform();
    p.push_back(x);
  }
  return p;
}

/// Points on a coarse lattice, so that coordinates repeat.
inline PointSet lattice_points(std::size_t n, std::size_t d, std::size_t levels, RngStream& rng) {
  PointSet p(d);
  std::vector<double> x(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : x) v = static_cast<double>(rng.below(levels)) / static_cast<double>(levels);
    p.push_back(x);
  }
  return p;
}

inline SignedParticleSet uniform_signed(std::size_t p, std::size_t m, std::size_t d, RngStream& rng,
                                        NormalizerPolicy policy = NormalizerPolicy::diff) {
  auto pos = uniform_points(p, d, rng);
  auto neg = uniform_points(m, d, rng);
  return SignedParticleSet::with_policy(std::move(pos), std::move(neg), policy);
}

}  // namespace spade::fixtures
