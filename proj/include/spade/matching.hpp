#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string_view>
#include <vector>

#include "spade/clustering.hpp"
#include "spade/core.hpp"
#include "spade/hungarian.hpp"
#include "spade/parallel.hpp"
#include "spade/rng.hpp"

namespace spade {

enum class Matcher { random, hungarian };

constexpr std::string_view to_string(Matcher m) noexcept {
  return m == Matcher::random ? "random" : "hungarian";
}

/// Injective map from the smaller population of a leaf into the larger one:
/// sigma[i] is the index (within the leaf's larger list) paired with entry i
/// of the smaller list.
struct Matching {
  std::size_t cluster = 0;
  std::vector<std::size_t> sigma;
  Matcher matcher = Matcher::random;
  bool negatives_smaller = true;  ///< M_k <= P_k
};

/// Uniform injective map {0..smaller-1} -> {0..larger-1} by a partial
/// Fisher-Yates shuffle.
inline std::vector<std::size_t> random_matching(std::size_t larger, std::size_t smaller, RngStream& rng) {
  require(larger >= smaller, Errc::invalid_argument, "random matching needs larger >= smaller");
  std::vector<std::size_t> perm(larger);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = 0; i < smaller; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(larger - i));
    std::swap(perm[i], perm[j]);
  }
  perm.resize(smaller);
  return perm;
}

inline constexpr std::size_t kHungarianLimit = 4096;

inline double manhattan(std::span<const double> a, std::span<const double> b) noexcept {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += std::abs(a[j] - b[j]);
  return s;
}

/// L1-optimal injective map from `smaller` into `larger`.
inline std::vector<std::size_t> hungarian_matching(const PointSet& larger, const PointSet& smaller) {
  require(larger.size() >= smaller.size(), Errc::invalid_argument, "hungarian matching needs larger >= smaller");
  require(larger.size() <= kHungarianLimit, Errc::instance_too_large,
          "optimal assignment limited to " + std::to_string(kHungarianLimit) + " points per side");
  if (smaller.empty()) return {};
  const std::size_t rows = smaller.size(), cols = larger.size();
  std::vector<double> cost(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) cost[i * cols + j] = manhattan(smaller[i], larger[j]);
  }
  return solve_assignment(cost, rows, cols);
}

inline double matching_cost(const PointSet& larger, const PointSet& smaller, const std::vector<std::size_t>& sigma) {
  double c = 0.0;
  for (std::size_t i = 0; i < sigma.size(); ++i) c += manhattan(smaller[i], larger[sigma[i]]);
  return c;
}

inline Matching match_leaf(const SignedParticleSet& s, const Leaf& leaf, std::size_t cluster, Matcher matcher,
                           RngStream& rng) {
  Matching out;
  out.cluster = cluster;
  out.matcher = matcher;
  out.negatives_smaller = leaf.neg.size() <= leaf.pos.size();
  const IndexList& big = out.negatives_smaller ? leaf.pos : leaf.neg;
  const IndexList& small = out.negatives_smaller ? leaf.neg : leaf.pos;
  if (small.empty()) return out;
  if (matcher == Matcher::random) {
    out.sigma = random_matching(big.size(), small.size(), rng);
  } else {
    const PointSet& big_pts = out.negatives_smaller ? s.positives : s.negatives;
    const PointSet& small_pts = out.negatives_smaller ? s.negatives : s.positives;
    out.sigma = hungarian_matching(big_pts.select(big), small_pts.select(small));
  }
  return out;
}

struct AnnihilationResult {
  SignedParticleSet survivors;
  std::size_t removed_pairs = 0;  ///< N_A
  std::vector<std::size_t> removed_per_leaf;
  std::vector<Matching> matchings;
  std::vector<char> pos_removed;  ///< per original positive index
  std::vector<char> neg_removed;

  /// Survivors over the original population, (P+M-2N_A)/(P+M).
  double survivor_ratio() const {
    const double before = static_cast<double>(survivors.total() + 2 * removed_pairs);
    return before > 0 ? static_cast<double>(survivors.total()) / before : 0.0;
  }
};

/// Pairs and removes min(P_k, M_k) particles in every leaf. Leaf k draws from
/// the substream (repeat, k) of `seed`, so repeats re-run only the matching.
inline AnnihilationResult annihilate(const SignedParticleSet& s, const Partition& partition, Matcher matcher,
                                     std::uint64_t seed, std::uint64_t repeat = 0, std::size_t workers = 1) {
  AnnihilationResult out;
  out.pos_removed.assign(s.num_positive(), 0);
  out.neg_removed.assign(s.num_negative(), 0);
  out.removed_per_leaf.reserve(partition.level());
  out.matchings.resize(partition.level());
  const RngStream base = RngStream(seed).substream(repeat);
  parallel_for(partition.level(), workers, [&](std::size_t k) {
    RngStream rng = base.substream(k);
    out.matchings[k] = match_leaf(s, partition.leaves[k], k, matcher, rng);
  });
  for (std::size_t k = 0; k < partition.level(); ++k) {
    const Leaf& leaf = partition.leaves[k];
    const Matching& m = out.matchings[k];
    const IndexList& big = m.negatives_smaller ? leaf.pos : leaf.neg;
    const IndexList& small = m.negatives_smaller ? leaf.neg : leaf.pos;
    auto& big_mask = m.negatives_smaller ? out.pos_removed : out.neg_removed;
    auto& small_mask = m.negatives_smaller ? out.neg_removed : out.pos_removed;
    for (std::size_t i = 0; i < m.sigma.size(); ++i) {
      small_mask[small[i]] = 1;
      big_mask[big[m.sigma[i]]] = 1;
    }
    out.removed_per_leaf.push_back(m.sigma.size());
    out.removed_pairs += m.sigma.size();
  }
  PointSet pos(s.dim()), neg(s.dim());
  pos.reserve(s.num_positive() - out.removed_pairs);
  neg.reserve(s.num_negative() - out.removed_pairs);
  for (Index i = 0; i < s.num_positive(); ++i) {
    if (!out.pos_removed[i]) pos.push_back(s.positives[i]);
  }
  for (Index i = 0; i < s.num_negative(); ++i) {
    if (!out.neg_removed[i]) neg.push_back(s.negatives[i]);
  }
  out.survivors = SignedParticleSet(std::move(pos), std::move(neg), s.normalizer);
  return out;
}

}  // namespace spade
