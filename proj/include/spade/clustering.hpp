#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "spade/core.hpp"
#include "spade/discrepancy.hpp"
#include "spade/rng.hpp"

namespace spade {

struct ClusterConfig {
  double theta = 0.08;
  std::size_t split_candidates = 2;  ///< m equidistant nodes per side give m-1 candidates
  double normalizer = 1.0;           ///< N in the budget theta*sqrt(N)/count
  DiscrepancyMode mode = DiscrepancyMode::threshold_accepting;
  TaParams ta{};
  std::optional<std::size_t> max_leaves;
  std::uint64_t seed = 0;

  void validate() const {
    require(theta > 0 && theta < 1, Errc::invalid_argument, "theta must lie in (0,1)");
    require(split_candidates >= 2, Errc::invalid_argument, "need m >= 2 split candidates");
    require(normalizer > 0, Errc::zero_normalizer, "normalizer must be positive");
  }

  /// theta*sqrt(N)/count
  double budget(std::size_t count) const {
    return theta * std::sqrt(normalizer) / static_cast<double>(count);
  }
};

struct SplitCandidate {
  std::size_t dim = 0;
  double node = 0.0;
  double gap = 0.0;
};

/// One cell of the partition with the particles it owns. Discrepancies are
/// empty when the budget was met without evaluation (empty side or budget >= 1).
struct Leaf {
  HyperRect box;
  IndexList pos;
  IndexList neg;
  std::optional<double> disc_pos;
  std::optional<double> disc_neg;
  bool unresolved = false;
  std::uint64_t stream = 0;  ///< RNG stream id used for this leaf's budget checks
};

struct Partition {
  std::vector<Leaf> leaves;
  std::size_t level() const noexcept { return leaves.size(); }
};

/// (m-1)*d equidistant interior nodes, dimension-major.
inline std::vector<std::pair<std::size_t, double>> candidate_nodes(const HyperRect& rect, std::size_t m) {
  require(m >= 2, Errc::invalid_argument, "need m >= 2");
  std::vector<std::pair<std::size_t, double>> out;
  out.reserve((m - 1) * rect.dim());
  for (std::size_t j = 0; j < rect.dim(); ++j) {
    for (std::size_t l = 1; l < m; ++l) {
      out.emplace_back(j, rect.lower(j) + (static_cast<double>(l) / static_cast<double>(m)) * rect.side(j));
    }
  }
  return out;
}

/// 2|P_left/P - M_left/M|; zero when either population is empty.
inline double difference_gap(std::size_t p, std::size_t m, std::size_t p_left, std::size_t m_left) noexcept {
  if (p == 0 || m == 0) return 0.0;
  return 2.0 * std::abs(static_cast<double>(p_left) / static_cast<double>(p) -
                        static_cast<double>(m_left) / static_cast<double>(m));
}

namespace detail {

inline std::size_t count_below(const PointSet& pts, std::span<const Index> idx, std::size_t j, double node) {
  std::size_t c = 0;
  for (Index i : idx) c += pts.at(i, j) < node;
  return c;
}

inline bool all_coincide(const SignedParticleSet& s, const Leaf& leaf) {
  std::optional<std::span<const double>> ref;
  auto check = [&](const PointSet& pts, const IndexList& idx) {
    for (Index i : idx) {
      const auto x = pts[i];
      if (!ref) {
        ref = x;
      } else if (!std::equal(x.begin(), x.end(), ref->begin())) {
        return false;
      }
    }
    return true;
  };
  return check(s.positives, leaf.pos) && check(s.negatives, leaf.neg);
}

}  // namespace detail

/// Candidate with the largest difference gap; ties keep the lowest
/// (dim, node). When every gap is zero the longest side is halved.
inline SplitCandidate choose_split(const SignedParticleSet& s, const Leaf& leaf, const ClusterConfig& cfg) {
  if (detail::all_coincide(s, leaf)) {
    fail(Errc::no_valid_split, "every particle in the cluster sits at the same point");
  }
  const std::size_t p = leaf.pos.size();
  const std::size_t m = leaf.neg.size();
  SplitCandidate best{0, 0.0, -1.0};
  if (p > 0 && m > 0) {
    for (const auto& [j, node] : candidate_nodes(leaf.box, cfg.split_candidates)) {
      const double gap = difference_gap(p, m, detail::count_below(s.positives, leaf.pos, j, node),
                                        detail::count_below(s.negatives, leaf.neg, j, node));
      if (gap > best.gap) best = {j, node, gap};
    }
  }
  if (best.gap > 0.0) return best;

  std::size_t longest = 0;
  for (std::size_t j = 1; j < leaf.box.dim(); ++j) {
    if (leaf.box.side(j) > leaf.box.side(longest)) longest = j;
  }
  const double mid = leaf.box.lower(longest) + 0.5 * leaf.box.side(longest);
  if (!(mid > leaf.box.lower(longest) && mid < leaf.box.upper(longest))) {
    fail(Errc::no_valid_split, "cluster box is too thin to halve");
  }
  return {longest, mid, 0.0};
}

/// Applies both budget tests to a leaf (positives first) and records the
/// discrepancies. Returns true when the leaf satisfies both.
inline bool check_leaf(const SignedParticleSet& s, Leaf& leaf, const ClusterConfig& cfg, const RngStream& base) {
  RngStream rng = base.substream(leaf.stream);
  leaf.disc_pos.reset();
  leaf.disc_neg.reset();
  if (!leaf.pos.empty()) {
    const auto c = cluster_within_budget(s.positives, leaf.pos, leaf.box, cfg.budget(leaf.pos.size()), cfg.mode,
                                         cfg.ta, rng);
    leaf.disc_pos = c.discrepancy;
    if (!c.within) return false;
  }
  if (!leaf.neg.empty()) {
    const auto c = cluster_within_budget(s.negatives, leaf.neg, leaf.box, cfg.budget(leaf.neg.size()), cfg.mode,
                                         cfg.ta, rng);
    leaf.disc_neg = c.discrepancy;
    if (!c.within) return false;
  }
  return true;
}

/// Adaptive binary partitioning of `root` restricted to the given particle
/// indices. Leaves violating either budget are split at the node returned
/// by choose_split and re-queued (FIFO) until none violates.
///
/// Leaf streams are numbered in creation order, so the result depends only
/// on the inputs and cfg.seed/stream_key.
inline Partition sequential_cluster(const SignedParticleSet& s, const HyperRect& root, IndexList pos, IndexList neg,
                                    const ClusterConfig& cfg, std::uint64_t stream_key = 0) {
  cfg.validate();
  require(root.dim() == s.dim(), Errc::dimension_mismatch, "root box and particle dimensions differ");
  const RngStream base = RngStream(cfg.seed).substream(stream_key);

  Partition out;
  std::deque<Leaf> queue;
  std::uint64_t created = 0;
  queue.push_back(Leaf{root, std::move(pos), std::move(neg), {}, {}, false, created++});

  while (!queue.empty()) {
    Leaf leaf = std::move(queue.front());
    queue.pop_front();
    if (check_leaf(s, leaf, cfg, base)) {
      out.leaves.push_back(std::move(leaf));
      continue;
    }
    SplitCandidate split;
    try {
      split = choose_split(s, leaf, cfg);
    } catch (const Error& e) {
      if (e.code() != Errc::no_valid_split) throw;
      leaf.unresolved = true;
      out.leaves.push_back(std::move(leaf));
      continue;
    }
    auto [left_box, right_box] = split_rect(leaf.box, split.dim, split.node);
    auto [pl, pr] = assign_to_children(s.positives, leaf.pos, split.dim, split.node);
    auto [nl, nr] = assign_to_children(s.negatives, leaf.neg, split.dim, split.node);
    queue.push_back(Leaf{std::move(left_box), std::move(pl), std::move(nl), {}, {}, false, created++});
    queue.push_back(Leaf{std::move(right_box), std::move(pr), std::move(nr), {}, {}, false, created++});
    if (cfg.max_leaves && out.leaves.size() + queue.size() > *cfg.max_leaves) {
      fail(Errc::max_leaves_exceeded, "partition exceeded " + std::to_string(*cfg.max_leaves) + " leaves");
    }
  }
  return out;
}

inline Partition sequential_cluster(const SignedParticleSet& s, const HyperRect& root, const ClusterConfig& cfg) {
  return sequential_cluster(s, root, iota_indices(s.num_positive()), iota_indices(s.num_negative()), cfg);
}

}  // namespace spade
