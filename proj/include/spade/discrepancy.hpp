#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "spade/core.hpp"
#include "spade/rng.hpp"

namespace spade {

struct LocalDiscrepancy {
  double open;    ///< lambda([0,u)) - #{x < u}/P
  double closed;  ///< #{x <= u}/P - lambda([0,u])
};

/// Signed local discrepancies of an anchored box [0,u). Comparisons are on
/// the raw coordinates with no tolerance.
inline LocalDiscrepancy local_discrepancy(const PointSet& pts, std::span<const double> u) {
  require(!pts.empty(), Errc::empty_point_set, "local discrepancy of an empty point set");
  require(u.size() == pts.dim(), Errc::dimension_mismatch, "anchor and point dimensions differ");
  const std::size_t d = pts.dim();
  std::size_t n_open = 0, n_closed = 0;
  for (Index i = 0; i < pts.size(); ++i) {
    bool open = true, closed = true;
    for (std::size_t j = 0; j < d && closed; ++j) {
      const double x = pts.at(i, j);
      if (x > u[j]) closed = false;
      if (x >= u[j]) open = false;
    }
    n_open += open;
    n_closed += closed;
  }
  double vol = 1.0;
  for (double uj : u) vol *= uj;
  const double p = static_cast<double>(pts.size());
  return {vol - static_cast<double>(n_open) / p, static_cast<double>(n_closed) / p - vol};
}

enum class DiscrepancyMethod { exact, threshold_accepting };

struct DiscrepancyEstimate {
  double value = 0.0;
  DiscrepancyMethod method = DiscrepancyMethod::exact;
  std::vector<double> witness;  ///< anchor u attaining (or best found for) the supremum
  std::size_t trials_used = 0;
  std::size_t iterations_used = 0;
};

struct TaParams {
  std::size_t iterations = 128;
  std::size_t trials = 5;
  std::size_t warmup_probes = 32;
  /// Grids with at most iterations*trials anchors are scanned outright.
  bool exhaust_small_grids = true;
  /// Draw starting anchors as u_j ~ U^(1/d) instead of uniformly over grid indices.
  bool biased_start = false;
  /// Finish with single-step coordinate ascent from the best anchor.
  bool final_ascent = false;
};

namespace detail {

/// Critical grid Gamma = prod_j ({x_ij} u {1}) with every point stored as its
/// per-dimension rank, so box membership reduces to integer comparisons.
class CriticalGrid {
 public:
  explicit CriticalGrid(const PointSet& pts) : d_(pts.dim()), n_(pts.size()), axes_(d_) {
    for (std::size_t j = 0; j < d_; ++j) {
      auto& ax = axes_[j];
      ax.reserve(n_ + 1);
      for (Index i = 0; i < n_; ++i) ax.push_back(pts.at(i, j));
      ax.push_back(1.0);
      std::sort(ax.begin(), ax.end());
      ax.erase(std::unique(ax.begin(), ax.end()), ax.end());
    }
    ranks_.resize(n_ * d_);
    for (Index i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j < d_; ++j) {
        const auto& ax = axes_[j];
        ranks_[i * d_ + j] = static_cast<std::uint32_t>(
            std::lower_bound(ax.begin(), ax.end(), pts.at(i, j)) - ax.begin());
      }
    }
  }

  std::size_t dim() const noexcept { return d_; }
  std::size_t axis_size(std::size_t j) const noexcept { return axes_[j].size(); }

  double anchor_count() const noexcept {
    double c = 1.0;
    for (const auto& ax : axes_) c *= static_cast<double>(ax.size());
    return c;
  }

  LocalDiscrepancy evaluate(std::span<const std::uint32_t> idx) const noexcept {
    std::size_t n_open = 0, n_closed = 0;
    for (Index i = 0; i < n_; ++i) {
      const std::uint32_t* r = &ranks_[i * d_];
      bool open = true, closed = true;
      for (std::size_t j = 0; j < d_; ++j) {
        if (r[j] > idx[j]) {
          closed = false;
          break;
        }
        if (r[j] == idx[j]) open = false;
      }
      n_open += closed && open;
      n_closed += closed;
    }
    double vol = 1.0;
    for (std::size_t j = 0; j < d_; ++j) vol *= axes_[j][idx[j]];
    const double p = static_cast<double>(n_);
    return {vol - static_cast<double>(n_open) / p, static_cast<double>(n_closed) / p - vol};
  }

  double objective(std::span<const std::uint32_t> idx) const noexcept {
    const auto ld = evaluate(idx);
    return std::max({ld.open, ld.closed, 0.0});
  }

  std::vector<double> anchor(std::span<const std::uint32_t> idx) const {
    std::vector<double> u(d_);
    for (std::size_t j = 0; j < d_; ++j) u[j] = axes_[j][idx[j]];
    return u;
  }

  /// Visits every anchor; returns the best objective and its index vector.
  std::pair<double, std::vector<std::uint32_t>> scan_all() const {
    std::vector<std::uint32_t> idx(d_, 0), best_idx(d_, 0);
    double best = -1.0;
    while (true) {
      const double v = objective(idx);
      if (v > best) {
        best = v;
        best_idx = idx;
      }
      std::size_t j = 0;
      for (; j < d_; ++j) {
        if (++idx[j] < axes_[j].size()) break;
        idx[j] = 0;
      }
      if (j == d_) break;
    }
    return {best, best_idx};
  }

 private:
  std::size_t d_;
  std::size_t n_;
  std::vector<std::vector<double>> axes_;
  std::vector<std::uint32_t> ranks_;
};

}  // namespace detail

inline constexpr double kExactAnchorLimit = 1e7;

/// Exact star discrepancy by enumerating the critical grid.
inline DiscrepancyEstimate star_discrepancy_exact(const PointSet& pts) {
  require(!pts.empty(), Errc::empty_point_set, "star discrepancy of an empty point set");
  const double guard = std::pow(static_cast<double>(pts.size()) + 1.0, static_cast<double>(pts.dim()));
  require(guard <= kExactAnchorLimit, Errc::instance_too_large,
          "(P+1)^d exceeds the exact enumeration limit");
  detail::CriticalGrid grid(pts);
  auto [best, idx] = grid.scan_all();
  return {best, DiscrepancyMethod::exact, grid.anchor(idx), 0, 0};
}

/// Threshold-accepting lower bound on the star discrepancy.
///
/// Walks the critical grid with a neighbourhood that perturbs ceil(d/2)
/// random coordinates by up to r_t grid steps, r_t shrinking linearly from
/// ceil(|Gamma_j|/8) to 1. A move is accepted when it loses no more than the
/// current threshold, which decreases linearly to zero from the 20th
/// percentile of warm-up move sizes. The result is the best anchor seen.
inline DiscrepancyEstimate star_discrepancy_ta(const PointSet& pts, const TaParams& params, RngStream& rng) {
  require(!pts.empty(), Errc::empty_point_set, "star discrepancy of an empty point set");
  require(params.iterations >= 1 && params.trials >= 1, Errc::invalid_argument,
          "threshold accepting needs at least one iteration and one trial");
  detail::CriticalGrid grid(pts);
  const std::size_t d = grid.dim();

  if (params.exhaust_small_grids &&
      grid.anchor_count() <= static_cast<double>(params.iterations * params.trials)) {
    auto [best, idx] = grid.scan_all();
    return {best, DiscrepancyMethod::exact, grid.anchor(idx), 0, 0};
  }

  std::vector<std::uint32_t> cur(d), next(d), best_idx(d);
  std::vector<std::size_t> dims(d);
  std::vector<std::int64_t> radius0(d);
  for (std::size_t j = 0; j < d; ++j) {
    radius0[j] = std::max<std::int64_t>(1, (static_cast<std::int64_t>(grid.axis_size(j)) + 7) / 8);
  }
  const std::size_t moved = (d + 1) / 2;
  double best = -1.0;

  // Biased starting anchors use u_j ~ U^(1/d), favouring large boxes.
  auto random_state = [&](std::vector<std::uint32_t>& s) {
    for (std::size_t j = 0; j < d; ++j) {
      const double q = params.biased_start ? std::pow(rng.uniform(), 1.0 / static_cast<double>(d)) : rng.uniform();
      const auto n = static_cast<double>(grid.axis_size(j));
      s[j] = static_cast<std::uint32_t>(std::min(n - 1.0, std::floor(q * n)));
    }
  };
  auto neighbour = [&](const std::vector<std::uint32_t>& from, std::vector<std::uint32_t>& to, double frac) {
    to = from;
    for (std::size_t j = 0; j < d; ++j) dims[j] = j;
    for (std::size_t k = 0; k < moved; ++k) {
      const std::size_t pick = k + static_cast<std::size_t>(rng.below(d - k));
      std::swap(dims[k], dims[pick]);
      const std::size_t j = dims[k];
      const auto r = static_cast<std::int64_t>(
          std::llround(static_cast<double>(radius0[j]) + (1.0 - static_cast<double>(radius0[j])) * frac));
      const std::int64_t top = static_cast<std::int64_t>(grid.axis_size(j)) - 1;
      const std::int64_t v = static_cast<std::int64_t>(from[j]) + rng.between(-r, r);
      to[j] = static_cast<std::uint32_t>(std::clamp<std::int64_t>(v, 0, top));
    }
  };
  auto consider = [&](const std::vector<std::uint32_t>& s, double v) {
    if (v > best) {
      best = v;
      best_idx = s;
    }
  };

  std::vector<double> jumps;
  jumps.reserve(params.warmup_probes);
  for (std::size_t k = 0; k < params.warmup_probes; ++k) {
    random_state(cur);
    neighbour(cur, next, 0.0);
    const double a = grid.objective(cur);
    const double b = grid.objective(next);
    consider(cur, a);
    consider(next, b);
    jumps.push_back(std::abs(b - a));
  }
  double tau0 = 0.0;
  if (!jumps.empty()) {
    std::sort(jumps.begin(), jumps.end());
    tau0 = jumps[static_cast<std::size_t>(0.2 * static_cast<double>(jumps.size() - 1))];
  }

  const double span = params.iterations > 1 ? static_cast<double>(params.iterations - 1) : 1.0;
  for (std::size_t trial = 0; trial < params.trials; ++trial) {
    random_state(cur);
    double cur_val = grid.objective(cur);
    consider(cur, cur_val);
    for (std::size_t t = 0; t < params.iterations; ++t) {
      const double frac = static_cast<double>(t) / span;
      const double tau = tau0 * (1.0 - frac);
      neighbour(cur, next, frac);
      const double v = grid.objective(next);
      consider(next, v);
      if (v - cur_val >= -tau) {
        cur.swap(next);
        cur_val = v;
      }
    }
  }
  // Final coordinate-wise ascent from the best anchor (single grid steps).
  for (bool improved = params.final_ascent; improved;) {
    improved = false;
    for (std::size_t j = 0; j < d; ++j) {
      for (int step : {-1, 1}) {
        next = best_idx;
        const std::int64_t v = static_cast<std::int64_t>(next[j]) + step;
        if (v < 0 || v >= static_cast<std::int64_t>(grid.axis_size(j))) continue;
        next[j] = static_cast<std::uint32_t>(v);
        const double val = grid.objective(next);
        if (val > best) {
          consider(next, val);
          improved = true;
        }
      }
    }
  }
  return {best, DiscrepancyMethod::threshold_accepting, grid.anchor(best_idx), params.trials,
          params.iterations};
}

enum class DiscrepancyMode { threshold_accepting, exact };

struct BudgetCheck {
  bool within = true;
  std::optional<double> discrepancy;  ///< empty when the budget was trivially met
};

/// Tests D*(unit_points) <= budget. Budgets of 1 or more hold without
/// evaluation since D* never exceeds 1; an empty set is vacuously within.
inline BudgetCheck within_budget(const PointSet& unit_points, double budget, DiscrepancyMode mode,
                                 const TaParams& ta, RngStream& rng) {
  require(budget > 0, Errc::invalid_argument, "discrepancy budget must be positive");
  if (unit_points.empty() || budget >= 1.0) return {true, std::nullopt};
  const double disc = mode == DiscrepancyMode::exact ? star_discrepancy_exact(unit_points).value
                                                     : star_discrepancy_ta(unit_points, ta, rng).value;
  return {disc <= budget, disc};
}

inline BudgetCheck cluster_within_budget(const PointSet& pts, std::span<const Index> idx, const HyperRect& rect,
                                         double budget, DiscrepancyMode mode, const TaParams& ta,
                                         RngStream& rng) {
  require(budget > 0, Errc::invalid_argument, "discrepancy budget must be positive");
  if (idx.empty() || budget >= 1.0) return {true, std::nullopt};
  return within_budget(scale_points(pts, idx, rect), budget, mode, ta, rng);
}

}  // namespace spade
