#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spade/error.hpp"

namespace spade {

using Index = std::size_t;
using IndexList = std::vector<Index>;

/// Points of a fixed dimension stored as one contiguous row-major array.
class PointSet {
 public:
  PointSet() = default;
  explicit PointSet(std::size_t dim) : dim_(dim) {
    require(dim > 0, Errc::invalid_argument, "point dimension must be positive");
  }
  PointSet(std::size_t dim, std::vector<double> coords) : dim_(dim), coords_(std::move(coords)) {
    require(dim > 0, Errc::invalid_argument, "point dimension must be positive");
    require(coords_.size() % dim == 0, Errc::dimension_mismatch,
            "coordinate count is not a multiple of the dimension");
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return dim_ == 0 ? 0 : coords_.size() / dim_; }
  bool empty() const noexcept { return coords_.empty(); }

  std::span<const double> operator[](Index i) const noexcept {
    return {coords_.data() + i * dim_, dim_};
  }
  std::span<double> operator[](Index i) noexcept { return {coords_.data() + i * dim_, dim_}; }

  double at(Index i, std::size_t j) const noexcept { return coords_[i * dim_ + j]; }

  void push_back(std::span<const double> x) {
    require(x.size() == dim_, Errc::dimension_mismatch,
            "point has " + std::to_string(x.size()) + " coordinates, expected " + std::to_string(dim_));
    coords_.insert(coords_.end(), x.begin(), x.end());
  }

  void reserve(std::size_t n) { coords_.reserve(n * dim_); }

  const std::vector<double>& coords() const noexcept { return coords_; }

  /// Copy of the rows named by idx, in that order.
  PointSet select(std::span<const Index> idx) const {
    PointSet out(dim_);
    out.reserve(idx.size());
    for (Index i : idx) out.push_back((*this)[i]);
    return out;
  }

  friend bool operator==(const PointSet&, const PointSet&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<double> coords_;
};

/// Axis-aligned box prod_j [lower_j, upper_j].
class HyperRect {
 public:
  HyperRect() = default;
  HyperRect(std::vector<double> lower, std::vector<double> upper)
      : lower_(std::move(lower)), upper_(std::move(upper)) {
    require(!lower_.empty() && lower_.size() == upper_.size(), Errc::dimension_mismatch,
            "box bounds must be non-empty and of equal length");
    for (std::size_t j = 0; j < lower_.size(); ++j) {
      require(lower_[j] <= upper_[j], Errc::invalid_argument,
              "box lower bound exceeds upper bound along dimension " + std::to_string(j));
    }
  }

  static HyperRect unit(std::size_t dim) {
    return HyperRect(std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0));
  }

  std::size_t dim() const noexcept { return lower_.size(); }
  const std::vector<double>& lower() const noexcept { return lower_; }
  const std::vector<double>& upper() const noexcept { return upper_; }
  double lower(std::size_t j) const noexcept { return lower_[j]; }
  double upper(std::size_t j) const noexcept { return upper_[j]; }
  double side(std::size_t j) const noexcept { return upper_[j] - lower_[j]; }

  double volume() const noexcept {
    double v = 1.0;
    for (std::size_t j = 0; j < dim(); ++j) v *= side(j);
    return v;
  }

  bool contains(std::span<const double> x, double tol = 0.0) const noexcept {
    if (x.size() != dim()) return false;
    for (std::size_t j = 0; j < dim(); ++j) {
      if (x[j] < lower_[j] - tol || x[j] > upper_[j] + tol) return false;
    }
    return true;
  }

  friend bool operator==(const HyperRect&, const HyperRect&) = default;

 private:
  std::vector<double> lower_;
  std::vector<double> upper_;
};

enum class NormalizerPolicy { diff, total };

/// Empirical signed measure (1/N)(sum delta_x - sum delta_y).
struct SignedParticleSet {
  PointSet positives;
  PointSet negatives;
  double normalizer = 1.0;

  SignedParticleSet() = default;
  SignedParticleSet(PointSet pos, PointSet neg, double n)
      : positives(std::move(pos)), negatives(std::move(neg)), normalizer(n) {
    require(positives.dim() == negatives.dim(), Errc::dimension_mismatch,
            "positive and negative populations differ in dimension");
    require(positives.dim() > 0, Errc::invalid_argument, "particle dimension must be positive");
    require(std::isfinite(normalizer) && normalizer > 0, Errc::zero_normalizer,
            "normalizer must be positive");
  }

  /// Builds the set with N derived from the policy: P - M (requires P > M) or P + M.
  static SignedParticleSet with_policy(PointSet pos, PointSet neg, NormalizerPolicy policy) {
    const double p = static_cast<double>(pos.size());
    const double m = static_cast<double>(neg.size());
    if (policy == NormalizerPolicy::diff) {
      require(p > m, Errc::zero_normalizer, "diff normalizer needs more positives than negatives");
      return {std::move(pos), std::move(neg), p - m};
    }
    require(p + m > 0, Errc::zero_normalizer, "total normalizer needs at least one particle");
    return {std::move(pos), std::move(neg), p + m};
  }

  std::size_t dim() const noexcept { return positives.dim(); }
  std::size_t num_positive() const noexcept { return positives.size(); }
  std::size_t num_negative() const noexcept { return negatives.size(); }
  std::size_t total() const noexcept { return positives.size() + negatives.size(); }
};

inline constexpr double kContainmentTol = 1e-12;

/// Linear map of rect onto [0,1]^d. A zero-width side maps to 0 provided the
/// point sits on it.
inline std::vector<double> scale_to_unit(std::span<const double> x, const HyperRect& rect) {
  require(x.size() == rect.dim(), Errc::dimension_mismatch, "point and box dimensions differ");
  std::vector<double> out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double a = rect.lower(j);
    const double b = rect.upper(j);
    if (b == a) {
      require(x[j] == a, Errc::degenerate_side,
              "zero-width side along dimension " + std::to_string(j) + " with off-side point");
      out[j] = 0.0;
      continue;
    }
    require(x[j] >= a - kContainmentTol && x[j] <= b + kContainmentTol, Errc::point_outside_rect,
            "coordinate " + std::to_string(j) + " outside the box");
    out[j] = std::clamp((x[j] - a) / (b - a), 0.0, 1.0);
  }
  return out;
}

inline std::vector<double> scale_from_unit(std::span<const double> u, const HyperRect& rect) {
  require(u.size() == rect.dim(), Errc::dimension_mismatch, "point and box dimensions differ");
  std::vector<double> out(u.size());
  for (std::size_t j = 0; j < u.size(); ++j) out[j] = rect.lower(j) + u[j] * rect.side(j);
  return out;
}

/// Scaled copies of the indexed rows, ready for discrepancy evaluation.
inline PointSet scale_points(const PointSet& pts, std::span<const Index> idx, const HyperRect& rect) {
  PointSet out(pts.dim());
  out.reserve(idx.size());
  for (Index i : idx) out.push_back(scale_to_unit(pts[i], rect));
  return out;
}

inline std::pair<HyperRect, HyperRect> split_rect(const HyperRect& rect, std::size_t j, double node) {
  require(j < rect.dim(), Errc::dimension_mismatch, "split dimension out of range");
  require(node > rect.lower(j) && node < rect.upper(j), Errc::node_out_of_range,
          "split node must lie strictly inside the side");
  auto left_hi = rect.upper();
  auto right_lo = rect.lower();
  left_hi[j] = node;
  right_lo[j] = node;
  return {HyperRect(rect.lower(), std::move(left_hi)), HyperRect(std::move(right_lo), rect.upper())};
}

/// Strictly below the node goes left, ties and above go right.
inline std::pair<IndexList, IndexList> assign_to_children(const PointSet& pts, std::span<const Index> parent,
                                                          std::size_t j, double node) {
  std::pair<IndexList, IndexList> out;
  for (Index i : parent) {
    (pts.at(i, j) < node ? out.first : out.second).push_back(i);
  }
  return out;
}

inline IndexList iota_indices(std::size_t n) {
  IndexList v(n);
  std::iota(v.begin(), v.end(), Index{0});
  return v;
}

/// Tight bounding box of every particle, each side padded by 1e-9 of its width
/// (or of max(|coord|, 1) for zero-width sides).
inline HyperRect bounding_box(const SignedParticleSet& s) {
  const std::size_t d = s.dim();
  require(s.total() > 0, Errc::empty_point_set, "cannot bound an empty particle set");
  std::vector<double> lo(d, std::numeric_limits<double>::infinity());
  std::vector<double> hi(d, -std::numeric_limits<double>::infinity());
  auto absorb = [&](const PointSet& p) {
    for (Index i = 0; i < p.size(); ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        lo[j] = std::min(lo[j], p.at(i, j));
        hi[j] = std::max(hi[j], p.at(i, j));
      }
    }
  };
  absorb(s.positives);
  absorb(s.negatives);
  for (std::size_t j = 0; j < d; ++j) {
    const double w = hi[j] - lo[j];
    const double pad = 1e-9 * (w > 0 ? w : std::max(std::abs(lo[j]), 1.0));
    lo[j] -= pad;
    hi[j] += pad;
  }
  return HyperRect(std::move(lo), std::move(hi));
}

}  // namespace spade
