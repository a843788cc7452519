#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "spade/clustering.hpp"
#include "spade/core.hpp"
#include "spade/matching.hpp"
#include "spade/test_functions.hpp"

namespace spade {

namespace detail {

/// Neumaier-compensated accumulator.
class Sum {
 public:
  void add(double x) noexcept {
    const double t = s_ + x;
    c_ += std::abs(s_) >= std::abs(x) ? (s_ - t) + x : (x - t) + s_;
    s_ = t;
  }
  double value() const noexcept { return s_ + c_; }

 private:
  double s_ = 0.0, c_ = 0.0;
};

inline double sum_f(const TestFunction& f, const PointSet& pts) {
  Sum s;
  for (Index i = 0; i < pts.size(); ++i) s.add(f(pts[i]));
  return s.value();
}

inline double sum_f(const TestFunction& f, const PointSet& pts, const IndexList& idx) {
  Sum s;
  for (Index i : idx) s.add(f(pts[i]));
  return s.value();
}

}  // namespace detail

/// (1/N)(sum_X f - sum_Y f).
inline double signed_integral(const TestFunction& f, const SignedParticleSet& s) {
  detail::Sum acc;
  for (Index i = 0; i < s.num_positive(); ++i) acc.add(f(s.positives[i]));
  for (Index i = 0; i < s.num_negative(); ++i) acc.add(-f(s.negatives[i]));
  return acc.value() / s.normalizer;
}

/// Integral against the signed measure before annihilation minus the one
/// after. Both sets must share the normalizer.
inline double error_function(const TestFunction& f, const SignedParticleSet& before, const SignedParticleSet& after) {
  require(before.dim() == after.dim(), Errc::dimension_mismatch, "before/after dimensions differ");
  require(before.normalizer == after.normalizer, Errc::invalid_argument, "before/after normalizers differ");
  if (f.id() == FunctionId::constant) {
    // The removed populations have equal size, so the constant terms cancel.
    const auto removed_pos = before.num_positive() - after.num_positive();
    const auto removed_neg = before.num_negative() - after.num_negative();
    return removed_pos == removed_neg ? 0.0
                                      : f.constant_value() * (static_cast<double>(removed_pos) -
                                                              static_cast<double>(removed_neg)) /
                                            before.normalizer;
  }
  detail::Sum acc;
  for (Index i = 0; i < before.num_positive(); ++i) acc.add(f(before.positives[i]));
  for (Index i = 0; i < before.num_negative(); ++i) acc.add(-f(before.negatives[i]));
  for (Index i = 0; i < after.num_positive(); ++i) acc.add(-f(after.positives[i]));
  for (Index i = 0; i < after.num_negative(); ++i) acc.add(f(after.negatives[i]));
  return acc.value() / before.normalizer;
}

struct LocalError {
  double xi = 0.0;
  double total = 0.0;
};

/// xi_k and E_k for one leaf and its matching. The deterministic part is
/// (P^M)/(N P) sum f(x) - (P^M)/(N M) sum f(y).
inline LocalError local_error_terms(const TestFunction& f, const SignedParticleSet& s, const Leaf& leaf,
                                    const Matching& m) {
  const std::size_t p = leaf.pos.size(), q = leaf.neg.size();
  const std::size_t k = std::min(p, q);
  if (k == 0) return {};
  require(m.sigma.size() == k, Errc::invalid_argument, "matching size does not match the leaf");
  const double n = s.normalizer;
  const double sx = detail::sum_f(f, s.positives, leaf.pos);
  const double sy = detail::sum_f(f, s.negatives, leaf.neg);
  double matched = 0.0;
  {
    detail::Sum acc;
    const PointSet& big = m.negatives_smaller ? s.positives : s.negatives;
    const IndexList& big_idx = m.negatives_smaller ? leaf.pos : leaf.neg;
    for (std::size_t i : m.sigma) acc.add(f(big[big_idx[i]]));
    matched = acc.value();
  }
  const double kk = static_cast<double>(k);
  LocalError out;
  if (p >= q) {
    out.xi = kk / n * (matched / static_cast<double>(q) - sx / static_cast<double>(p));
  } else {
    out.xi = kk / n * (sy / static_cast<double>(q) - matched / static_cast<double>(p));
  }
  out.total = out.xi + kk / (n * static_cast<double>(p)) * sx - kk / (n * static_cast<double>(q)) * sy;
  return out;
}

/// (sum_X f - sum_Y f)/(P - M).
inline double estimator_minus(const TestFunction& f, const SignedParticleSet& s) {
  require(s.num_positive() != s.num_negative(), Errc::zero_normalizer, "P == M leaves the estimator undefined");
  detail::Sum acc;
  for (Index i = 0; i < s.num_positive(); ++i) acc.add(f(s.positives[i]));
  for (Index i = 0; i < s.num_negative(); ++i) acc.add(-f(s.negatives[i]));
  return acc.value() / (static_cast<double>(s.num_positive()) - static_cast<double>(s.num_negative()));
}

inline double relative_error(const TestFunction& f, const SignedParticleSet& before, const SignedParticleSet& after) {
  const double denom = signed_integral(f, before);
  require(std::abs(denom) > 1e-300, Errc::degenerate_denominator, "signed integral before annihilation is zero");
  return std::abs(error_function(f, before, after)) / std::abs(denom);
}

/// Population variance (divisor P).
inline double local_variance(std::span<const double> values) {
  require(!values.empty(), Errc::empty_point_set, "variance of an empty population");
  detail::Sum s;
  for (double v : values) s.add(v);
  const double mean = s.value() / static_cast<double>(values.size());
  detail::Sum q;
  for (double v : values) q.add((v - mean) * (v - mean));
  return q.value() / static_cast<double>(values.size());
}

struct Concentration {
  double rho = 0.0;
  double kappa = 0.0;
};

/// Sampling-fraction factors for M draws without replacement from P.
inline Concentration concentration_quantities(std::size_t p, std::size_t m) {
  require(m >= 1 && m <= p, Errc::invalid_argument, "need 1 <= M <= P");
  const double P = static_cast<double>(p), M = static_cast<double>(m);
  Concentration c;
  if (2 * m < p) {
    c.rho = 1.0 - (M - 1.0) / P;
    c.kappa = 4.0 / 3.0 + std::sqrt(M / P * ((M - 1.0) / (P - M + 1.0)));
  } else {
    c.rho = (1.0 - M / P) * (1.0 + 1.0 / M);
    c.kappa = 4.0 / 3.0 + std::sqrt(std::max(0.0, (P - M - 1.0) / (M + 1.0) * ((P - M) / P)));
  }
  return c;
}

// Error-bound constants.

inline double h0(double theta, double gamma) { return gamma / 4.0 + 1.5 * theta + theta * theta / (4.0 * gamma); }

inline double h1(double n, double gamma) { return gamma / 4.0 + 1.0 / (2.0 * std::sqrt(n)) + 1.0 / (4.0 * gamma * n); }

inline double h2(double n) { return 4.5 * std::log(2.0 * (n + 1.0)); }

inline double h3(double gamma, double n) {
  const double c = 8.0 + 3.0 * std::sqrt(2.0);
  const double l = std::log(2.0 * (n + 1.0));
  return 2.0 * c * c * l * l / 9.0 + gamma * gamma / 16.0;
}

struct BoundConfig {
  double theta = 0.08;
  double gamma = 1.0;
  double epsilon = 0.05;
  double normalizer = 1.0;

  void validate() const {
    require(theta > 0 && theta < 1, Errc::invalid_argument, "theta must lie in (0,1)");
    require(gamma > 0, Errc::invalid_argument, "gamma must be positive");
    require(epsilon > 0 && epsilon < 1, Errc::invalid_argument, "epsilon must lie in (0,1)");
    require(normalizer > 0, Errc::zero_normalizer, "normalizer must be positive");
  }
};

/// max_k min(P_k, M_k) / sqrt(N)
inline double measure_gamma(const Partition& part, double normalizer) {
  std::size_t mx = 0;
  for (const auto& leaf : part.leaves) mx = std::max(mx, std::min(leaf.pos.size(), leaf.neg.size()));
  return static_cast<double>(mx) / std::sqrt(normalizer);
}

struct HypothesisFlags {
  bool gamma_below_theta = false;
  bool gamma_above_one = false;
  bool unresolved_leaves = false;   ///< some leaf could not be split to meet the budget
  bool heuristic_discrepancy = false;  ///< budgets were checked by threshold accepting

  bool violated() const noexcept { return gamma_below_theta || gamma_above_one || unresolved_leaves; }
};

inline HypothesisFlags check_hypotheses(const BoundConfig& cfg, const Partition& part, DiscrepancyMode mode) {
  HypothesisFlags h;
  h.gamma_below_theta = cfg.gamma < cfg.theta;
  h.gamma_above_one = cfg.gamma > 1.0;
  h.unresolved_leaves = std::any_of(part.leaves.begin(), part.leaves.end(), [](const Leaf& l) { return l.unresolved; });
  h.heuristic_discrepancy = mode == DiscrepancyMode::threshold_accepting;
  return h;
}

// Bound formulas as pure functions of their inputs.

inline double bound_h0(const BoundConfig& c, double vhk) { return h0(c.theta, c.gamma) * vhk / std::sqrt(c.normalizer); }

inline double bound_osc(const BoundConfig& c, std::span<const double> osc, double vhk) {
  double s = 0;
  for (double o : osc) s += o;
  const double rn = std::sqrt(c.normalizer);
  return c.gamma / (4.0 * rn) * s + 2.0 * c.theta / rn * vhk;
}

inline double expectation_bound(const BoundConfig& c, double vhk) { return 2.0 * c.theta / std::sqrt(c.normalizer) * vhk; }

inline double variance_bound_h1(const BoundConfig& c, std::span<const double> osc) {
  double s = 0;
  for (double o : osc) s += o * o;
  return h1(c.normalizer, c.gamma) / std::pow(c.normalizer, 1.5) * s;
}

/// Variance bound driven by the leaf discrepancies; needs V^HK(f^2) on the
/// root box and per-leaf L2 norms.
inline double variance_bound_disc(const BoundConfig& c, double vhk_f2, double vhk_f, double sup_f,
                                  std::span<const double> l2, std::span<const double> osc) {
  require(l2.size() == osc.size(), Errc::invalid_argument, "per-leaf inputs differ in length");
  const double n = c.normalizer;
  const double pre = h2(n) / (std::sqrt(n) * (n + 1.0));
  double lo = 0, oo = 0;
  for (std::size_t k = 0; k < osc.size(); ++k) {
    lo += l2[k] * osc[k];
    oo += osc[k] * osc[k];
  }
  return c.theta * pre * (vhk_f2 + vhk_f * sup_f) + c.gamma * pre * lo + h3(c.gamma, n) / (n * (n + 1.0)) * oo;
}

/// Holds with probability at least 1 - epsilon.
inline double bernstein_bound(const BoundConfig& c, double variance, double max_osc, double vhk) {
  const double l = std::log(2.0 / c.epsilon);
  const double rn = std::sqrt(c.normalizer);
  return std::sqrt(2.0 * l * variance) + c.gamma * l / (6.0 * rn) * max_osc + 2.0 * c.theta / rn * vhk;
}

/// Local variance bound for P points with scaled star discrepancy below delta/P.
inline double local_variance_bound(double delta, std::size_t p, double vhk_f2, double vhk_f, double sup_f, double l2,
                                   double osc) {
  const double P = static_cast<double>(p);
  return delta * vhk_f2 / P + delta * vhk_f * sup_f / P + l2 * osc;
}

// Wrappers tying the formulas to a partition.

inline std::vector<double> leaf_oscillations(const TestFunction& f, const Partition& part) {
  std::vector<double> out;
  out.reserve(part.level());
  for (const auto& leaf : part.leaves) out.push_back(oscillation(f, leaf.box));
  return out;
}

struct DeterministicBounds {
  double bound_h0 = 0.0;   ///< H0 V / sqrt(N)
  double bound_osc = 0.0;  ///< oscillation form
};

inline DeterministicBounds deterministic_bounds(const BoundConfig& cfg, const TestFunction& f, const Partition& part,
                                                const HyperRect& root) {
  cfg.validate();
  const double v = hk_variation(f, root);
  const auto osc = leaf_oscillations(f, part);
  return {bound_h0(cfg, v), bound_osc(cfg, osc, v)};
}

struct StochasticBounds {
  double expectation = 0.0;
  double variance_h1 = 0.0;
  std::optional<double> variance_disc;
  double bernstein = 0.0;  ///< uses variance_h1
  std::optional<double> bernstein_disc;
};

/// Throws MissingVariation without V^HK(f^2).
inline double variance_bound_disc(const BoundConfig& cfg, const TestFunction& f, const Partition& part,
                                  const HyperRect& root, std::optional<double> vhk_f2) {
  if (!vhk_f2) fail(Errc::missing_variation, "V^HK(f^2) is required for " + f.name());
  std::vector<double> l2, osc;
  for (const auto& leaf : part.leaves) {
    l2.push_back(l2_norm(f, leaf.box));
    osc.push_back(oscillation(f, leaf.box));
  }
  return variance_bound_disc(cfg, *vhk_f2, hk_variation(f, root), sup_abs(f, root), l2, osc);
}

inline StochasticBounds stochastic_bounds(const BoundConfig& cfg, const TestFunction& f, const Partition& part,
                                          const HyperRect& root, std::optional<double> vhk_f2 = std::nullopt) {
  cfg.validate();
  const double v = hk_variation(f, root);
  const auto osc = leaf_oscillations(f, part);
  const double max_osc = osc.empty() ? 0.0 : *std::max_element(osc.begin(), osc.end());
  StochasticBounds out;
  out.expectation = expectation_bound(cfg, v);
  out.variance_h1 = variance_bound_h1(cfg, osc);
  out.bernstein = bernstein_bound(cfg, out.variance_h1, max_osc, v);
  if (vhk_f2) {
    out.variance_disc = variance_bound_disc(cfg, f, part, root, vhk_f2);
    out.bernstein_disc = bernstein_bound(cfg, *out.variance_disc, max_osc, v);
  }
  return out;
}

/// Bounds and observation for one test function. Bounds that need V^HK are
/// absent for functions without a closed form.
struct FunctionBounds {
  std::string function;
  double observed_error = 0.0;
  std::optional<double> vhk;
  std::optional<DeterministicBounds> deterministic;
  std::optional<StochasticBounds> stochastic;
};

struct BoundReport {
  BoundConfig config;
  double h0 = 0, h1 = 0, h2 = 0, h3 = 0;
  HypothesisFlags flags;
  std::vector<FunctionBounds> functions;
};

inline BoundReport make_bound_report(const BoundConfig& cfg, const std::vector<TestFunction>& fns,
                                     const std::vector<double>& observed, const Partition& part,
                                     const HyperRect& root, DiscrepancyMode mode) {
  require(fns.size() == observed.size(), Errc::invalid_argument, "one observed error per function");
  BoundReport r;
  r.config = cfg;
  r.h0 = h0(cfg.theta, cfg.gamma);
  r.h1 = h1(cfg.normalizer, cfg.gamma);
  r.h2 = h2(cfg.normalizer);
  r.h3 = h3(cfg.gamma, cfg.normalizer);
  r.flags = check_hypotheses(cfg, part, mode);
  for (std::size_t i = 0; i < fns.size(); ++i) {
    FunctionBounds fb;
    fb.function = fns[i].name();
    fb.observed_error = observed[i];
    try {
      fb.vhk = hk_variation(fns[i], root);
      fb.deterministic = deterministic_bounds(cfg, fns[i], part, root);
      fb.stochastic = stochastic_bounds(cfg, fns[i], part, root);
    } catch (const Error& e) {
      if (e.code() != Errc::no_closed_form) throw;
    }
    r.functions.push_back(std::move(fb));
  }
  return r;
}

}  // namespace spade
