#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spade/core.hpp"
#include "spade/error.hpp"
#include "spade/parallel.hpp"
#include "spade/rng.hpp"

namespace spade {

/// Integer points of [-4,5]x[-2,3]x[-2,3], x fastest.
inline std::vector<std::array<double, 3>> center_grid() {
  std::vector<std::array<double, 3>> pts;
  pts.reserve(360);
  for (int z = -2; z <= 3; ++z) {
    for (int y = -2; y <= 3; ++y) {
      for (int x = -4; x <= 5; ++x) pts.push_back({double(x), double(y), double(z)});
    }
  }
  return pts;
}

/// Center i is the run of n/3 consecutive grid points starting at i*(n/3),
/// wrapping around the grid.
inline std::vector<std::vector<double>> default_centers(std::size_t m, std::size_t n) {
  require(n % 3 == 0 && n > 0, Errc::invalid_shape, "block dimension n must be a positive multiple of 3");
  const auto grid = center_grid();
  const std::size_t per = n / 3;
  std::vector<std::vector<double>> centers(m);
  for (std::size_t i = 0; i < m; ++i) {
    centers[i].reserve(n);
    for (std::size_t t = 0; t < per; ++t) {
      const auto& g = grid[(i * per + t) % grid.size()];
      centers[i].insert(centers[i].end(), g.begin(), g.end());
    }
  }
  return centers;
}

/// Coupling used by the benchmark tables for each dimension, if listed.
inline std::optional<double> default_coupling(std::size_t d) {
  switch (d) {
    case 12: return 0.6;
    case 36: return 0.3;
    case 60: return 0.2;
    case 120: return 0.05;
    case 360:
    case 1080: return 0.02;
    default: return std::nullopt;
  }
}

/// m x m matrix G(v) with G_ii = phi_i(v_i), G_ij = eps phi_i(v_j), where
/// phi_i is a standard Gaussian bump in R^n centred at the i-th center.
class DeterminantalModel {
 public:
  DeterminantalModel(std::size_t d, std::size_t m, double eps)
      : DeterminantalModel(d, m, eps, m > 0 && d % m == 0 ? default_centers(m, d / m) : std::vector<std::vector<double>>{}) {}

  DeterminantalModel(std::size_t d, std::size_t m, double eps, std::vector<std::vector<double>> centers)
      : d_(d), m_(m), eps_(eps), centers_(std::move(centers)) {
    require(m >= 1 && d >= 1 && d % m == 0, Errc::invalid_shape, "d must be a positive multiple of m");
    require(eps >= 0 && eps < 1, Errc::invalid_argument, "coupling must lie in [0,1)");
    require(centers_.size() == m, Errc::invalid_shape, "need one center per block");
    for (const auto& c : centers_) require(c.size() == d / m, Errc::invalid_shape, "center has wrong dimension");
  }

  std::size_t dim() const noexcept { return d_; }
  std::size_t rank() const noexcept { return m_; }
  std::size_t block() const noexcept { return d_ / m_; }
  double coupling() const noexcept { return eps_; }
  const std::vector<std::vector<double>>& centers() const noexcept { return centers_; }

  /// log phi_i(v_j)
  double log_phi(std::size_t i, std::span<const double> v, std::size_t j) const {
    const std::size_t n = block();
    double q = 0;
    for (std::size_t t = 0; t < n; ++t) {
      const double diff = v[j * n + t] - centers_[i][t];
      q += diff * diff;
    }
    return -0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi) - 0.5 * q;
  }

  /// Blocks set to the centers, the highest-weight diagonal configuration.
  std::vector<double> center_state() const {
    std::vector<double> v;
    v.reserve(d_);
    for (const auto& c : centers_) v.insert(v.end(), c.begin(), c.end());
    return v;
  }

 private:
  std::size_t d_, m_;
  double eps_;
  std::vector<std::vector<double>> centers_;
};

struct LogDet {
  double log_abs = 0.0;
  int sign = 0;
};

/// log|det G(v)| and its sign. Each row is scaled by its largest entry before
/// the LU factorization, so tiny Gaussian factors do not underflow.
inline LogDet det_g(const DeterminantalModel& model, std::span<const double> v) {
  require(v.size() == model.dim(), Errc::dimension_mismatch, "state has wrong dimension");
  for (double x : v) require(std::isfinite(x), Errc::non_finite, "state has non-finite coordinates");
  const std::size_t m = model.rank();
  const double log_eps = model.coupling() > 0 ? std::log(model.coupling()) : -std::numeric_limits<double>::infinity();
  Eigen::MatrixXd logs(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) logs(i, j) = model.log_phi(i, v, j) + (i == j ? 0.0 : log_eps);
  }
  double shift = 0.0;
  Eigen::MatrixXd a(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    const double s = logs.row(i).maxCoeff();
    require(std::isfinite(s), Errc::non_finite, "row of G is not finite");
    shift += s;
    for (std::size_t j = 0; j < m; ++j) a(i, j) = std::exp(logs(i, j) - s);
  }
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  const auto& u = lu.matrixLU();
  LogDet out{shift, static_cast<int>(lu.permutationP().determinant())};
  for (std::size_t i = 0; i < m; ++i) {
    const double p = u(i, i);
    if (p == 0.0) return {-std::numeric_limits<double>::infinity(), 0};
    if (p < 0) out.sign = -out.sign;
    out.log_abs += std::log(std::abs(p));
  }
  require(!std::isnan(out.log_abs), Errc::non_finite, "determinant is not a number");
  return out;
}

struct McmcConfig {
  std::size_t total_samples = 10000;  ///< retained states over all chains
  std::size_t burn_in = 10000;        ///< per chain; the sign fraction settles after ~5e3 steps at d=12
  std::size_t thin = 1;
  double stddev = 0.1;
  std::size_t chains = 64;
  std::uint64_t seed = 0;
  std::size_t stuck_window = 10000;

  void validate() const {
    require(stddev > 0, Errc::invalid_argument, "proposal stddev must be positive");
    require(chains >= 1, Errc::invalid_argument, "need at least one chain");
    require(thin >= 1, Errc::invalid_argument, "thinning must be >= 1");
    require(total_samples >= 1, Errc::invalid_argument, "need at least one sample");
  }

  /// Chain c keeps floor(total/W) states, plus one for the first total % W chains.
  std::size_t retained(std::size_t chain) const noexcept {
    return total_samples / chains + (chain < total_samples % chains ? 1 : 0);
  }
};

struct ChainResult {
  std::vector<double> states;  ///< retained states, row-major
  std::vector<signed char> signs;
  std::size_t proposals = 0;
  std::size_t accepted = 0;
  bool stuck = false;
};

/// One Metropolis random walk targeting |det G|.
inline ChainResult run_chain(const DeterminantalModel& model, const McmcConfig& cfg, std::size_t chain) {
  RngStream rng = RngStream(cfg.seed).substream(chain);
  const std::size_t d = model.dim();
  std::vector<double> x = model.center_state();
  for (double& xi : x) xi += cfg.stddev * rng.normal();
  LogDet cur = det_g(model, x);

  const std::size_t keep = cfg.retained(chain);
  const std::size_t steps = cfg.burn_in + keep * cfg.thin;
  ChainResult out;
  out.states.reserve(keep * d);
  out.signs.reserve(keep);
  std::vector<double> y(d);
  std::size_t window_accepts = 0, window_steps = 0;
  for (std::size_t step = 1; step <= steps; ++step) {
    for (std::size_t j = 0; j < d; ++j) y[j] = x[j] + cfg.stddev * rng.normal();
    const LogDet prop = det_g(model, y);
    const double log_ratio = prop.log_abs - cur.log_abs;
    const double u = rng.uniform();
    ++out.proposals;
    ++window_steps;
    if (prop.sign != 0 && (log_ratio >= 0 || std::log(u) < log_ratio)) {
      x.swap(y);
      cur = prop;
      ++out.accepted;
      ++window_accepts;
    }
    if (window_steps == cfg.stuck_window) {
      if (window_accepts * 100 < window_steps) out.stuck = true;
      window_steps = window_accepts = 0;
    }
    if (step > cfg.burn_in && (step - cfg.burn_in) % cfg.thin == 0) {
      out.states.insert(out.states.end(), x.begin(), x.end());
      out.signs.push_back(static_cast<signed char>(cur.sign));
    }
  }
  return out;
}

struct SampleResult {
  PointSet positives;
  PointSet negatives;
  std::size_t discarded = 0;  ///< retained states with a singular G
  double acceptance = 0.0;
  std::vector<std::size_t> stuck_chains;
};

/// Independent chains in parallel, concatenated by chain id then step.
inline SampleResult sample(const DeterminantalModel& model, const McmcConfig& cfg, std::size_t workers = 1) {
  cfg.validate();
  std::vector<ChainResult> chains(cfg.chains);
  parallel_for(cfg.chains, workers, [&](std::size_t c) { chains[c] = run_chain(model, cfg, c); });

  SampleResult out{PointSet(model.dim()), PointSet(model.dim()), 0, 0.0, {}};
  std::size_t proposals = 0, accepted = 0;
  const std::size_t d = model.dim();
  for (std::size_t c = 0; c < chains.size(); ++c) {
    const auto& ch = chains[c];
    proposals += ch.proposals;
    accepted += ch.accepted;
    if (ch.stuck) out.stuck_chains.push_back(c);
    for (std::size_t k = 0; k < ch.signs.size(); ++k) {
      std::span<const double> x(ch.states.data() + k * d, d);
      if (ch.signs[k] > 0) {
        out.positives.push_back(x);
      } else if (ch.signs[k] < 0) {
        out.negatives.push_back(x);
      } else {
        ++out.discarded;
      }
    }
  }
  out.acceptance = proposals ? static_cast<double>(accepted) / static_cast<double>(proposals) : 0.0;
  return out;
}

}  // namespace spade
