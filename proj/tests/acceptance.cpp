// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "oracles.hpp"
#include "spade/analysis.hpp"
#include "spade/discrepancy.hpp"
#include "spade/matching.hpp"
#include "spade/pipeline.hpp"
#include "spade/reproduce.hpp"
#include "spade/sampler.hpp"
#include "test_util.hpp"

using namespace spade;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* name, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = limit_s <= 0 || secs < limit_s;
  const bool pass = o.pass && in_time;
  failures += !pass;
  std::printf("%s  %2d  %-44s %s (%.1fs%s)\n", pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs,
              in_time ? "" : ", over time limit");
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome discrepancy_oracle() {
  RngStream rng(1001);
  int mismatches = 0, close = 0, above = 0, walk_close = 0;
  const int sets = 200;
  TaParams walk;
  walk.exhaust_small_grids = false;
  for (int t = 0; t < sets; ++t) {
    const std::size_t d = 1 + static_cast<std::size_t>(t % 3);
    auto p = fixtures::uniform_points(1 + rng.below(16), d, rng);
    const double exact = star_discrepancy_exact(p).value;
    mismatches += std::abs(exact - oracle::star_discrepancy(p)) > 1e-12;
    RngStream r1 = rng.substream(2 * t), r2 = rng.substream(2 * t + 1);
    const double ta = star_discrepancy_ta(p, TaParams{}, r1).value;
    const double wk = star_discrepancy_ta(p, walk, r2).value;
    above += ta > exact + 1e-12;
    close += ta <= exact + 1e-12 && ta >= 0.95 * exact;
    walk_close += wk <= exact + 1e-12 && wk >= 0.95 * exact;
  }
  const bool pass = mismatches == 0 && above == 0 && close >= 0.9 * sets;
  return {pass, fmt("brute-force mismatches=%d, ta>exact=%d, ta>=0.95*exact on %d/%d (walk only: %d/%d)", mismatches,
                    above, close, sets, walk_close, sets)};
}

Outcome removal_property() {
  RngStream rng(1002);
  int violations = 0;
  for (int t = 0; t < 500; ++t) {
    const std::size_t d = 1 + rng.below(3);
    const std::size_t n = 2 + rng.below(12);
    auto p = fixtures::uniform_points(n, d, rng);
    const std::size_t k = 1 + rng.below(n - 1);
    IndexList keep = iota_indices(n);
    for (std::size_t i = 0; i < k; ++i) keep.erase(keep.begin() + static_cast<long>(rng.below(keep.size())));
    const double full = oracle::star_discrepancy(p);
    const double part = oracle::star_discrepancy(p.select(keep));
    violations += part > full + static_cast<double>(k) / static_cast<double>(n) + 1e-12;
  }
  return {violations == 0, fmt("violations=%d of 500", violations)};
}

Outcome koksma_hlawka() {
  RngStream rng(1003);
  int violations = 0;
  double worst = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t d = 1 + static_cast<std::size_t>(t % 3);
    auto p = fixtures::uniform_points(2 + rng.below(15), d, rng);
    const double disc = star_discrepancy_exact(p).value;
    for (auto f : {TestFunction::f1(), TestFunction::f2()}) {
      double mean = 0;
      for (Index i = 0; i < p.size(); ++i) mean += f(p[i]);
      mean /= static_cast<double>(p.size());
      const double err = std::abs(mean - *unit_cube_integral(f, d));
      const double bound = hk_variation_closed_form(f, d) * disc;
      violations += err > bound + 1e-12;
      worst = std::max(worst, err / bound);
    }
  }
  return {violations == 0, fmt("violations=%d of 200, max error/bound=%.3f", violations, worst)};
}

Outcome deterministic_bound() {
  RngStream rng(1004);
  int violations = 0, checked = 0;
  double worst = 0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t p = 300 + rng.below(200), m = 100 + rng.below(150);
    auto s = fixtures::uniform_signed(p, m, 2, rng);
    RunConfig rc;
    rc.theta = 0.3;
    rc.disc_mode = DiscrepancyMode::exact;
    rc.fns = {TestFunction::f1(), TestFunction::f2()};
    rc.seed = static_cast<std::uint64_t>(t);
    rc.bins = 1;
    const auto r = run(s, rc);
    if (r.bounds.flags.violated()) continue;
    ++checked;
    for (const auto& fb : r.bounds.functions) {
      const double bound = fb.deterministic->bound_h0;
      violations += std::abs(fb.observed_error) > bound;
      worst = std::max(worst, std::abs(fb.observed_error) / bound);
    }
  }
  return {violations == 0 && checked > 0,
          fmt("runs with clear flags=%d of 50, violations=%d, max |E|/bound=%.3f", checked, violations, worst)};
}

Outcome random_matching_concentration() {
  RngStream rng(1005);
  auto s = fixtures::uniform_signed(400, 200, 2, rng);
  ClusterConfig cc;
  cc.theta = 0.3;
  cc.normalizer = s.normalizer;
  cc.mode = DiscrepancyMode::exact;
  const auto root = HyperRect::unit(2);
  const auto part = sequential_cluster(s, root, cc);
  const auto f = TestFunction::f1();
  const int reps = 10000;
  double sum = 0, sq = 0;
  for (int r = 0; r < reps; ++r) {
    const auto ann = annihilate(s, part, Matcher::random, 77, static_cast<std::uint64_t>(r));
    const double e = error_function(f, s, ann.survivors);
    sum += e;
    sq += e * e;
  }
  const double mean = sum / reps;
  const double var = sq / reps - mean * mean;
  const double se = std::sqrt(var / reps);
  const BoundConfig bc{cc.theta, measure_gamma(part, s.normalizer), 0.05, s.normalizer};
  const auto flags = check_hypotheses(bc, part, cc.mode);
  const auto sb = stochastic_bounds(bc, f, part, root);
  const bool pass = !flags.violated() && std::abs(mean) <= sb.expectation + 4 * se && var <= sb.variance_h1;
  return {pass, fmt("K=%zu gamma=%.3f |mean E|=%.3g vs %.3g+4se(%.2g); Var=%.3g vs bound %.3g%s", part.level(),
                    bc.gamma, std::abs(mean), sb.expectation, se, var, sb.variance_h1,
                    flags.violated() ? "; hypotheses violated" : "")};
}

Outcome hungarian_optimality() {
  RngStream rng(1006);
  int mismatches = 0;
  for (int t = 0; t < 300; ++t) {
    const std::size_t cols = 1 + rng.below(7), rows = 1 + rng.below(cols);
    const std::size_t d = 1 + rng.below(4);
    auto big = fixtures::uniform_points(cols, d, rng);
    auto small = fixtures::uniform_points(rows, d, rng);
    std::vector<double> cost(rows * cols);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) {
        double c = 0;
        for (std::size_t k = 0; k < d; ++k) c += std::abs(small.at(i, k) - big.at(j, k));
        cost[i * cols + j] = c;
      }
    }
    const double got = matching_cost(big, small, hungarian_matching(big, small));
    mismatches += std::abs(got - oracle::assignment_minimum(cost, rows, cols)) > 1e-12;
  }
  return {mismatches == 0, fmt("mismatches=%d of 300", mismatches)};
}

struct DeskCells {
  reproduce::ReproduceConfig rc;
  SignedParticleSet s4, s5;
  double acc4 = 0;
  std::size_t k4 = 0, k5 = 0;
  RunReport rep4;
};

DeskCells& desk() {
  static DeskCells c = [] {
    DeskCells c;
    c.s4 = reproduce::sample_cell(c.rc, 12, 10000, &c.acc4);
    return c;
  }();
  return c;
}

std::size_t level_for(const reproduce::ReproduceConfig& rc, const SignedParticleSet& s, std::size_t ntot) {
  RunConfig cfg = rc.run;
  cfg.theta = 0.08;
  cfg.seed = reproduce::cell_seed(rc, 12, ntot);
  return cluster_slabs(s, decompose(s, root_box(s), cfg.bins), cluster_config(cfg, s.normalizer), cfg.workers).level();
}

Outcome table1_reproduction() {
  auto& c = desk();
  RunConfig cfg = c.rc.run;
  cfg.theta = 0.08;
  cfg.seed = reproduce::cell_seed(c.rc, 12, 10000);
  c.rep4 = run(c.s4, cfg);
  const auto& b = c.rep4.blocks.front();
  bool ok = std::abs(b.ratio - 0.65) <= 0.10;
  std::string re;
  for (std::size_t i = 0; i < 5; ++i) {
    const auto& v = b.functions[i].relative_error;
    if (i < 4) ok = ok && v && *v < 0.05;
    re += fmt(" %s=%.4f%%", b.functions[i].function.c_str(), v ? 100 * *v : NAN);
  }
  return {ok, fmt("N=%.0f K=%zu ratio=%.2f%% (65%%+-10);", c.s4.normalizer, c.rep4.level, 100 * b.ratio) + re +
                  " (f5 not gated)"};
}

Outcome table2_reproduction() {
  auto& c = desk();
  c.k4 = c.rep4.level ? c.rep4.level : level_for(c.rc, c.s4, 10000);
  c.s5 = reproduce::sample_cell(c.rc, 12, 100000);
  c.k5 = level_for(c.rc, c.s5, 100000);
  const double ratio = static_cast<double>(c.k5) / static_cast<double>(c.k4);
  const bool pass = c.k4 >= 500 && c.k4 <= 2000 && ratio >= 2 && ratio <= 6;
  return {pass, fmt("K(1e4)=%zu in [500,2000]; K(1e5)=%zu; ratio=%.2f in [2,6]", c.k4, c.k5, ratio)};
}

Outcome mcmc_sanity() {
  auto& c = desk();
  const double frac = static_cast<double>(c.s4.num_positive()) / static_cast<double>(c.s4.total());
  const bool pass = c.acc4 >= 0.75 && c.acc4 <= 0.92 && std::abs(frac - 0.62) <= 0.05;
  // Not gated: the seed-to-seed spread of the fraction, for reading a miss.
  std::vector<double> fr;
  for (std::uint64_t s = 1; s <= 8; ++s) {
    reproduce::ReproduceConfig rc = c.rc;
    rc.seed = s;
    rc.workers = std::max(1u, std::thread::hardware_concurrency());
    const auto x = reproduce::sample_cell(rc, 12, 10000);
    fr.push_back(static_cast<double>(x.num_positive()) / static_cast<double>(x.total()));
  }
  double mean = 0, var = 0;
  for (double f : fr) mean += f / 8.0;
  for (double f : fr) var += (f - mean) * (f - mean) / 7.0;
  return {pass, fmt("acceptance=%.4f in [0.75,0.92]; P/(P+M)=%.4f (P=%zu M=%zu) in 0.62+-0.05; "
                    "seeds 1..8: mean %.4f sd %.4f",
                    c.acc4, frac, c.s4.num_positive(), c.s4.num_negative(), mean, std::sqrt(var))};
}

Outcome scale_scope() {
  reproduce::ReproduceConfig desk_rc, full_rc;
  full_rc.scale = reproduce::Scale::full;
  int desk_large = 0, full_large = 0, large = 0;
  for (const auto& row : reproduce::relative_error_table()) {
    if (row.d < 360 && row.ntot < 10000000) continue;
    ++large;
    desk_large += desk_rc.included(row.d, row.ntot);
    full_large += full_rc.included(row.d, row.ntot);
  }
  return {desk_large == 0 && full_large == large,
          fmt("large cells included at desk scale=%d, at full scale=%d of %d", desk_large, full_large, large)};
}

Outcome rho_kappa() {
  const double cap = 4.0 / 3.0 + std::sqrt(2.0) / 2.0;
  double kmax = 0;
  int argmax_misses = 0, first_miss = 0, bound_misses = 0;
  for (std::size_t p = 1; p <= 200; ++p) {
    double best = -1;
    std::vector<double> mr(p + 1, 0.0);
    for (std::size_t m = 1; m <= p; ++m) {
      const auto c = concentration_quantities(p, m);
      kmax = std::max(kmax, c.kappa);
      mr[m] = static_cast<double>(m) * c.rho;
      best = std::max(best, mr[m]);
    }
    const double pp = static_cast<double>(p);
    bound_misses += best > (pp + 1) * (pp + 1) / (4 * pp) + 1e-12;
    const std::size_t claimed = std::min<std::size_t>(p, (p + 2) / 2);  // ceil((P+1)/2), inside 1..P
    if (mr[claimed] < best * (1 - 1e-12)) {
      if (!argmax_misses) first_miss = static_cast<int>(p);
      ++argmax_misses;
    }
  }
  const bool pass = kmax <= cap && argmax_misses == 0 && bound_misses == 0;
  return {pass, fmt("max kappa=%.6f <= %.6f; M*rho_M not maximal at ceil((P+1)/2) for %d of 200 P (first P=%d); "
                    "max M*rho_M <= (P+1)^2/(4P) misses=%d",
                    kmax, cap, argmax_misses, first_miss, bound_misses)};
}

}  // namespace

int main() {
  report(1, "discrepancy oracle equivalence", 30, discrepancy_oracle);
  report(2, "removal property D*_{P-k} <= D*_P + k/P", 60, removal_property);
  report(3, "Koksma-Hlawka compliance", 0, koksma_hlawka);
  report(4, "deterministic error bound compliance", 0, deterministic_bound);
  report(5, "random matching mean and variance", 120, random_matching_concentration);
  report(6, "Hungarian optimality", 0, hungarian_optimality);
  report(7, "desk relative errors d=12 N_tot=1e4", 600, table1_reproduction);
  report(8, "desk partition levels d=12", 1800, table2_reproduction);
  report(9, "MCMC sanity d=12 m=4 eps=0.6", 0, mcmc_sanity);
  report(10, "large cells excluded at desk scale", 0, scale_scope);
  report(11, "rho/kappa formula checks", 5, rho_kappa);
  std::printf("%d of 11 criteria failed\n", failures);
  return failures ? 1 : 0;
}
