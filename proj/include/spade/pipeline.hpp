#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "spade/analysis.hpp"
#include "spade/clustering.hpp"
#include "spade/core.hpp"
#include "spade/matching.hpp"
#include "spade/parallel.hpp"

namespace spade {

struct RunConfig {
  double theta = 0.08;
  NormalizerPolicy norm = NormalizerPolicy::diff;
  std::size_t split_candidates = 2;
  TaParams ta{};
  DiscrepancyMode disc_mode = DiscrepancyMode::threshold_accepting;
  Matcher matcher = Matcher::random;
  std::size_t repeats = 1;
  std::vector<TestFunction> fns = {TestFunction::f1(), TestFunction::f2(), TestFunction::f3(), TestFunction::f4(),
                                   TestFunction::f5()};
  double eps_conf = 0.05;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::size_t bins = 64;
  std::optional<std::size_t> max_leaves;
  bool strict_bounds = false;

  void validate() const {
    require(theta > 0 && theta < 1, Errc::invalid_argument, "theta must lie in (0,1)");
    require(split_candidates >= 2, Errc::invalid_argument, "need m >= 2 split candidates");
    require(ta.iterations >= 1 && ta.trials >= 1, Errc::invalid_argument, "threshold accepting needs >= 1 step");
    require(repeats >= 1, Errc::invalid_argument, "need at least one repeat");
    require(eps_conf > 0 && eps_conf < 1, Errc::invalid_argument, "confidence epsilon must lie in (0,1)");
    require(workers >= 1 && bins >= 1, Errc::invalid_argument, "workers and bins must be positive");
    require(!fns.empty(), Errc::invalid_argument, "need at least one test function");
  }

  /// Seeds for the two random stages, derived from the master seed.
  std::uint64_t cluster_seed() const noexcept { return hash_combine(seed, 0x636c7573ULL); }
  std::uint64_t matching_seed() const noexcept { return hash_combine(seed, 0x6d617463ULL); }
};

/// Root box padded by 1e-9 of each side's extent.
inline HyperRect root_box(const SignedParticleSet& s) { return bounding_box(s); }

struct Slab {
  HyperRect box;
  IndexList pos;
  IndexList neg;
};

/// Cuts the root box along the first coordinate into at most `bins` slabs
/// holding about equal numbers of (pooled) particles. Cut t sits midway
/// between the order statistics on either side of quantile t/bins; cuts that
/// would coincide or leave the open side interval are dropped.
inline std::vector<Slab> decompose(const SignedParticleSet& s, const HyperRect& root, std::size_t bins) {
  require(bins >= 1, Errc::invalid_argument, "need at least one bin");
  std::vector<double> xs;
  xs.reserve(s.total());
  for (Index i = 0; i < s.num_positive(); ++i) xs.push_back(s.positives.at(i, 0));
  for (Index i = 0; i < s.num_negative(); ++i) xs.push_back(s.negatives.at(i, 0));
  std::sort(xs.begin(), xs.end());

  std::vector<double> cuts;
  const std::size_t n = xs.size();
  for (std::size_t t = 1; t < bins && n > 1; ++t) {
    const std::size_t q = (t * n + bins / 2) / bins;
    if (q == 0 || q >= n || !(xs[q - 1] < xs[q])) continue;
    const double c = 0.5 * (xs[q - 1] + xs[q]);
    const double prev = cuts.empty() ? root.lower(0) : cuts.back();
    if (c > prev && c < root.upper(0)) cuts.push_back(c);
  }

  std::vector<Slab> slabs;
  HyperRect rest = root;
  IndexList pos = iota_indices(s.num_positive()), neg = iota_indices(s.num_negative());
  for (double c : cuts) {
    auto [left, right] = split_rect(rest, 0, c);
    auto [pl, pr] = assign_to_children(s.positives, pos, 0, c);
    auto [nl, nr] = assign_to_children(s.negatives, neg, 0, c);
    slabs.push_back({std::move(left), std::move(pl), std::move(nl)});
    rest = std::move(right);
    pos = std::move(pr);
    neg = std::move(nr);
  }
  slabs.push_back({std::move(rest), std::move(pos), std::move(neg)});
  return slabs;
}

/// Clusters every slab independently (stream key = slab index) and
/// concatenates the leaves in slab order.
inline Partition cluster_slabs(const SignedParticleSet& s, std::vector<Slab> slabs, const ClusterConfig& cfg,
                               std::size_t workers) {
  std::vector<Partition> parts(slabs.size());
  std::optional<std::size_t> cap = cfg.max_leaves;
  parallel_for(slabs.size(), workers, [&](std::size_t b) {
    parts[b] = sequential_cluster(s, slabs[b].box, std::move(slabs[b].pos), std::move(slabs[b].neg), cfg, b);
  });
  Partition out;
  for (auto& p : parts) {
    for (auto& leaf : p.leaves) out.leaves.push_back(std::move(leaf));
  }
  if (cap && out.level() > *cap) {
    fail(Errc::max_leaves_exceeded, "partition exceeded " + std::to_string(*cap) + " leaves");
  }
  return out;
}

inline ClusterConfig cluster_config(const RunConfig& rc, double normalizer) {
  ClusterConfig c;
  c.theta = rc.theta;
  c.split_candidates = rc.split_candidates;
  c.normalizer = normalizer;
  c.mode = rc.disc_mode;
  c.ta = rc.ta;
  c.max_leaves = rc.max_leaves;
  c.seed = rc.cluster_seed();
  return c;
}

/// Per-function outcome of one matching pass (or a mean over passes).
struct FunctionResult {
  std::string function;
  std::optional<double> estimator_after;  ///< I-(f) after annihilation
  double error = 0.0;                     ///< E(f)
  std::optional<double> relative_error;   ///< |E(f)| / |signed integral before|
};

struct MatchingBlock {
  std::string label;  ///< "rand1", "rand<R>" or "hungarian"
  std::size_t repeats = 1;
  std::size_t removed_pairs = 0;
  std::size_t survivors_pos = 0, survivors_neg = 0;
  double ratio = 0.0;  ///< survivors / particles before
  std::vector<FunctionResult> functions;
  std::vector<double> mean_relative_error;  ///< only for multi-repeat blocks
};

struct LeafSummary {
  std::size_t leaves = 0;
  std::size_t unresolved = 0;
  std::size_t mixed = 0;  ///< leaves holding both signs
  std::size_t max_pos = 0, max_neg = 0;
  std::size_t evaluated = 0;     ///< leaves with at least one discrepancy evaluation
  double max_budget_use = 0.0;   ///< max over evaluated sides of resolved leaves of D*/budget
  std::size_t slabs = 0;
};

struct Timings {
  double decompose = 0, cluster = 0, match = 0, evaluate = 0;
};

struct RunReport {
  RunConfig config;
  std::size_t dim = 0;
  std::size_t p = 0, m = 0;
  double normalizer = 0.0;
  std::size_t level = 0;  ///< K
  double gamma = 0.0;
  std::vector<FunctionResult> sample;  ///< I-(f) before annihilation
  std::vector<MatchingBlock> blocks;
  BoundReport bounds;
  LeafSummary leaves;
  Timings timing;
  HyperRect root;
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline std::optional<double> try_estimator(const TestFunction& f, const SignedParticleSet& s) {
  if (s.num_positive() == s.num_negative()) return std::nullopt;
  return estimator_minus(f, s);
}

inline std::optional<double> try_relative(double error, double denom) {
  if (!(std::abs(denom) > 1e-300)) return std::nullopt;
  return std::abs(error) / std::abs(denom);
}

inline LeafSummary summarize(const Partition& part, const ClusterConfig& cc, std::size_t slabs) {
  LeafSummary s;
  s.leaves = part.level();
  s.slabs = slabs;
  for (const auto& leaf : part.leaves) {
    s.unresolved += leaf.unresolved;
    s.mixed += !leaf.pos.empty() && !leaf.neg.empty();
    s.max_pos = std::max(s.max_pos, leaf.pos.size());
    s.max_neg = std::max(s.max_neg, leaf.neg.size());
    if (leaf.disc_pos || leaf.disc_neg) ++s.evaluated;
    if (leaf.unresolved) continue;
    if (leaf.disc_pos) s.max_budget_use = std::max(s.max_budget_use, *leaf.disc_pos / cc.budget(leaf.pos.size()));
    if (leaf.disc_neg) s.max_budget_use = std::max(s.max_budget_use, *leaf.disc_neg / cc.budget(leaf.neg.size()));
  }
  return s;
}

}  // namespace detail

/// Cluster, annihilate and evaluate. The result depends only on the
/// particles and the configuration; `workers` changes scheduling only.
inline RunReport run(const SignedParticleSet& s, const RunConfig& rc) {
  rc.validate();
  RunReport r;
  r.config = rc;
  r.dim = s.dim();
  r.p = s.num_positive();
  r.m = s.num_negative();
  r.normalizer = s.normalizer;

  using clock = std::chrono::steady_clock;
  auto t0 = clock::now();
  r.root = root_box(s);
  auto slabs = decompose(s, r.root, rc.bins);
  const std::size_t slab_count = slabs.size();
  r.timing.decompose = detail::seconds_since(t0);

  t0 = clock::now();
  const ClusterConfig cc = cluster_config(rc, s.normalizer);
  const Partition part = cluster_slabs(s, std::move(slabs), cc, rc.workers);
  r.timing.cluster = detail::seconds_since(t0);
  r.level = part.level();
  r.leaves = detail::summarize(part, cc, slab_count);
  r.gamma = measure_gamma(part, s.normalizer);

  std::vector<double> before(rc.fns.size());
  for (std::size_t i = 0; i < rc.fns.size(); ++i) {
    before[i] = signed_integral(rc.fns[i], s);
    r.sample.push_back({rc.fns[i].name(), detail::try_estimator(rc.fns[i], s), 0.0, std::nullopt});
  }

  const std::size_t passes = rc.matcher == Matcher::hungarian ? 1 : rc.repeats;
  auto ensure_sizes = [&](MatchingBlock& b) {
    if (b.functions.empty()) {
      for (const auto& f : rc.fns) b.functions.push_back({f.name(), 0.0, 0.0, std::nullopt});
    }
  };
  MatchingBlock first, mean;
  first.label = rc.matcher == Matcher::hungarian ? "hungarian" : "rand1";
  mean.label = "rand" + std::to_string(passes);
  mean.repeats = passes;
  mean.mean_relative_error.assign(rc.fns.size(), 0.0);
  ensure_sizes(first);
  ensure_sizes(mean);
  std::vector<double> observed(rc.fns.size(), 0.0);
  std::vector<std::size_t> rel_counts(rc.fns.size(), 0);

  double match_time = 0, eval_time = 0;
  for (std::size_t rep = 0; rep < passes; ++rep) {
    t0 = clock::now();
    const auto ann = annihilate(s, part, rc.matcher, rc.matching_seed(), rep, rc.workers);
    match_time += detail::seconds_since(t0);
    t0 = clock::now();
    for (std::size_t i = 0; i < rc.fns.size(); ++i) {
      const auto& f = rc.fns[i];
      const double e = error_function(f, s, ann.survivors);
      const auto est = detail::try_estimator(f, ann.survivors);
      const auto rel = detail::try_relative(e, before[i]);
      if (rep == 0) {
        first.functions[i] = {f.name(), est, e, rel};
        observed[i] = e;
      }
      auto& mf = mean.functions[i];
      mf.error += e / static_cast<double>(passes);
      if (est) mf.estimator_after = mf.estimator_after.value_or(0.0) + *est / static_cast<double>(passes);
      if (rel) {
        mean.mean_relative_error[i] += *rel;
        ++rel_counts[i];
      }
    }
    if (rep == 0) {
      first.removed_pairs = mean.removed_pairs = ann.removed_pairs;
      first.survivors_pos = mean.survivors_pos = ann.survivors.num_positive();
      first.survivors_neg = mean.survivors_neg = ann.survivors.num_negative();
      first.ratio = mean.ratio = ann.survivor_ratio();
    }
    eval_time += detail::seconds_since(t0);
  }
  r.blocks.push_back(first);
  if (passes > 1) {
    for (std::size_t i = 0; i < rc.fns.size(); ++i) {
      mean.functions[i].relative_error = detail::try_relative(mean.functions[i].error, before[i]);
      if (rel_counts[i]) mean.mean_relative_error[i] /= static_cast<double>(rel_counts[i]);
    }
    r.blocks.push_back(mean);
  }
  r.timing.match = match_time;

  t0 = clock::now();
  BoundConfig bc{rc.theta, r.gamma, rc.eps_conf, s.normalizer};
  if (!(bc.gamma > 0)) bc.gamma = std::numeric_limits<double>::min();  // no mixed leaf: nothing was removed
  r.bounds = make_bound_report(bc, rc.fns, observed, part, r.root, rc.disc_mode);
  r.timing.evaluate = eval_time + detail::seconds_since(t0);
  return r;
}

// Serialization

inline nlohmann::json config_to_json(const RunConfig& c) {
  std::vector<std::string> fns;
  for (const auto& f : c.fns) fns.push_back(f.name());
  nlohmann::json j = {{"theta", c.theta},
                      {"norm", c.norm == NormalizerPolicy::diff ? "diff" : "total"},
                      {"m_split", c.split_candidates},
                      {"ta_iters", c.ta.iterations},
                      {"ta_trials", c.ta.trials},
                      {"ta_biased_start", c.ta.biased_start},
                      {"disc_mode", c.disc_mode == DiscrepancyMode::exact ? "exact" : "ta"},
                      {"matcher", std::string(to_string(c.matcher))},
                      {"repeats", c.repeats},
                      {"fns", fns},
                      {"eps_conf", c.eps_conf},
                      {"seed", c.seed},
                      {"workers", c.workers},
                      {"bins", c.bins},
                      {"strict_bounds", c.strict_bounds}};
  j["max_leaves"] = c.max_leaves ? nlohmann::json(*c.max_leaves) : nlohmann::json(nullptr);
  return j;
}

namespace detail {

inline nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

inline nlohmann::json function_json(const FunctionResult& f) {
  return {{"function", f.function},
          {"estimator", opt(f.estimator_after)},
          {"error", f.error},
          {"relative_error", opt(f.relative_error)}};
}

}  // namespace detail

inline nlohmann::json bounds_to_json(const BoundReport& b) {
  nlohmann::json fns = nlohmann::json::array();
  for (const auto& f : b.functions) {
    nlohmann::json j = {{"function", f.function}, {"observed_error", f.observed_error}, {"vhk", detail::opt(f.vhk)}};
    if (f.deterministic) {
      j["bound_h0"] = f.deterministic->bound_h0;
      j["bound_osc"] = f.deterministic->bound_osc;
    }
    if (f.stochastic) {
      j["expectation_bound"] = f.stochastic->expectation;
      j["variance_bound_h1"] = f.stochastic->variance_h1;
      j["variance_bound_disc"] = detail::opt(f.stochastic->variance_disc);
      j["bernstein_bound"] = f.stochastic->bernstein;
    }
    fns.push_back(std::move(j));
  }
  return {{"theta", b.config.theta},
          {"gamma", b.config.gamma},
          {"epsilon", b.config.epsilon},
          {"normalizer", b.config.normalizer},
          {"H0", b.h0},
          {"H1", b.h1},
          {"H2", b.h2},
          {"H3", b.h3},
          {"flags",
           {{"gamma_below_theta", b.flags.gamma_below_theta},
            {"gamma_above_one", b.flags.gamma_above_one},
            {"unresolved_leaves", b.flags.unresolved_leaves},
            {"heuristic_discrepancy", b.flags.heuristic_discrepancy},
            {"hypothesis_violated", b.flags.violated()}}},
          {"functions", fns}};
}

inline nlohmann::json report_to_json(const RunReport& r, bool include_timing = true) {
  nlohmann::json sample = nlohmann::json::array();
  for (const auto& f : r.sample) sample.push_back({{"function", f.function}, {"estimator", detail::opt(f.estimator_after)}});
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : r.blocks) {
    nlohmann::json fns = nlohmann::json::array();
    for (std::size_t i = 0; i < b.functions.size(); ++i) {
      auto j = detail::function_json(b.functions[i]);
      if (!b.mean_relative_error.empty()) j["mean_of_relative_errors"] = b.mean_relative_error[i];
      fns.push_back(std::move(j));
    }
    blocks.push_back({{"label", b.label},
                      {"repeats", b.repeats},
                      {"removed_pairs", b.removed_pairs},
                      {"survivors_pos", b.survivors_pos},
                      {"survivors_neg", b.survivors_neg},
                      {"ratio", b.ratio},
                      {"functions", fns}});
  }
  nlohmann::json j = {
      {"config", config_to_json(r.config)},
      {"dim", r.dim},
      {"P", r.p},
      {"M", r.m},
      {"normalizer", r.normalizer},
      {"K", r.level},
      {"gamma", r.gamma},
      {"root", {{"lower", r.root.lower()}, {"upper", r.root.upper()}}},
      {"sample", sample},
      {"matching", blocks},
      {"bounds", bounds_to_json(r.bounds)},
      {"leaves",
       {{"count", r.leaves.leaves},
        {"slabs", r.leaves.slabs},
        {"unresolved", r.leaves.unresolved},
        {"mixed", r.leaves.mixed},
        {"max_pos", r.leaves.max_pos},
        {"max_neg", r.leaves.max_neg},
        {"evaluated", r.leaves.evaluated},
        {"max_budget_use", r.leaves.max_budget_use}}}};
  if (include_timing) {
    j["timing_seconds"] = {{"decompose", r.timing.decompose},
                           {"cluster", r.timing.cluster},
                           {"match", r.timing.match},
                           {"evaluate", r.timing.evaluate}};
  }
  return j;
}

/// d, N_tot, N, ratio, then one relative-error column per test function,
/// taken from the first matching block.
inline std::string report_csv_header(const RunReport& r) {
  std::string h = "d,N_tot,N,ratio";
  for (const auto& f : r.sample) h += ",re_" + f.function;
  return h;
}

inline std::string report_csv_row(const RunReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << r.dim << ',' << (r.p + r.m) << ',' << r.normalizer << ',' << r.blocks.front().ratio;
  for (const auto& f : r.blocks.front().functions) {
    os << ',';
    if (f.relative_error) os << *f.relative_error;
  }
  return os.str();
}

inline nlohmann::json partition_to_json(const Partition& p) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& leaf : p.leaves) {
    arr.push_back({{"lower", leaf.box.lower()},
                   {"upper", leaf.box.upper()},
                   {"pos_indices", leaf.pos},
                   {"neg_indices", leaf.neg},
                   {"disc_pos", detail::opt(leaf.disc_pos)},
                   {"disc_neg", detail::opt(leaf.disc_neg)},
                   {"unresolved", leaf.unresolved}});
  }
  return arr;
}

}  // namespace spade
