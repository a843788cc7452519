// Command-line front end: sample -> cluster -> annihilate -> evaluate.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "spade/discrepancy.hpp"
#include "spade/particle_io.hpp"
#include "spade/pipeline.hpp"
#include "spade/reproduce.hpp"
#include "spade/sampler.hpp"

namespace {

enum Exit : int { kOk = 0, kFailure = 1, kUsage = 2, kHypothesis = 3, kResource = 4 };

int exit_code_for(spade::Errc c) {
  switch (c) {
    case spade::Errc::max_leaves_exceeded:
    case spade::Errc::instance_too_large: return kResource;
    case spade::Errc::io_error:
    case spade::Errc::parse_error:
    case spade::Errc::non_finite:
    case spade::Errc::degenerate_denominator: return kFailure;
    default: return kUsage;
  }
}

void emit(const std::string& path, const std::string& contents) {
  if (path.empty() || path == "-") {
    std::cout << contents;
  } else {
    spade::io::write_file_atomic(path, contents);
  }
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string tok; std::getline(ss, tok, ',');) {
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

/// Flags shared by run and reproduce.
struct RunFlags {
  double theta = 0.08;
  std::string norm = "diff";
  std::size_t m_split = 2;
  std::size_t ta_iters = 128;
  std::size_t ta_trials = 5;
  bool ta_biased = false;
  std::string disc_mode = "ta";
  std::string matcher = "random";
  std::size_t repeats = 1;
  std::string fns = "f1,f2,f3,f4,f5";
  double eps_conf = 0.05;
  std::size_t bins = 64;
  std::size_t max_leaves = 0;

  void add(CLI::App* app) {
    app->add_option("--theta", theta, "discrepancy budget parameter in (0,1)")->capture_default_str();
    app->add_option("--norm", norm, "normalizer N: diff (P-M) or total (P+M)")
        ->check(CLI::IsMember({"diff", "total"}))
        ->capture_default_str();
    app->add_option("--m-split", m_split, "equidistant split nodes per side (m-1 candidates)")->capture_default_str();
    app->add_option("--ta-iters", ta_iters, "threshold accepting iterations")->capture_default_str();
    app->add_option("--ta-trials", ta_trials, "threshold accepting trials")->capture_default_str();
    app->add_flag("--ta-biased-start", ta_biased, "draw threshold accepting start anchors as U^(1/d)");
    app->add_option("--disc-mode", disc_mode, "budget checks by threshold accepting or exact enumeration")
        ->check(CLI::IsMember({"ta", "exact"}))
        ->capture_default_str();
    app->add_option("--matcher", matcher, "pairing inside clusters")
        ->check(CLI::IsMember({"random", "hungarian"}))
        ->capture_default_str();
    app->add_option("--repeats", repeats, "independent random matchings over the fixed partition")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app->add_option("--fns", fns, "comma-separated test functions (f1..f5, const, const=<c>)")->capture_default_str();
    app->add_option("--eps-conf", eps_conf, "confidence parameter of the tail bound")->capture_default_str();
    app->add_option("--bins", bins, "slabs of the domain decomposition")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--max-leaves", max_leaves, "abort when the partition exceeds this many leaves (0: no cap)");
  }

  spade::RunConfig to_config() const {
    spade::RunConfig c;
    c.theta = theta;
    c.norm = norm == "total" ? spade::NormalizerPolicy::total : spade::NormalizerPolicy::diff;
    c.split_candidates = m_split;
    c.ta.iterations = ta_iters;
    c.ta.trials = ta_trials;
    c.ta.biased_start = ta_biased;
    c.disc_mode = disc_mode == "exact" ? spade::DiscrepancyMode::exact : spade::DiscrepancyMode::threshold_accepting;
    c.matcher = matcher == "hungarian" ? spade::Matcher::hungarian : spade::Matcher::random;
    c.repeats = repeats;
    c.fns = spade::parse_test_functions(fns);
    c.eps_conf = eps_conf;
    c.bins = bins;
    if (max_leaves > 0) c.max_leaves = max_leaves;
    return c;
  }
};

struct Common {
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  void add(CLI::App* app) {
    app->add_option("--seed", seed, "master seed")->envname("SPADE_SEED")->capture_default_str();
    app->add_option("--workers", workers, "worker threads (affects scheduling only)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
  }
};

int cmd_sample(std::size_t d, std::optional<std::size_t> m, std::optional<double> eps, std::size_t ntot,
               const spade::McmcConfig& base, const Common& common, const std::string& out, std::string meta) {
  const std::size_t rank = m.value_or(spade::reproduce::default_rank(d));
  if (rank == 0 || d % rank != 0 || (d / rank) % 3 != 0) {
    std::cerr << "error: --d must be a multiple of --m with d/m divisible by 3\n";
    return kUsage;
  }
  const auto coupling = eps ? eps : spade::default_coupling(d);
  if (!coupling) {
    std::cerr << "error: no default --eps for d=" << d << "; pass it explicitly\n";
    return kUsage;
  }
  spade::DeterminantalModel model(d, rank, *coupling);
  spade::McmcConfig cfg = base;
  cfg.total_samples = ntot;
  cfg.seed = common.seed;
  const auto res = spade::sample(model, cfg, common.workers);
  spade::io::save(out, res.positives, res.negatives);

  nlohmann::json j = {{"d", d},
                      {"m", rank},
                      {"eps", *coupling},
                      {"ntot", ntot},
                      {"P", res.positives.size()},
                      {"M", res.negatives.size()},
                      {"discarded", res.discarded},
                      {"acceptance_ratio", res.acceptance},
                      {"chains", cfg.chains},
                      {"burn_in", cfg.burn_in},
                      {"thin", cfg.thin},
                      {"stddev", cfg.stddev},
                      {"seed", cfg.seed},
                      {"stuck_chains", res.stuck_chains}};
  if (meta.empty()) meta = out + ".meta.json";
  spade::io::write_file_atomic(meta, j.dump(2) + "\n");
  for (auto c : res.stuck_chains) std::cerr << "warning: chain " << c << " accepted < 1% over a window\n";
  return kOk;
}

int cmd_run(const RunFlags& flags, const Common& common, const std::string& in, const std::string& out,
            const std::string& format, bool strict, const std::string& partition_out, const std::string& survivors_out) {
  spade::RunConfig cfg = flags.to_config();
  cfg.seed = common.seed;
  cfg.workers = common.workers;
  cfg.strict_bounds = strict;
  const auto data = spade::io::load(in);
  const auto s = data.with_policy(cfg.norm);
  const auto report = spade::run(s, cfg);

  if (format == "csv") {
    emit(out, spade::report_csv_header(report) + "\n" + spade::report_csv_row(report) + "\n");
  } else {
    emit(out, spade::report_to_json(report).dump(2) + "\n");
  }
  if (!partition_out.empty() || !survivors_out.empty()) {
    // Replays the deterministic stages to export their products.
    const auto root = spade::root_box(s);
    const auto part = spade::cluster_slabs(s, spade::decompose(s, root, cfg.bins),
                                           spade::cluster_config(cfg, s.normalizer), cfg.workers);
    if (!partition_out.empty()) spade::io::write_file_atomic(partition_out, spade::partition_to_json(part).dump() + "\n");
    if (!survivors_out.empty()) {
      const auto ann = spade::annihilate(s, part, cfg.matcher, cfg.matching_seed(), 0, cfg.workers);
      spade::io::save(survivors_out, ann.survivors);
    }
  }
  if (strict && report.bounds.flags.violated()) {
    std::cerr << "error: bound hypotheses violated (gamma=" << report.gamma << ")\n";
    return kHypothesis;
  }
  return kOk;
}

int cmd_reproduce(const std::string& table, const std::string& scale, std::size_t max_ntot, const std::string& dims,
                  const std::string& thetas, const RunFlags& flags, const Common& common,
                  const spade::McmcConfig& mcmc, const std::string& out, std::string expected_out) {
  spade::reproduce::ReproduceConfig rc;
  rc.scale = scale == "full" ? spade::reproduce::Scale::full : spade::reproduce::Scale::desk;
  if (max_ntot > 0) rc.max_ntot = max_ntot;
  for (const auto& d : split(dims)) rc.dims.push_back(std::stoul(d));
  for (const auto& t : split(thetas)) rc.thetas.push_back(std::stod(t));
  rc.seed = common.seed;
  rc.workers = common.workers;
  rc.mcmc = mcmc;
  rc.run = flags.to_config();
  auto progress = [](const std::string& msg) { std::cerr << "running " << msg << "\n"; };
  const auto res = table == "relative_error" ? spade::reproduce::relative_error(rc, progress)
                                             : spade::reproduce::partition_levels(rc, progress);
  emit(out, res.csv);
  if (expected_out.empty()) {
    expected_out = out.empty() || out == "-" ? "" : std::filesystem::path(out).replace_extension(".expected.csv").string();
  }
  if (!expected_out.empty()) spade::io::write_file_atomic(expected_out, res.expected_csv);
  return res.mandatory_failed ? kFailure : kOk;
}

int cmd_disc(const std::string& in, const std::string& mode, const RunFlags& flags, const Common& common) {
  const auto data = spade::io::load(in);
  spade::PointSet pts = data.positives;
  for (spade::Index i = 0; i < data.negatives.size(); ++i) pts.push_back(data.negatives[i]);
  spade::DiscrepancyEstimate est;
  if (mode == "exact") {
    est = spade::star_discrepancy_exact(pts);
  } else {
    spade::TaParams ta;
    ta.iterations = flags.ta_iters;
    ta.trials = flags.ta_trials;
    spade::RngStream rng(common.seed);
    est = spade::star_discrepancy_ta(pts, ta, rng);
  }
  nlohmann::json j = {{"value", est.value},
                      {"method", est.method == spade::DiscrepancyMethod::exact ? "exact" : "threshold_accepting"},
                      {"witness", est.witness},
                      {"points", pts.size()}};
  std::cout << j.dump(2) << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Particle annihilation for signed empirical measures"};
  app.set_config("--config", "", "TOML/INI configuration file; command-line flags take precedence");
  app.require_subcommand(1);

  Common common;
  RunFlags flags;
  spade::McmcConfig mcmc;

  auto* sample = app.add_subcommand("sample", "draw the determinantal testbed by Metropolis MCMC");
  std::size_t d = 12, ntot = 10000;
  std::optional<std::size_t> m;
  std::optional<double> eps;
  std::string sample_out, sample_meta;
  sample->add_option("--d", d, "total dimension")->required();
  sample->add_option("--m", m, "matrix rank (default depends on d)");
  sample->add_option("--eps", eps, "off-diagonal coupling (default depends on d)");
  sample->add_option("--ntot", ntot, "retained samples over all chains")->check(CLI::PositiveNumber)->capture_default_str();
  sample->add_option("--chains", mcmc.chains, "independent chains")->check(CLI::PositiveNumber)->capture_default_str();
  sample->add_option("--burn-in", mcmc.burn_in, "discarded steps per chain")->capture_default_str();
  sample->add_option("--stddev", mcmc.stddev, "proposal standard deviation")->capture_default_str();
  sample->add_option("--thin", mcmc.thin, "keep every k-th state")->check(CLI::PositiveNumber)->capture_default_str();
  sample->add_option("--out", sample_out, "particle file (.json for JSON, text otherwise)")->required();
  sample->add_option("--meta", sample_meta, "sampling metadata JSON (default <out>.meta.json)");
  common.add(sample);

  auto* runc = app.add_subcommand("run", "cluster, annihilate and evaluate a particle file");
  std::string in, out, format = "json", partition_out, survivors_out;
  bool strict = false;
  runc->add_option("--in", in, "input particle file")->required()->check(CLI::ExistingFile);
  runc->add_option("--out", out, "report path (default stdout)");
  runc->add_option("--format", format, "report format")->check(CLI::IsMember({"json", "csv"}))->capture_default_str();
  runc->add_flag("--strict-bounds", strict, "exit 3 when the bound hypotheses fail");
  runc->add_option("--partition-out", partition_out, "write the partition as JSON");
  runc->add_option("--survivors-out", survivors_out, "write the survivors of the first matching");
  flags.add(runc);
  common.add(runc);

  auto* repro = app.add_subcommand("reproduce", "re-run the benchmark tables and compare with published values");
  std::string table = "relative_error", scale = "desk", dims, thetas, repro_out, expected_out;
  std::size_t max_ntot = 0;
  repro->add_option("--table", table, "table to reproduce")
      ->check(CLI::IsMember({"relative_error", "partition_levels"}))
      ->capture_default_str();
  repro->add_option("--scale", scale, "desk (d <= 120, N_tot <= 1e6) or full")
      ->check(CLI::IsMember({"desk", "full"}))
      ->capture_default_str();
  repro->add_option("--max-ntot", max_ntot, "skip cells with more samples than this");
  repro->add_option("--dims", dims, "comma-separated dimensions to run");
  repro->add_option("--thetas", thetas, "comma-separated theta values to run (partition_levels)");
  repro->add_option("--out", repro_out, "CSV path (default stdout)");
  repro->add_option("--expected-out", expected_out, "published values and verdicts (default: <out> with extension .expected.csv)");
  repro->add_option("--burn-in", mcmc.burn_in, "MCMC burn-in per chain")->capture_default_str();
  repro->add_option("--chains", mcmc.chains, "MCMC chains")->check(CLI::PositiveNumber)->capture_default_str();
  flags.add(repro);
  common.add(repro);

  auto* disc = app.add_subcommand("disc", "star discrepancy of the points in a file (both signs pooled)");
  std::string disc_in, disc_mode = "ta";
  disc->add_option("--in", disc_in, "points in [0,1]^d")->required()->check(CLI::ExistingFile);
  disc->add_option("--mode", disc_mode, "exact or ta")->check(CLI::IsMember({"exact", "ta"}))->capture_default_str();
  disc->add_option("--ta-iters", flags.ta_iters, "threshold accepting iterations")->capture_default_str();
  disc->add_option("--ta-trials", flags.ta_trials, "threshold accepting trials")->capture_default_str();
  common.add(disc);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*sample) return cmd_sample(d, m, eps, ntot, mcmc, common, sample_out, sample_meta);
    if (*runc) return cmd_run(flags, common, in, out, format, strict, partition_out, survivors_out);
    if (*repro) {
      return cmd_reproduce(table, scale, max_ntot, dims, thetas, flags, common, mcmc, repro_out, expected_out);
    }
    if (*disc) return cmd_disc(disc_in, disc_mode, flags, common);
  } catch (const spade::Error& e) {
    std::cerr << "error [" << spade::to_string(e.code()) << "]: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}
