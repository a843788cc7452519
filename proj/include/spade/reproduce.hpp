#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "spade/pipeline.hpp"
#include "spade/sampler.hpp"

namespace spade::reproduce {

/// Block count m used by the benchmark for each dimension.
inline std::size_t default_rank(std::size_t d) {
  switch (d) {
    case 12: return 4;
    case 36: return 12;
    case 60: return 20;
    case 120: return 40;
    case 360:
    case 1080: return 120;
    default: return d % 3 == 0 ? d / 3 : 1;
  }
}

/// Published row of the relative-error table (theta = 0.08, Rand(1)).
/// Percentages are stored as fractions.
struct RelativeErrorRow {
  std::size_t d;
  std::size_t ntot;
  std::size_t n;
  double ratio;
  std::array<double, 5> re;
};

inline const std::vector<RelativeErrorRow>& relative_error_table() {
  static const std::vector<RelativeErrorRow> rows = {
      {12, 10000, 2446, 0.6504, {0.002310, 0.024128, 0.011648, 0.009044, 0.031539}},
      {12, 100000, 24836, 0.7041, {0.006840, 0.016277, 0.008013, 0.009407, 0.368416}},
      {12, 1000000, 243326, 0.7212, {0.005299, 0.016665, 0.008485, 0.009953, 0.645606}},
      {12, 10000000, 2403016, 0.7568, {0.005669, 0.015188, 0.007540, 0.010674, 0.546809}},
      {36, 10000, 1124, 0.6064, {0.013238, 0.036452, 0.019537, 0.003123, 2.027732}},
      {36, 100000, 12518, 0.3776, {0.010242, 0.039932, 0.020902, 0.012407, 0.054367}},
      {36, 1000000, 121666, 0.2821, {0.004692, 0.033817, 0.017842, 0.014046, 1.287225}},
      {36, 10000000, 1203984, 0.2717, {0.000691, 0.027788, 0.014717, 0.010867, 5.674215}},
      {60, 10000, 260, 0.7936, {0.002880, 0.005271, 0.020039, 0.017056, 0.268976}},
      {60, 100000, 2760, 0.5158, {0.004399, 0.024687, 0.010438, 0.011901, 1.006408}},
      {60, 1000000, 39256, 0.3340, {0.009677, 0.001069, 0.003126, 0.005714, 0.618996}},
      {60, 10000000, 357952, 0.2712, {0.006646, 0.007043, 0.001110, 0.004783, 1.811446}},
      {120, 10000, 138, 0.8986, {0.013588, 0.003399, 0.002148, 0.011358, 0.000625}},
      {120, 100000, 988, 0.4927, {0.014231, 0.010547, 0.002036, 0.019710, 0.034353}},
      {120, 1000000, 7138, 0.4744, {0.012049, 0.028825, 0.014231, 0.001650, 1.005381}},
      {120, 10000000, 68004, 0.3453, {0.000959, 0.022392, 0.010184, 0.007300, 0.877581}},
      {360, 10000, 304, 0.9226, {0.004972, 0.000593, 0.001184, 0.007640, 6.56e-11}},
      {360, 100000, 2768, 0.8759, {0.002050, 0.000941, 0.000040, 0.003796, 0.000479}},
      {360, 1000000, 18604, 0.7362, {0.000388, 0.000372, 0.000875, 0.002325, 0.034452}},
      {360, 10000000, 232048, 0.5403, {0.000057, 0.002312, 0.000970, 0.001581, 0.920226}},
      {1080, 10000, 276, 0.9044, {0.003292, 0.001862, 0.001006, 0.001302, 0.000069}},
      {1080, 100000, 3202, 0.8625, {0.002112, 0.000592, 0.000138, 0.001377, 0.003230}},
      {1080, 1000000, 31972, 0.8896, {0.002052, 0.001592, 0.000945, 0.004773, 0.000372}},
      {1080, 10000000, 182104, 0.9175, {0.000646, 0.000105, 0.000191, 0.000227, 0.000419}},
  };
  return rows;
}

/// Published partition level K for one (N_tot, theta, d) cell.
struct PartitionLevelRow {
  std::size_t ntot;
  double theta;
  std::size_t d;
  std::size_t k;
};

inline const std::vector<PartitionLevelRow>& partition_level_table() {
  static const std::vector<PartitionLevelRow> rows = [] {
    const std::array<std::size_t, 6> dims = {12, 36, 60, 120, 360, 1080};
    const std::array<double, 3> thetas = {0.005, 0.02, 0.08};
    const std::array<std::size_t, 4> ntots = {10000, 100000, 1000000, 10000000};
    // K[ntot][theta][d]
    const std::size_t k[4][3][6] = {
        {{11073, 12120, 12127, 12757, 13076, 12835},
         {3886, 6160, 12127, 12757, 13076, 12835},
         {1011, 1499, 3245, 6701, 13076, 2609}},
        {{61320, 117348, 122846, 134491, 140958, 145016},
         {13472, 17249, 43761, 134367, 140958, 37940},
         {3361, 3807, 8991, 20395, 39578, 8940}},
        {{180704, 265893, 467951, 1377992, 1410399, 543961},
         {44135, 50567, 108769, 293752, 755026, 124158},
         {11112, 11391, 20377, 55575, 153531, 30554}},
        {{569881, 738886, 1630915, 14691077, 7969705, 3207698},
         {146090, 159723, 318590, 3161834, 1876241, 718666},
         {37162, 37454, 64692, 160285, 363425, 185654}},
    };
    std::vector<PartitionLevelRow> out;
    for (std::size_t a = 0; a < ntots.size(); ++a) {
      for (std::size_t b = 0; b < thetas.size(); ++b) {
        for (std::size_t c = 0; c < dims.size(); ++c) out.push_back({ntots[a], thetas[b], dims[c], k[a][b][c]});
      }
    }
    return out;
  }();
  return rows;
}

enum class Scale { desk, full };

struct ReproduceConfig {
  Scale scale = Scale::desk;
  std::optional<std::size_t> max_ntot;  ///< default: 1e6 at desk scale
  std::vector<std::size_t> dims;        ///< empty: every dimension allowed by the scale
  std::vector<double> thetas;           ///< empty: every theta in the table
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  McmcConfig mcmc{};    ///< total_samples and seed are set per cell
  RunConfig run{};      ///< theta and seed are set per cell

  bool included(std::size_t d, std::size_t ntot) const {
    const std::size_t cap = max_ntot.value_or(scale == Scale::desk ? 1000000 : SIZE_MAX);
    if (ntot > cap) return false;
    if (scale == Scale::desk && d > 120) return false;
    return dims.empty() || std::find(dims.begin(), dims.end(), d) != dims.end();
  }
  bool theta_included(double t) const {
    return thetas.empty() || std::any_of(thetas.begin(), thetas.end(), [&](double x) { return std::abs(x - t) < 1e-12; });
  }
};

/// Cells listed as mandatory carry pass/fail weight for the exit status;
/// the tolerance applies to every cell.
inline bool mandatory_relative_error(std::size_t d, std::size_t ntot) {
  return (d == 12 && ntot == 10000) || (d == 36 && ntot == 100000);
}

inline std::pair<double, double> k_window(const PartitionLevelRow& row) {
  if (row.d == 12 && row.ntot == 10000 && row.theta == 0.08) return {500, 2000};
  if (row.d == 12 && row.ntot == 100000 && row.theta == 0.08) return {1500, 7000};
  return {0.5 * static_cast<double>(row.k), 2.0 * static_cast<double>(row.k)};
}

inline bool mandatory_partition_level(const PartitionLevelRow& row) {
  return row.d == 12 && row.theta == 0.08 && (row.ntot == 10000 || row.ntot == 100000);
}

inline constexpr double kRatioTolerance = 0.10;
inline constexpr double kRelativeErrorLimit = 0.05;

/// Seed of the clustering/matching run for one cell.
inline std::uint64_t cell_seed(const ReproduceConfig& rc, std::size_t d, std::size_t ntot) {
  return hash_combine(rc.seed, d * 0x10000ULL + ntot);
}

/// Samples the testbed for one (d, N_tot) cell with the diff normalizer.
inline SignedParticleSet sample_cell(const ReproduceConfig& rc, std::size_t d, std::size_t ntot,
                                     double* acceptance = nullptr) {
  const auto eps = default_coupling(d);
  require(eps.has_value(), Errc::invalid_argument, "no coupling listed for d=" + std::to_string(d));
  DeterminantalModel model(d, default_rank(d), *eps);
  McmcConfig mc = rc.mcmc;
  mc.total_samples = ntot;
  mc.seed = hash_combine(rc.seed, hash_combine(d, ntot));
  auto res = sample(model, mc, rc.workers);
  if (acceptance) *acceptance = res.acceptance;
  return SignedParticleSet::with_policy(std::move(res.positives), std::move(res.negatives), rc.run.norm);
}

struct CellOutcome {
  std::string status;  ///< ok, fail, skipped, error
  std::string message;
};

struct TableOutput {
  std::string csv;
  std::string expected_csv;
  bool mandatory_failed = false;
  std::size_t cells_run = 0;
};

namespace detail {

inline std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace detail

using Progress = std::function<void(const std::string&)>;

inline TableOutput relative_error(const ReproduceConfig& rc, const Progress& progress = {}) {
  TableOutput out;
  std::ostringstream csv, exp;
  csv << "d,N_tot,N,ratio,re_f1,re_f2,re_f3,re_f4,re_f5,status\n";
  exp << "d,N_tot,ref_N,ref_ratio,ref_re_f1,ref_re_f2,ref_re_f3,ref_re_f4,ref_re_f5,"
         "ratio_tolerance,re_limit,mandatory,verdict\n";
  for (const auto& row : relative_error_table()) {
    std::string status = "skipped";
    std::optional<RunReport> rep;
    if (rc.included(row.d, row.ntot)) {
      if (progress) progress("relative_error d=" + std::to_string(row.d) + " N_tot=" + std::to_string(row.ntot));
      try {
        const auto s = sample_cell(rc, row.d, row.ntot);
        RunConfig cfg = rc.run;
        cfg.theta = 0.08;
        cfg.seed = cell_seed(rc, row.d, row.ntot);
        cfg.workers = rc.workers;
        cfg.repeats = 1;
        cfg.fns = {TestFunction::f1(), TestFunction::f2(), TestFunction::f3(), TestFunction::f4(), TestFunction::f5()};
        rep = run(s, cfg);
        ++out.cells_run;
        const auto& b = rep->blocks.front();
        bool ok = std::abs(b.ratio - row.ratio) <= kRatioTolerance;
        for (std::size_t i = 0; i < 4; ++i) {
          ok = ok && b.functions[i].relative_error && *b.functions[i].relative_error < kRelativeErrorLimit;
        }
        status = ok ? "ok" : "fail";
      } catch (const Error& e) {
        status = "error";
      }
    }
    const bool mandatory = mandatory_relative_error(row.d, row.ntot);
    if (mandatory && status != "ok" && status != "skipped") out.mandatory_failed = true;

    csv << row.d << ',' << row.ntot << ',';
    if (rep) {
      const auto& b = rep->blocks.front();
      csv << detail::num(rep->normalizer) << ',' << detail::num(b.ratio);
      for (const auto& f : b.functions) csv << ',' << (f.relative_error ? detail::num(*f.relative_error) : "");
    } else {
      csv << ",,,,,,";
    }
    csv << ',' << status << '\n';

    exp << row.d << ',' << row.ntot << ',' << row.n << ',' << detail::num(row.ratio);
    for (double v : row.re) exp << ',' << detail::num(v);
    exp << ',' << detail::num(kRatioTolerance) << ',' << detail::num(kRelativeErrorLimit) << ','
        << (mandatory ? "true" : "false") << ',' << status << '\n';
  }
  out.csv = csv.str();
  out.expected_csv = exp.str();
  return out;
}

inline TableOutput partition_levels(const ReproduceConfig& rc, const Progress& progress = {}) {
  TableOutput out;
  std::ostringstream csv, exp;
  csv << "N_tot,theta,d,K,N,status\n";
  exp << "N_tot,theta,d,ref_K,K_low,K_high,mandatory,verdict\n";
  std::map<std::pair<std::size_t, std::size_t>, SignedParticleSet> samples;
  for (const auto& row : partition_level_table()) {
    std::string status = "skipped";
    std::optional<std::size_t> k;
    double n = 0;
    const auto [lo, hi] = k_window(row);
    if (rc.included(row.d, row.ntot) && rc.theta_included(row.theta)) {
      if (progress) {
        progress("partition_levels d=" + std::to_string(row.d) + " N_tot=" + std::to_string(row.ntot) +
                 " theta=" + detail::num(row.theta));
      }
      try {
        const auto key = std::make_pair(row.d, row.ntot);
        auto it = samples.find(key);
        if (it == samples.end()) it = samples.emplace(key, sample_cell(rc, row.d, row.ntot)).first;
        RunConfig cfg = rc.run;
        cfg.theta = row.theta;
        cfg.seed = cell_seed(rc, row.d, row.ntot);
        cfg.workers = rc.workers;
        const auto& s = it->second;
        const auto part = cluster_slabs(s, decompose(s, root_box(s), cfg.bins), cluster_config(cfg, s.normalizer),
                                        cfg.workers);
        k = part.level();
        n = s.normalizer;
        ++out.cells_run;
        status = (static_cast<double>(*k) >= lo && static_cast<double>(*k) <= hi) ? "ok" : "fail";
      } catch (const Error& e) {
        status = "error";
      }
    }
    const bool mandatory = mandatory_partition_level(row);
    if (mandatory && status != "ok" && status != "skipped") out.mandatory_failed = true;
    csv << row.ntot << ',' << detail::num(row.theta) << ',' << row.d << ',';
    if (k) {
      csv << *k << ',' << detail::num(n);
    } else {
      csv << ',';
    }
    csv << ',' << status << '\n';
    exp << row.ntot << ',' << detail::num(row.theta) << ',' << row.d << ',' << row.k << ',' << detail::num(lo) << ','
        << detail::num(hi) << ',' << (mandatory ? "true" : "false") << ',' << status << '\n';
  }
  out.csv = csv.str();
  out.expected_csv = exp.str();
  return out;
}

// CSV schema validation. A schema is {"columns": [{"name", "type",
// "nullable"?, "enum"?}]} with type one of integer, number, boolean, string.

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline bool cell_matches(const std::string& v, const std::string& type) {
  if (type == "string") return true;
  if (type == "boolean") return v == "true" || v == "false";
  std::size_t used = 0;
  try {
    if (type == "integer") {
      if (v.empty() || v[0] == '-') return false;
      (void)std::stoull(v, &used);
    } else {
      (void)std::stod(v, &used);
    }
  } catch (const std::exception&) {
    return false;
  }
  return used == v.size();
}

/// Returns a list of problems; empty when the CSV conforms.
inline std::vector<std::string> validate_csv(const nlohmann::json& schema, const std::string& csv) {
  std::vector<std::string> problems;
  const auto& cols = schema.at("columns");
  std::istringstream is(csv);
  std::string line;
  if (!std::getline(is, line)) return {"empty file"};
  const auto header = split_csv_line(line);
  if (header.size() != cols.size()) problems.push_back("header has " + std::to_string(header.size()) + " columns");
  for (std::size_t i = 0; i < std::min(header.size(), cols.size()); ++i) {
    if (header[i] != cols[i].at("name").get<std::string>()) problems.push_back("column " + std::to_string(i) + " is '" + header[i] + "'");
  }
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != cols.size()) {
      problems.push_back("row " + std::to_string(row) + " has " + std::to_string(cells.size()) + " cells");
      continue;
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto& c = cols[i];
      const auto& v = cells[i];
      if (v.empty()) {
        if (!c.value("nullable", false)) problems.push_back("row " + std::to_string(row) + ": empty " + c.at("name").get<std::string>());
        continue;
      }
      if (!cell_matches(v, c.at("type").get<std::string>())) {
        problems.push_back("row " + std::to_string(row) + ": bad " + c.at("name").get<std::string>() + " '" + v + "'");
      }
      if (c.contains("enum")) {
        const auto& allowed = c.at("enum");
        if (std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
          problems.push_back("row " + std::to_string(row) + ": " + c.at("name").get<std::string>() + " not in enum");
        }
      }
    }
  }
  return problems;
}

}  // namespace spade::reproduce
