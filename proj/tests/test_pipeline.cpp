#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "spade/pipeline.hpp"
#include "spade/reproduce.hpp"
#include "test_util.hpp"

using namespace spade;

namespace {

nlohmann::json load_schema(const std::string& name) {
  std::ifstream is(std::string(SPADE_SCHEMA_DIR) + "/" + name);
  return nlohmann::json::parse(is);
}

nlohmann::json without_volatile(nlohmann::json j) {
  j.erase("timing_seconds");
  j["config"].erase("workers");
  return j;
}

RunConfig small_config() {
  RunConfig rc;
  rc.theta = 0.2;
  rc.seed = 5;
  rc.bins = 4;
  return rc;
}

}  // namespace

TEST(Decompose, SlabsTileRootAndBalanceCounts) {
  RngStream rng(71);
  auto s = fixtures::uniform_signed(600, 200, 3, rng);
  const auto root = root_box(s);
  const auto slabs = decompose(s, root, 8);
  ASSERT_EQ(slabs.size(), 8u);
  double vol = 0;
  std::size_t pos = 0, neg = 0;
  for (std::size_t b = 0; b < slabs.size(); ++b) {
    vol += slabs[b].box.volume();
    pos += slabs[b].pos.size();
    neg += slabs[b].neg.size();
    EXPECT_NEAR(static_cast<double>(slabs[b].pos.size() + slabs[b].neg.size()), 100.0, 2.0);
    if (b) {
      EXPECT_EQ(slabs[b].box.lower(0), slabs[b - 1].box.upper(0));
    }
  }
  EXPECT_NEAR(vol, root.volume(), 1e-12 * root.volume());
  EXPECT_EQ(pos, 600u);
  EXPECT_EQ(neg, 200u);
}

TEST(Decompose, DuplicateCoordinatesMergeSlabs) {
  PointSet pos(2, std::vector<double>(40, 0.5));
  SignedParticleSet s(pos, PointSet(2), 20.0);
  EXPECT_EQ(decompose(s, root_box(s), 16).size(), 1u);
}

TEST(Run, ResultIndependentOfWorkerCount) {
  RngStream rng(72);
  auto s = fixtures::uniform_signed(900, 400, 4, rng);
  auto rc = small_config();
  rc.repeats = 3;
  rc.workers = 1;
  const auto a = report_to_json(run(s, rc));
  rc.workers = 8;
  const auto b = report_to_json(run(s, rc));
  EXPECT_EQ(without_volatile(a), without_volatile(b));
  EXPECT_FALSE(report_to_json(run(s, rc), false).contains("timing_seconds"));
}

TEST(Run, SeedChangesMatching) {
  RngStream rng(73);
  auto s = fixtures::uniform_signed(500, 200, 3, rng);
  auto rc = small_config();
  const auto a = run(s, rc);
  rc.seed = 6;
  const auto b = run(s, rc);
  EXPECT_NE(a.blocks[0].functions[0].error, b.blocks[0].functions[0].error);
}

TEST(Run, ConstantFunctionHasZeroError) {
  RngStream rng(74);
  auto s = fixtures::uniform_signed(300, 100, 2, rng);
  auto rc = small_config();
  rc.fns = {TestFunction::constant(2.0), TestFunction::f1()};
  const auto r = run(s, rc);
  ASSERT_TRUE(r.blocks[0].functions[0].relative_error);
  EXPECT_EQ(*r.blocks[0].functions[0].relative_error, 0.0);
}

TEST(Run, RepeatsAddAveragedBlock) {
  RngStream rng(75);
  auto s = fixtures::uniform_signed(300, 100, 2, rng);
  auto rc = small_config();
  rc.repeats = 20;
  const auto r = run(s, rc);
  ASSERT_EQ(r.blocks.size(), 2u);
  EXPECT_EQ(r.blocks[0].label, "rand1");
  EXPECT_EQ(r.blocks[1].label, "rand20");
  EXPECT_EQ(r.blocks[1].mean_relative_error.size(), rc.fns.size());
  rc.matcher = Matcher::hungarian;
  const auto h = run(s, rc);
  ASSERT_EQ(h.blocks.size(), 1u);
  EXPECT_EQ(h.blocks[0].label, "hungarian");
}

TEST(Run, CountsAndRatioAreConsistent) {
  RngStream rng(76);
  auto s = fixtures::uniform_signed(700, 300, 3, rng);
  const auto r = run(s, small_config());
  const auto& b = r.blocks[0];
  EXPECT_EQ(b.survivors_pos + b.removed_pairs, 700u);
  EXPECT_EQ(b.survivors_neg + b.removed_pairs, 300u);
  EXPECT_DOUBLE_EQ(b.ratio, static_cast<double>(b.survivors_pos + b.survivors_neg) / 1000.0);
  EXPECT_EQ(r.level, r.leaves.leaves);
  EXPECT_LE(r.leaves.max_budget_use, 1.0);
}

TEST(Run, BoundsHoldInExactModeOnUnitSquare) {
  RngStream rng(77);
  for (int t = 0; t < 10; ++t) {
    auto s = fixtures::uniform_signed(150 + rng.below(100), 40 + rng.below(60), 2, rng);
    RunConfig rc;
    rc.theta = 0.3;
    rc.disc_mode = DiscrepancyMode::exact;
    rc.fns = {TestFunction::f1(), TestFunction::f2()};
    rc.seed = static_cast<std::uint64_t>(t);
    rc.bins = 1;
    const auto r = run(s, rc);
    if (r.bounds.flags.violated()) continue;
    for (std::size_t i = 0; i < 2; ++i) {
      const auto& fb = r.bounds.functions[i];
      ASSERT_TRUE(fb.deterministic);
      EXPECT_LE(std::abs(fb.observed_error), fb.deterministic->bound_h0) << fb.function;
    }
  }
}

TEST(Run, LeafCapSurfacesAsError) {
  RngStream rng(78);
  auto s = fixtures::uniform_signed(800, 300, 3, rng);
  auto rc = small_config();
  rc.theta = 0.02;
  rc.max_leaves = 5;
  try {
    run(s, rc);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::max_leaves_exceeded);
  }
}

TEST(Report, CsvRowMatchesHeader) {
  RngStream rng(79);
  auto s = fixtures::uniform_signed(200, 80, 2, rng);
  const auto r = run(s, small_config());
  EXPECT_EQ(report_csv_header(r), "d,N_tot,N,ratio,re_f1,re_f2,re_f3,re_f4,re_f5");
  EXPECT_EQ(reproduce::split_csv_line(report_csv_row(r)).size(), 9u);
  const auto part = partition_to_json(Partition{});
  EXPECT_TRUE(part.is_array());
}

TEST(Reproduce, SkippedTablesMatchSchemas) {
  reproduce::ReproduceConfig rc;
  rc.max_ntot = 1;  // skips every cell
  const auto a = reproduce::relative_error(rc);
  EXPECT_EQ(a.cells_run, 0u);
  EXPECT_FALSE(a.mandatory_failed);
  EXPECT_TRUE(reproduce::validate_csv(load_schema("relative_error.schema.json"), a.csv).empty());
  EXPECT_TRUE(reproduce::validate_csv(load_schema("relative_error.expected.schema.json"), a.expected_csv).empty());
  const auto b = reproduce::partition_levels(rc);
  EXPECT_TRUE(reproduce::validate_csv(load_schema("partition_levels.schema.json"), b.csv).empty());
  EXPECT_TRUE(reproduce::validate_csv(load_schema("partition_levels.expected.schema.json"), b.expected_csv).empty());
  EXPECT_EQ(std::count(b.csv.begin(), b.csv.end(), '\n'), 73);
}

TEST(Reproduce, PartitionCellRunsAndMatchesSchema) {
  reproduce::ReproduceConfig rc;
  rc.dims = {12};
  rc.thetas = {0.08};
  rc.max_ntot = 10000;
  rc.mcmc.burn_in = 200;
  const auto b = reproduce::partition_levels(rc);
  EXPECT_EQ(b.cells_run, 1u);
  const auto problems = reproduce::validate_csv(load_schema("partition_levels.schema.json"), b.csv);
  EXPECT_TRUE(problems.empty()) << problems.front();
}

TEST(Reproduce, ValidatorFlagsBadCells) {
  const auto schema = load_schema("partition_levels.schema.json");
  EXPECT_FALSE(reproduce::validate_csv(schema, "N_tot,theta,d,K,N,status\n10,0.1,12,x,1,ok\n").empty());
  EXPECT_FALSE(reproduce::validate_csv(schema, "N_tot,theta,d,K,N,status\n10,0.1,12,5,1,maybe\n").empty());
  EXPECT_FALSE(reproduce::validate_csv(schema, "N_tot,theta,d,K,status\n").empty());
  EXPECT_TRUE(reproduce::validate_csv(schema, "N_tot,theta,d,K,N,status\n10,0.1,12,,,skipped\n").empty());
}
