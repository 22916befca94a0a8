#include <gtest/gtest.h>

#include <sstream>

#include "frames.hpp"
#include "sphperf/bench.hpp"
#include "sphperf/occupancy.hpp"

using namespace sphperf;

TEST(Occupancy, WorkedExamples) {
  const DeviceSpec d13 = device_spec("1.3");
  EXPECT_EQ(occupancy(35, 256, d13), 0.25);
  EXPECT_EQ(occupancy(35, 448, d13), 0.4375);
  EXPECT_EQ(occupancy(1, 32, device_spec("2.x")), 8.0 / 48.0);
  EXPECT_EQ(occupancy(35, 512, device_spec("1.0")), 0.0);  // one block needs 17920 > 8192 registers
}

TEST(Occupancy, CapabilityTable) {
  EXPECT_EQ(device_spec("1.1").registers_per_sm, 8192);
  EXPECT_EQ(device_spec("1.2").max_warps_per_sm, 32);
  EXPECT_EQ(device_spec("2.1").max_threads_per_block, 1024);
  EXPECT_EQ(device_spec("2.0").max_threads_per_sm, 1536);
  EXPECT_THROW(device_spec("3.0"), ConfigError);
}

TEST(Occupancy, MonotoneInRegisters) {
  for (const char* cap : {"1.0", "1.3", "2.x"}) {
    const DeviceSpec d = device_spec(cap);
    for (int tpb = 32; tpb <= d.max_threads_per_block; tpb += 32) {
      double prev = 1.0;
      for (int regs = 1; regs <= 128; ++regs) {
        const double o = occupancy(regs, tpb, d);
        EXPECT_LE(o, prev) << cap << " " << tpb << " " << regs;
        EXPECT_GE(o, 0.0);
        EXPECT_LE(o, 1.0);
        // Always a whole number of blocks' worth of warps.
        const double step = (tpb / 32.0) / d.max_warps_per_sm;
        const double q = o / step;
        EXPECT_NEAR(q, std::round(q), 1e-12);
        prev = o;
      }
    }
  }
}

TEST(Occupancy, BestBlockSize) {
  const DeviceSpec d13 = device_spec("1.3");
  const BlockChoice c = best_block_size(35, d13);
  EXPECT_GE(c.occupancy, 0.4375);
  EXPECT_EQ(occupancy(35, c.threads_per_block, d13), c.occupancy);
  for (int tpb = 32; tpb < c.threads_per_block; tpb += 32) EXPECT_LT(occupancy(35, tpb, d13), c.occupancy);
  EXPECT_EQ(best_block_size(1, d13).occupancy, 1.0);
  EXPECT_EQ(best_block_size(100000, d13).occupancy, 0.0);
}

TEST(Occupancy, RejectsInvalidBlocks) {
  const DeviceSpec d = device_spec("1.3");
  EXPECT_THROW(occupancy(35, 100, d), ConfigError);
  EXPECT_THROW(occupancy(35, 0, d), ConfigError);
  EXPECT_THROW(occupancy(35, 1024, d), ConfigError);
  EXPECT_THROW(occupancy(0, 256, d), ConfigError);
  EXPECT_THROW(best_block_size(0, d), ConfigError);
}

TEST(RangeMemory, PerCellConstants) {
  EXPECT_EQ(range_bytes_per_cell(1), 144u);
  EXPECT_EQ(range_bytes_per_cell(2), 400u);
  EXPECT_EQ(estimate_range_memory(1000, 1), 144000u);
  EXPECT_EQ(estimate_range_memory(1000, 2), 3200000u);
  EXPECT_EQ(estimate_range_memory(0, 2), 0u);
  for (std::uint64_t c : {1ull, 7ull, 123456ull}) {
    EXPECT_EQ(estimate_range_memory(c, 1), 144 * c);
    EXPECT_EQ(estimate_range_memory(c, 2), 8 * 400 * c);
  }
  EXPECT_THROW(estimate_range_memory(10, 3), ConfigError);
  EXPECT_THROW(device_memory("k20"), ConfigError);
}

namespace {

Snapshot frame_snapshot(double dp = 0.02, std::uint64_t steps = 5) {
  const frames::Frame f = frames::dam_break(dp, steps);
  return make_snapshot(f.sys, compute_derived(f.sys, PhysicsConstants::from(f.params)));
}

}  // namespace

TEST(Snapshot, RoundTripIsBitExact) {
  const Snapshot s = frame_snapshot();
  std::stringstream ss;
  write_snapshot(ss, s);
  std::string header;
  std::getline(std::istringstream(ss.str()) >> std::ws, header);
  EXPECT_EQ(header, kSnapshotHeader);
  const Snapshot back = read_snapshot(ss);
  ASSERT_EQ(back.size(), s.size());
  EXPECT_EQ(back.id, s.id);
  EXPECT_EQ(back.kind, s.kind);
  EXPECT_EQ(back.pos, s.pos);
  EXPECT_EQ(back.vel, s.vel);
  EXPECT_EQ(back.rho, s.rho);
  EXPECT_EQ(back.press, s.press);

  const ParticleSystem sys = to_particle_system(back, 8e-3f, 8e-3f);
  EXPECT_NO_THROW(sys.check());
  EXPECT_EQ(sys.pos, s.pos);
}

TEST(Snapshot, RejectsMalformedInput) {
  std::istringstream bad_header("id,x\n");
  EXPECT_THROW(read_snapshot(bad_header), std::runtime_error);
  std::istringstream short_row(std::string(kSnapshotHeader) + "\n0,1,0.1,0.2\n");
  EXPECT_THROW(read_snapshot(short_row), std::runtime_error);
  std::istringstream junk(std::string(kSnapshotHeader) + "\n0,1,0.1,0.2,abc,0,0,0,1000,0\n");
  EXPECT_THROW(read_snapshot(junk), std::runtime_error);
}

TEST(CompareSnapshots, SelfIsExact) {
  const Snapshot s = frame_snapshot();
  const SnapshotComparison c = compare_snapshots(s, s);
  EXPECT_TRUE(c.pass);
  for (const FieldDiff& d : c.fields) EXPECT_EQ(d.max_abs, 0.0) << d.field;
  EXPECT_EQ(c.fields.size(), 8u);
}

TEST(CompareSnapshots, SymmetryOnAndOffAgree) {
  const Scenario sc = desk_dam_break(0.02);
  const SimParams p = make_params(sc);
  const RunResult a = run_simulation(sc, p, parse_tag("cp-sym-l1-single-t1"), {5});
  const RunResult b = run_simulation(sc, p, parse_tag("cp-nosym-l1-single-t1"), {5});
  const SnapshotComparison c =
      compare_snapshots(make_snapshot(a.system, a.derived), make_snapshot(b.system, b.derived), {1e-5});
  EXPECT_TRUE(c.pass) << c.worst().field << " " << c.worst().max_rel;
}

TEST(CompareSnapshots, ReportsInjectedFault) {
  const Snapshot s = frame_snapshot();
  Snapshot t = s;
  const std::size_t k = s.size() - 17;
  t.vel[k].y += 1e-2f;
  // Order should not matter.
  std::reverse(t.id.begin(), t.id.end());
  std::reverse(t.kind.begin(), t.kind.end());
  std::reverse(t.pos.begin(), t.pos.end());
  std::reverse(t.vel.begin(), t.vel.end());
  std::reverse(t.rho.begin(), t.rho.end());
  std::reverse(t.press.begin(), t.press.end());
  const SnapshotComparison c = compare_snapshots(s, t, {1e-5});
  EXPECT_FALSE(c.pass);
  EXPECT_EQ(c.worst().field, "vy");
  EXPECT_EQ(c.worst().worst_id, s.id[k]);
  EXPECT_NEAR(c.worst().max_abs, 1e-2, 1e-6);
}

TEST(CompareSnapshots, MismatchedSetsThrow) {
  const Snapshot s = frame_snapshot();
  Snapshot t = s;
  t.id.pop_back();
  t.kind.pop_back();
  t.pos.pop_back();
  t.vel.pop_back();
  t.rho.pop_back();
  t.press.pop_back();
  EXPECT_THROW(compare_snapshots(s, t), std::invalid_argument);
  Snapshot u = s;
  u.id[0] = 999999;
  EXPECT_THROW(compare_snapshots(s, u), std::invalid_argument);
}

TEST(StatsStream, KeysInOrderAndRoundTrip) {
  StepStats s;
  s.step = 42;
  s.dt = 1.25e-4;
  s.wall_seconds = 0.5;
  s.candidate_pairs = 1234567;
  s.true_pairs = 654321;
  s.force_evals = 999;
  s.stage_nl_seconds = 0.1;
  s.stage_pi_seconds = 0.3;
  s.stage_su_seconds = 0.05;
  std::ostringstream os;
  write_stats_line(os, s);
  const std::string line = os.str();
  ASSERT_EQ(line.back(), '\n');
  std::size_t at = 0;
  for (const char* key : {"step", "dt", "wall_s", "candidate_pairs", "true_pairs", "force_evals", "stage_nl_s",
                          "stage_pi_s", "stage_su_s"}) {
    const std::size_t p = line.find('"' + std::string(key) + '"');
    ASSERT_NE(p, std::string::npos) << key;
    EXPECT_GT(p, at == 0 ? 0 : at) << key;
    at = p;
  }
  const StepStats r = parse_stats_line(line);
  EXPECT_EQ(r.step, 42u);
  EXPECT_EQ(r.dt, s.dt);
  EXPECT_EQ(r.candidate_pairs, s.candidate_pairs);
  EXPECT_EQ(r.stage_su_seconds, s.stage_su_seconds);
}

TEST(BenchReport, SpeedupsAreScaleFree) {
  std::vector<StepStats> a(5), b(5);
  for (int i = 0; i < 5; ++i) {
    a[i].wall_seconds = 0.2;
    b[i].wall_seconds = 0.05 + 0.01 * i;
  }
  BenchReport rep;
  rep.baseline = "a";
  rep.rows = {summarize("a", 10, a, 1), summarize("b", 10, b, 1)};
  rep.compute_speedups();
  EXPECT_EQ(rep.row("a").steps, 4u);
  EXPECT_DOUBLE_EQ(rep.row("a").steps_per_second, 5.0);
  const double sb = rep.row("b").speedup;
  EXPECT_NEAR(sb, (4.0 / (0.06 + 0.07 + 0.08 + 0.09)) / 5.0, 1e-12);

  for (auto* v : {&a, &b})
    for (auto& s : *v) s.wall_seconds *= 2.0;
  BenchReport doubled;
  doubled.baseline = "a";
  doubled.rows = {summarize("a", 10, a, 1), summarize("b", 10, b, 1)};
  doubled.compute_speedups();
  EXPECT_DOUBLE_EQ(doubled.row("b").speedup, sb);
  EXPECT_THROW(doubled.row("zzz"), std::out_of_range);
}

TEST(RunBenchmark, BaselineOnly) {
  const Scenario sc = desk_dam_break(0.02);
  const SimParams p = make_params(sc);
  const BenchReport rep =
      run_benchmark({parse_tag("cp-sym-l1-single-t1")}, build_dam_break(sc, p), p, "cp-sym-l1-single-t1",
                    {.steps = 3, .warmup = 1});
  ASSERT_EQ(rep.rows.size(), 1u);
  EXPECT_EQ(rep.rows[0].speedup, 1.0);
  EXPECT_EQ(rep.rows[0].steps, 3u);
}

TEST(RunBenchmark, SymmetryHalvesFluidFluidEvaluations) {
  const Scenario sc = desk_dam_break(0.02);
  const SimParams p = make_params(sc);
  const BenchReport rep =
      run_benchmark({parse_tag("cp-nosym-l1-single-t1"), parse_tag("cp-sym-l1-single-t1")}, build_dam_break(sc, p), p,
                    "cp-nosym-l1-single-t1", {.steps = 4, .warmup = 0});
  const BenchRow& off = rep.row("cp-nosym-l1-single-t1");
  const BenchRow& on = rep.row("cp-sym-l1-single-t1");
  ASSERT_GT(on.force_evals_ff, 0u);
  EXPECT_EQ(off.force_evals_ff, 2 * on.force_evals_ff);
  EXPECT_EQ(off.true_pairs, on.true_pairs);
  std::ostringstream csv, table;
  write_report_csv(csv, rep);
  write_report_table(table, rep);
  EXPECT_NE(csv.str().find("cp-sym-l1-single-t1,"), std::string::npos);
  EXPECT_NE(table.str().find("(baseline)"), std::string::npos);
}

TEST(RunBenchmark, Errors) {
  const Scenario sc = desk_dam_break(0.02);
  const SimParams p = make_params(sc);
  const ParticleSystem sys = build_dam_break(sc, p);
  EXPECT_THROW(run_benchmark({parse_tag("cp-sym-l1-single-t1")}, sys, p, "gather-fast-half-t1"), ConfigError);
  EXPECT_THROW(run_benchmark({}, sys, p, "x"), ConfigError);
  EngineConfig bad;
  bad.lane_batch = 3;
  EXPECT_THROW(run_benchmark({bad}, sys, p, "x"), ConfigError);
}
