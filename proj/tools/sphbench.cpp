// sphbench: run, benchmark and model the SPH force engines.
//
//   sphbench run   --dp 0.01 --engine cp-sym-l4-symmetric-t4 --steps 200 --out out/
//   sphbench bench --engines cp-nosym-l1-single-t1,cp-sym-l1-single-t1 --steps 20
//   sphbench occupancy --capability 1.3 --registers 35
//   sphbench mem --dp 0.005 --device gtx480

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sphperf/sphperf.hpp"

namespace fs = std::filesystem;
using namespace sphperf;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kDiverged = 2, kNotEquivalent = 3 };

struct EngineFlags {
  std::string engine = "cellpairs";
  std::string symmetry;
  int lanes = 1;
  int threads = 1;
  std::string threading = "single";
  std::string cells;
  std::string gather_variant;
  bool recompute = false;
};

void add_engine_flags(CLI::App& app, EngineFlags& f) {
  app.add_option("--engine", f.engine, "cellpairs, gather, or a full engine tag (e.g. cp-sym-l4-slices-t4)");
  app.add_option("--symmetry", f.symmetry, "on|off (cell-pairs only)")->check(CLI::IsMember({"on", "off"}));
  app.add_option("--lanes", f.lanes, "pair batch width")->check(CLI::IsMember({1, 4}));
  app.add_option("--threads", f.threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--threading", f.threading, "single|asymmetric|symmetric|slices")
      ->check(CLI::IsMember({"single", "asymmetric", "symmetric", "slices"}));
  app.add_option("--cells", f.cells, "cell size: h or h/2")->check(CLI::IsMember({"h", "h/2"}));
  app.add_option("--gather-variant", f.gather_variant, "fast-half|slow-half|slow-h")
      ->check(CLI::IsMember({"fast-half", "slow-half", "slow-h"}));
  app.add_flag("--recompute", f.recompute, "recompute pressure terms inside the force loop");
}

EngineConfig engine_from_flags(const EngineFlags& f) {
  if (f.engine.rfind("cp-", 0) == 0 || f.engine.rfind("gather-", 0) == 0) return parse_tag(f.engine);
  EngineConfig c;
  c.thread_count = f.threads;
  c.derived_mode = f.recompute ? DerivedMode::Recomputed : DerivedMode::Precomputed;
  if (f.engine == "gather") {
    c.engine = EngineKind::Gather;
    c.symmetry = f.symmetry == "on" ? Symmetry::On : Symmetry::Off;
    if (!f.gather_variant.empty()) {
      c.gather_variant = parse_gather_variant(f.gather_variant);
    } else if (f.cells == "h") {
      c.gather_variant = GatherVariant::SlowCellsH;
    }
    if (!f.cells.empty() && (f.cells == "h") != (c.gather_variant == GatherVariant::SlowCellsH))
      throw ConfigError("cells", "--cells contradicts --gather-variant");
    return validate(c);
  }
  if (f.engine != "cellpairs") throw ConfigError("engine", "unknown engine '" + f.engine + "'");
  c.engine = EngineKind::CellPairs;
  c.threading = parse_threading(f.threading);
  c.symmetry = f.symmetry == "off" || (f.symmetry.empty() && c.threading == Threading::Asymmetric) ? Symmetry::Off
                                                                                                    : Symmetry::On;
  if (c.threading == Threading::Asymmetric && f.symmetry == "on")
    throw ConfigError("symmetry", "asymmetric threading runs without symmetry");
  c.lane_batch = f.lanes;
  if (f.cells == "h") c.n_subdiv_override = 1;
  if (f.cells == "h/2") c.n_subdiv_override = 2;
  return validate(c);
}

struct CaseFlags {
  double dp = 0.01;
  double hdp = 2.0;
  bool hydrostatic = false;
};

void add_case_flags(CLI::App& app, CaseFlags& f) {
  app.add_option("--dp", f.dp, "initial particle spacing [m]")->check(CLI::PositiveNumber);
  app.add_option("--hdp", f.hdp, "smoothing length over dp")->check(CLI::PositiveNumber);
  app.add_flag("--hydrostatic", f.hydrostatic, "start the column in hydrostatic balance");
}

Scenario scenario_from(const CaseFlags& f) {
  Scenario s = desk_dam_break(f.dp);
  s.hydrostatic_init = f.hydrostatic;
  return s;
}

std::string snapshot_name(std::uint64_t step) {
  std::ostringstream os;
  os << "snapshot_" << std::setw(6) << std::setfill('0') << step << ".csv";
  return os.str();
}

int cmd_run(const CaseFlags& cf, const EngineFlags& ef, std::uint64_t steps, double tend, const std::string& out,
            std::uint64_t every) {
  const Scenario sc = scenario_from(cf);
  const SimParams params = make_params(sc, cf.hdp);
  const EngineConfig cfg = engine_from_flags(ef);
  const ParticleSystem sys = build_dam_break(sc, params);
  std::cout << "engine " << to_tag(cfg) << ", " << sys.count_fluid << " fluid + " << sys.count_boundary
            << " boundary particles, h " << params.h << ", c0 " << params.c0 << ", gamma " << params.gamma << '\n';

  std::ofstream stats_os;
  OutputSinks sinks;
  if (!out.empty()) {
    fs::create_directories(out);
    stats_os.open(fs::path(out) / "stats.jsonl");
    sinks.on_stats = [&](const StepStats& s) { write_stats_line(stats_os, s); };
    sinks.snapshot_every = every;
    sinks.on_snapshot = [&](std::uint64_t step, double, const ParticleSystem& p, const DerivedQuantities& d) {
      write_snapshot_file((fs::path(out) / snapshot_name(step)).string(), make_snapshot(p, d));
    };
  }
  const RunLimits limits{tend > 0.0 && steps == 0 ? ~std::uint64_t{0} : steps, tend};
  const RunResult r = run_simulation(sys, params, cfg, limits, sinks);

  double wall = 0.0, pi = 0.0;
  for (const auto& s : r.stats) {
    wall += s.wall_seconds;
    pi += s.stage_pi_seconds;
  }
  std::cout << r.steps << " steps, t = " << r.time << " s, " << (wall > 0 ? r.steps / wall : 0.0)
            << " steps/s, PI " << std::fixed << std::setprecision(1) << (wall > 0 ? 100.0 * pi / wall : 0.0)
            << "% of wall\n";
  return kOk;
}

std::vector<EngineConfig> default_matrix(int threads) {
  std::vector<std::string> tags = {"cp-nosym-l1-single-t1", "cp-sym-l1-single-t1", "cp-sym-l4-single-t1",
                                   "cp-sym-l4-single-t1-n1", "gather-fast-half-t1", "gather-slow-half-t1",
                                   "gather-slow-h-t1"};
  if (threads > 1) {
    const std::string t = std::to_string(threads);
    for (const char* mode : {"asymmetric", "symmetric", "slices"})
      tags.push_back(std::string("cp-") + (std::string(mode) == "asymmetric" ? "nosym" : "sym") + "-l4-" + mode +
                     "-t" + t);
    tags.push_back("gather-fast-half-t" + t);
  }
  std::vector<EngineConfig> m;
  for (const auto& t : tags) m.push_back(parse_tag(t));
  return m;
}

int cmd_bench(const CaseFlags& cf, const std::vector<std::string>& engines, int threads, std::string baseline,
              std::uint64_t steps, std::uint64_t warmup, bool verify, const std::string& out) {
  const Scenario sc = scenario_from(cf);
  const SimParams params = make_params(sc, cf.hdp);
  std::vector<EngineConfig> matrix;
  if (engines.empty()) {
    matrix = default_matrix(threads);
  } else {
    for (const auto& e : engines) matrix.push_back(parse_tag(e));
  }
  if (baseline.empty()) baseline = to_tag(matrix.front());
  BenchOptions opt;
  opt.steps = steps;
  opt.warmup = warmup;
  opt.verify = verify;
  const ParticleSystem sys = build_dam_break(sc, params);
  std::cout << sys.size() << " particles, " << steps << " measured steps after " << warmup << " warmup\n";
  const BenchReport rep = run_benchmark(matrix, sys, params, baseline, opt);
  write_report_table(std::cout, rep);
  if (!out.empty()) {
    fs::create_directories(out);
    std::ofstream os(fs::path(out) / "report.csv");
    write_report_csv(os, rep);
  }
  return kOk;
}

int cmd_occupancy(const std::string& cap, int regs, int block) {
  const DeviceSpec dev = device_spec(cap);
  if (block > 0) {
    const double occ = occupancy(regs, block, dev);
    std::cout << "capability " << dev.capability << ", " << regs << " registers, " << block << " threads: occupancy "
              << occ << " (" << std::lround(occ * 100) << "%)\n";
    return kOk;
  }
  std::cout << "threads,occupancy\n";
  for (int tpb = kWarpSize; tpb <= dev.max_threads_per_block; tpb += kWarpSize)
    std::cout << tpb << ',' << occupancy(regs, tpb, dev) << '\n';
  const BlockChoice best = best_block_size(regs, dev);
  std::cout << "best: " << best.threads_per_block << " threads, occupancy " << best.occupancy << '\n';
  return kOk;
}

int cmd_mem(const CaseFlags& cf, std::uint64_t base_cells, const std::string& device) {
  if (base_cells == 0) {
    const Scenario sc = scenario_from(cf);
    const GridGeometry g = make_grid_geometry(make_params(sc, cf.hdp), 1);
    base_cells = g.ncells();
    std::cout << "desk dam break at dp " << cf.dp << ": " << base_cells << " cells of size 2h\n";
  }
  std::cout << "n,cells,bytes_per_cell,bytes\n";
  for (int n : {1, 2})
    std::cout << n << ',' << base_cells * n * n * n << ',' << range_bytes_per_cell(n) << ','
              << estimate_range_memory(base_cells, n) << '\n';
  if (!device.empty()) {
    const DeviceMemory m = device_memory(device);
    for (int n : {1, 2}) {
      const auto bytes = estimate_range_memory(base_cells, n);
      std::cout << m.tag << " (" << m.usable_bytes / 1e9 << " GB usable): n=" << n << ' '
                << (bytes <= m.usable_bytes ? "fits" : "does not fit") << '\n';
    }
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SPH force-engine runner and benchmark"};
  app.set_config("--config", "", "key = value file mirroring flag names");
  app.require_subcommand(1);

  CaseFlags cf;
  EngineFlags ef;
  std::uint64_t steps = 100;
  std::uint64_t warmup = 2;
  std::uint64_t every = 0;
  double tend = 0.0;
  std::string out;
  std::string baseline;
  bool verify = false;
  std::vector<std::string> engines;
  std::string capability = "1.3";
  int registers = 35;
  int block = 0;
  std::uint64_t base_cells = 0;
  std::string device;

  auto* run = app.add_subcommand("run", "run one dam-break simulation");
  add_case_flags(*run, cf);
  add_engine_flags(*run, ef);
  run->add_option("--steps", steps, "number of steps (0 with --tend: until t_end)");
  run->add_option("--tend", tend, "stop at this physical time [s]");
  run->add_option("--out", out, "directory for stats.jsonl and snapshots");
  run->add_option("--snapshot-every", every, "steps between snapshots (0: none)");

  auto* bench = app.add_subcommand("bench", "benchmark a matrix of engines on the same initial state");
  add_case_flags(*bench, cf);
  bench->add_option("--engines", engines, "comma-separated engine tags")->delimiter(',');
  bench->add_option("--threads", ef.threads, "threads for the default matrix")->check(CLI::PositiveNumber);
  bench->add_option("--steps", steps, "measured steps per engine");
  bench->add_option("--warmup", warmup, "discarded steps per engine");
  bench->add_option("--baseline", baseline, "engine tag that speedups refer to (default: first)");
  bench->add_flag("--verify,!--no-verify", verify, "check cross-engine agreement before timing")
      ->default_val(true);
  bench->add_option("--out", out, "directory for report.csv");

  auto* occ = app.add_subcommand("occupancy", "analytic GPU occupancy");
  occ->add_option("--capability", capability, "1.0|1.1|1.2|1.3|2.x");
  occ->add_option("--registers", registers, "registers per thread")->check(CLI::PositiveNumber);
  occ->add_option("--block", block, "threads per block (omit for a sweep)");

  auto* mem = app.add_subcommand("mem", "memory needed by the interaction ranges");
  add_case_flags(*mem, cf);
  mem->add_option("--base-cells", base_cells, "cell count at cell size 2h (default: from --dp)");
  mem->add_option("--device", device, "annotate with a device capacity: gtx480|tesla1060")
      ->check(CLI::IsMember({"gtx480", "tesla1060"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (run->parsed()) return cmd_run(cf, ef, steps, tend, out, every);
    if (bench->parsed()) return cmd_bench(cf, engines, ef.threads, baseline, steps, warmup, verify, out);
    if (occ->parsed()) return cmd_occupancy(capability, registers, block);
    if (mem->parsed()) return cmd_mem(cf, base_cells, device);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const SimulationError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return kDiverged;
  } catch (const EquivalenceError& e) {
    std::cerr << "equivalence failure: " << e.what() << '\n';
    return kNotEquivalent;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
