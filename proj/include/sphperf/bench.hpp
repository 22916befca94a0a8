#pragma once

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sphperf/engine_config.hpp"
#include "sphperf/occupancy.hpp"
#include "sphperf/sim.hpp"
#include "sphperf/snapshot.hpp"

namespace sphperf {

struct BenchRow {
  std::string tag;
  std::size_t particles = 0;
  std::uint64_t steps = 0;         // measured steps, warmup excluded
  double wall_seconds = 0.0;
  double steps_per_second = 0.0;
  double speedup = 0.0;
  std::uint64_t candidate_pairs = 0;
  std::uint64_t true_pairs = 0;
  std::uint64_t force_evals = 0;
  std::uint64_t force_evals_ff = 0;
  std::uint64_t force_evals_fb = 0;
  std::uint64_t force_evals_bf = 0;
  double stage_nl_seconds = 0.0;
  double stage_pi_seconds = 0.0;
  double stage_su_seconds = 0.0;
};

struct BenchReport {
  std::string baseline;
  std::vector<BenchRow> rows;

  const BenchRow& row(const std::string& tag) const {
    for (const auto& r : rows)
      if (r.tag == tag) return r;
    throw std::out_of_range("no benchmark row '" + tag + "'");
  }

  /// speedup = steps/s of a row over steps/s of the baseline row.
  void compute_speedups() {
    const double base = row(baseline).steps_per_second;
    for (auto& r : rows) r.speedup = base > 0.0 ? r.steps_per_second / base : 0.0;
  }
};

/// Aggregates measured steps into a row; steps_per_second = steps / sum(wall).
inline BenchRow summarize(const std::string& tag, std::size_t particles, const std::vector<StepStats>& stats,
                          std::size_t warmup) {
  BenchRow r;
  r.tag = tag;
  r.particles = particles;
  for (std::size_t i = std::min(warmup, stats.size()); i < stats.size(); ++i) {
    const StepStats& s = stats[i];
    ++r.steps;
    r.wall_seconds += s.wall_seconds;
    r.candidate_pairs += s.candidate_pairs;
    r.true_pairs += s.true_pairs;
    r.force_evals += s.force_evals;
    r.force_evals_ff += s.force_evals_ff;
    r.force_evals_fb += s.force_evals_fb;
    r.force_evals_bf += s.force_evals_bf;
    r.stage_nl_seconds += s.stage_nl_seconds;
    r.stage_pi_seconds += s.stage_pi_seconds;
    r.stage_su_seconds += s.stage_su_seconds;
  }
  r.steps_per_second = r.wall_seconds > 0.0 ? static_cast<double>(r.steps) / r.wall_seconds : 0.0;
  return r;
}

class EquivalenceError : public std::runtime_error {
 public:
  EquivalenceError(std::string tag, FieldDiff worst)
      : std::runtime_error("engine " + tag + " disagrees with the baseline: field " + worst.field + " rel " +
                           std::to_string(worst.max_rel) + " at particle id " + std::to_string(worst.worst_id)),
        tag_(std::move(tag)),
        worst_(std::move(worst)) {}

  const std::string& tag() const noexcept { return tag_; }
  const FieldDiff& worst() const noexcept { return worst_; }

 private:
  std::string tag_;
  FieldDiff worst_;
};

struct BenchOptions {
  std::uint64_t steps = 20;
  std::uint64_t warmup = 2;
  bool verify = true;
  /// Steps after which end states are compared. Kept short: float round-off
  /// legitimately separates engines over long free-surface runs.
  std::uint64_t verify_steps = 1;
  SnapshotTolerance tolerance{1e-4};
};

/// Runs every configuration, one after the other, from the same initial state.
/// With verify on, each configuration's state after verify_steps is compared
/// with the baseline's before any timing is reported.
inline BenchReport run_benchmark(const std::vector<EngineConfig>& matrix, const ParticleSystem& initial,
                                 const SimParams& params, const std::string& baseline_tag,
                                 const BenchOptions& opt = {}) {
  if (matrix.empty()) throw ConfigError("matrix", "benchmark matrix is empty");
  std::vector<std::string> tags;
  for (const auto& c : matrix) tags.push_back(to_tag(validate(c)));
  const auto base_it = std::find(tags.begin(), tags.end(), baseline_tag);
  if (base_it == tags.end()) throw ConfigError("baseline", "baseline '" + baseline_tag + "' is not in the matrix");

  if (opt.verify) {
    const std::size_t b = static_cast<std::size_t>(base_it - tags.begin());
    const RunResult ref = run_simulation(initial, params, matrix[b], {opt.verify_steps});
    const Snapshot ref_snap = make_snapshot(ref.system, ref.derived);
    for (std::size_t i = 0; i < matrix.size(); ++i) {
      if (i == b) continue;
      const RunResult r = run_simulation(initial, params, matrix[i], {opt.verify_steps});
      const SnapshotComparison cmp = compare_snapshots(ref_snap, make_snapshot(r.system, r.derived), opt.tolerance);
      if (!cmp.pass) throw EquivalenceError(tags[i], cmp.worst());
    }
  }

  BenchReport rep;
  rep.baseline = baseline_tag;
  for (std::size_t i = 0; i < matrix.size(); ++i) {
    const RunResult r = run_simulation(initial, params, matrix[i], {opt.warmup + opt.steps});
    rep.rows.push_back(summarize(tags[i], initial.size(), r.stats, opt.warmup));
  }
  rep.compute_speedups();
  return rep;
}

inline void write_report_csv(std::ostream& os, const BenchReport& rep) {
  os << "engine,particles,steps,wall_s,steps_per_s,speedup,candidate_pairs,true_pairs,force_evals,"
        "force_evals_ff,force_evals_fb,force_evals_bf,stage_nl_s,stage_pi_s,stage_su_s\n";
  for (const auto& r : rep.rows) {
    os << r.tag << ',' << r.particles << ',' << r.steps << ',' << r.wall_seconds << ',' << r.steps_per_second << ','
       << r.speedup << ',' << r.candidate_pairs << ',' << r.true_pairs << ',' << r.force_evals << ','
       << r.force_evals_ff << ',' << r.force_evals_fb << ',' << r.force_evals_bf << ',' << r.stage_nl_seconds << ','
       << r.stage_pi_seconds << ',' << r.stage_su_seconds << '\n';
  }
}

inline void write_report_table(std::ostream& os, const BenchReport& rep) {
  std::size_t w = 6;
  for (const auto& r : rep.rows) w = std::max(w, r.tag.size());
  const auto flags = os.flags();
  os << std::left << std::setw(static_cast<int>(w)) << "engine" << std::right << std::setw(10) << "steps/s"
     << std::setw(9) << "speedup" << std::setw(8) << "PI %" << std::setw(16) << "force evals" << '\n';
  for (const auto& r : rep.rows) {
    const double pi = r.wall_seconds > 0.0 ? 100.0 * r.stage_pi_seconds / r.wall_seconds : 0.0;
    os << std::left << std::setw(static_cast<int>(w)) << r.tag << std::right << std::fixed << std::setprecision(2)
       << std::setw(10) << r.steps_per_second << std::setw(9) << r.speedup << std::setw(8) << std::setprecision(1)
       << pi << std::setw(16) << r.force_evals << (r.tag == rep.baseline ? "  (baseline)" : "") << '\n';
  }
  os.flags(flags);
}

}  // namespace sphperf
