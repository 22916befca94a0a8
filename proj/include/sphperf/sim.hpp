#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sphperf/engines.hpp"
#include "sphperf/grid.hpp"
#include "sphperf/model.hpp"
#include "sphperf/parallel.hpp"
#include "sphperf/physics.hpp"

namespace sphperf {

struct Box {
  Vec3d min;
  Vec3d max;

  Vec3d extent() const { return max - min; }
};

/// Dam-break geometry: an open-topped tank and the initial water column.
struct Scenario {
  Box tank;
  Box fill;
  double dp = 0.01;
  // A single layer of dynamic boundary particles lets fluid squeeze through
  // the walls once the front hits them; two hold it.
  int boundary_layers = 2;
  /// Start the column in hydrostatic equilibrium instead of uniform rho0.
  bool hydrostatic_init = false;
};

/// Desk-scale dam break: 0.3 x 0.2 x 0.25 m tank, 0.1 x 0.19 x 0.15 m column
/// against the x = 0 wall. About 2.9k fluid + 3.2k boundary particles at dp = 0.01.
inline Scenario desk_dam_break(double dp = 0.01) {
  Scenario s;
  s.tank = {{0.0, 0.0, 0.0}, {0.3, 0.2, 0.25}};
  s.fill = {{0.0, 0.0, 0.0}, {0.1, 0.19, 0.15}};
  s.dp = dp;
  return s;
}

namespace detail {

/// Whole spacings that fit in `length`, tolerant of round-off in length / dp.
inline long lattice_count(double length, double dp) { return static_cast<long>(std::floor(length / dp + 1e-6)); }

}  // namespace detail

inline void validate(const Scenario& s) {
  const Vec3d te = s.tank.extent();
  const Vec3d fe = s.fill.extent();
  if (!(s.dp > 0.0)) throw ConfigError("dp", "dp must be positive");
  if (!(te.x > 0 && te.y > 0 && te.z > 0)) throw ConfigError("tank", "tank must have positive extent");
  if (!(fe.x > 0 && fe.y > 0 && fe.z > 0)) throw ConfigError("fill", "fill box must have positive extent");
  if (s.dp > std::min({te.x, te.y, te.z, fe.x, fe.y, fe.z}))
    throw ConfigError("dp", "dp larger than a box dimension");
  if (!(s.fill.min.x >= s.tank.min.x && s.fill.min.y >= s.tank.min.y && s.fill.min.z >= s.tank.min.z &&
        s.fill.max.x < s.tank.max.x && s.fill.max.y < s.tank.max.y && s.fill.max.z < s.tank.max.z))
    throw ConfigError("fill", "fill box must lie inside the tank");
  if (s.boundary_layers < 1) throw ConfigError("boundary_layers", "boundary_layers must be >= 1");
}

/// Parameters for a scenario at a given h/dp ratio: c0 = 10 sqrt(g H) with H
/// the column height, domain = tank plus a margin of one kernel support (and
/// extra headroom above the open top).
inline SimParams make_params(const Scenario& s, double h_over_dp = 2.0, int n_subdiv = 2) {
  validate(s);
  SimParams p;
  p.dp = s.dp;
  p.h = h_over_dp * s.dp;
  p.n_subdiv = n_subdiv;
  const double height = s.fill.max.z - s.fill.min.z;
  p.c0 = 10.0 * std::sqrt(norm(p.g) * height);
  const double margin = p.support() + s.boundary_layers * s.dp;
  p.domain_min = s.tank.min - Vec3d{margin, margin, margin};
  p.domain_max = s.tank.max + Vec3d{margin, margin, std::max(margin, 0.5 * s.tank.extent().z)};
  return validate(p);
}

/// Expected boundary count: the layered lattice box minus the open interior.
inline std::size_t boundary_tile_count(const Scenario& s) {
  const long nx = detail::lattice_count(s.tank.extent().x, s.dp) + 1;
  const long ny = detail::lattice_count(s.tank.extent().y, s.dp) + 1;
  const long nz = detail::lattice_count(s.tank.extent().z, s.dp) + 1;
  const long e = s.boundary_layers - 1;
  return static_cast<std::size_t>((nx + 2 * e) * (ny + 2 * e) * (nz + e) - (nx - 2) * (ny - 2) * (nz - 1));
}

/// Cubic lattices for boundary (floor + four walls, `boundary_layers` thick,
/// growing outwards) and fluid (fill.min + k dp, k = 1..round(L/dp) per axis).
/// Boundary particles come first; both parts are ordered x fastest, then y, z.
inline ParticleSystem build_dam_break(const Scenario& s, const SimParams& params) {
  validate(s);
  const double dp = s.dp;
  const Vec3d te = s.tank.extent();
  const long nx = detail::lattice_count(te.x, dp) + 1;
  const long ny = detail::lattice_count(te.y, dp) + 1;
  const long nz = detail::lattice_count(te.z, dp) + 1;
  const long extra = s.boundary_layers - 1;

  std::vector<Vec3f> bpos;
  for (long k = -extra; k < nz; ++k)
    for (long j = -extra; j < ny + extra; ++j)
      for (long i = -extra; i < nx + extra; ++i) {
        const bool wall = i <= 0 || i >= nx - 1 || j <= 0 || j >= ny - 1 || k <= 0;
        if (!wall) continue;
        bpos.push_back(Vec3f(Vec3d{s.tank.min.x + i * dp, s.tank.min.y + j * dp, s.tank.min.z + k * dp}));
      }

  const Vec3d fe = s.fill.extent();
  const long fx = detail::lattice_count(fe.x, dp);
  const long fy = detail::lattice_count(fe.y, dp);
  const long fz = detail::lattice_count(fe.z, dp);
  std::vector<Vec3f> fpos;
  fpos.reserve(static_cast<std::size_t>(fx * fy * fz));
  for (long k = 1; k <= fz; ++k)
    for (long j = 1; j <= fy; ++j)
      for (long i = 1; i <= fx; ++i)
        fpos.push_back(Vec3f(Vec3d{s.fill.min.x + i * dp, s.fill.min.y + j * dp, s.fill.min.z + k * dp}));

  ParticleSystem sys;
  sys.resize(bpos.size(), fpos.size());
  std::copy(bpos.begin(), bpos.end(), sys.pos.begin());
  std::copy(fpos.begin(), fpos.end(), sys.pos.begin() + static_cast<std::ptrdiff_t>(bpos.size()));
  const float rho0 = static_cast<float>(params.rho0);
  std::fill(sys.rho.begin(), sys.rho.end(), rho0);
  for (std::size_t i = 0; i < sys.size(); ++i) sys.id[i] = static_cast<std::uint32_t>(i);
  sys.mass_fluid = static_cast<float>(params.rho0 * dp * dp * dp);
  sys.mass_boundary = sys.mass_fluid;

  if (s.hydrostatic_init) {
    const double surface = s.fill.min.z + fz * dp;
    const double b = params.c0 * params.c0 * params.rho0 / params.gamma;
    const double g = norm(params.g);
    for (std::size_t i = 0; i < sys.size(); ++i) {
      const Vec3f& p = sys.pos[i];
      const bool under_column = p.x >= s.fill.min.x - dp && p.x <= s.fill.max.x + dp && p.y >= s.fill.min.y - dp &&
                                p.y <= s.fill.max.y + dp;
      const double depth = surface - p.z;
      if (!under_column || depth <= 0.0) continue;
      sys.rho[i] = static_cast<float>(params.rho0 * std::pow(1.0 + params.rho0 * g * depth / b, 1.0 / params.gamma));
    }
  }
  return sys;
}

// ---------------------------------------------------------------------------
// Time step
// ---------------------------------------------------------------------------

struct DtTerms {
  double dt_force;       // min over fluid of sqrt(h / |f|)
  double dt_cv;          // min over particles of h / (c + max |mu|)
  double dt;             // cfl * min(...) clamped to [dt_min, dt_max]
};

inline DtTerms compute_dt_terms(const ForceOutput& forces, const ParticleSystem& sys, const DerivedQuantities& der,
                                const SimParams& params, int workers = 1) {
  constexpr double tiny = std::numeric_limits<float>::min();
  const double h = params.h;
  const std::size_t nb = sys.count_boundary;
  const double dt_f = chunked_min(
      sys.count_fluid,
      [&](std::size_t i) {
        const Vec3d f = forces.accel[nb + i] + params.g;
        return std::sqrt(h / std::max(norm(f), tiny));
      },
      workers);
  const double dt_cv = chunked_min(
      sys.size(),
      [&](std::size_t i) {
        const double denom = static_cast<double>(der.csound[i]) + static_cast<double>(forces.mu_max[i]);
        return h / std::max(denom, tiny);
      },
      workers);
  double dt = params.cfl * std::min(dt_f, dt_cv);
  if (!std::isfinite(dt)) dt = params.dt_max;
  return {dt_f, dt_cv, std::clamp(dt, params.dt_min, params.dt_max)};
}

inline double compute_dt(const ForceOutput& forces, const ParticleSystem& sys, const DerivedQuantities& der,
                         const SimParams& params, int workers = 1) {
  return compute_dt_terms(forces, sys, der, params, workers).dt;
}

// ---------------------------------------------------------------------------
// Verlet integration
// ---------------------------------------------------------------------------

/// Values one accepted step old, used by the two-step Verlet update.
struct VerletState {
  std::vector<Vec3f> vel_prev;
  std::vector<float> rho_prev;
  std::uint64_t step = 0;
  int corrector_stride = 40;

  static VerletState start(const ParticleSystem& sys, int stride) {
    return {sys.vel, sys.rho, 0, stride};
  }

  void permute_with(std::span<const std::uint32_t> perm) {
    vel_prev = permute(vel_prev, perm);
    rho_prev = permute(rho_prev, perm);
  }

  bool corrector_step() const { return step % static_cast<std::uint64_t>(corrector_stride) == 0; }
};

/// Fluid: v+ = v- + 2 dt a, r+ = r + dt v + dt^2 a / 2, rho+ = rho- + 2 dt drho,
/// with a including gravity. Every corrector_stride steps the single-step
/// form (v+ = v + dt a, rho+ = rho + dt drho) replaces it. Boundary particles
/// keep position and velocity; only their density is integrated.
inline void verlet_update(ParticleSystem& sys, VerletState& vs, const ForceOutput& forces, double dt,
                          const Vec3d& gravity) {
  if (!(dt > 0.0)) throw std::invalid_argument("verlet_update: dt must be positive");
  const bool single = vs.corrector_step();
  const double dt2 = single ? dt : 2.0 * dt;
  for (std::size_t i = 0; i < sys.size(); ++i) {
    const double rho_base = single ? sys.rho[i] : vs.rho_prev[i];
    const double rho_new = rho_base + dt2 * forces.drho_dt[i];
    vs.rho_prev[i] = sys.rho[i];
    sys.rho[i] = static_cast<float>(rho_new);
    if (!sys.is_fluid(i)) continue;
    const Vec3d a = forces.accel[i] + gravity;
    const Vec3d v(sys.vel[i]);
    const Vec3d v_base = single ? v : Vec3d(vs.vel_prev[i]);
    const Vec3d r = Vec3d(sys.pos[i]) + v * dt + a * (0.5 * dt * dt);
    vs.vel_prev[i] = sys.vel[i];
    sys.vel[i] = Vec3f(v_base + a * dt2);
    sys.pos[i] = Vec3f(r);
  }
  ++vs.step;
}

// ---------------------------------------------------------------------------
// Simulation loop
// ---------------------------------------------------------------------------

class SimulationError : public std::runtime_error {
 public:
  enum class Kind { OutOfDomain, NonFinite };

  SimulationError(Kind kind, std::uint64_t step, std::uint32_t particle_id, const std::string& what)
      : std::runtime_error(what), kind_(kind), step_(step), particle_id_(particle_id) {}

  Kind kind() const noexcept { return kind_; }
  std::uint64_t step() const noexcept { return step_; }
  std::uint32_t particle_id() const noexcept { return particle_id_; }

 private:
  Kind kind_;
  std::uint64_t step_;
  std::uint32_t particle_id_;
};

struct RunLimits {
  std::uint64_t max_steps = 0;
  double t_end = 0.0;  // <= 0: no time limit
};

struct OutputSinks {
  std::uint64_t snapshot_every = 0;  // 0: no snapshots
  std::function<void(std::uint64_t step, double time, const ParticleSystem&, const DerivedQuantities&)> on_snapshot;
  std::function<void(const StepStats&)> on_stats;
};

struct RunResult {
  ParticleSystem system;
  DerivedQuantities derived;
  std::vector<StepStats> stats;
  double time = 0.0;
  std::uint64_t steps = 0;
};

namespace detail {

inline double since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline void check_finite(const ParticleSystem& sys, std::uint64_t step) {
  for (std::size_t i = 0; i < sys.size(); ++i) {
    if (!isfinite(sys.pos[i]) || !isfinite(sys.vel[i]) || !std::isfinite(sys.rho[i]) || !(sys.rho[i] > 0.0f))
      throw SimulationError(SimulationError::Kind::NonFinite, step, sys.id[i],
                            "non-finite or non-positive state at step " + std::to_string(step) + ", particle id " +
                                std::to_string(sys.id[i]));
  }
}

}  // namespace detail

/// Neighbour structures for one step: assign cells, reorder (system, derived
/// and Verlet history together), build CellBeginEnd and, when asked, ranges.
struct NeighborStage {
  NeighborGrid grid;
  std::optional<NeighborRanges> ranges;
};

inline NeighborStage build_neighbor_stage(ParticleSystem& sys, DerivedQuantities& der, VerletState* vs,
                                          const GridGeometry& geom, bool with_ranges, std::uint64_t step = 0) {
  const CellGrid cells = assign_cells(sys.pos, geom);
  if (!cells.all_inside()) {
    const std::uint32_t id = sys.id[cells.out_of_domain.front()];
    throw SimulationError(SimulationError::Kind::OutOfDomain, step, id,
                          "particle id " + std::to_string(id) + " left the domain at step " + std::to_string(step));
  }
  ReorderResult r = reorder(sys, cells, &der);
  sys = std::move(r.system);
  der = std::move(r.derived);
  if (vs != nullptr) vs->permute_with(r.sort_perm);
  NeighborStage st;
  st.grid = build_neighbor_grid(geom, r.sorted_cells, sys.count_boundary);
  if (with_ranges) st.ranges = build_ranges(st.grid, geom.reach);
  return st;
}

/// NL -> PI -> SU loop. Every step re-sorts particles by cell, computes
/// forces with the configured engine, picks dt and advances with Verlet.
/// Throws SimulationError when a particle leaves the domain or the state
/// stops being finite.
inline RunResult run_simulation(ParticleSystem initial, const SimParams& params_in, const EngineConfig& config,
                                const RunLimits& limits, const OutputSinks& sinks = {}) {
  using clock = std::chrono::steady_clock;
  const SimParams params = validate(params_in);
  initial.check();
  ForceEngine engine(config);
  const PhysicsConstants k = PhysicsConstants::from(params);
  const GridGeometry geom = make_grid_geometry(params, engine.subdivision(params));
  const int workers = engine.config().thread_count;

  RunResult res;
  res.system = std::move(initial);
  detail::check_finite(res.system, 0);
  compute_derived(res.system, k, res.derived);
  VerletState vs = VerletState::start(res.system, params.verlet_corrector_stride);

  if (sinks.on_snapshot && sinks.snapshot_every > 0) sinks.on_snapshot(0, 0.0, res.system, res.derived);

  for (std::uint64_t step = 0; step < limits.max_steps; ++step) {
    if (limits.t_end > 0.0 && res.time >= limits.t_end) break;
    const auto t0 = clock::now();

    NeighborStage nl = build_neighbor_stage(res.system, res.derived, &vs, geom, engine.needs_ranges(), step);
    const auto t1 = clock::now();

    ForceOutput forces =
        engine.compute(res.system, res.derived, nl.grid, nl.ranges ? &*nl.ranges : nullptr, k);
    const auto t2 = clock::now();

    const double dt = compute_dt(forces, res.system, res.derived, params, workers);
    verlet_update(res.system, vs, forces, dt, params.g);
    compute_derived(res.system, k, res.derived);
    detail::check_finite(res.system, step);
    res.time += dt;
    const auto t3 = clock::now();

    StepStats s = std::move(forces.stats);
    s.step = step;
    s.dt = dt;
    s.stage_nl_seconds = std::chrono::duration<double>(t1 - t0).count();
    s.stage_pi_seconds = std::chrono::duration<double>(t2 - t1).count();
    s.stage_su_seconds = std::chrono::duration<double>(t3 - t2).count();
    if (sinks.on_snapshot && sinks.snapshot_every > 0 && (step + 1) % sinks.snapshot_every == 0)
      sinks.on_snapshot(step + 1, res.time, res.system, res.derived);
    res.stats.push_back(std::move(s));
    StepStats& rec = res.stats.back();
    const auto t4 = clock::now();
    rec.bookkeeping_seconds = std::chrono::duration<double>(t4 - t3).count();
    rec.wall_seconds = std::chrono::duration<double>(t4 - t0).count();
    if (sinks.on_stats) sinks.on_stats(rec);
    res.steps = step + 1;
  }
  return res;
}

inline RunResult run_simulation(const Scenario& scenario, const SimParams& params, const EngineConfig& config,
                                const RunLimits& limits, const OutputSinks& sinks = {}) {
  return run_simulation(build_dam_break(scenario, params), params, config, limits, sinks);
}

}  // namespace sphperf
