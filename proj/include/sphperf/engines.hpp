#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "sphperf/engine_config.hpp"
#include "sphperf/grid.hpp"
#include "sphperf/model.hpp"
#include "sphperf/parallel.hpp"
#include "sphperf/physics.hpp"

namespace sphperf {

/// Result of one force pass. Gravity is not included in accel; boundary
/// particles keep accel = 0 and only accumulate drho_dt. All engines
/// accumulate in double precision.
struct ForceOutput {
  std::vector<Vec3d> accel;
  std::vector<double> drho_dt;
  std::vector<float> mu_max;  // per particle, max |mu_ab| over its neighbours
  StepStats stats;
};

/// Full-length accumulator set; one per thread under Symmetric threading.
struct Accumulator {
  std::vector<Vec3d> accel;
  std::vector<double> drho;
  std::vector<float> mu;

  Accumulator() = default;
  explicit Accumulator(std::size_t n) { reset(n); }

  void reset(std::size_t n) {
    accel.assign(n, Vec3d{});
    drho.assign(n, 0.0);
    mu.assign(n, 0.0f);
  }
  std::size_t size() const { return accel.size(); }
};

/// Elementwise sum of per-thread accumulators (max for mu), added in thread
/// order so the result only depends on the number of parts. The index range is
/// split across `workers` threads.
inline Accumulator merge_accumulators(std::span<const Accumulator> parts, int workers = 1) {
  if (parts.empty()) return {};
  const std::size_t n = parts.front().size();
  for (const Accumulator& p : parts)
    if (p.size() != n || p.drho.size() != n || p.mu.size() != n)
      throw std::invalid_argument("merge_accumulators: length mismatch");
  Accumulator out(n);
  const int w = std::max(1, std::min<int>(workers, static_cast<int>(std::max<std::size_t>(n, 1))));
  run_workers(w, [&](int t) {
    const auto [begin, end] = split_range(n, w, t);
    for (std::size_t i = begin; i < end; ++i) {
      Vec3d a = parts[0].accel[i];
      double d = parts[0].drho[i];
      float m = parts[0].mu[i];
      for (std::size_t p = 1; p < parts.size(); ++p) {
        a += parts[p].accel[i];
        d += parts[p].drho[i];
        m = std::max(m, parts[p].mu[i]);
      }
      out.accel[i] = a;
      out.drho[i] = d;
      out.mu[i] = m;
    }
  });
  return out;
}

/// Evenly spaced slab bounds over ncells_x cells: slices + 1 entries.
inline std::vector<std::uint32_t> uniform_slices(std::uint32_t ncells_x, int slices) {
  if (slices < 1 || ncells_x < static_cast<std::uint32_t>(slices))
    throw std::invalid_argument("uniform_slices: fewer cells than slices");
  std::vector<std::uint32_t> b(static_cast<std::size_t>(slices) + 1);
  for (int s = 0; s <= slices; ++s) b[s] = static_cast<std::uint32_t>(split_range(ncells_x, slices, s).first);
  b[slices] = ncells_x;
  return b;
}

/// Moves slab boundaries so the predicted time per slab is equal. Each slab's
/// measured time is spread uniformly over its cells; the new boundary k sits
/// where the cumulative time reaches k/S of the total, rounded to a whole
/// cell, then clamped so every slab keeps at least one cell.
inline std::vector<std::uint32_t> rebalance_slices(std::span<const std::uint32_t> bounds,
                                                   std::span<const double> times) {
  if (bounds.size() < 2) throw std::invalid_argument("rebalance_slices: need at least one slice");
  const std::size_t slices = bounds.size() - 1;
  if (times.size() != slices) throw std::invalid_argument("rebalance_slices: one time per slice required");
  for (std::size_t s = 0; s < slices; ++s)
    if (bounds[s + 1] <= bounds[s]) throw std::invalid_argument("rebalance_slices: bounds must increase");
  const std::uint32_t total_cells = bounds.back() - bounds.front();
  if (total_cells < slices) throw std::invalid_argument("rebalance_slices: fewer cells than slices");

  std::vector<double> t(slices);
  double total = 0.0;
  for (std::size_t s = 0; s < slices; ++s) {
    t[s] = std::isfinite(times[s]) && times[s] > 0.0 ? times[s] : 1e-12;
    total += t[s];
  }

  std::vector<std::uint32_t> out(bounds.begin(), bounds.end());
  std::size_t s = 0;
  double before = 0.0;  // cumulative time of slabs [0, s)
  for (std::size_t k = 1; k < slices; ++k) {
    const double target = total * static_cast<double>(k) / static_cast<double>(slices);
    while (s < slices - 1 && before + t[s] < target) before += t[s++];
    const double width = bounds[s + 1] - bounds[s];
    const double x = bounds[s] + width * std::clamp((target - before) / t[s], 0.0, 1.0);
    out[k] = static_cast<std::uint32_t>(std::lround(x));
  }
  for (std::size_t k = 1; k < slices; ++k) out[k] = std::max(out[k], out[k - 1] + 1);
  for (std::size_t k = slices - 1; k >= 1; --k) {
    out[k] = std::min(out[k], out[k + 1] - 1);
    if (k == 1) break;
  }
  return out;
}

/// Persistent slab layout for Slices threading.
struct SliceState {
  std::vector<std::uint32_t> bounds;
  std::array<std::uint32_t, 3> dims{0, 0, 0};
};

namespace detail {

struct Counters {
  std::uint64_t candidate_halves = 0;
  std::uint64_t true_halves = 0;
  std::uint64_t evals = 0;
  std::uint64_t ff = 0;
  std::uint64_t fb = 0;
  std::uint64_t bf = 0;

  Counters& operator+=(const Counters& o) {
    candidate_halves += o.candidate_halves;
    true_halves += o.true_halves;
    evals += o.evals;
    ff += o.ff;
    fb += o.fb;
    bf += o.bf;
    return *this;
  }
};

struct ForceContext {
  const ParticleSystem& sys;
  const DerivedQuantities& der;
  const NeighborGrid& ng;
  const PhysicsConstants& k;
  DerivedMode mode;
  bool ff_only;

  PairInput load(std::uint32_t i) const {
    PairInput p;
    p.pos = sys.pos[i];
    p.vel = sys.vel[i];
    p.rho = sys.rho[i];
    p.press = der.press[i];
    p.mass = sys.mass(i);
    if (mode == DerivedMode::Precomputed) {
      p.csound = der.csound[i];
      p.prrho = der.prrho[i];
      p.tensil = der.tensil[i];
    } else {
      const DerivedAt d = derive(p.rho, p.press, k);
      p.csound = d.csound;
      p.prrho = d.prrho;
      p.tensil = d.tensil;
    }
    return p;
  }

  bool within(const Vec3f& a, std::uint32_t j) const { return norm2(a - sys.pos[j]) < k.support2; }
};

// Lane-parallel evaluation of up to L queued pairs. Each lane follows the
// scalar pair function operation for operation; both kernel branches are
// computed for every lane and blended.
template <int L>
struct PackTerms {
  float gx[L], gy[L], gz[L];
  float scale[L];
  float dv_grad[L];
  float mu[L];
};

template <int L>
inline void evaluate_pack(const PairInput* a, const PairInput* b, const PhysicsConstants& k, PackTerms<L>& out) {
  float dx[L], dy[L], dz[L], r2[L], r[L], q[L];
  for (int l = 0; l < L; ++l) {
    dx[l] = a[l].pos.x - b[l].pos.x;
    dy[l] = a[l].pos.y - b[l].pos.y;
    dz[l] = a[l].pos.z - b[l].pos.z;
    r2[l] = dx[l] * dx[l] + dy[l] * dy[l] + dz[l] * dz[l];
  }
  for (int l = 0; l < L; ++l) {
    r[l] = std::sqrt(r2[l]);
    q[l] = r[l] * k.kernel.inv_h;
  }
  float fac[L], w[L];
  for (int l = 0; l < L; ++l) {
    const float t = 2.0f - q[l];
    const float fac_near = k.kernel.norm_grad * k.kernel.inv_h * (-3.0f + 2.25f * q[l]);
    const float fac_far = -k.kernel.norm_grad * 0.75f * t * t / r[l];
    const float w_near = k.kernel.norm_w * (1.0f - 1.5f * q[l] * q[l] + 0.75f * q[l] * q[l] * q[l]);
    const float w_far = k.kernel.norm_w * 0.25f * t * t * t;
    const bool near = q[l] < 1.0f;
    const bool inside = q[l] < 2.0f;
    fac[l] = near ? fac_near : (inside ? fac_far : 0.0f);
    w[l] = near ? w_near : (inside ? w_far : 0.0f);
  }
  for (int l = 0; l < L; ++l) {
    out.gx[l] = dx[l] * fac[l];
    out.gy[l] = dy[l] * fac[l];
    out.gz[l] = dz[l] * fac[l];
    const float dvx = a[l].vel.x - b[l].vel.x;
    const float dvy = a[l].vel.y - b[l].vel.y;
    const float dvz = a[l].vel.z - b[l].vel.z;
    const float vdotr = dvx * dx[l] + dvy * dy[l] + dvz * dz[l];
    const float mu = k.kernel.h * vdotr / (r2[l] + k.eta2);
    const float cbar = 0.5f * (a[l].csound + b[l].csound);
    const float rhobar = 0.5f * (a[l].rho + b[l].rho);
    const float visc = vdotr < 0.0f ? -k.alpha * cbar * mu / rhobar : 0.0f;
    const float f = w[l] * k.inv_w_dp;
    const float f2 = f * f;
    const float tensile = (a[l].tensil + b[l].tensil) * (f2 * f2);
    out.scale[l] = a[l].prrho + b[l].prrho + visc + tensile;
    out.dv_grad[l] = dvx * out.gx[l] + dvy * out.gy[l] + dvz * out.gz[l];
    out.mu[l] = std::abs(mu);
  }
}

/// Evaluates true pairs and scatters them into an accumulator. Lanes = 1
/// evaluates each pair immediately; Lanes = 4 queues pairs and evaluates them
/// as a pack.
template <int Lanes>
class Evaluator {
 public:
  Evaluator(const ForceContext& ctx, Accumulator& acc, Counters& cnt) : ctx_(ctx), acc_(acc), cnt_(cnt) {}

  // -- two-sided: a is fluid, b either kind ---------------------------------
  void pair(std::uint32_t a, const PairInput& A, std::uint32_t b, const PairInput& B) {
    cnt_.evals++;
    if (ctx_.sys.is_fluid(b)) {
      cnt_.ff++;
    } else {
      cnt_.fb++;
    }
    if constexpr (Lanes == 1) {
      scatter(a, b, pair_interaction(A, B, ctx_.k));
    } else {
      qa_[n_] = A;
      qb_[n_] = B;
      ia_[n_] = a;
      ib_[n_] = b;
      if (++n_ == Lanes) flush();
    }
  }

  void flush() {
    if constexpr (Lanes > 1) {
      if (n_ == 0) return;
      for (int l = n_; l < Lanes; ++l) {  // pad with a harmless copy of lane 0
        qa_[l] = qa_[0];
        qb_[l] = qb_[0];
      }
      PackTerms<Lanes> t;
      evaluate_pack<Lanes>(qa_, qb_, ctx_.k, t);
      for (int l = 0; l < n_; ++l) {
        const Vec3f grad{t.gx[l], t.gy[l], t.gz[l]};
        PairContribution c;
        c.accel_on_a = grad * (-qb_[l].mass * t.scale[l]);
        c.drho_dt_on_a = qb_[l].mass * t.dv_grad[l];
        c.accel_on_b = qa_[l].mass == qb_[l].mass ? -c.accel_on_a : -(c.accel_on_a * (qa_[l].mass / qb_[l].mass));
        c.drho_dt_on_b = qa_[l].mass == qb_[l].mass ? c.drho_dt_on_a : qa_[l].mass * t.dv_grad[l];
        c.mu = t.mu[l];
        scatter(ia_[l], ib_[l], c);
      }
      n_ = 0;
    }
  }

  // -- one-sided: contributions on a target only ----------------------------
  void begin_target(std::uint32_t a, const PairInput& A) {
    target_ = a;
    target_in_ = A;
    local_accel_ = {};
    local_drho_ = 0.0;
    local_mu_ = 0.0f;
    if constexpr (Lanes > 1) {
      for (int l = 0; l < Lanes; ++l) {
        lane_accel_[l] = {};
        lane_drho_[l] = 0.0;
      }
    }
  }

  void neighbor(std::uint32_t b, const PairInput& B) {
    cnt_.evals++;
    const bool a_fluid = ctx_.sys.is_fluid(target_);
    if (!a_fluid) {
      cnt_.bf++;
    } else if (ctx_.sys.is_fluid(b)) {
      cnt_.ff++;
    } else {
      cnt_.fb++;
    }
    if constexpr (Lanes == 1) {
      const OneSidedContribution c = pair_interaction_on_a(target_in_, B, ctx_.k);
      local_accel_ += Vec3d(c.accel);
      local_drho_ += c.drho_dt;
      local_mu_ = std::max(local_mu_, c.mu);
    } else {
      qb_[n_] = B;
      if (++n_ == Lanes) flush_one_sided();
    }
  }

  void end_target() {
    if constexpr (Lanes > 1) {
      flush_one_sided();
      for (int l = 0; l < Lanes; ++l) {
        local_accel_ += lane_accel_[l];
        local_drho_ += lane_drho_[l];
      }
    }
    if (ctx_.sys.is_fluid(target_)) acc_.accel[target_] += local_accel_;
    acc_.drho[target_] += local_drho_;
    acc_.mu[target_] = std::max(acc_.mu[target_], local_mu_);
  }

 private:
  void scatter(std::uint32_t a, std::uint32_t b, const PairContribution& c) {
    acc_.accel[a] += Vec3d(c.accel_on_a);
    acc_.drho[a] += c.drho_dt_on_a;
    acc_.mu[a] = std::max(acc_.mu[a], c.mu);
    if (ctx_.sys.is_fluid(b)) acc_.accel[b] += Vec3d(c.accel_on_b);
    acc_.drho[b] += c.drho_dt_on_b;
    acc_.mu[b] = std::max(acc_.mu[b], c.mu);
  }

  void flush_one_sided() {
    if constexpr (Lanes > 1) {
      if (n_ == 0) return;
      for (int l = 0; l < Lanes; ++l) qa_[l] = target_in_;
      for (int l = n_; l < Lanes; ++l) qb_[l] = qb_[0];
      PackTerms<Lanes> t;
      evaluate_pack<Lanes>(qa_, qb_, ctx_.k, t);
      for (int l = 0; l < n_; ++l) {
        const Vec3f grad{t.gx[l], t.gy[l], t.gz[l]};
        lane_accel_[l] += Vec3d(grad * (-qb_[l].mass * t.scale[l]));
        lane_drho_[l] += qb_[l].mass * t.dv_grad[l];
        local_mu_ = std::max(local_mu_, t.mu[l]);
      }
      n_ = 0;
    }
  }

  const ForceContext& ctx_;
  Accumulator& acc_;
  Counters& cnt_;

  std::uint32_t target_ = 0;
  PairInput target_in_{};
  Vec3d local_accel_{};
  double local_drho_ = 0.0;
  float local_mu_ = 0.0f;

  int n_ = 0;
  PairInput qa_[Lanes]{};
  PairInput qb_[Lanes]{};
  std::uint32_t ia_[Lanes]{};
  std::uint32_t ib_[Lanes]{};
  Vec3d lane_accel_[Lanes]{};
  double lane_drho_[Lanes]{};
};

// ---------------------------------------------------------------------------
// Cell-level traversal pieces
// ---------------------------------------------------------------------------

// Ordered pairs j > i inside one cell.
template <int L>
void symmetric_self(const ForceContext& ctx, Evaluator<L>& ev, Counters& cnt, CellIndex c) {
  const CellRange F = ctx.ng.fluid[c];
  const CellRange B = ctx.ng.boundary[c];
  for (std::uint32_t i = F.begin; i < F.end; ++i) {
    const Vec3f pi = ctx.sys.pos[i];
    bool loaded = false;
    PairInput A;
    const auto ensure = [&]() {
      if (!loaded) {
        A = ctx.load(i);
        loaded = true;
      }
    };
    for (std::uint32_t j = i + 1; j < F.end; ++j) {
      cnt.candidate_halves += 2;
      if (!ctx.within(pi, j)) continue;
      cnt.true_halves += 2;
      ensure();
      ev.pair(i, A, j, ctx.load(j));
    }
    if (ctx.ff_only) continue;
    for (std::uint32_t j = B.begin; j < B.end; ++j) {
      cnt.candidate_halves += 2;
      if (!ctx.within(pi, j)) continue;
      cnt.true_halves += 2;
      ensure();
      ev.pair(i, A, j, ctx.load(j));
    }
  }
}

// Every pair between two distinct cells, each evaluated once.
template <int L>
void symmetric_cells(const ForceContext& ctx, Evaluator<L>& ev, Counters& cnt, CellIndex c, CellIndex d) {
  const CellRange Fc = ctx.ng.fluid[c];
  const CellRange Fd = ctx.ng.fluid[d];
  const CellRange Bc = ctx.ng.boundary[c];
  const CellRange Bd = ctx.ng.boundary[d];
  const auto sweep = [&](const CellRange& fluids, const CellRange& others) {
    for (std::uint32_t i = fluids.begin; i < fluids.end; ++i) {
      const Vec3f pi = ctx.sys.pos[i];
      bool loaded = false;
      PairInput A;
      for (std::uint32_t j = others.begin; j < others.end; ++j) {
        cnt.candidate_halves += 2;
        if (!ctx.within(pi, j)) continue;
        cnt.true_halves += 2;
        if (!loaded) {
          A = ctx.load(i);
          loaded = true;
        }
        ev.pair(i, A, j, ctx.load(j));
      }
    }
  };
  sweep(Fc, Fd);
  if (ctx.ff_only) return;
  sweep(Fc, Bd);
  sweep(Fd, Bc);
}

// Contributions on target a from the particles in one range (skipping a).
template <int L>
void one_sided_range(const ForceContext& ctx, Evaluator<L>& ev, Counters& cnt, std::uint32_t a, const Vec3f& pa,
                     const CellRange& r) {
  for (std::uint32_t j = r.begin; j < r.end; ++j) {
    if (j == a) continue;
    cnt.candidate_halves += 1;
    if (!ctx.within(pa, j)) continue;
    cnt.true_halves += 1;
    ev.neighbor(j, ctx.load(j));
  }
}

// Which lists a target of a given kind reads from.
inline bool reads_fluid(const ForceContext& ctx, std::uint32_t a) { return ctx.sys.is_fluid(a) || !ctx.ff_only; }
inline bool reads_boundary(const ForceContext& ctx, std::uint32_t a) { return ctx.sys.is_fluid(a) && !ctx.ff_only; }

// Full-neighbourhood scan for every particle of cell c, writing only to them.
template <int L>
void asymmetric_cell(const ForceContext& ctx, Evaluator<L>& ev, Counters& cnt, CellIndex c) {
  const auto coords = ctx.ng.geom.coords(c);
  const auto visit = [&](const CellRange& own) {
    for (std::uint32_t a = own.begin; a < own.end; ++a) {
      if (!reads_fluid(ctx, a) && !reads_boundary(ctx, a)) continue;
      const Vec3f pa = ctx.sys.pos[a];
      ev.begin_target(a, ctx.load(a));
      if (reads_fluid(ctx, a))
        for_each_row(ctx.ng.fluid, ctx.ng.geom, coords, [&](CellRange r) { one_sided_range(ctx, ev, cnt, a, pa, r); });
      if (reads_boundary(ctx, a))
        for_each_row(ctx.ng.boundary, ctx.ng.geom, coords,
                     [&](CellRange r) { one_sided_range(ctx, ev, cnt, a, pa, r); });
      ev.end_target();
    }
  };
  visit(ctx.ng.fluid[c]);
  visit(ctx.ng.boundary[c]);
}

template <int L>
void symmetric_cell(const ForceContext& ctx, Evaluator<L>& ev, Counters& cnt, CellIndex c,
                    std::span<const StencilOffset> forward) {
  const auto coords = ctx.ng.geom.coords(c);
  symmetric_self(ctx, ev, cnt, c);
  for (const StencilOffset& o : forward) {
    std::array<std::uint32_t, 3> nb;
    if (!offset_cell(coords, o, ctx.ng.geom.dims, nb)) continue;
    symmetric_cells(ctx, ev, cnt, c, ctx.ng.geom.linear(nb[0], nb[1], nb[2]));
  }
  ev.flush();
}

// Slab-restricted symmetric traversal: pairs whose cells share the slab are
// evaluated once; pairs across a slab face are evaluated one-sidedly by each
// slab for its own particles, so no slab writes outside itself.
template <int L>
void slice_cell(const ForceContext& ctx, Evaluator<L>& ev, Counters& cnt, CellIndex c, std::uint32_t lo,
                std::uint32_t hi, std::span<const StencilOffset> full) {
  const auto coords = ctx.ng.geom.coords(c);
  const auto& dims = ctx.ng.geom.dims;
  symmetric_self(ctx, ev, cnt, c);
  for (const StencilOffset& o : full) {
    const bool forward = o.dz > 0 || (o.dz == 0 && o.dy > 0) || (o.dz == 0 && o.dy == 0 && o.dx > 0);
    if (!forward) continue;
    std::array<std::uint32_t, 3> nb;
    if (!offset_cell(coords, o, dims, nb)) continue;
    if (nb[0] < lo || nb[0] >= hi) continue;
    symmetric_cells(ctx, ev, cnt, c, ctx.ng.geom.linear(nb[0], nb[1], nb[2]));
  }
  ev.flush();

  const auto visit = [&](const CellRange& own) {
    for (std::uint32_t a = own.begin; a < own.end; ++a) {
      if (!reads_fluid(ctx, a) && !reads_boundary(ctx, a)) continue;
      const Vec3f pa = ctx.sys.pos[a];
      bool started = false;
      for (const StencilOffset& o : full) {
        std::array<std::uint32_t, 3> nb;
        if (!offset_cell(coords, o, dims, nb)) continue;
        if (nb[0] >= lo && nb[0] < hi) continue;
        if (!started) {
          ev.begin_target(a, ctx.load(a));
          started = true;
        }
        const CellIndex d = ctx.ng.geom.linear(nb[0], nb[1], nb[2]);
        if (reads_fluid(ctx, a)) one_sided_range(ctx, ev, cnt, a, pa, ctx.ng.fluid[d]);
        if (reads_boundary(ctx, a)) one_sided_range(ctx, ev, cnt, a, pa, ctx.ng.boundary[d]);
      }
      if (started) ev.end_target();
    }
  };
  visit(ctx.ng.fluid[c]);
  visit(ctx.ng.boundary[c]);
}

inline void check_inputs(const ParticleSystem& sys, const DerivedQuantities& der, const NeighborGrid& ng) {
  const std::size_t n = sys.size();
  if (sys.pos.size() != n || sys.vel.size() != n || sys.rho.size() != n || der.size() != n ||
      der.csound.size() != n || der.prrho.size() != n || der.tensil.size() != n)
    throw std::invalid_argument("force engine: particle and derived array lengths differ");
  const std::uint32_t nc = ng.geom.ncells();
  if (ng.fluid.ncells() != nc || ng.boundary.ncells() != nc)
    throw std::invalid_argument("force engine: CellBeginEnd does not match the grid");
  if (ng.cell_of.size() != n) throw std::invalid_argument("force engine: grid and system lengths differ");
  if (nc > 0 && (ng.boundary.cells.back().end != sys.count_boundary || ng.fluid.cells.back().end != n ||
                 ng.fluid.cells.front().begin != sys.count_boundary))
    throw std::invalid_argument("force engine: CellBeginEnd does not cover the particle lists");
}

inline void finish_stats(StepStats& s, const Counters& c, EngineKind kind, DerivedMode mode) {
  s.engine = kind;
  s.candidate_pairs = c.candidate_halves / 2;
  s.true_pairs = c.true_halves / 2;
  s.force_evals = c.evals;
  s.force_evals_ff = c.ff;
  s.force_evals_fb = c.fb;
  s.force_evals_bf = c.bf;
  // Neighbour record: pos, vel, rho plus csound/prrho/tensil (40 B) or press (32 B).
  s.bytes_read = c.evals * (mode == DerivedMode::Precomputed ? 40u : 32u);
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

template <int L>
ForceOutput cellpairs_impl(const ForceContext& ctx, const EngineConfig& cfg, SliceState* slices) {
  const std::size_t n = ctx.sys.size();
  const GridGeometry& geom = ctx.ng.geom;
  const std::uint32_t ncells = geom.ncells();
  const int workers = cfg.thread_count;
  const std::vector<StencilOffset> forward = forward_offsets(geom.reach);
  const std::vector<StencilOffset> full = full_offsets(geom.reach);
  const bool sym = cfg.symmetry == Symmetry::On;

  ForceOutput out;
  out.stats.thread_seconds.assign(static_cast<std::size_t>(workers), 0.0);
  Counters total;

  switch (cfg.threading) {
    case Threading::Single: {
      const auto t0 = std::chrono::steady_clock::now();
      Accumulator acc(n);
      Evaluator<L> ev(ctx, acc, total);
      for (CellIndex c = 0; c < ncells; ++c) {
        if (sym) {
          symmetric_cell(ctx, ev, total, c, forward);
        } else {
          asymmetric_cell(ctx, ev, total, c);
        }
      }
      out.accel = std::move(acc.accel);
      out.drho_dt = std::move(acc.drho);
      out.mu_max = std::move(acc.mu);
      out.stats.thread_seconds.assign(1, seconds_since(t0));
      break;
    }
    case Threading::Asymmetric: {
      // Dynamic hand-out of cell blocks; each particle is written only by the
      // worker that owns its cell.
      Accumulator acc(n);
      std::vector<Counters> cnt(static_cast<std::size_t>(workers));
      std::atomic<std::uint32_t> next{0};
      const auto block = static_cast<std::uint32_t>(cfg.block_of_cells);
      const std::uint32_t nblocks = (ncells + block - 1) / block;
      run_workers(workers, [&](int t) {
        const auto t0 = std::chrono::steady_clock::now();
        Evaluator<L> ev(ctx, acc, cnt[t]);
        for (std::uint32_t b = next.fetch_add(1); b < nblocks; b = next.fetch_add(1)) {
          const CellIndex end = std::min(ncells, (b + 1) * block);
          for (CellIndex c = b * block; c < end; ++c) asymmetric_cell(ctx, ev, cnt[t], c);
        }
        out.stats.thread_seconds[t] = seconds_since(t0);
      });
      for (const Counters& c : cnt) total += c;
      out.accel = std::move(acc.accel);
      out.drho_dt = std::move(acc.drho);
      out.mu_max = std::move(acc.mu);
      break;
    }
    case Threading::Symmetric: {
      // Private accumulators; block b goes to worker b mod workers so every
      // accumulator sees the same pairs in the same order on every run.
      std::vector<Accumulator> acc(static_cast<std::size_t>(workers));
      std::vector<Counters> cnt(static_cast<std::size_t>(workers));
      const auto block = static_cast<std::uint32_t>(cfg.block_of_cells);
      const std::uint32_t nblocks = (ncells + block - 1) / block;
      run_workers(workers, [&](int t) {
        const auto t0 = std::chrono::steady_clock::now();
        acc[t].reset(n);
        Evaluator<L> ev(ctx, acc[t], cnt[t]);
        for (std::uint32_t b = static_cast<std::uint32_t>(t); b < nblocks; b += static_cast<std::uint32_t>(workers)) {
          const CellIndex end = std::min(ncells, (b + 1) * block);
          for (CellIndex c = b * block; c < end; ++c) symmetric_cell(ctx, ev, cnt[t], c, forward);
        }
        out.stats.thread_seconds[t] = seconds_since(t0);
      });
      for (const Counters& c : cnt) total += c;
      Accumulator merged = merge_accumulators(acc, workers);
      out.accel = std::move(merged.accel);
      out.drho_dt = std::move(merged.drho);
      out.mu_max = std::move(merged.mu);
      break;
    }
    case Threading::Slices: {
      const int nslices = std::max(1, std::min<int>(workers, static_cast<int>(geom.dims[0])));
      SliceState local;
      SliceState& st = slices != nullptr ? *slices : local;
      if (st.bounds.size() != static_cast<std::size_t>(nslices) + 1 || st.dims != geom.dims) {
        st.bounds = uniform_slices(geom.dims[0], nslices);
        st.dims = geom.dims;
      }
      Accumulator acc(n);
      std::vector<Counters> cnt(static_cast<std::size_t>(nslices));
      std::vector<double> times(static_cast<std::size_t>(nslices), 0.0);
      run_workers(nslices, [&](int s) {
        const auto t0 = std::chrono::steady_clock::now();
        const std::uint32_t lo = st.bounds[s];
        const std::uint32_t hi = st.bounds[s + 1];
        Evaluator<L> ev(ctx, acc, cnt[s]);
        for (std::uint32_t z = 0; z < geom.dims[2]; ++z)
          for (std::uint32_t y = 0; y < geom.dims[1]; ++y)
            for (std::uint32_t x = lo; x < hi; ++x) {
              const CellIndex c = geom.linear(x, y, z);
              if (sym) {
                slice_cell(ctx, ev, cnt[s], c, lo, hi, full);
              } else {
                asymmetric_cell(ctx, ev, cnt[s], c);
              }
            }
        times[s] = seconds_since(t0);
      });
      for (const Counters& c : cnt) total += c;
      out.stats.thread_seconds = times;
      if (nslices > 1) st.bounds = rebalance_slices(st.bounds, times);
      out.accel = std::move(acc.accel);
      out.drho_dt = std::move(acc.drho);
      out.mu_max = std::move(acc.mu);
      break;
    }
  }
  finish_stats(out.stats, total, EngineKind::CellPairs, ctx.mode);
  return out;
}

}  // namespace detail

/// Cell-pair traversal: the unit of work is a cell. With symmetry each pair
/// is evaluated once and applied to both particles through the half stencil;
/// without it every particle scans its whole neighbourhood. `slices` carries
/// the slab layout between calls under Slices threading (optional).
inline ForceOutput compute_forces_cellpairs(const ParticleSystem& sys, const DerivedQuantities& der,
                                            const NeighborGrid& ng, const PhysicsConstants& k,
                                            const EngineConfig& config, SliceState* slices = nullptr) {
  const EngineConfig cfg = validate(config);
  if (cfg.engine != EngineKind::CellPairs) throw std::invalid_argument("compute_forces_cellpairs: wrong engine kind");
  detail::check_inputs(sys, der, ng);
  const detail::ForceContext ctx{sys, der, ng, k, cfg.derived_mode, cfg.fluid_fluid_only};
  return cfg.lane_batch == 4 ? detail::cellpairs_impl<4>(ctx, cfg, slices) : detail::cellpairs_impl<1>(ctx, cfg, slices);
}

namespace detail {

// scan(fluid_list, fn) calls fn(range) for every candidate row of the item's cell.
template <typename ScanFn>
void gather_item(const ForceContext& ctx, std::uint32_t a, ScanFn&& scan, Accumulator& out, Counters& cnt) {
  Evaluator<1> ev(ctx, out, cnt);
  const Vec3f pa = ctx.sys.pos[a];
  const auto visit = [&](CellRange r) { one_sided_range(ctx, ev, cnt, a, pa, r); };
  ev.begin_target(a, ctx.load(a));
  if (reads_fluid(ctx, a)) scan(true, visit);
  if (reads_boundary(ctx, a)) scan(false, visit);
  ev.end_target();
}

}  // namespace detail

/// Per-particle gather: one work item per particle, which loads its own state
/// once, accumulates locally and writes its own slot once. Pass 1 runs F-F and
/// F-B together for fluid items; pass 2 computes the density rate of boundary
/// items from their fluid neighbours.
inline ForceOutput compute_forces_gather(const ParticleSystem& sys, const DerivedQuantities& der,
                                         const NeighborGrid& ng, const NeighborRanges* ranges,
                                         const PhysicsConstants& k, const EngineConfig& config) {
  const EngineConfig cfg = validate(config);
  if (cfg.engine != EngineKind::Gather) throw std::invalid_argument("compute_forces_gather: wrong engine kind");
  detail::check_inputs(sys, der, ng);
  const int need_reach = cfg.subdivision(1);
  if (ng.geom.reach != need_reach)
    throw std::invalid_argument("compute_forces_gather: grid cell size does not match the gather variant");
  const bool fast = cfg.gather_variant == GatherVariant::FastCellsHalf;
  if (fast) {
    if (ranges == nullptr) throw std::invalid_argument("compute_forces_gather: variant requires interaction ranges");
    if (ranges->fluid.ncells() != ng.geom.ncells() || ranges->boundary.ncells() != ng.geom.ncells())
      throw std::invalid_argument("compute_forces_gather: interaction ranges do not match the grid");
  }

  const detail::ForceContext ctx{sys, der, ng, k, cfg.derived_mode, cfg.fluid_fluid_only};
  const std::size_t n = sys.size();
  Accumulator acc(n);
  const int workers = cfg.thread_count;
  std::vector<detail::Counters> cnt(static_cast<std::size_t>(workers));
  ForceOutput out;
  out.stats.thread_seconds.assign(static_cast<std::size_t>(workers), 0.0);

  const auto run_pass = [&](std::size_t first, std::size_t last) {
    run_workers(workers, [&](int t) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto [b, e] = split_range(last - first, workers, t);
      for (std::size_t i = first + b; i < first + e; ++i) {
        const auto a = static_cast<std::uint32_t>(i);
        const CellIndex c = ng.cell_of[a];
        const auto scan = [&](bool fluid_list, auto&& fn) {
          if (fast) {
            for (const CellRange& r : (fluid_list ? ranges->fluid : ranges->boundary).of(c)) fn(r);
          } else {
            for_each_row(fluid_list ? ng.fluid : ng.boundary, ng.geom, ng.geom.coords(c), fn);
          }
        };
        detail::gather_item(ctx, a, scan, acc, cnt[t]);
      }
      out.stats.thread_seconds[t] += detail::seconds_since(t0);
    });
  };

  run_pass(sys.count_boundary, n);  // fused F-F + F-B
  if (!cfg.fluid_fluid_only) run_pass(0, sys.count_boundary);  // B-F density rate

  detail::Counters total;
  for (const auto& c : cnt) total += c;
  out.accel = std::move(acc.accel);
  out.drho_dt = std::move(acc.drho);
  out.mu_max = std::move(acc.mu);
  detail::finish_stats(out.stats, total, EngineKind::Gather, cfg.derived_mode);
  return out;
}

/// Owns an engine configuration plus the state it keeps between steps.
class ForceEngine {
 public:
  explicit ForceEngine(const EngineConfig& config) : cfg_(validate(config)) {}

  const EngineConfig& config() const { return cfg_; }
  int subdivision(const SimParams& p) const { return cfg_.subdivision(p.n_subdiv); }
  bool needs_ranges() const { return cfg_.needs_ranges(); }
  const std::vector<std::uint32_t>& slice_bounds() const { return slices_.bounds; }

  ForceOutput compute(const ParticleSystem& sys, const DerivedQuantities& der, const NeighborGrid& ng,
                      const NeighborRanges* ranges, const PhysicsConstants& k) {
    if (cfg_.engine == EngineKind::Gather) return compute_forces_gather(sys, der, ng, ranges, k, cfg_);
    return compute_forces_cellpairs(sys, der, ng, k, cfg_, &slices_);
  }

 private:
  EngineConfig cfg_;
  SliceState slices_;
};

}  // namespace sphperf
