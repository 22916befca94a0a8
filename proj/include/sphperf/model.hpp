#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "sphperf/vec3.hpp"

namespace sphperf {

enum class ParticleKind : std::uint8_t { Fluid = 0, Boundary = 1 };

/// How fluid and boundary particles share the arrays of a ParticleSystem.
/// Only the segregated layout exists: every boundary particle precedes every
/// fluid particle, and each half is cell-sorted independently.
enum class Layout : std::uint8_t { BoundaryFirst };

/// Raised when a parameter set or particle system breaks one of its invariants.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::invalid_argument(what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Structure-of-arrays particle state. Boundary particles occupy
/// [0, count_boundary), fluid particles [count_boundary, size()).
struct ParticleSystem {
  std::size_t count_fluid = 0;
  std::size_t count_boundary = 0;
  std::vector<Vec3f> pos;
  std::vector<Vec3f> vel;
  std::vector<float> rho;
  std::vector<ParticleKind> kind;
  std::vector<std::uint32_t> id;
  float mass_fluid = 0.0f;
  float mass_boundary = 0.0f;
  Layout layout = Layout::BoundaryFirst;

  std::size_t size() const noexcept { return count_fluid + count_boundary; }
  std::size_t fluid_begin() const noexcept { return count_boundary; }
  bool is_fluid(std::size_t i) const noexcept { return i >= count_boundary; }
  float mass(std::size_t i) const noexcept { return is_fluid(i) ? mass_fluid : mass_boundary; }

  void resize(std::size_t n_boundary, std::size_t n_fluid) {
    count_boundary = n_boundary;
    count_fluid = n_fluid;
    const std::size_t n = size();
    pos.resize(n);
    vel.resize(n);
    rho.resize(n);
    kind.resize(n);
    id.resize(n);
    for (std::size_t i = 0; i < n; ++i) kind[i] = is_fluid(i) ? ParticleKind::Fluid : ParticleKind::Boundary;
  }

  /// Throws ConfigError naming the first broken invariant.
  void check() const {
    const std::size_t n = size();
    if (pos.size() != n || vel.size() != n || rho.size() != n || kind.size() != n || id.size() != n)
      throw ConfigError("arrays", "particle arrays must all have length count_fluid + count_boundary");
    for (std::size_t i = 0; i < n; ++i) {
      const ParticleKind expected = is_fluid(i) ? ParticleKind::Fluid : ParticleKind::Boundary;
      if (kind[i] != expected)
        throw ConfigError("kind", "boundary particles must precede fluid particles (index " + std::to_string(i) + ")");
      if (!(rho[i] > 0.0f)) throw ConfigError("rho", "rho must be positive (index " + std::to_string(i) + ")");
    }
  }
};

/// Per-particle quantities derived from density through the equation of state.
struct DerivedQuantities {
  std::vector<float> press;
  std::vector<float> csound;
  std::vector<float> prrho;   // press / rho^2
  std::vector<float> tensil;  // per-particle tensile-correction coefficient

  std::size_t size() const noexcept { return press.size(); }
  void resize(std::size_t n) {
    press.resize(n);
    csound.resize(n);
    prrho.resize(n);
    tensil.resize(n);
  }
};

struct SimParams {
  double h = 0.02;          // smoothing length [m]; kernel support is 2h
  double dp = 0.01;         // initial particle spacing [m]
  int n_subdiv = 2;         // cells have side 2h / n_subdiv
  double rho0 = 1000.0;     // [kg/m^3]
  double c0 = 12.0;         // [m/s]
  double gamma = 7.0;
  double alpha = 0.25;      // artificial viscosity coefficient
  Vec3d g{0.0, 0.0, -9.81};
  double cfl = 0.2;
  Vec3d domain_min{0.0, 0.0, 0.0};
  Vec3d domain_max{1.0, 1.0, 1.0};
  int verlet_corrector_stride = 40;
  double dt_min = 1e-8;
  double dt_max = 1e-3;

  double support() const noexcept { return 2.0 * h; }
};

/// Returns the parameters unchanged when every invariant holds; otherwise
/// throws ConfigError for the first violated one.
inline SimParams validate(const SimParams& p) {
  if (!(p.h > 0.0)) throw ConfigError("h", "h must be positive");
  if (!(p.dp > 0.0)) throw ConfigError("dp", "dp must be positive");
  if (p.n_subdiv < 1) throw ConfigError("n_subdiv", "n_subdiv must be >= 1");
  if (!(p.rho0 > 0.0)) throw ConfigError("rho0", "rho0 must be positive");
  if (!(p.c0 > 0.0)) throw ConfigError("c0", "c0 must be positive");
  if (!(p.gamma >= 1.0)) throw ConfigError("gamma", "gamma must be >= 1");
  if (!(p.alpha >= 0.0)) throw ConfigError("alpha", "alpha must be >= 0");
  if (!(p.cfl > 0.0 && p.cfl < 1.0)) throw ConfigError("cfl", "cfl in (0,1)");
  if (!(p.domain_min.x < p.domain_max.x && p.domain_min.y < p.domain_max.y && p.domain_min.z < p.domain_max.z))
    throw ConfigError("domain", "domain_min must be < domain_max componentwise");
  if (p.verlet_corrector_stride < 1)
    throw ConfigError("verlet_corrector_stride", "verlet_corrector_stride must be >= 1");
  if (!(p.dt_min > 0.0 && p.dt_min <= p.dt_max)) throw ConfigError("dt_min", "dt clamps need 0 < dt_min <= dt_max");
  if (!isfinite(p.g)) throw ConfigError("g", "g must be finite");
  return p;
}

enum class EngineKind : std::uint8_t { CellPairs, Gather };

/// Instrumentation for one force pass or one full step.
///
/// true_pairs counts unordered interacting pairs within the kernel support.
/// force_evals counts pair-function evaluations: equal to true_pairs when
/// every pair is computed symmetrically, twice that when none is.
struct StepStats {
  std::uint64_t step = 0;
  double dt = 0.0;
  std::uint64_t candidate_pairs = 0;
  std::uint64_t true_pairs = 0;
  std::uint64_t force_evals = 0;
  std::uint64_t force_evals_ff = 0;
  std::uint64_t force_evals_fb = 0;  // fluid target, boundary neighbour (or a symmetric F-B pair)
  std::uint64_t force_evals_bf = 0;  // boundary target, fluid neighbour
  std::uint64_t bytes_read = 0;      // neighbour-state traffic estimate
  double wall_seconds = 0.0;
  double stage_nl_seconds = 0.0;
  double stage_pi_seconds = 0.0;
  double stage_su_seconds = 0.0;
  double bookkeeping_seconds = 0.0;
  EngineKind engine = EngineKind::CellPairs;
  std::vector<double> thread_seconds;
};

}  // namespace sphperf
