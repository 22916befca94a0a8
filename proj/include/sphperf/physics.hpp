#pragma once

#include <cmath>
#include <concepts>
#include <numbers>

#include "sphperf/model.hpp"
#include "sphperf/vec3.hpp"

namespace sphperf {

// ---------------------------------------------------------------------------
// Cubic spline kernel, 3D normalisation, support radius 2h.
//
//   W(q) = 1/(pi h^3) * (1 - 1.5 q^2 + 0.75 q^3)   0 <= q < 1
//        = 1/(4 pi h^3) * (2 - q)^3                1 <= q < 2
//        = 0                                       q >= 2
// ---------------------------------------------------------------------------
template <std::floating_point T>
struct CubicSpline {
  T h{};
  T inv_h{};
  T norm_w{};     // 1 / (pi h^3)
  T norm_grad{};  // 1 / (pi h^4)

  CubicSpline() = default;
  explicit CubicSpline(T h_)
      : h(h_),
        inv_h(T(1) / h_),
        norm_w(T(1) / (std::numbers::pi_v<T> * h_ * h_ * h_)),
        norm_grad(T(1) / (std::numbers::pi_v<T> * h_ * h_ * h_ * h_)) {}

  T support() const { return T(2) * h; }

  T w(T r) const {
    const T q = r * inv_h;
    if (q < T(1)) return norm_w * (T(1) - T(1.5) * q * q + T(0.75) * q * q * q);
    if (q < T(2)) {
      const T t = T(2) - q;
      return norm_w * T(0.25) * t * t * t;
    }
    return T(0);
  }

  T dw_dr(T r) const {
    const T q = r * inv_h;
    if (q < T(1)) return norm_grad * (T(-3) * q + T(2.25) * q * q);
    if (q < T(2)) {
      const T t = T(2) - q;
      return -norm_grad * T(0.75) * t * t;
    }
    return T(0);
  }

  /// (dW/dr) / r, finite at r = 0 so that grad W = r_ab * factor vanishes there.
  T grad_factor(T r) const {
    const T q = r * inv_h;
    if (q < T(1)) return norm_grad * inv_h * (T(-3) + T(2.25) * q);
    if (q < T(2)) {
      const T t = T(2) - q;
      return -norm_grad * T(0.75) * t * t / r;
    }
    return T(0);
  }
};

template <std::floating_point T>
T kernel_w(T r, T h) {
  return CubicSpline<T>(h).w(r);
}

/// Gradient with respect to the position of particle a, r_ab = r_a - r_b.
template <std::floating_point T>
Vec3<T> kernel_grad_w(const Vec3<T>& r_ab, T h) {
  const CubicSpline<T> k(h);
  const T r = norm(r_ab);
  if (r >= k.support()) return {};
  return r_ab * k.grad_factor(r);
}

// ---------------------------------------------------------------------------
// Tait equation of state
// ---------------------------------------------------------------------------
template <std::floating_point T>
struct EosState {
  T press;
  T csound;
};

template <std::floating_point T>
struct TaitEos {
  T rho0{};
  T c0{};
  T gamma{};
  T b{};  // c0^2 rho0 / gamma
  T csound_exponent{};

  TaitEos() = default;
  TaitEos(T rho0_, T c0_, T gamma_)
      : rho0(rho0_), c0(c0_), gamma(gamma_), b(c0_ * c0_ * rho0_ / gamma_), csound_exponent((gamma_ - T(1)) / T(2)) {}

  T press(T rho) const { return b * (std::pow(rho / rho0, gamma) - T(1)); }

  T csound(T rho) const {
    const T x = rho / rho0;
    if (csound_exponent == T(3)) return c0 * (x * x * x);
    return c0 * std::pow(x, csound_exponent);
  }
};

template <std::floating_point T>
EosState<T> eos(T rho, T rho0, T c0, T gamma) {
  const TaitEos<T> e(rho0, c0, gamma);
  return {e.press(rho), e.csound(rho)};
}

// ---------------------------------------------------------------------------
// Tensile correction
// ---------------------------------------------------------------------------

/// Per-particle coefficient: 0.01 p/rho^2 under compression, 0.2 |p|/rho^2 under tension.
template <std::floating_point T>
T tensile_coefficient(T press, T rho) {
  const T prrho = press / (rho * rho);
  return press >= T(0) ? T(0.01) * prrho : T(0.2) * std::abs(prrho);
}

template <std::floating_point T>
T tensile_term(T press_a, T rho_a, T press_b, T rho_b, T w_ab, T w_dp) {
  const T f = w_ab / w_dp;
  const T f2 = f * f;
  return (tensile_coefficient(press_a, rho_a) + tensile_coefficient(press_b, rho_b)) * (f2 * f2);
}

// ---------------------------------------------------------------------------
// Pairwise interaction
// ---------------------------------------------------------------------------

/// Whether csound / prrho / tensil are read from the cached per-particle
/// arrays or derived from (rho, press) on the fly inside the pair loop.
enum class DerivedMode : std::uint8_t { Precomputed, Recomputed };

/// Single-precision constants used inside the pair loop.
struct PhysicsConstants {
  CubicSpline<float> kernel;
  TaitEos<float> eos;
  float support2 = 0.0f;
  float eta2 = 0.0f;
  float alpha = 0.0f;
  float inv_w_dp = 0.0f;

  static PhysicsConstants from(const SimParams& p) {
    PhysicsConstants c;
    c.kernel = CubicSpline<float>(static_cast<float>(p.h));
    c.eos = TaitEos<float>(static_cast<float>(p.rho0), static_cast<float>(p.c0), static_cast<float>(p.gamma));
    const float h = static_cast<float>(p.h);
    c.support2 = 4.0f * h * h;
    c.eta2 = 0.01f * h * h;
    c.alpha = static_cast<float>(p.alpha);
    c.inv_w_dp = 1.0f / c.kernel.w(static_cast<float>(p.dp));
    return c;
  }
};

struct DerivedAt {
  float csound;
  float prrho;
  float tensil;
};

inline DerivedAt derive(float rho, float press, const PhysicsConstants& k) {
  return {k.eos.csound(rho), press / (rho * rho), tensile_coefficient(press, rho)};
}

/// State of one particle as seen by the pair function.
struct PairInput {
  Vec3f pos;
  Vec3f vel;
  float rho = 0.0f;
  float press = 0.0f;
  float csound = 0.0f;
  float prrho = 0.0f;
  float tensil = 0.0f;
  float mass = 0.0f;
};

inline PairInput resolve(PairInput in, const PhysicsConstants& k, DerivedMode mode) {
  if (mode == DerivedMode::Recomputed) {
    const DerivedAt d = derive(in.rho, in.press, k);
    in.csound = d.csound;
    in.prrho = d.prrho;
    in.tensil = d.tensil;
  }
  return in;
}

struct PairContribution {
  Vec3f accel_on_a;
  float drho_dt_on_a = 0.0f;
  Vec3f accel_on_b;
  float drho_dt_on_b = 0.0f;
  float mu = 0.0f;  // |h v_ab.r_ab / (r^2 + eta^2)|, feeds the time-step limit
};

struct OneSidedContribution {
  Vec3f accel;
  float drho_dt = 0.0f;
  float mu = 0.0f;
};

namespace detail {

// Shared by the two-sided and one-sided entry points so both produce the same
// bits for the a-side.
struct PairTerms {
  Vec3f grad;     // grad_a W_ab
  float scale;    // prrho_a + prrho_b + Pi_ab + T_ab
  float dv_grad;  // v_ab . grad_a W_ab
  float mu;
};

inline PairTerms pair_terms(const PairInput& a, const PairInput& b, const PhysicsConstants& k) {
  const Vec3f dr = a.pos - b.pos;
  const float r2 = norm2(dr);
  if (!(r2 < k.support2)) return {{}, 0.0f, 0.0f, 0.0f};
  const float r = std::sqrt(r2);
  const Vec3f grad = dr * k.kernel.grad_factor(r);
  const Vec3f dv = a.vel - b.vel;
  const float vdotr = dot(dv, dr);

  const float mu = k.kernel.h * vdotr / (r2 + k.eta2);
  float visc = 0.0f;
  if (vdotr < 0.0f) {
    const float cbar = 0.5f * (a.csound + b.csound);
    const float rhobar = 0.5f * (a.rho + b.rho);
    visc = -k.alpha * cbar * mu / rhobar;
  }

  const float f = k.kernel.w(r) * k.inv_w_dp;
  const float f2 = f * f;
  const float tensile = (a.tensil + b.tensil) * (f2 * f2);

  return {grad, a.prrho + b.prrho + visc + tensile, dot(dv, grad), std::abs(mu)};
}

}  // namespace detail

/// Momentum and continuity contributions of one pair, both directions.
/// Gravity is not included. The b-side acceleration is the negated a-side
/// value rescaled by the mass ratio, so m_b a_b == -m_a a_a exactly when the
/// two masses are equal.
inline PairContribution pair_interaction(const PairInput& a_in, const PairInput& b_in, const PhysicsConstants& k,
                                         DerivedMode mode = DerivedMode::Precomputed) {
  const PairInput a = resolve(a_in, k, mode);
  const PairInput b = resolve(b_in, k, mode);
  const detail::PairTerms t = detail::pair_terms(a, b, k);
  PairContribution out;
  out.accel_on_a = t.grad * (-b.mass * t.scale);
  out.drho_dt_on_a = b.mass * t.dv_grad;
  out.accel_on_b = (a.mass == b.mass) ? -out.accel_on_a : -(out.accel_on_a * (a.mass / b.mass));
  out.drho_dt_on_b = (a.mass == b.mass) ? out.drho_dt_on_a : a.mass * t.dv_grad;
  out.mu = t.mu;
  return out;
}

/// a-side only; bitwise identical to the a-side of pair_interaction.
inline OneSidedContribution pair_interaction_on_a(const PairInput& a, const PairInput& b, const PhysicsConstants& k) {
  const detail::PairTerms t = detail::pair_terms(a, b, k);
  return {t.grad * (-b.mass * t.scale), b.mass * t.dv_grad, t.mu};
}

/// Fills press, csound, prrho and tensil from rho.
inline void compute_derived(const ParticleSystem& sys, const PhysicsConstants& k, DerivedQuantities& out) {
  out.resize(sys.size());
  for (std::size_t i = 0; i < sys.size(); ++i) {
    const float p = k.eos.press(sys.rho[i]);
    const DerivedAt d = derive(sys.rho[i], p, k);
    out.press[i] = p;
    out.csound[i] = d.csound;
    out.prrho[i] = d.prrho;
    out.tensil[i] = d.tensil;
  }
}

inline DerivedQuantities compute_derived(const ParticleSystem& sys, const PhysicsConstants& k) {
  DerivedQuantities d;
  compute_derived(sys, k, d);
  return d;
}

}  // namespace sphperf
