#pragma once

#include <Eigen/Core>

#include <cmath>
#include <concepts>
#include <stdexcept>

#include "pegs/types.hpp"

// Physics of the planar spacecraft pursuit-evasion benchmark: equations of
// motion, pursuer costate dynamics, closed-form thrust-direction laws,
// Hamiltonian, capture and transversality conditions. All functions are pure.

namespace pegs {

namespace detail {

inline void require_radius(double r, const char* who) {
  if (!(r > 0.0)) throw std::domain_error(std::string(who) + ": r <= 0");
}

/// Right-hand side of one player's equations of motion.
inline VecN<4> player_derivative(const PlayerState& s, double thrust,
                                 double delta, double mu) {
  require_radius(s.r, "player_derivative");
  VecN<4> d;
  d[0] = thrust * std::sin(delta) - mu / (s.r * s.r) +
         s.v_theta * s.v_theta / s.r;
  d[1] = thrust * std::cos(delta) - s.v_r * s.v_theta / s.r;
  d[2] = s.v_r;
  d[3] = s.v_theta / s.r;
  return d;
}

}  // namespace detail

/// Joint equations of motion. The pursuer block depends only on pursuer
/// fields and delta_p, the evader block only on evader fields and delta_e.
inline GameState state_derivative(const GameState& s, const ControlPair& u,
                                  const GameParameters& p) {
  if (!s.finite() || !std::isfinite(u.delta_p) || !std::isfinite(u.delta_e))
    throw std::domain_error("state_derivative: non-finite input");
  GameState d;
  d.pursuer = PlayerState::from_vec(
      detail::player_derivative(s.pursuer, p.thrust_pursuer, u.delta_p, p.mu));
  d.evader = PlayerState::from_vec(
      detail::player_derivative(s.evader, p.thrust_evader, u.delta_e, p.mu));
  return d;
}

/// Pursuer costate dynamics. The theta-costate rate is identically zero.
inline FollowerCostate follower_costate_derivative(const PlayerState& sp,
                                                   const FollowerCostate& lp,
                                                   double mu) {
  detail::require_radius(sp.r, "follower_costate_derivative");
  if (!sp.finite() || !lp.finite())
    throw std::domain_error("follower_costate_derivative: non-finite input");
  const double r = sp.r;
  FollowerCostate d;
  d.l_vr = lp.l_vtheta * sp.v_theta / r - lp.l_r;
  d.l_vtheta =
      (-2.0 * lp.l_vr * sp.v_theta + lp.l_vtheta * sp.v_r - lp.l_theta) / r;
  d.l_r = (-2.0 * lp.l_vr * mu + lp.l_vr * sp.v_theta * sp.v_theta * r -
           lp.l_vtheta * sp.v_r * sp.v_theta * r + lp.l_theta * sp.v_theta * r) /
          (r * r * r);
  d.l_theta = 0.0;
  return d;
}

/// Evader costate dynamics; same functional form evaluated on evader
/// quantities. Used only by the shooting validator.
inline FollowerCostate leader_costate_derivative(const PlayerState& se,
                                                 const FollowerCostate& le,
                                                 double mu) {
  return follower_costate_derivative(se, le, mu);
}

/// Thrust angle minimizing the Hamiltonian over delta_p. Stationary with a
/// positive second-order value T_p * ||(l_vr, l_vtheta)||; flagged singular
/// when that norm vanishes (forced at the terminal time by the boundary
/// conditions).
inline ControlValue optimal_pursuer_control(double l_vr, double l_vtheta) {
  if (std::hypot(l_vr, l_vtheta) < kSingularCostateNorm) return {0.0, true};
  return {std::atan2(-l_vr, -l_vtheta), false};
}

/// Thrust angle maximizing the Hamiltonian over delta_e (second-order value
/// -T_e * ||(l_vr, l_vtheta)|| < 0). Shooting path only.
inline ControlValue optimal_evader_control(double l_vr, double l_vtheta) {
  if (std::hypot(l_vr, l_vtheta) < kSingularCostateNorm) return {0.0, true};
  return {std::atan2(l_vr, l_vtheta), false};
}

/// Hamiltonian of the time-optimal game; the leading 1 is the running cost.
inline double hamiltonian(const GameState& s, const FullCostate& lam,
                          const ControlPair& u, const GameParameters& p) {
  detail::require_radius(s.pursuer.r, "hamiltonian");
  detail::require_radius(s.evader.r, "hamiltonian");
  const VecN<4> fp =
      detail::player_derivative(s.pursuer, p.thrust_pursuer, u.delta_p, p.mu);
  const VecN<4> fe =
      detail::player_derivative(s.evader, p.thrust_evader, u.delta_e, p.mu);
  return 1.0 + lam.pursuer.to_vec().dot(fp) + lam.evader.to_vec().dot(fe);
}

/// Capture conditions: radial and angular coincidence, raw differences
/// (angles are unwrapped; the benchmark horizon is about half an orbit).
inline Eigen::Vector2d capture_residual(const GameState& s) {
  return {s.pursuer.r - s.evader.r, s.pursuer.theta - s.evader.theta};
}

/// Free-terminal-time condition: 1 + l_r (v_rp - v_re)
///                                  + l_theta (v_thp/r_p - v_the/r_e).
/// Zero at an optimal terminal point.
inline double transversality_residual(const GameState& s, double l_r,
                                      double l_theta) {
  detail::require_radius(s.pursuer.r, "transversality_residual");
  detail::require_radius(s.evader.r, "transversality_residual");
  return 1.0 + l_r * (s.pursuer.v_r - s.evader.v_r) +
         l_theta * (s.pursuer.v_theta / s.pursuer.r -
                    s.evader.v_theta / s.evader.r);
}

/// Pursuer second-order optimality value at a given control angle
/// (the Legendre-Clebsch quantity; positive on the minimizing branch).
inline double pursuer_second_order_value(double l_vr, double l_vtheta,
                                         double delta_p, double thrust) {
  return -l_vr * thrust * std::sin(delta_p) -
         l_vtheta * thrust * std::cos(delta_p);
}

/// Concrete benchmark game: immutable bundle of parameters, initial state
/// and the equation-level operations, consumed generically by the
/// transcription and shooting layers.
class SpacecraftGame {
 public:
  static constexpr int kStateSize = kStateDim;
  static constexpr int kFollowerCostateSize = kCostateDim;
  static constexpr int kLeaderControlSize = 1;

  SpacecraftGame(GameParameters params, GameState initial)
      : params_(params), initial_(initial) {
    params_.validate();
    detail::require_radius(initial_.pursuer.r, "SpacecraftGame");
    detail::require_radius(initial_.evader.r, "SpacecraftGame");
  }

  /// Benchmark defaults: pursuer on the unit circular orbit, evader on a
  /// circular orbit at r = 1.05, 0.4 rad ahead.
  static SpacecraftGame benchmark() {
    GameState s0;
    s0.pursuer = {0.0, 1.0, 1.0, 0.0};
    s0.evader = {0.0, 0.9759, 1.05, 0.4};
    return SpacecraftGame(GameParameters{}, s0);
  }

  const GameParameters& parameters() const { return params_; }
  const GameState& initial_state() const { return initial_; }

  GameState dynamics(const GameState& s, const ControlPair& u) const {
    return state_derivative(s, u, params_);
  }
  FollowerCostate follower_costate_dynamics(const PlayerState& sp,
                                            const FollowerCostate& lp) const {
    return follower_costate_derivative(sp, lp, params_.mu);
  }
  FollowerCostate leader_costate_dynamics(const PlayerState& se,
                                          const FollowerCostate& le) const {
    return leader_costate_derivative(se, le, params_.mu);
  }
  ControlValue follower_control(double l_vr, double l_vtheta) const {
    return optimal_pursuer_control(l_vr, l_vtheta);
  }
  ControlValue leader_control(double l_vr, double l_vtheta) const {
    return optimal_evader_control(l_vr, l_vtheta);
  }
  Eigen::Vector2d capture(const GameState& s) const {
    return capture_residual(s);
  }
  double transversality(const GameState& s, double l_r, double l_theta) const {
    return transversality_residual(s, l_r, l_theta);
  }
  double energy(const GameState& s, const FullCostate& lam,
                const ControlPair& u) const {
    return hamiltonian(s, lam, u, params_);
  }

 private:
  GameParameters params_;
  GameState initial_;
};

/// A game definition usable by the transcription and shooting layers.
template <class G>
concept StackelbergGame = requires(const G& g, const GameState& s,
                                   const PlayerState& ps,
                                   const FollowerCostate& fc,
                                   const ControlPair& u, double a) {
  { G::kStateSize } -> std::convertible_to<int>;
  { G::kFollowerCostateSize } -> std::convertible_to<int>;
  { G::kLeaderControlSize } -> std::convertible_to<int>;
  { g.parameters() } -> std::convertible_to<GameParameters>;
  { g.initial_state() } -> std::convertible_to<GameState>;
  { g.dynamics(s, u) } -> std::convertible_to<GameState>;
  { g.follower_costate_dynamics(ps, fc) } -> std::convertible_to<FollowerCostate>;
  { g.follower_control(a, a) } -> std::convertible_to<ControlValue>;
  { g.capture(s) } -> std::convertible_to<Eigen::Vector2d>;
  { g.transversality(s, a, a) } -> std::convertible_to<double>;
};

static_assert(StackelbergGame<SpacecraftGame>);

}  // namespace pegs
