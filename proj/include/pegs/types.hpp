#pragma once

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>
#include <string>

namespace pegs {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
template <int Dim>
using VecN = Eigen::Matrix<double, Dim, 1>;

inline constexpr int kStateDim = 8;
inline constexpr int kCostateDim = 4;

/// Costate norm below which the thrust-direction law has no defined
/// direction. Sits above the solver feasibility tolerance (terminal velocity
/// costates of a converged run are zero only to that accuracy) and far below
/// any physical costate scale of the benchmark.
inline constexpr double kSingularCostateNorm = 1e-7;

/// Orbital radius floor; trajectories and NLP iterates are kept above it to
/// stay clear of the 1/r^2 singularity.
inline constexpr double kRadiusFloor = 0.2;

/// Thrust accelerations and gravitational parameter, all normalized.
struct GameParameters {
  double thrust_pursuer = 0.05;
  double thrust_evader = 0.0025;
  double mu = 1.0;

  void validate() const {
    if (!(thrust_pursuer > 0.0))
      throw std::invalid_argument("parameters.thrust_pursuer must be > 0");
    if (!(thrust_evader > 0.0))
      throw std::invalid_argument("parameters.thrust_evader must be > 0");
    if (!(mu > 0.0)) throw std::invalid_argument("parameters.mu must be > 0");
    if (!(thrust_pursuer > thrust_evader))
      throw std::invalid_argument(
          "parameters.thrust_pursuer must exceed thrust_evader (capture must "
          "be achievable)");
  }
};

/// Planar orbital state of one spacecraft in polar coordinates.
/// Angles are unwrapped: theta is continuous, never reduced mod 2*pi.
struct PlayerState {
  double v_r = 0.0;      ///< radial velocity
  double v_theta = 0.0;  ///< transverse velocity
  double r = 1.0;        ///< orbital radius
  double theta = 0.0;    ///< polar angle [rad]

  VecN<4> to_vec() const { return VecN<4>(v_r, v_theta, r, theta); }
  static PlayerState from_vec(const VecN<4>& v) {
    return {v[0], v[1], v[2], v[3]};
  }
  bool finite() const {
    return std::isfinite(v_r) && std::isfinite(v_theta) && std::isfinite(r) &&
           std::isfinite(theta);
  }
};

/// Joint pursuer + evader physical state (8 scalars).
struct GameState {
  PlayerState pursuer;
  PlayerState evader;

  VecN<8> to_vec() const {
    VecN<8> v;
    v << pursuer.to_vec(), evader.to_vec();
    return v;
  }
  static GameState from_vec(const VecN<8>& v) {
    return {PlayerState::from_vec(v.head<4>()),
            PlayerState::from_vec(v.tail<4>())};
  }
  bool finite() const { return pursuer.finite() && evader.finite(); }
};

/// Adjoint variables of one player, ordered like the state they multiply.
struct FollowerCostate {
  double l_vr = 0.0;
  double l_vtheta = 0.0;
  double l_r = 0.0;
  double l_theta = 0.0;

  VecN<4> to_vec() const { return VecN<4>(l_vr, l_vtheta, l_r, l_theta); }
  static FollowerCostate from_vec(const VecN<4>& v) {
    return {v[0], v[1], v[2], v[3]};
  }
  bool finite() const {
    return std::isfinite(l_vr) && std::isfinite(l_vtheta) &&
           std::isfinite(l_r) && std::isfinite(l_theta);
  }
};

/// Costates of both players (shooting path only; the collocation path
/// carries pursuer costates alone).
struct FullCostate {
  FollowerCostate pursuer;
  FollowerCostate evader;

  VecN<8> to_vec() const {
    VecN<8> v;
    v << pursuer.to_vec(), evader.to_vec();
    return v;
  }
  static FullCostate from_vec(const VecN<8>& v) {
    return {FollowerCostate::from_vec(v.head<4>()),
            FollowerCostate::from_vec(v.tail<4>())};
  }
};

/// Thrust direction angles of both players [rad], reported in (-pi, pi].
struct ControlPair {
  double delta_p = 0.0;
  double delta_e = 0.0;
};

/// Result of an optimal-control evaluation. `singular` is set when the
/// velocity-costate norm is below kSingularCostateNorm and the angle carries
/// no information (it is then 0 in isolated evaluation).
struct ControlValue {
  double angle = 0.0;
  bool singular = false;
};

/// Tracks the most recent non-singular control angle along a trajectory.
/// Each integration or extraction owns its own instance; there is no shared
/// state between concurrent propagations.
class ControlHold {
 public:
  double apply(const ControlValue& c) {
    if (!c.singular) last_ = c.angle;
    return last_;
  }
  double last() const { return last_; }

 private:
  double last_ = 0.0;
};

}  // namespace pegs
