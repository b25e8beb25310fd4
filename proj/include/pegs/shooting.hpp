#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "pegs/game_core.hpp"
#include "pegs/ode.hpp"
#include "pegs/trajectory.hpp"
#include "pegs/types.hpp"

// Indirect-method validator. Integrates the 16-dimensional coupled
// state/costate system with both thrust angles supplied pointwise by their
// optimality laws, and solves the two-point boundary-value problem over the
// 8 initial costates and the terminal time by damped Newton iteration.

namespace pegs {

/// Unknowns of the single-shooting problem: both players' initial costates
/// plus the terminal time.
struct ShootingUnknowns {
  FullCostate initial_costate;
  double t_f = 3.0;

  VecN<9> to_vec() const {
    VecN<9> v;
    v.head<8>() = initial_costate.to_vec();
    v[8] = t_f;
    return v;
  }
  static ShootingUnknowns from_vec(const VecN<9>& v) {
    return {FullCostate::from_vec(v.head<8>()), v[8]};
  }
};

struct ShootingOptions {
  IntegratorOptions integrator;
  double tolerance = 1e-8;    ///< convergence on ||residual||_inf
  int max_newton_iterations = 50;
  double fd_step_relative = 1e-7;
  int max_halvings = 30;
};

struct CoupledIntegrationResult {
  GameState terminal_state;
  FullCostate terminal_costate;
  Trajectory trajectory;
};

namespace detail {

/// 16-dim right-hand side; thrust angles from the optimality laws with the
/// hold-last-angle fallback on the singular set. The holds are local to one
/// propagation, so concurrent integrations never share state.
template <StackelbergGame Game>
class CoupledSystem {
 public:
  explicit CoupledSystem(const Game& game) : game_(game) {}

  VecN<16> operator()(double t, const VecN<16>& y) {
    const GameState s = GameState::from_vec(y.template head<8>());
    if (!(s.pursuer.r > kRadiusFloor) || !(s.evader.r > kRadiusFloor))
      throw PropagationError("coupled system: radius below floor", t);
    const FollowerCostate lp =
        FollowerCostate::from_vec(y.template segment<4>(8));
    const FollowerCostate le =
        FollowerCostate::from_vec(y.template segment<4>(12));
    const ControlPair u{hold_p_.apply(game_.follower_control(lp.l_vr, lp.l_vtheta)),
                        hold_e_.apply(game_.leader_control(le.l_vr, le.l_vtheta))};
    VecN<16> d;
    d.template head<8>() = game_.dynamics(s, u).to_vec();
    d.template segment<4>(8) =
        game_.follower_costate_dynamics(s.pursuer, lp).to_vec();
    d.template segment<4>(12) =
        game_.leader_costate_dynamics(s.evader, le).to_vec();
    return d;
  }

 private:
  const Game& game_;
  ControlHold hold_p_;
  ControlHold hold_e_;
};

}  // namespace detail

/// Integrates the coupled system over [0, t_f] and samples a dense
/// trajectory (controls, Hamiltonian and the pursuer second-order value at
/// every sample). Throws PropagationError if a radius crosses the floor.
template <StackelbergGame Game>
CoupledIntegrationResult integrate_coupled_system(const Game& game,
                                                  const GameState& s0,
                                                  const FullCostate& lam0,
                                                  double t_f,
                                                  const IntegratorOptions& opts) {
  opts.validate();
  if (!(t_f > 0.0))
    throw std::invalid_argument("integrate_coupled_system: t_f <= 0");
  VecN<16> y0;
  y0.head<8>() = s0.to_vec();
  y0.tail<8>() = lam0.to_vec();

  const std::vector<double> samples = uniform_samples(0.0, t_f, opts.dense_samples);
  Trajectory traj;
  traj.times.reserve(samples.size());
  const double thrust_p = game.parameters().thrust_pursuer;
  auto sink = [&](double t, const VecN<16>& y) {
    const GameState s = GameState::from_vec(y.head<8>());
    const FullCostate lam = FullCostate::from_vec(y.tail<8>());
    const ControlValue cp =
        game.follower_control(lam.pursuer.l_vr, lam.pursuer.l_vtheta);
    const ControlValue ce =
        game.leader_control(lam.evader.l_vr, lam.evader.l_vtheta);
    traj.times.push_back(t);
    traj.states.push_back(s);
    traj.pursuer_costates.push_back(lam.pursuer);
    traj.evader_costates.push_back(lam.evader);
    // hold-last handling for the sampled angles
    double dp = cp.singular && !traj.delta_p.empty() ? traj.delta_p.back()
                                                     : cp.angle;
    double de = ce.singular && !traj.delta_e.empty() ? traj.delta_e.back()
                                                     : ce.angle;
    traj.delta_p.push_back(dp);
    traj.delta_e.push_back(de);
    traj.delta_p_singular.push_back(cp.singular);
    traj.delta_e_singular.push_back(ce.singular);
    traj.hamiltonian_samples.push_back(
        game.energy(s, lam, ControlPair{dp, de}));
    traj.second_order_values.push_back(pursuer_second_order_value(
        lam.pursuer.l_vr, lam.pursuer.l_vtheta, dp, thrust_p));
  };

  detail::CoupledSystem<Game> rhs(game);
  VecN<16> yf;
  if (opts.method == IntegratorOptions::Method::rk4) {
    yf = integrate_rk4<16>(rhs, 0.0, t_f, y0, opts.rk4_steps, samples, sink);
  } else {
    yf = integrate_dopri45<16>(rhs, 0.0, t_f, y0, opts.rel_tol, opts.abs_tol,
                               samples, sink);
  }
  CoupledIntegrationResult out;
  out.terminal_state = GameState::from_vec(yf.head<8>());
  out.terminal_costate = FullCostate::from_vec(yf.tail<8>());
  out.trajectory = std::move(traj);
  return out;
}

/// Boundary residuals of the two-point boundary-value problem, in order:
///   [0] r_p - r_e               (capture, radial)
///   [1] theta_p - theta_e       (capture, angular)
///   [2] lambda_vrp(t_f)
///   [3] lambda_vthp(t_f)
///   [4] lambda_vre(t_f)
///   [5] lambda_vthe(t_f)
///   [6] lambda_re + lambda_rp   (multiplier elimination)
///   [7] lambda_the + lambda_thp (multiplier elimination)
///   [8] transversality
template <StackelbergGame Game>
VecN<9> tpbvp_residual(const ShootingUnknowns& u, const Game& game,
                       const IntegratorOptions& opts) {
  if (!u.to_vec().allFinite())
    throw std::invalid_argument("tpbvp_residual: non-finite unknowns");
  // terminal values only; skip the dense sampling work
  IntegratorOptions fast = opts;
  fast.dense_samples = 2;
  const auto r = integrate_coupled_system(game, game.initial_state(),
                                          u.initial_costate, u.t_f, fast);
  const GameState& sf = r.terminal_state;
  const FullCostate& lf = r.terminal_costate;
  VecN<9> out;
  out.segment<2>(0) = game.capture(sf);
  out[2] = lf.pursuer.l_vr;
  out[3] = lf.pursuer.l_vtheta;
  out[4] = lf.evader.l_vr;
  out[5] = lf.evader.l_vtheta;
  out[6] = lf.evader.l_r + lf.pursuer.l_r;
  out[7] = lf.evader.l_theta + lf.pursuer.l_theta;
  out[8] = game.transversality(sf, lf.pursuer.l_r, lf.pursuer.l_theta);
  return out;
}

struct TpbvpResult {
  ShootingUnknowns unknowns;
  Trajectory trajectory;
  bool converged = false;
  int iterations = 0;
  double residual_norm = 0.0;  ///< final ||residual||_inf
  std::vector<double> residual_history;  ///< ||residual||_inf per iteration
  std::vector<double> step_history;      ///< Newton step norms
  std::string message;
};

/// Damped Newton on the boundary residuals with a forward-difference
/// Jacobian; backtracking halves the step on the residual 2-norm.
template <StackelbergGame Game>
TpbvpResult solve_tpbvp(const ShootingUnknowns& u0, const Game& game,
                        const ShootingOptions& opts = {}) {
  TpbvpResult res;
  VecN<9> u = u0.to_vec();
  if (!u.allFinite()) {
    res.message = "non-finite initial unknowns";
    return res;
  }
  auto eval = [&](const VecN<9>& v) {
    return tpbvp_residual(ShootingUnknowns::from_vec(v), game, opts.integrator);
  };
  VecN<9> r;
  try {
    r = eval(u);
  } catch (const PropagationError& e) {
    res.message = std::string("initial propagation failed: ") + e.what();
    res.unknowns = ShootingUnknowns::from_vec(u);
    return res;
  }
  for (int it = 0; it < opts.max_newton_iterations; ++it) {
    res.iterations = it + 1;
    // Exact gauge normalization: the thrust-direction laws are homogeneous
    // of degree zero in the costates, so a positive rescale of all initial
    // costates leaves the trajectory (and the capture residuals) unchanged,
    // scales the linear costate residuals, and moves the transversality
    // bracket linearly. Pick the scale that zeroes it.
    {
      const double bracket = r[8] - 1.0;
      if (bracket < -0.1) {
        const double c = -1.0 / bracket;
        if (c > 0.1 && c < 10.0 && std::abs(c - 1.0) > 1e-14) {
          VecN<9> ut = u;
          ut.head<8>() *= c;
          try {
            const VecN<9> rt = eval(ut);
            if (rt.norm() < r.norm()) {
              u = ut;
              r = rt;
            }
          } catch (const PropagationError&) {
          }
        }
      }
    }
    const double rn = r.lpNorm<Eigen::Infinity>();
    res.residual_history.push_back(rn);
    if (rn <= opts.tolerance) {
      res.converged = true;
      res.residual_norm = rn;
      res.unknowns = ShootingUnknowns::from_vec(u);
      res.message = "converged";
      const auto full = integrate_coupled_system(
          game, game.initial_state(), res.unknowns.initial_costate,
          res.unknowns.t_f, opts.integrator);
      res.trajectory = full.trajectory;
      return res;
    }
    // forward-difference Jacobian, one propagation per column
    Eigen::Matrix<double, 9, 9> Jm;
    bool jac_ok = true;
    for (int j = 0; j < 9 && jac_ok; ++j) {
      const double h = opts.fd_step_relative * std::max(1.0, std::abs(u[j]));
      VecN<9> up = u;
      up[j] += h;
      try {
        Jm.col(j) = (eval(up) - r) / h;
      } catch (const PropagationError&) {
        up[j] = u[j] - h;  // try the other side
        try {
          Jm.col(j) = (r - eval(up)) / h;
        } catch (const PropagationError&) {
          jac_ok = false;
        }
      }
    }
    if (!jac_ok) {
      res.residual_norm = rn;
      res.unknowns = ShootingUnknowns::from_vec(u);
      res.message = "propagation failed while forming the Jacobian";
      return res;
    }
    const double r2 = r.norm();
    bool moved = false;
    // Plain Newton direction with backtracking first; if the valley is too
    // curved for that (the terminal singularity squeezes it), fall back to
    // Levenberg-Marquardt steps on the same Jacobian.
    for (double mu : {0.0, 1e-8, 1e-6, 1e-4, 1e-2, 1.0, 1e2}) {
      VecN<9> du;
      if (mu == 0.0) {
        du = Eigen::PartialPivLU<Eigen::Matrix<double, 9, 9>>(Jm).solve(-r);
      } else {
        Eigen::Matrix<double, 9, 9> A = Jm.transpose() * Jm;
        A.diagonal() += mu * A.diagonal().cwiseMax(1e-12);
        du = Eigen::LLT<Eigen::Matrix<double, 9, 9>>(A).solve(
            Jm.transpose() * (-r));
      }
      if (!du.allFinite()) continue;
      double alpha = 1.0;
      const int halvings = mu == 0.0 ? opts.max_halvings : 8;
      for (int half = 0; half <= halvings; ++half) {
        VecN<9> ut = u + alpha * du;
        if (ut[8] > 0.05) {  // keep the horizon positive
          try {
            const VecN<9> rt = eval(ut);
            if (rt.norm() < r2) {
              res.step_history.push_back(alpha * du.norm());
              u = ut;
              r = rt;
              moved = true;
              break;
            }
          } catch (const PropagationError&) {
          }
        }
        alpha *= 0.5;
      }
      if (moved) break;
    }
    if (!moved) {
      res.residual_norm = rn;
      res.unknowns = ShootingUnknowns::from_vec(u);
      res.message = "damped Newton stalled (no residual decrease)";
      return res;
    }
  }
  res.residual_norm = r.lpNorm<Eigen::Infinity>();
  res.unknowns = ShootingUnknowns::from_vec(u);
  res.message = "maximum Newton iterations reached";
  return res;
}

}  // namespace pegs
