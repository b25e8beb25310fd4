#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "pegs/collocation.hpp"
#include "pegs/game_core.hpp"
#include "pegs/ode.hpp"
#include "pegs/trajectory.hpp"
#include "pegs/types.hpp"

// Transcribes the Stackelberg necessary-condition system into a
// finite-dimensional equality-constrained NLP: node states, node follower
// costates and leader controls become variables, the coupled state/costate
// ODEs become collocation defects, and the boundary set (initial state,
// capture, terminal follower costates, transversality) closes the system.
// The follower control is eliminated analytically via its closed-form
// optimality law, so it never appears as a variable.

namespace pegs {

enum class CollocationRule { hermite_simpson, gauss_lobatto5 };

inline const char* to_string(CollocationRule r) {
  return r == CollocationRule::hermite_simpson ? "hermite-simpson"
                                               : "gauss-lobatto-5";
}

inline CollocationRule collocation_rule_from_string(const std::string& s) {
  if (s == "hermite-simpson") return CollocationRule::hermite_simpson;
  if (s == "gauss-lobatto-5") return CollocationRule::gauss_lobatto5;
  throw std::invalid_argument("unknown collocation rule: " + s);
}

/// Normalized collocation mesh on [0, 1].
class Mesh {
 public:
  explicit Mesh(int n_segments) {
    if (n_segments < 2) throw std::invalid_argument("Mesh: n_segments < 2");
    taus_.resize(n_segments + 1);
    for (int k = 0; k <= n_segments; ++k)
      taus_[k] = static_cast<double>(k) / n_segments;
    taus_.back() = 1.0;
  }
  explicit Mesh(std::vector<double> taus) : taus_(std::move(taus)) {
    if (taus_.size() < 3) throw std::invalid_argument("Mesh: n_segments < 2");
    if (taus_.front() != 0.0 || taus_.back() != 1.0)
      throw std::invalid_argument("Mesh: nodes must span [0, 1]");
    for (std::size_t i = 1; i < taus_.size(); ++i)
      if (!(taus_[i] > taus_[i - 1]))
        throw std::invalid_argument("Mesh: nodes must be strictly increasing");
  }

  int segments() const { return static_cast<int>(taus_.size()) - 1; }
  int nodes() const { return static_cast<int>(taus_.size()); }
  const std::vector<double>& tau() const { return taus_; }

 private:
  std::vector<double> taus_;
};

/// Index map of the flattened decision vector:
/// per node k: [8 state, 4 follower costate, 1 leader control], then one
/// midpoint leader control per segment, then the terminal time.
struct DecisionLayout {
  static constexpr int kNodeBlock =
      kStateDim + kCostateDim + 1;  // 13 scalars per node

  int segments = 0;

  int nodes() const { return segments + 1; }
  int size() const { return kNodeBlock * nodes() + segments + 1; }
  int state_offset(int k) const { return kNodeBlock * k; }
  int costate_offset(int k) const { return kNodeBlock * k + kStateDim; }
  int control_offset(int k) const {
    return kNodeBlock * k + kStateDim + kCostateDim;
  }
  int mid_control_offset(int seg) const {
    return kNodeBlock * nodes() + seg;
  }
  int tf_offset() const { return size() - 1; }
};

struct VariableBounds {
  double t_f_min = 0.5;
  double t_f_max = 10.0;
  double radius_floor = kRadiusFloor;
  double box = 50.0;  ///< generic bound on all other variables
};

template <StackelbergGame Game>
class Transcription {
 public:
  Transcription(Game game, Mesh mesh,
                CollocationRule rule = CollocationRule::hermite_simpson,
                VariableBounds bounds = {})
      : game_(std::move(game)),
        mesh_(std::move(mesh)),
        rule_(rule),
        bounds_(bounds),
        layout_{mesh_.segments()} {
    static_assert(Game::kStateSize == kStateDim &&
                  Game::kFollowerCostateSize == kCostateDim &&
                  Game::kLeaderControlSize == 1);
    if (!(num_constraints() < num_vars()))
      throw std::logic_error("Transcription: no degrees of freedom");
  }

  const Game& game() const { return game_; }
  const Mesh& mesh() const { return mesh_; }
  CollocationRule rule() const { return rule_; }
  const DecisionLayout& layout() const { return layout_; }

  int num_vars() const { return layout_.size(); }
  /// 8 initial conditions + 12 defects per segment + 2 capture
  /// + 2 terminal velocity costates + 1 transversality.
  int num_constraints() const { return 12 * mesh_.segments() + 13; }

  double objective(const Vec& z) const { return -z[layout_.tf_offset()]; }

  Vec objective_gradient(const Vec& z) const {
    Vec g = Vec::Zero(z.size());
    g[layout_.tf_offset()] = -1.0;
    return g;
  }

  Vec lower_bounds() const {
    Vec lo = Vec::Constant(num_vars(), -bounds_.box);
    for (int k = 0; k < layout_.nodes(); ++k) {
      lo[layout_.state_offset(k) + 2] = bounds_.radius_floor;  // r_p
      lo[layout_.state_offset(k) + 6] = bounds_.radius_floor;  // r_e
    }
    lo[layout_.tf_offset()] = bounds_.t_f_min;
    return lo;
  }

  Vec upper_bounds() const {
    Vec hi = Vec::Constant(num_vars(), bounds_.box);
    hi[layout_.tf_offset()] = bounds_.t_f_max;
    return hi;
  }

  /// Assembled equality-constraint residual, in fixed order:
  /// (a) initial state, (b) per-segment state+costate defects,
  /// (c) capture, (d) terminal velocity costates, (e) transversality.
  Vec constraints(const Vec& z) const {
    if (z.size() != num_vars())
      throw std::invalid_argument("constraints: dimension mismatch");
    if (!z.allFinite())
      throw std::domain_error("constraints: non-finite entries");
    const int n_seg = mesh_.segments();
    const double t_f = z[layout_.tf_offset()];
    Vec c(num_constraints());
    int at = 0;

    const VecN<8> s0 = game_.initial_state().to_vec();
    c.segment<8>(at) = z.segment<8>(layout_.state_offset(0)) - s0;
    at += 8;

    for (int k = 0; k < n_seg; ++k) {
      const double h = t_f * (mesh_.tau()[k + 1] - mesh_.tau()[k]);
      const VecN<12> yk = node_y(z, k);
      const VecN<12> yk1 = node_y(z, k + 1);
      const VecN<12> fk = coupled_rhs(yk, z[layout_.control_offset(k)]);
      const VecN<12> fk1 = coupled_rhs(yk1, z[layout_.control_offset(k + 1)]);
      const double de_mid = z[layout_.mid_control_offset(k)];
      const VecN<12> yc = hermite_simpson_midpoint(yk, yk1, fk, fk1, h);
      const VecN<12> fc = coupled_rhs(yc, de_mid);
      if (rule_ == CollocationRule::hermite_simpson) {
        c.segment<12>(at) = hermite_simpson_defect(yk, yk1, fk, fk1, fc, h);
      } else {
        const double de_k = z[layout_.control_offset(k)];
        const double de_k1 = z[layout_.control_offset(k + 1)];
        std::array<VecN<12>, 5> f;
        f[0] = fk;
        f[2] = fc;
        f[4] = fk1;
        for (int i : {1, 3}) {
          const double sg = kLobatto5Nodes[i];
          const VecN<12> yi =
              quintic_hermite_value(yk, fk, yc, fc, yk1, fk1, h, sg);
          f[i] = coupled_rhs(yi, interp_control(de_k, de_mid, de_k1, sg));
        }
        c.segment<12>(at) = gauss_lobatto5_defect(yk, yk1, f, h);
      }
      at += 12;
    }

    const GameState sN =
        GameState::from_vec(z.segment<8>(layout_.state_offset(n_seg)));
    const VecN<4> lN = z.segment<4>(layout_.costate_offset(n_seg));
    c.segment<2>(at) = game_.capture(sN);
    at += 2;
    c[at++] = lN[0];  // terminal radial-velocity costate
    c[at++] = lN[1];  // terminal transverse-velocity costate
    c[at++] = game_.transversality(sN, lN[2], lN[3]);
    return c;
  }

  /// Deterministic starting point: the evader guess coasts (zero thrust)
  /// from its initial state, the pursuer interpolates linearly to the
  /// evader's endpoint so the guess already satisfies capture, follower
  /// costates are a small constant, leader controls are zero.
  Vec initial_guess(double t_f_guess) const {
    if (!(t_f_guess > 0.0))
      throw std::invalid_argument("initial_guess: t_f_guess <= 0");
    const int n_seg = mesh_.segments();
    Vec z = Vec::Zero(num_vars());
    const PlayerState e0 = game_.initial_state().evader;
    const double mu = game_.parameters().mu;

    std::vector<double> sample_times(mesh_.nodes());
    for (int k = 0; k < mesh_.nodes(); ++k)
      sample_times[k] = mesh_.tau()[k] * t_f_guess;
    std::vector<VecN<4>> coast;
    coast.reserve(mesh_.nodes());
    auto kepler = [mu](double, const VecN<4>& y) -> VecN<4> {
      return detail::player_derivative(PlayerState::from_vec(y), 0.0, 0.0, mu);
    };
    integrate_rk4<4>(kepler, 0.0, t_f_guess, e0.to_vec(), 4000, sample_times,
                     [&coast](double, const VecN<4>& y) { coast.push_back(y); });

    const VecN<4> p0 = game_.initial_state().pursuer.to_vec();
    const VecN<4> meet = coast.back();
    const VecN<4> costate_guess(-0.1, -0.1, -0.1, 0.0);
    for (int k = 0; k < mesh_.nodes(); ++k) {
      const double tau = mesh_.tau()[k];
      z.segment<4>(layout_.state_offset(k)) = p0 + tau * (meet - p0);
      z.segment<4>(layout_.state_offset(k) + 4) = coast[k];
      z.segment<4>(layout_.costate_offset(k)) = costate_guess;
      z[layout_.control_offset(k)] = 0.0;
    }
    for (int k = 0; k < n_seg; ++k) z[layout_.mid_control_offset(k)] = 0.0;
    z[layout_.tf_offset()] = t_f_guess;
    return z;
  }

  /// Maps a decision vector to a trajectory with reconstructed pursuer
  /// controls and diagnostics. Hamiltonian samples take the evader costates
  /// as zero except at the final node, where the terminal conditions fix
  /// them to the negated pursuer values.
  Trajectory extract_trajectory(const Vec& z) const {
    if (z.size() != num_vars())
      throw std::invalid_argument("extract_trajectory: dimension mismatch");
    const int n_nodes = mesh_.nodes();
    const double t_f = z[layout_.tf_offset()];
    const double thrust_p = game_.parameters().thrust_pursuer;
    Trajectory traj;
    traj.times.resize(n_nodes);
    traj.states.resize(n_nodes);
    traj.pursuer_costates.resize(n_nodes);
    traj.delta_p.resize(n_nodes);
    traj.delta_e.resize(n_nodes);
    traj.delta_p_singular.resize(n_nodes);
    traj.delta_e_singular.assign(n_nodes, false);
    traj.hamiltonian_samples.resize(n_nodes);
    traj.second_order_values.resize(n_nodes);
    ControlHold hold;
    for (int k = 0; k < n_nodes; ++k) {
      traj.times[k] = t_f * mesh_.tau()[k];
      traj.states[k] =
          GameState::from_vec(z.segment<8>(layout_.state_offset(k)));
      const FollowerCostate lp =
          FollowerCostate::from_vec(z.segment<4>(layout_.costate_offset(k)));
      traj.pursuer_costates[k] = lp;
      const ControlValue cp = game_.follower_control(lp.l_vr, lp.l_vtheta);
      traj.delta_p[k] = hold.apply(cp);
      traj.delta_p_singular[k] = cp.singular;
      traj.delta_e[k] = z[layout_.control_offset(k)];
      FullCostate lam;
      lam.pursuer = lp;
      if (k == n_nodes - 1) lam.evader = {0.0, 0.0, -lp.l_r, -lp.l_theta};
      traj.hamiltonian_samples[k] = game_.energy(
          traj.states[k], lam, ControlPair{traj.delta_p[k], traj.delta_e[k]});
      traj.second_order_values[k] = pursuer_second_order_value(
          lp.l_vr, lp.l_vtheta, traj.delta_p[k], thrust_p);
    }
    traj.mid_delta_e.resize(mesh_.segments());
    for (int k = 0; k < mesh_.segments(); ++k)
      traj.mid_delta_e[k] = z[layout_.mid_control_offset(k)];
    traj.constraint_norm = constraints(z).template lpNorm<Eigen::Infinity>();
    return traj;
  }

  /// Exact inverse of extract_trajectory on the decision variables.
  Vec pack(const Trajectory& traj) const {
    if (static_cast<int>(traj.size()) != mesh_.nodes() ||
        static_cast<int>(traj.mid_delta_e.size()) != mesh_.segments())
      throw std::invalid_argument("pack: trajectory/mesh mismatch");
    Vec z = Vec::Zero(num_vars());
    for (int k = 0; k < mesh_.nodes(); ++k) {
      z.segment<8>(layout_.state_offset(k)) = traj.states[k].to_vec();
      z.segment<4>(layout_.costate_offset(k)) =
          traj.pursuer_costates[k].to_vec();
      z[layout_.control_offset(k)] = traj.delta_e[k];
    }
    for (int k = 0; k < mesh_.segments(); ++k)
      z[layout_.mid_control_offset(k)] = traj.mid_delta_e[k];
    z[layout_.tf_offset()] = traj.times.back();
    return z;
  }

 private:
  VecN<12> node_y(const Vec& z, int k) const {
    VecN<12> y;
    y.head<8>() = z.segment<8>(layout_.state_offset(k));
    y.tail<4>() = z.segment<4>(layout_.costate_offset(k));
    return y;
  }

  /// Coupled state + follower-costate slope with the follower control
  /// reconstructed from the costates (angle 0 on the singular set).
  VecN<12> coupled_rhs(const VecN<12>& y, double delta_e) const {
    const GameState s = GameState::from_vec(y.head<8>());
    const FollowerCostate lp = FollowerCostate::from_vec(y.tail<4>());
    const ControlValue cp = game_.follower_control(lp.l_vr, lp.l_vtheta);
    VecN<12> f;
    f.head<8>() = game_.dynamics(s, ControlPair{cp.angle, delta_e}).to_vec();
    f.tail<4>() = game_.follower_costate_dynamics(s.pursuer, lp).to_vec();
    return f;
  }

  /// Quadratic interpolation of the leader control through the node and
  /// midpoint values of one segment.
  static double interp_control(double de_left, double de_mid, double de_right,
                               double sigma) {
    const double l0 = 2.0 * (sigma - 0.5) * (sigma - 1.0);
    const double l1 = -4.0 * sigma * (sigma - 1.0);
    const double l2 = 2.0 * sigma * (sigma - 0.5);
    return l0 * de_left + l1 * de_mid + l2 * de_right;
  }

  Game game_;
  Mesh mesh_;
  CollocationRule rule_;
  VariableBounds bounds_;
  DecisionLayout layout_;
};

}  // namespace pegs
