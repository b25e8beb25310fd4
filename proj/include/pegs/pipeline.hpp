#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "pegs/config.hpp"
#include "pegs/game_core.hpp"
#include "pegs/io.hpp"
#include "pegs/nlp.hpp"
#include "pegs/ode.hpp"
#include "pegs/shooting.hpp"
#include "pegs/transcription.hpp"
#include "pegs/trajectory.hpp"

// Run orchestration: solve (Semi-DCNLP), shoot (indirect validator), compare,
// plot-data emission, and the persisted artifact layout. Every run directory
// receives a config snapshot, the trajectory CSV, a diagnostics JSON and a
// machine-readable status file; no artifact carries wall-clock data, so
// reruns of the same config are bit-identical.

namespace pegs {

namespace fs = std::filesystem;

inline constexpr int kCompareGridPoints = 200;

inline SpacecraftGame game_from_config(const RunConfig& cfg) {
  return SpacecraftGame(cfg.parameters, cfg.initial_state);
}

inline Transcription<SpacecraftGame> transcription_from_config(
    const RunConfig& cfg) {
  return Transcription<SpacecraftGame>(game_from_config(cfg),
                                       Mesh(cfg.mesh_segments), cfg.rule);
}

/// Bundles a transcription into the generic NLP interface. The transcription
/// is shared immutably, so the returned closures are safe to evaluate
/// concurrently at distinct points.
inline NLPProblem make_nlp(std::shared_ptr<const Transcription<SpacecraftGame>> tr) {
  NLPProblem p;
  p.n_vars = tr->num_vars();
  p.n_cons = tr->num_constraints();
  p.lower = tr->lower_bounds();
  p.upper = tr->upper_bounds();
  p.objective = [tr](const Vec& z) { return tr->objective(z); };
  p.eq_constraints = [tr](const Vec& z) { return tr->constraints(z); };
  return p;
}

namespace detail {

inline void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write: " + path.string());
  out << j.dump(2) << '\n';
}

inline json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("JSON parse error in " + path.string() + ": " + e.what());
  }
  return j;
}

inline void write_status(const fs::path& dir, const std::string& command,
                         const std::string& status, int exit_code,
                         double t_f) {
  json j;
  j["schema_version"] = 1;
  j["command"] = command;
  j["status"] = status;
  j["exit_code"] = exit_code;
  j["t_f"] = t_f;
  write_json(j, dir / "status.json");
}

}  // namespace detail

struct SolveArtifacts {
  Trajectory trajectory;
  SolverResult solver;
  fs::path dir;
  bool converged() const { return solver.status == SolveStatus::converged; }
};

/// Semi-DCNLP pipeline: transcribe, solve, extract, persist.
/// Artifacts are written even when the solver fails, for debugging.
inline SolveArtifacts run_solve(const RunConfig& cfg) {
  cfg.validate();
  const fs::path dir = cfg.out_dir;
  fs::create_directories(dir);
  save_config(cfg, dir / "config.json");

  auto tr = std::make_shared<const Transcription<SpacecraftGame>>(
      transcription_from_config(cfg));
  const NLPProblem nlp = make_nlp(tr);
  const Vec z0 = tr->initial_guess(cfg.t_f_guess);

  std::ofstream log_stream;
  SolverOptions opts = cfg.solver;
  if (opts.verbosity > 0) {
    log_stream.open(dir / "iterations.log");
    opts.log = &log_stream;
  }
  SolverResult result = solve(nlp, z0, opts);

  SolveArtifacts art;
  art.trajectory = tr->extract_trajectory(result.x);
  art.solver = std::move(result);
  art.dir = dir;

  write_trajectory_csv(art.trajectory, dir / "trajectory.csv");
  json diag;
  diag["t_f"] = art.trajectory.t_f();
  diag["objective"] = -art.trajectory.t_f();
  diag["constraint_norm"] = art.trajectory.constraint_norm;
  diag["mesh_segments"] = cfg.mesh_segments;
  diag["collocation_rule"] = to_string(cfg.rule);
  diag["solver"] = {
      {"status", to_string(art.solver.status)},
      {"iterations", art.solver.iterations},
      {"constraint_evaluations", art.solver.constraint_evaluations},
      {"message", art.solver.message},
      {"kkt",
       {{"constraint_norm", art.solver.kkt.constraint_norm},
        {"stationarity_norm", art.solver.kkt.stationarity_norm}}}};
  {
    std::vector<int> singular_nodes;
    for (std::size_t k = 0; k < art.trajectory.delta_p_singular.size(); ++k)
      if (art.trajectory.delta_p_singular[k])
        singular_nodes.push_back(static_cast<int>(k));
    double min_so = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < art.trajectory.second_order_values.size(); ++k)
      if (!art.trajectory.delta_p_singular[k])
        min_so = std::min(min_so, art.trajectory.second_order_values[k]);
    diag["singular_nodes"] = singular_nodes;
    diag["second_order_min_nonsingular"] = min_so;
  }
  detail::write_json(diag, dir / "diagnostics.json");
  detail::write_status(dir, "solve", to_string(art.solver.status),
                       art.converged() ? 0 : 2, art.trajectory.t_f());
  return art;
}

/// Initial shooting unknowns from a collocation (or shooting) trajectory.
/// Pursuer costates come from the first sample. Evader costates come from
/// the first sample when present; otherwise they are estimated by
/// integrating the evader costate equations backward from their terminal
/// conditions along the seed's interpolated evader states.
inline ShootingUnknowns seed_unknowns_from_trajectory(const SpacecraftGame& game,
                                                      const Trajectory& seed) {
  if (seed.pursuer_costates.empty())
    throw IoError("seed trajectory carries no pursuer costates");
  ShootingUnknowns u;
  u.t_f = seed.t_f();
  u.initial_costate.pursuer = seed.pursuer_costates.front();
  if (seed.has_evader_costates()) {
    u.initial_costate.evader = seed.evader_costates.front();
    return u;
  }
  // interpolated evader state along the seed
  const auto evader_at = [&seed](double t) -> PlayerState {
    const auto& ts = seed.times;
    auto it = std::upper_bound(ts.begin(), ts.end(), t);
    std::size_t hi = std::clamp<std::size_t>(it - ts.begin(), 1, ts.size() - 1);
    const std::size_t lo = hi - 1;
    const double w = (t - ts[lo]) / (ts[hi] - ts[lo]);
    const VecN<4> v = (1.0 - w) * seed.states[lo].evader.to_vec() +
                      w * seed.states[hi].evader.to_vec();
    return PlayerState::from_vec(v);
  };
  const FollowerCostate lpf = seed.pursuer_costates.back();
  const VecN<4> le_tf(0.0, 0.0, -lpf.l_r, -lpf.l_theta);
  const double t_f = u.t_f;
  const double mu = game.parameters().mu;
  // integrate backward in the substitution tau = t_f - t
  auto rhs = [&](double tau, const VecN<4>& le) -> VecN<4> {
    const PlayerState se = evader_at(t_f - tau);
    return -leader_costate_derivative(se, FollowerCostate::from_vec(le), mu)
                .to_vec();
  };
  const VecN<4> le0 = integrate_rk4<4>(rhs, 0.0, t_f, le_tf, 2000);
  u.initial_costate.evader = FollowerCostate::from_vec(le0);
  return u;
}

struct ShootArtifacts {
  Trajectory trajectory;
  TpbvpResult result;
  fs::path dir;
  bool converged() const { return result.converged; }
};

/// Indirect-method validation run seeded from a persisted trajectory.
inline ShootArtifacts run_shoot(const RunConfig& cfg, const fs::path& seed_path) {
  cfg.validate();
  const fs::path dir = cfg.out_dir;
  fs::create_directories(dir);
  save_config(cfg, dir / "config.json");

  const Trajectory seed = read_trajectory_csv(seed_path);
  const SpacecraftGame game = game_from_config(cfg);
  const ShootingUnknowns u0 = seed_unknowns_from_trajectory(game, seed);
  ShootingOptions opts;
  opts.integrator = cfg.integrator;
  TpbvpResult result = solve_tpbvp(u0, game, opts);

  ShootArtifacts art;
  art.result = std::move(result);
  art.dir = dir;
  if (art.result.converged) {
    art.trajectory = art.result.trajectory;
    write_trajectory_csv(art.trajectory, dir / "trajectory.csv");
  }
  json diag;
  diag["seed"] = seed_path.string();
  diag["newton"] = {{"converged", art.result.converged},
                    {"iterations", art.result.iterations},
                    {"residual_norm", art.result.residual_norm},
                    {"message", art.result.message},
                    {"residual_history", art.result.residual_history},
                    {"step_history", art.result.step_history}};
  diag["t_f"] = art.result.unknowns.t_f;
  if (art.result.converged) {
    double h_max = 0.0, drift = 0.0;
    const double l_th0 = art.trajectory.pursuer_costates.front().l_theta;
    for (std::size_t i = 0; i < art.trajectory.size(); ++i) {
      h_max = std::max(h_max, std::abs(art.trajectory.hamiltonian_samples[i]));
      drift = std::max(drift, std::abs(art.trajectory.pursuer_costates[i].l_theta -
                                       l_th0));
    }
    diag["max_abs_hamiltonian"] = h_max;
    diag["lam_theta_p_drift"] = drift;
  }
  detail::write_json(diag, dir / "diagnostics.json");
  detail::write_status(dir, "shoot",
                       art.result.converged ? "converged" : "failed",
                       art.result.converged ? 0 : 2, art.result.unknowns.t_f);
  return art;
}

struct CompareTolerances {
  double relative_tf = 0.08;
  double state_deviation = 0.1;  ///< gate on r and theta histories
};

struct CompareReport {
  double t_f_a = 0.0;
  double t_f_b = 0.0;
  double relative_tf_difference = 0.0;
  std::map<std::string, double> max_deviation;  // all 8 state variables
  bool pass = false;
};

inline json compare_report_to_json(const CompareReport& r,
                                   const CompareTolerances& tol) {
  json j;
  j["t_f_a"] = r.t_f_a;
  j["t_f_b"] = r.t_f_b;
  j["relative_tf_difference"] = r.relative_tf_difference;
  j["max_deviation"] = r.max_deviation;
  j["grid_points"] = kCompareGridPoints;
  j["tolerances"] = {{"relative_tf", tol.relative_tf},
                     {"state_deviation", tol.state_deviation}};
  j["pass"] = r.pass;
  return j;
}

/// Resamples both trajectories onto a common uniform grid over the shared
/// time range by linear interpolation and reports per-variable maximum
/// deviations plus the relative terminal-time difference
/// |tf_a - tf_b| / min(tf_a, tf_b).
inline CompareReport run_compare(const fs::path& a_path, const fs::path& b_path,
                                 const CompareTolerances& tol = {},
                                 const fs::path& report_path = {}) {
  const Trajectory a = read_trajectory_csv(a_path);
  const Trajectory b = read_trajectory_csv(b_path);
  CompareReport rep;
  rep.t_f_a = a.t_f();
  rep.t_f_b = b.t_f();
  rep.relative_tf_difference =
      std::abs(rep.t_f_a - rep.t_f_b) / std::min(rep.t_f_a, rep.t_f_b);

  auto interp_state = [](const Trajectory& tr, double t) -> VecN<8> {
    const auto& ts = tr.times;
    auto it = std::upper_bound(ts.begin(), ts.end(), t);
    std::size_t hi = std::clamp<std::size_t>(it - ts.begin(), 1, ts.size() - 1);
    const std::size_t lo = hi - 1;
    const double w = (t - ts[lo]) / (ts[hi] - ts[lo]);
    return (1.0 - w) * tr.states[lo].to_vec() + w * tr.states[hi].to_vec();
  };
  static constexpr std::array<const char*, 8> kNames = {
      "v_rp", "v_thp", "r_p", "th_p", "v_re", "v_the", "r_e", "th_e"};
  const double t_hi = std::min(rep.t_f_a, rep.t_f_b);
  VecN<8> dev = VecN<8>::Zero();
  for (int i = 0; i < kCompareGridPoints; ++i) {
    const double t = t_hi * static_cast<double>(i) / (kCompareGridPoints - 1);
    const VecN<8> da = interp_state(a, t);
    const VecN<8> db = interp_state(b, t);
    dev = dev.cwiseMax((da - db).cwiseAbs());
  }
  for (int i = 0; i < 8; ++i) rep.max_deviation[kNames[i]] = dev[i];
  rep.pass = rep.relative_tf_difference <= tol.relative_tf &&
             dev[2] <= tol.state_deviation && dev[3] <= tol.state_deviation &&
             dev[6] <= tol.state_deviation && dev[7] <= tol.state_deviation;
  if (!report_path.empty()) {
    if (report_path.has_parent_path())
      fs::create_directories(report_path.parent_path());
    detail::write_json(compare_report_to_json(rep, tol), report_path);
  }
  return rep;
}

/// Writes plot-ready CSVs reproducing the figure content: planar paths,
/// pursuer costate histories, both velocity histories, control angles.
/// Files whose data the trajectory does not carry are skipped.
inline std::vector<fs::path> emit_plot_data(const fs::path& traj_path,
                                            const fs::path& out_dir) {
  const Trajectory tr = read_trajectory_csv(traj_path);
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  auto open_csv = [&](const fs::path& name, const std::string& header)
      -> std::ofstream {
    std::ofstream out(out_dir / name);
    if (!out) throw IoError("cannot write: " + (out_dir / name).string());
    out << header << '\n';
    return out;
  };
  {
    auto out = open_csv("planar_paths.csv", "t,x_p,y_p,x_e,y_e");
    for (std::size_t i = 0; i < tr.size(); ++i) {
      const auto& s = tr.states[i];
      out << format_double(tr.times[i]) << ','
          << format_double(s.pursuer.r * std::cos(s.pursuer.theta)) << ','
          << format_double(s.pursuer.r * std::sin(s.pursuer.theta)) << ','
          << format_double(s.evader.r * std::cos(s.evader.theta)) << ','
          << format_double(s.evader.r * std::sin(s.evader.theta)) << '\n';
    }
    written.push_back(out_dir / "planar_paths.csv");
  }
  {
    auto out = open_csv("pursuer_velocities.csv", "t,v_rp,v_thp");
    for (std::size_t i = 0; i < tr.size(); ++i)
      out << format_double(tr.times[i]) << ','
          << format_double(tr.states[i].pursuer.v_r) << ','
          << format_double(tr.states[i].pursuer.v_theta) << '\n';
    written.push_back(out_dir / "pursuer_velocities.csv");
  }
  {
    auto out = open_csv("evader_velocities.csv", "t,v_re,v_the");
    for (std::size_t i = 0; i < tr.size(); ++i)
      out << format_double(tr.times[i]) << ','
          << format_double(tr.states[i].evader.v_r) << ','
          << format_double(tr.states[i].evader.v_theta) << '\n';
    written.push_back(out_dir / "evader_velocities.csv");
  }
  if (!tr.pursuer_costates.empty()) {
    auto out = open_csv("pursuer_costates.csv", "t,lam_vrp,lam_vthp,lam_rp,lam_thp");
    for (std::size_t i = 0; i < tr.size(); ++i) {
      const auto& l = tr.pursuer_costates[i];
      out << format_double(tr.times[i]) << ',' << format_double(l.l_vr) << ','
          << format_double(l.l_vtheta) << ',' << format_double(l.l_r) << ','
          << format_double(l.l_theta) << '\n';
    }
    written.push_back(out_dir / "pursuer_costates.csv");
  }
  if (!tr.delta_p.empty()) {
    auto out = open_csv("control_angles.csv", "t,delta_p,delta_e");
    for (std::size_t i = 0; i < tr.size(); ++i)
      out << format_double(tr.times[i]) << ',' << format_double(tr.delta_p[i])
          << ',' << format_double(tr.delta_e[i]) << '\n';
    written.push_back(out_dir / "control_angles.csv");
  }
  return written;
}

/// Control histories interpolated from a collocation solution: the leader
/// control quadratically through node/midpoint values (linearly when
/// midpoints are unavailable), the follower control through the optimality
/// law on cubic-Hermite-interpolated costates.
class CollocationControlInterpolant {
 public:
  CollocationControlInterpolant(const SpacecraftGame& game, Trajectory traj)
      : game_(game), traj_(std::move(traj)) {
    if (traj_.pursuer_costates.empty() || traj_.delta_e.empty())
      throw std::invalid_argument(
          "control interpolant needs costates and controls");
    slopes_.resize(traj_.size());
    for (std::size_t k = 0; k < traj_.size(); ++k)
      slopes_[k] = game_.follower_costate_dynamics(traj_.states[k].pursuer,
                                                   traj_.pursuer_costates[k])
                       .to_vec();
  }

  double delta_e(double t) const {
    const auto [k, sigma] = locate(t);
    const double de_l = traj_.delta_e[k];
    const double de_r = traj_.delta_e[k + 1];
    if (traj_.mid_delta_e.size() == traj_.size() - 1) {
      const double de_m = traj_.mid_delta_e[k];
      return 2.0 * (sigma - 0.5) * (sigma - 1.0) * de_l -
             4.0 * sigma * (sigma - 1.0) * de_m +
             2.0 * sigma * (sigma - 0.5) * de_r;
    }
    return (1.0 - sigma) * de_l + sigma * de_r;
  }

  double delta_p(double t) const {
    const FollowerCostate l = costate_at(t);
    const ControlValue c = game_.follower_control(l.l_vr, l.l_vtheta);
    if (!c.singular) return c.angle;
    // singular only at the terminal instant; fall back to the last node value
    return traj_.delta_p.back();
  }

  FollowerCostate costate_at(double t) const {
    const auto [k, sigma] = locate(t);
    const double h = traj_.times[k + 1] - traj_.times[k];
    const VecN<4> x0 = traj_.pursuer_costates[k].to_vec();
    const VecN<4> x1 = traj_.pursuer_costates[k + 1].to_vec();
    const double s2 = sigma * sigma, s3 = s2 * sigma;
    const double h00 = 2 * s3 - 3 * s2 + 1;
    const double h10 = s3 - 2 * s2 + sigma;
    const double h01 = -2 * s3 + 3 * s2;
    const double h11 = s3 - s2;
    const VecN<4> v =
        h00 * x0 + h01 * x1 + h * (h10 * slopes_[k] + h11 * slopes_[k + 1]);
    return FollowerCostate::from_vec(v);
  }

 private:
  std::pair<std::size_t, double> locate(double t) const {
    const auto& ts = traj_.times;
    auto it = std::upper_bound(ts.begin(), ts.end(), t);
    std::size_t hi = std::clamp<std::size_t>(it - ts.begin(), 1, ts.size() - 1);
    const std::size_t k = hi - 1;
    return {k, (t - ts[k]) / (ts[hi] - ts[k])};
  }

  SpacecraftGame game_;
  Trajectory traj_;
  std::vector<VecN<4>> slopes_;
};

struct ReintegrationCheck {
  GameState terminal_state;
  FollowerCostate terminal_costate;
  Eigen::Vector2d capture_residual;
  double lam_vr_terminal = 0.0;
  double lam_vtheta_terminal = 0.0;
};

/// Re-propagates the state and pursuer-costate equations with controls
/// interpolated from a collocation solution; the terminal residuals measure
/// how well the discrete solution tracks the continuous dynamics.
inline ReintegrationCheck reintegrate_with_interpolated_controls(
    const SpacecraftGame& game, const Trajectory& traj, int steps = 4000) {
  const CollocationControlInterpolant controls(game, traj);
  VecN<12> y0;
  y0.head<8>() = traj.states.front().to_vec();
  y0.tail<4>() = traj.pursuer_costates.front().to_vec();
  auto rhs = [&](double t, const VecN<12>& y) -> VecN<12> {
    const GameState s = GameState::from_vec(y.head<8>());
    const FollowerCostate lp = FollowerCostate::from_vec(y.tail<4>());
    const ControlPair u{controls.delta_p(t), controls.delta_e(t)};
    VecN<12> d;
    d.head<8>() = game.dynamics(s, u).to_vec();
    d.tail<4>() = game.follower_costate_dynamics(s.pursuer, lp).to_vec();
    return d;
  };
  const VecN<12> yf =
      integrate_rk4<12>(rhs, traj.times.front(), traj.t_f(), y0, steps);
  ReintegrationCheck chk;
  chk.terminal_state = GameState::from_vec(yf.head<8>());
  chk.terminal_costate = FollowerCostate::from_vec(yf.tail<4>());
  chk.capture_residual = game.capture(chk.terminal_state);
  chk.lam_vr_terminal = chk.terminal_costate.l_vr;
  chk.lam_vtheta_terminal = chk.terminal_costate.l_vtheta;
  return chk;
}

}  // namespace pegs
