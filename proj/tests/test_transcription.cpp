#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <vector>

#include "pegs/game_core.hpp"
#include "pegs/shooting.hpp"
#include "pegs/transcription.hpp"

using namespace pegs;

namespace {

Transcription<SpacecraftGame> make_transcription(
    int segments, CollocationRule rule = CollocationRule::hermite_simpson) {
  return Transcription<SpacecraftGame>(SpacecraftGame::benchmark(),
                                       Mesh(segments), rule);
}

ShootingUnknowns reference_unknowns() {
  ShootingUnknowns u;
  u.initial_costate.pursuer = {12.554297221663216, 9.850308439784161,
                               15.385989442000552, -3.2299596627094567};
  u.initial_costate.evader = {-10.267839003731408, -1.0830730663888422,
                              -8.052479456282827, 3.2299596627094567};
  u.t_f = 2.890806146370916;
  return u;
}

// Independent coasting oracle: a hand-rolled RK4 on the polar two-body
// equations, sharing no code with the library integrators.
VecN<4> coast_oracle(const VecN<4>& y0, double t, int steps) {
  auto f = [](const VecN<4>& y) {
    VecN<4> d;
    d[0] = -1.0 / (y[2] * y[2]) + y[1] * y[1] / y[2];
    d[1] = -y[0] * y[1] / y[2];
    d[2] = y[0];
    d[3] = y[1] / y[2];
    return d;
  };
  VecN<4> y = y0;
  const double h = t / steps;
  for (int i = 0; i < steps; ++i) {
    const VecN<4> k1 = f(y);
    const VecN<4> k2 = f(y + 0.5 * h * k1);
    const VecN<4> k3 = f(y + 0.5 * h * k2);
    const VecN<4> k4 = f(y + h * k3);
    y += (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return y;
}

}  // namespace

TEST_CASE("mesh validation", "[transcription]") {
  CHECK_THROWS_AS(Mesh(1), std::invalid_argument);
  CHECK_THROWS_AS(Mesh(std::vector<double>{0.0, 0.5, 0.9}),
                  std::invalid_argument);
  CHECK_THROWS_AS(Mesh(std::vector<double>{0.0, 0.6, 0.5, 1.0}),
                  std::invalid_argument);
  const Mesh m(10);
  CHECK(m.segments() == 10);
  CHECK(m.tau().front() == 0.0);
  CHECK(m.tau().back() == 1.0);
}

TEST_CASE("variable and constraint counting", "[transcription]") {
  for (int n : {2, 5, 12, 40}) {
    const auto tr = make_transcription(n);
    CHECK(tr.num_vars() == 13 * (n + 1) + n + 1);
    CHECK(tr.num_constraints() == 12 * n + 13);
    // degrees of freedom: the 2n+1 leader controls; the terminal time is
    // consumed by the transversality condition
    CHECK(tr.num_vars() - tr.num_constraints() == 2 * n + 1);
    const Vec z = tr.initial_guess(3.0);
    CHECK(tr.constraints(z).size() == tr.num_constraints());
  }
}

TEST_CASE("objective is the negated terminal time and ignores everything "
          "else", "[transcription]") {
  const auto tr = make_transcription(5);
  Vec z = tr.initial_guess(3.0);
  CHECK(tr.objective(z) == -3.0);
  z[tr.layout().tf_offset()] = 2.89;
  CHECK(tr.objective(z) == -2.89);
  Vec z2 = z;
  for (int i = 0; i < tr.num_vars() - 1; ++i) z2[i] += 0.37;
  CHECK(tr.objective(z2) == tr.objective(z));
  const Vec g = tr.objective_gradient(z);
  CHECK(g[tr.layout().tf_offset()] == -1.0);
  CHECK(g.head(tr.num_vars() - 1).norm() == 0.0);
}

TEST_CASE("initial-state block is the elementwise difference",
          "[transcription]") {
  const auto tr = make_transcription(4);
  Vec z = tr.initial_guess(3.0);
  Vec delta(8);
  for (int i = 0; i < 8; ++i) delta[i] = 0.01 * (i + 1);
  z.segment<8>(tr.layout().state_offset(0)) += delta;
  const Vec c = tr.constraints(z);
  CHECK((c.head<8>() - delta).lpNorm<Eigen::Infinity>() < 1e-15);
}

TEST_CASE("initial guess: boundary values, capture coincidence, coasting "
          "evader", "[transcription]") {
  const auto tr = make_transcription(12);
  const Vec z = tr.initial_guess(3.0);
  const auto& lay = tr.layout();
  const SpacecraftGame game = SpacecraftGame::benchmark();

  // node 0 equals the configured initial state exactly
  CHECK((z.segment<8>(lay.state_offset(0)) -
         game.initial_state().to_vec())
            .norm() == 0.0);

  // final pursuer node equals the final evader node => capture residual 0
  const Vec pN = z.segment<4>(lay.state_offset(12));
  const Vec eN = z.segment<4>(lay.state_offset(12) + 4);
  CHECK((pN - eN).lpNorm<Eigen::Infinity>() < 1e-12);

  // evader nodes lie on the zero-thrust Kepler arc
  const VecN<4> e0 = game.initial_state().evader.to_vec();
  for (int k : {3, 7, 12}) {
    const double t = 3.0 * k / 12.0;
    const VecN<4> oracle = coast_oracle(e0, t, 20000);
    const VecN<4> got = z.segment<4>(lay.state_offset(k) + 4);
    CHECK((got - oracle).lpNorm<Eigen::Infinity>() < 1e-6);
  }

  // costate guess and leader controls
  for (int k = 0; k <= 12; ++k) {
    CHECK(z[lay.costate_offset(k)] == -0.1);
    CHECK(z[lay.costate_offset(k) + 3] == 0.0);
    CHECK(z[lay.control_offset(k)] == 0.0);
  }
  CHECK(z[lay.tf_offset()] == 3.0);

  // deterministic
  CHECK(tr.initial_guess(3.0) == z);
}

TEST_CASE("sampling a converged shooting solution nearly satisfies the "
          "transcription", "[transcription][oracle]") {
  const SpacecraftGame game = SpacecraftGame::benchmark();
  const TpbvpResult shot = solve_tpbvp(reference_unknowns(), game);
  REQUIRE(shot.converged);

  const int n = 40;
  const auto tr = make_transcription(n);
  const double t_f = shot.unknowns.t_f;

  // sample the continuous solution at the nodes and segment midpoints
  std::vector<double> times;
  for (int k = 0; k <= n; ++k) times.push_back(t_f * k / n);
  for (int k = 0; k < n; ++k) times.push_back(t_f * (k + 0.5) / n);
  std::sort(times.begin(), times.end());
  IntegratorOptions opts;
  opts.rel_tol = 1e-12;
  opts.abs_tol = 1e-13;
  std::vector<VecN<16>> samples;
  {
    VecN<16> y0;
    y0.head<8>() = game.initial_state().to_vec();
    y0.tail<8>() = shot.unknowns.initial_costate.to_vec();
    detail::CoupledSystem<SpacecraftGame> rhs(game);
    integrate_dopri45<16>(rhs, 0.0, t_f, y0, opts.rel_tol, opts.abs_tol,
                          times,
                          [&](double, const VecN<16>& y) {
                            samples.push_back(y);
                          });
  }
  REQUIRE(samples.size() == times.size());

  Vec z = Vec::Zero(tr.num_vars());
  const auto& lay = tr.layout();
  auto sample_at = [&](int idx) -> const VecN<16>& { return samples[idx]; };
  for (int k = 0; k <= n; ++k) {
    const VecN<16>& y = sample_at(2 * k);  // nodes sit at even positions
    z.segment<8>(lay.state_offset(k)) = y.head<8>();
    z.segment<4>(lay.costate_offset(k)) = y.segment<4>(8);
    const ControlValue ce = game.leader_control(y[12], y[13]);
    z[lay.control_offset(k)] = ce.angle;
  }
  for (int k = 0; k < n; ++k) {
    const VecN<16>& y = sample_at(2 * k + 1);
    const ControlValue ce = game.leader_control(y[12], y[13]);
    z[lay.mid_control_offset(k)] = ce.angle;
  }
  z[lay.tf_offset()] = t_f;

  const Vec c = tr.constraints(z);
  CHECK(c.lpNorm<Eigen::Infinity>() <= 1e-3);
}

TEST_CASE("defect consistency under mesh refinement (synthetic flow)",
          "[transcription][property]") {
  // measured on the scalar exponential flow; the transcription shares the
  // same Hermite-Simpson rule
  auto defect = [](int n) {
    const double h = 1.0 / n;
    Vec xk(1), xk1(1);
    xk[0] = 1.0;
    xk1[0] = std::exp(h);
    const Vec fc = hermite_simpson_midpoint(xk, xk1, xk, xk1, h);
    return std::abs(hermite_simpson_defect(xk, xk1, xk, xk1, fc, h)[0]);
  };
  const double slope =
      std::log(defect(10) / defect(40)) / std::log(4.0);
  CHECK(slope > 4.5);
  CHECK(slope < 5.5);
}

TEST_CASE("trajectory extraction round-trips the decision vector",
          "[transcription]") {
  const auto tr = make_transcription(8);
  Vec z = tr.initial_guess(2.7);
  // decorate with nonzero controls and costates so the round trip is
  // non-trivial
  for (int k = 0; k <= 8; ++k) {
    z[tr.layout().control_offset(k)] = 0.1 * k - 0.3;
    z[tr.layout().costate_offset(k) + 1] = 0.05 * k;
  }
  for (int k = 0; k < 8; ++k) z[tr.layout().mid_control_offset(k)] = 0.02 * k;

  const Trajectory traj = tr.extract_trajectory(z);
  CHECK(traj.size() == 9);
  for (int k = 0; k <= 8; ++k)
    CHECK(traj.times[k] == Catch::Approx(2.7 * k / 8.0).margin(1e-15));
  CHECK(traj.mid_delta_e.size() == 8);

  const Vec back = tr.pack(traj);
  REQUIRE(back.size() == z.size());
  CHECK((back - z).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("extraction reconstructs the follower control from costates",
          "[transcription]") {
  const auto tr = make_transcription(4);
  Vec z = tr.initial_guess(3.0);
  // non-singular costates at node 1
  z[tr.layout().costate_offset(1) + 0] = -1.0;
  z[tr.layout().costate_offset(1) + 1] = 0.0;
  // singular costates at the final node
  z.segment<4>(tr.layout().costate_offset(4)).setZero();
  const Trajectory traj = tr.extract_trajectory(z);
  CHECK(traj.delta_p[1] == Catch::Approx(std::numbers::pi / 2));
  CHECK_FALSE(traj.delta_p_singular[1]);
  CHECK(traj.delta_p_singular[4]);
  // hold-last: the singular node repeats the previous angle
  CHECK(traj.delta_p[4] == traj.delta_p[3]);
}

TEST_CASE("argmin of the reconstructed control is scale invariant",
          "[transcription][property]") {
  const auto tr = make_transcription(4);
  Vec z = tr.initial_guess(3.0);
  for (int k = 0; k <= 4; ++k) {
    z[tr.layout().costate_offset(k) + 0] = -0.8 + 0.1 * k;
    z[tr.layout().costate_offset(k) + 1] = 0.4 + 0.05 * k;
  }
  const Trajectory a = tr.extract_trajectory(z);
  Vec z2 = z;
  for (int k = 0; k <= 4; ++k)
    z2.segment<4>(tr.layout().costate_offset(k)) *= 37.5;
  const Trajectory b = tr.extract_trajectory(z2);
  for (int k = 0; k <= 4; ++k)
    CHECK(a.delta_p[k] == Catch::Approx(b.delta_p[k]).margin(1e-14));
}

TEST_CASE("gauss-lobatto rule is selectable and consistent at a solution "
          "sample", "[transcription]") {
  // The two rules agree on what a discrete solution looks like to within
  // discretization error: evaluate both residuals on the same near-solution
  // decision vector.
  const SpacecraftGame game = SpacecraftGame::benchmark();
  const TpbvpResult shot = solve_tpbvp(reference_unknowns(), game);
  REQUIRE(shot.converged);
  const int n = 20;
  const auto hs = make_transcription(n, CollocationRule::hermite_simpson);
  const auto gl = make_transcription(n, CollocationRule::gauss_lobatto5);

  const double t_f = shot.unknowns.t_f;
  std::vector<double> times;
  for (int k = 0; k <= n; ++k) times.push_back(t_f * k / n);
  for (int k = 0; k < n; ++k) times.push_back(t_f * (k + 0.5) / n);
  std::sort(times.begin(), times.end());
  std::vector<VecN<16>> samples;
  {
    VecN<16> y0;
    y0.head<8>() = game.initial_state().to_vec();
    y0.tail<8>() = shot.unknowns.initial_costate.to_vec();
    detail::CoupledSystem<SpacecraftGame> rhs(game);
    integrate_dopri45<16>(rhs, 0.0, t_f, y0, 1e-12, 1e-13, times,
                          [&](double, const VecN<16>& y) {
                            samples.push_back(y);
                          });
  }
  Vec z = Vec::Zero(hs.num_vars());
  const auto& lay = hs.layout();
  for (int k = 0; k <= n; ++k) {
    const VecN<16>& y = samples[2 * k];
    z.segment<8>(lay.state_offset(k)) = y.head<8>();
    z.segment<4>(lay.costate_offset(k)) = y.segment<4>(8);
    z[lay.control_offset(k)] = game.leader_control(y[12], y[13]).angle;
  }
  for (int k = 0; k < n; ++k) {
    const VecN<16>& y = samples[2 * k + 1];
    z[lay.mid_control_offset(k)] = game.leader_control(y[12], y[13]).angle;
  }
  z[lay.tf_offset()] = t_f;

  const double r_hs = hs.constraints(z).lpNorm<Eigen::Infinity>();
  const double r_gl = gl.constraints(z).lpNorm<Eigen::Infinity>();
  CHECK(r_hs <= 1e-2);
  CHECK(r_gl <= 1e-2);
}

TEST_CASE("constraint assembly rejects bad input", "[transcription]") {
  const auto tr = make_transcription(3);
  Vec z = tr.initial_guess(3.0);
  CHECK_THROWS_AS(tr.constraints(z.head(5)), std::invalid_argument);
  z[3] = std::nan("");
  CHECK_THROWS_AS(tr.constraints(z), std::domain_error);
}
