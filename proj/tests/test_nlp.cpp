#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <sstream>
#include <vector>

#include "pegs/nlp.hpp"

using namespace pegs;

namespace {

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

NLPProblem projection_problem() {
  // min x^2  s.t.  x - 1 = 0
  NLPProblem p;
  p.n_vars = 1;
  p.n_cons = 1;
  p.lower = NLPProblem::unbounded_lower(1);
  p.upper = NLPProblem::unbounded_upper(1);
  p.objective = [](const Vec& x) { return x[0] * x[0]; };
  p.eq_constraints = [](const Vec& x) {
    Vec c(1);
    c[0] = x[0] - 1.0;
    return c;
  };
  return p;
}

NLPProblem symmetric_qp() {
  // min x^2 + y^2  s.t.  x + y = 1
  NLPProblem p;
  p.n_vars = 2;
  p.n_cons = 1;
  p.lower = NLPProblem::unbounded_lower(2);
  p.upper = NLPProblem::unbounded_upper(2);
  p.objective = [](const Vec& x) { return x.squaredNorm(); };
  p.eq_constraints = [](const Vec& x) {
    Vec c(1);
    c[0] = x[0] + x[1] - 1.0;
    return c;
  };
  return p;
}

NLPProblem rosenbrock_on_circle() {
  // min (1-x)^2 + 100 (y - x^2)^2  s.t.  x^2 + y^2 = 1.5
  NLPProblem p;
  p.n_vars = 2;
  p.n_cons = 1;
  p.lower = NLPProblem::unbounded_lower(2);
  p.upper = NLPProblem::unbounded_upper(2);
  p.objective = [](const Vec& v) {
    const double x = v[0], y = v[1];
    return (1 - x) * (1 - x) + 100.0 * (y - x * x) * (y - x * x);
  };
  p.eq_constraints = [](const Vec& v) {
    Vec c(1);
    c[0] = v[0] * v[0] + v[1] * v[1] - 1.5;
    return c;
  };
  return p;
}

}  // namespace

TEST_CASE("solve: one-variable projection", "[nlp]") {
  const auto p = projection_problem();
  Vec x0(1);
  x0[0] = 0.0;
  const SolverResult r = solve(p, x0);
  REQUIRE(r.status == SolveStatus::converged);
  CHECK(r.x[0] == Catch::Approx(1.0).margin(1e-7));
  const KKTResiduals k = kkt_residuals(p, r.x, r.multipliers);
  CHECK(k.constraint_norm <= 1e-8);
  CHECK(k.stationarity_norm <= 1e-6);
  // L = f + lambda c  =>  2x + lambda = 0 at x = 1
  CHECK(r.multipliers[0] == Catch::Approx(-2.0).margin(1e-5));
}

TEST_CASE("solve: symmetric quadratic lands on the midpoint", "[nlp]") {
  const auto p = symmetric_qp();
  const SolverResult r = solve(p, vec2(0.0, 0.0));
  REQUIRE(r.status == SolveStatus::converged);
  CHECK(r.x[0] == Catch::Approx(0.5).margin(1e-7));
  CHECK(r.x[1] == Catch::Approx(0.5).margin(1e-7));
  CHECK(kkt_residuals(p, r.x, r.multipliers).stationarity_norm <= 1e-6);
}

TEST_CASE("solve: constrained Rosenbrock multistart matches a dense grid scan",
          "[nlp]") {
  const auto p = rosenbrock_on_circle();

  // Brute-force oracle: scan a 2001x2001 grid over the bounding box and
  // evaluate the objective at each grid point radially projected onto the
  // constraint circle, keeping the best.
  const double R = std::sqrt(1.5);
  double best_f = 1e300;
  double best_x = 0, best_y = 0;
  for (int i = 0; i < 2001; ++i) {
    for (int j = 0; j < 2001; ++j) {
      const double gx = -R + 2 * R * i / 2000.0;
      const double gy = -R + 2 * R * j / 2000.0;
      const double n = std::hypot(gx, gy);
      if (n < 1e-9) continue;
      const double x = gx * R / n, y = gy * R / n;
      const double f = (1 - x) * (1 - x) + 100.0 * (y - x * x) * (y - x * x);
      if (f < best_f) {
        best_f = f;
        best_x = x;
        best_y = y;
      }
    }
  }

  double solver_best = 1e300;
  Vec solver_x;
  for (double x0 : {-1.0, -0.5, 0.0, 0.5, 1.0}) {
    for (double y0 : {-1.0, 0.0, 1.0}) {
      const SolverResult r = solve(p, vec2(x0, y0));
      if (r.status != SolveStatus::converged) continue;
      const double f = p.objective(r.x);
      if (f < solver_best) {
        solver_best = f;
        solver_x = r.x;
      }
    }
  }
  REQUIRE(solver_x.size() == 2);
  CHECK(solver_x[0] == Catch::Approx(best_x).margin(1e-3));
  CHECK(solver_x[1] == Catch::Approx(best_y).margin(1e-3));
  CHECK(solver_best <= best_f + 1e-6);
}

TEST_CASE("solve respects variable bounds", "[nlp]") {
  // min (x+2)^2 with x >= 0: constrained minimum at the bound
  NLPProblem p;
  p.n_vars = 1;
  p.n_cons = 0;
  p.lower = Vec::Constant(1, 0.0);
  p.upper = Vec::Constant(1, 10.0);
  p.objective = [](const Vec& x) { return (x[0] + 2) * (x[0] + 2); };
  p.eq_constraints = [](const Vec&) { return Vec(0); };
  const SolverResult r = solve(p, Vec::Constant(1, 5.0));
  REQUIRE(r.status == SolveStatus::converged);
  CHECK(r.x[0] <= 1e-2);
  CHECK(r.x[0] >= 0.0);
}

TEST_CASE("finite-difference jacobian is exact on affine maps", "[nlp]") {
  Mat A(3, 2);
  A << 1, 2, -3, 0.5, 0, 4;
  auto f = [&A](const Vec& x) -> Vec { return A * x + Vec::Ones(3); };
  const Mat J = finite_difference_jacobian(f, vec2(0.3, -0.7), 1e-6);
  CHECK((J - A).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("finite-difference jacobian: scalar calculus and threading",
          "[nlp]") {
  auto f = [](const Vec& x) -> Vec {
    Vec y(1);
    y[0] = x[0] * x[0];
    return y;
  };
  Vec x(1);
  x[0] = 1.0;
  const Mat J = finite_difference_jacobian(f, x, 1e-6);
  CHECK(J(0, 0) == Catch::Approx(2.0).margin(1e-9));

  // threaded evaluation is bit-identical to serial
  auto g = [](const Vec& v) -> Vec {
    Vec y(3);
    y[0] = std::sin(v[0]) * v[1];
    y[1] = v.squaredNorm();
    y[2] = std::exp(0.1 * v[2]) - v[0];
    return y;
  };
  Vec x3(3);
  x3 << 0.3, -1.2, 0.8;
  const Mat serial = finite_difference_jacobian(g, x3, 1e-6, 1);
  const Mat threaded = finite_difference_jacobian(g, x3, 1e-6, 4);
  CHECK(std::memcmp(serial.data(), threaded.data(),
                    sizeof(double) * serial.size()) == 0);
}

TEST_CASE("finite-difference jacobian flags non-finite columns", "[nlp]") {
  auto f = [](const Vec& x) -> Vec {
    Vec y(1);
    y[0] = x[0] > 0.5 ? std::nan("") : x[0];
    return y;
  };
  Vec x(1);
  x[0] = 0.5 - 1e-9;
  CHECK_THROWS_WITH(finite_difference_jacobian(f, x, 1e-6),
                    Catch::Matchers::ContainsSubstring("column 0"));
}

TEST_CASE("kkt_residuals: sign convention and definitions", "[nlp]") {
  const auto p = symmetric_qp();
  const Vec x = vec2(0.5, 0.5);
  // stationarity: grad f = (1,1) = -J^T lambda with lambda = -1
  Vec lam(1);
  lam[0] = -1.0;
  const KKTResiduals k = kkt_residuals(p, x, lam);
  CHECK(k.constraint_norm <= 1e-12);
  CHECK(k.stationarity_norm <= 1e-6);

  // zero multipliers at a feasible point: stationarity equals ||grad f||_inf
  Vec zero(1);
  zero[0] = 0.0;
  const KKTResiduals k0 = kkt_residuals(p, x, zero);
  CHECK(k0.stationarity_norm == Catch::Approx(1.0).margin(1e-6));
  CHECK(k0.constraint_norm <= 1e-12);
}

TEST_CASE("converged results re-verify through kkt_residuals",
          "[nlp][property]") {
  for (auto make : {projection_problem, symmetric_qp, rosenbrock_on_circle}) {
    const auto p = make();
    const SolverResult r = solve(p, Vec::Zero(p.n_vars));
    if (r.status != SolveStatus::converged) continue;
    const KKTResiduals k = kkt_residuals(p, r.x, r.multipliers);
    SolverOptions defaults;
    CHECK(k.constraint_norm <= defaults.tol_constraint);
    CHECK(k.stationarity_norm <= 10 * defaults.tol_stationarity);
  }
}

TEST_CASE("solve is deterministic bit-for-bit", "[nlp][property]") {
  const auto p = rosenbrock_on_circle();
  const SolverResult a = solve(p, vec2(0.5, 0.5));
  const SolverResult b = solve(p, vec2(0.5, 0.5));
  REQUIRE(a.x.size() == b.x.size());
  CHECK(std::memcmp(a.x.data(), b.x.data(), sizeof(double) * a.x.size()) == 0);
  CHECK(a.iterations == b.iterations);
  CHECK(a.constraint_evaluations == b.constraint_evaluations);
}

TEST_CASE("iteration log has a stable column layout", "[nlp]") {
  const auto p = symmetric_qp();
  std::ostringstream log;
  SolverOptions opts;
  opts.log = &log;
  const SolverResult r = solve(p, vec2(0.0, 0.0), opts);
  REQUIRE(r.status == SolveStatus::converged);
  std::istringstream in(log.str());
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    int iter;
    double merit, con, step;
    REQUIRE(static_cast<bool>(row >> iter >> merit >> con >> step));
    CHECK(iter == rows);
    CHECK(con >= 0.0);
    CHECK(step > 0.0);
    ++rows;
  }
  CHECK(rows == r.iterations - 1);
}

TEST_CASE("solver reports max_iterations honestly", "[nlp]") {
  const auto p = rosenbrock_on_circle();
  SolverOptions opts;
  opts.max_major_iterations = 2;
  const SolverResult r = solve(p, vec2(-1.0, 1.0), opts);
  CHECK(r.status == SolveStatus::max_iterations);
  CHECK(r.iterations == 2);
}

TEST_CASE("problem validation catches bad setups", "[nlp]") {
  NLPProblem p = symmetric_qp();
  p.n_cons = 5;  // more constraints than variables
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = symmetric_qp();
  p.lower = Vec::Constant(2, 1.0);
  p.upper = Vec::Constant(2, -1.0);
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}
