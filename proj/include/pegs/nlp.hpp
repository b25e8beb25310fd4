#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "pegs/types.hpp"

// Equality-constrained dense NLP solver. The algorithm is a reduced-Hessian
// SQP: a QR factorization of the constraint-Jacobian transpose splits steps
// into a Newton feasibility component and a null-space component driven by a
// damped BFGS model of the reduced curvature. Globalization is an l1 exact
// penalty with a second-order correction; once the iterate is nearly
// feasible the solver switches to a feasible-path mode that restores the
// constraint manifold after every reduced step and line-searches on the
// objective alone. Derivatives are central finite differences.

namespace pegs {

struct NLPProblem {
  std::function<double(const Vec&)> objective;
  std::function<Vec(const Vec&)> eq_constraints;
  int n_vars = 0;
  int n_cons = 0;
  Vec lower;  ///< elementwise lower bounds; -inf allowed
  Vec upper;

  void validate() const {
    if (!objective || !eq_constraints)
      throw std::invalid_argument("NLPProblem: missing functions");
    if (n_vars <= 0) throw std::invalid_argument("NLPProblem: n_vars <= 0");
    if (n_cons < 0 || n_cons > n_vars)
      throw std::invalid_argument("NLPProblem: need 0 <= n_cons <= n_vars");
    if (lower.size() != n_vars || upper.size() != n_vars)
      throw std::invalid_argument("NLPProblem: bad bound dimensions");
    for (int i = 0; i < n_vars; ++i)
      if (!(lower[i] <= upper[i]))
        throw std::invalid_argument("NLPProblem: bounds out of order");
  }

  static Vec unbounded_lower(int n) {
    return Vec::Constant(n, -std::numeric_limits<double>::infinity());
  }
  static Vec unbounded_upper(int n) {
    return Vec::Constant(n, std::numeric_limits<double>::infinity());
  }
};

struct SolverOptions {
  double tol_constraint = 1e-8;
  double tol_stationarity = 1e-6;
  int max_major_iterations = 500;
  double fd_step = 1e-6;  ///< central-difference step

  // penalty schedule of the l1 merit (global phase)
  double merit_penalty_initial = 1.0;
  double merit_penalty_max = 1e5;

  double feasibility_switch = 1e-5;  ///< switch to feasible-path mode below
  double reduced_step_cap = 10.0;    ///< trust cap on the null-space step
  int verbosity = 0;
  std::ostream* log = nullptr;  ///< iteration log sink (iter, merit, |c|, step)
  int threads = 0;              ///< FD Jacobian workers; 0 = hardware default

  void validate() const {
    if (!(tol_constraint > 0) || !(tol_stationarity > 0) || !(fd_step > 0))
      throw std::invalid_argument("SolverOptions: tolerances must be > 0");
    if (max_major_iterations < 1)
      throw std::invalid_argument("SolverOptions: max_major_iterations < 1");
    if (!(merit_penalty_initial > 0) || !(merit_penalty_max > 0))
      throw std::invalid_argument("SolverOptions: penalties must be > 0");
  }
};

enum class SolveStatus { converged, max_iterations, numerical_failure };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::max_iterations: return "max_iterations";
    default: return "numerical_failure";
  }
}

struct KKTResiduals {
  double constraint_norm = 0.0;    ///< ||c(x)||_inf
  double stationarity_norm = 0.0;  ///< ||grad f + J^T lambda||_inf, projected
};

struct SolverResult {
  Vec x;
  Vec multipliers;  ///< least-squares estimates, Lagrangian f + lambda^T c
  SolveStatus status = SolveStatus::numerical_failure;
  KKTResiduals kkt;
  int iterations = 0;
  std::int64_t constraint_evaluations = 0;
  std::string message;
};

/// Central-difference Jacobian, column j = (f(x+h e_j) - f(x-h e_j)) / 2h.
/// Columns are independent; with threads > 1 they are computed in parallel
/// in fixed column blocks, so the result is identical for any thread count.
inline Mat finite_difference_jacobian(
    const std::function<Vec(const Vec&)>& f, const Vec& x, double step,
    int threads = 1) {
  if (!(step > 0)) throw std::invalid_argument("fd_jacobian: step <= 0");
  const int n = static_cast<int>(x.size());
  const Vec f0 = f(x);
  const int m = static_cast<int>(f0.size());
  Mat J(m, n);
  int workers = threads;
  if (workers <= 0)
    workers = static_cast<int>(std::thread::hardware_concurrency());
  workers = std::clamp(workers, 1, std::max(1, n));
  auto run_block = [&](int j0, int j1) {
    Vec xp = x, xm = x;
    for (int j = j0; j < j1; ++j) {
      xp[j] = x[j] + step;
      xm[j] = x[j] - step;
      const Vec fp = f(xp);
      const Vec fm = f(xm);
      if (!fp.allFinite() || !fm.allFinite())
        throw std::runtime_error("fd_jacobian: non-finite value in column " +
                                 std::to_string(j));
      J.col(j) = (fp - fm) / (2.0 * step);
      xp[j] = x[j];
      xm[j] = x[j];
    }
  };
  if (workers == 1) {
    run_block(0, n);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    const int chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const int j0 = w * chunk;
      const int j1 = std::min(n, j0 + chunk);
      if (j0 >= j1) break;
      pool.emplace_back([&, w, j0, j1] {
        try {
          run_block(j0, j1);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return J;
}

/// Central-difference gradient of a scalar function.
inline Vec finite_difference_gradient(
    const std::function<double(const Vec&)>& f, const Vec& x, double step) {
  if (!(step > 0)) throw std::invalid_argument("fd_gradient: step <= 0");
  const int n = static_cast<int>(x.size());
  Vec g(n);
  Vec xp = x, xm = x;
  for (int j = 0; j < n; ++j) {
    xp[j] = x[j] + step;
    xm[j] = x[j] - step;
    g[j] = (f(xp) - f(xm)) / (2.0 * step);
    xp[j] = x[j];
    xm[j] = x[j];
  }
  return g;
}

namespace detail {

/// Zeroes stationarity components a bound multiplier can absorb: positive
/// entries at an active lower bound, negative entries at an active upper.
inline Vec project_stationarity(const Vec& stat, const Vec& x, const Vec& lo,
                                const Vec& hi) {
  Vec s = stat;
  for (int i = 0; i < s.size(); ++i) {
    const double act = 1e-9 * (1.0 + std::abs(x[i]));
    if (x[i] <= lo[i] + act && s[i] > 0) s[i] = 0.0;
    if (x[i] >= hi[i] - act && s[i] < 0) s[i] = 0.0;
  }
  return s;
}

}  // namespace detail

/// Constraint norm and projected Lagrangian-gradient norm at (x, multipliers)
/// under the convention L = f + lambda^T c. Gradients are finite differences.
inline KKTResiduals kkt_residuals(const NLPProblem& p, const Vec& x,
                                  const Vec& multipliers,
                                  double fd_step = 1e-6) {
  p.validate();
  if (x.size() != p.n_vars || multipliers.size() != p.n_cons)
    throw std::invalid_argument("kkt_residuals: dimension mismatch");
  const Vec c = p.eq_constraints(x);
  const Vec g = finite_difference_gradient(p.objective, x, fd_step);
  Vec stat = g;
  if (p.n_cons > 0) {
    const Mat J = finite_difference_jacobian(p.eq_constraints, x, fd_step);
    stat += J.transpose() * multipliers;
  }
  stat = detail::project_stationarity(stat, x, p.lower, p.upper);
  KKTResiduals r;
  r.constraint_norm =
      p.n_cons > 0 ? c.lpNorm<Eigen::Infinity>() : 0.0;
  r.stationarity_norm = stat.lpNorm<Eigen::Infinity>();
  return r;
}

namespace detail {

struct QRSplit {
  Mat Q;      // n x n orthogonal
  Mat R;      // m x m upper triangular
  int n = 0, m = 0;

  auto Q1() const { return Q.leftCols(m); }
  auto Q2() const { return Q.rightCols(n - m); }

  /// lambda solving R lambda = -Q1^T g (least-squares multipliers).
  Vec multipliers(const Vec& g) const {
    return R.triangularView<Eigen::Upper>().solve(Vec(-(Q1().transpose() * g)));
  }
  /// Feasibility step coefficient: R^T pY = -c.
  Vec feasibility_coeff(const Vec& c) const {
    return R.triangularView<Eigen::Upper>().transpose().solve(Vec(-c));
  }
};

inline QRSplit qr_split(const Mat& J) {
  QRSplit s;
  s.m = static_cast<int>(J.rows());
  s.n = static_cast<int>(J.cols());
  Eigen::HouseholderQR<Mat> qr(J.transpose());
  s.Q = qr.householderQ() * Mat::Identity(s.n, s.n);
  s.R = qr.matrixQR().topRows(s.m).triangularView<Eigen::Upper>();
  double dmax = 0.0, dmin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < s.m; ++i) {
    dmax = std::max(dmax, std::abs(s.R(i, i)));
    dmin = std::min(dmin, std::abs(s.R(i, i)));
  }
  if (s.m > 0 && !(dmin > 1e-13 * std::max(dmax, 1.0)))
    throw std::runtime_error("constraint Jacobian is (nearly) rank deficient");
  return s;
}

/// Largest step in [0, 1] keeping x + a d strictly inside the box.
inline double fraction_to_boundary(const Vec& x, const Vec& d, const Vec& lo,
                                   const Vec& hi) {
  double a = 1.0;
  for (int i = 0; i < x.size(); ++i) {
    if (d[i] > 1e-16) {
      const double room = hi[i] - x[i];
      if (a * d[i] > room) a = 0.9995 * room / d[i];
    } else if (d[i] < -1e-16) {
      const double room = x[i] - lo[i];
      if (-a * d[i] > room) a = 0.9995 * room / (-d[i]);
    }
  }
  return std::max(a, 0.0);
}

inline Vec clip(Vec x, const Vec& lo, const Vec& hi) {
  for (int i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], lo[i], hi[i]);
  return x;
}

/// Damped BFGS update keeping B positive definite (Powell's modification).
inline void bfgs_update(Mat& B, const Vec& s, Vec y) {
  const double sBs = s.dot(B * s);
  double sy = s.dot(y);
  if (sBs > 0 && sy < 0.2 * sBs) {
    const double theta = 0.8 * sBs / (sBs - sy);
    y = theta * y + (1.0 - theta) * (B * s);
    sy = s.dot(y);
  }
  const double ns = s.norm(), ny = y.norm();
  if (sy > 1e-12 * ns * ny && ns > 0) {
    const Vec Bs = B * s;
    B -= (Bs * Bs.transpose()) / std::max(sBs, 1e-300);
    B += (y * y.transpose()) / sy;
  }
}

}  // namespace detail

/// Solves min f(x) s.t. c(x) = 0, lower <= x <= upper from x0 (clipped into
/// the box). Deterministic: identical inputs give bit-identical results.
inline SolverResult solve(const NLPProblem& p, Vec x0,
                          const SolverOptions& opts = {}) {
  p.validate();
  opts.validate();
  if (x0.size() != p.n_vars)
    throw std::invalid_argument("solve: x0 dimension mismatch");

  const int n = p.n_vars;
  const int m = p.n_cons;
  SolverResult res;
  std::int64_t evals = 0;
  auto C = [&](const Vec& x) -> Vec {
    ++evals;
    return p.eq_constraints(x);
  };

  Vec x = detail::clip(std::move(x0), p.lower, p.upper);
  Mat Br = Mat::Identity(n - m, n - m);
  bool br_scaled = false;     // Shanno-Phua rescale applied on the first pair
  double beta = 0.0;          // Levenberg damping of the reduced model
  double sigma = opts.merit_penalty_initial;
  std::optional<std::pair<Vec, Vec>> prev;  // (x_before, reduced gradient)

  auto fail = [&](const std::string& why, const Vec& lam,
                  SolveStatus st) -> SolverResult {
    res.x = x;
    res.multipliers = lam;
    res.status = st;
    res.message = why;
    res.constraint_evaluations = evals;
    res.kkt = kkt_residuals(p, x, lam, opts.fd_step);
    return res;
  };

  Vec lam = Vec::Zero(m);
  for (int it = 0; it < opts.max_major_iterations; ++it) {
    res.iterations = it + 1;
    Vec c;
    Mat J;
    detail::QRSplit qr;
    try {
      c = C(x);
      if (!c.allFinite())
        return fail("constraints non-finite at iterate", lam,
                    SolveStatus::numerical_failure);
      J = finite_difference_jacobian(p.eq_constraints, x, opts.fd_step,
                                     opts.threads);
      evals += 2 * n;
      qr = detail::qr_split(J);
    } catch (const std::exception& e) {
      return fail(std::string("evaluation failed: ") + e.what(), lam,
                  SolveStatus::numerical_failure);
    }
    const Vec g = finite_difference_gradient(p.objective, x, opts.fd_step);
    lam = m > 0 ? qr.multipliers(g) : Vec();
    Vec stat = g;
    if (m > 0) stat += J.transpose() * lam;
    const double kkt = detail::project_stationarity(stat, x, p.lower, p.upper)
                           .lpNorm<Eigen::Infinity>();
    const double feas = m > 0 ? c.lpNorm<Eigen::Infinity>() : 0.0;

    if (feas <= opts.tol_constraint && kkt <= opts.tol_stationarity) {
      res.x = x;
      res.multipliers = lam;
      res.status = SolveStatus::converged;
      res.kkt = {feas, kkt};
      res.constraint_evaluations = evals;
      res.message = "converged";
      return res;
    }

    // reduced gradient and curvature update
    const Vec gr = qr.Q2().transpose() * g;
    if (prev) {
      const Vec s_r = qr.Q2().transpose() * (x - prev->first);
      const Vec y_r = gr - prev->second;
      const double sy = s_r.dot(y_r);
      if (!br_scaled && sy > 1e-300) {
        // initial curvature scale along the first accepted step
        Br = Mat::Identity(n - m, n - m) *
             std::max(y_r.squaredNorm() / sy, 1e-8);
        br_scaled = true;
      }
      detail::bfgs_update(Br, s_r, y_r);
    }
    const Vec x_before = x;
    const bool feasible_path = feas <= opts.feasibility_switch;

    bool accepted = false;
    double alpha_taken = 0.0;
    double merit_logged = 0.0;
    for (int attempt = 0; attempt < 12 && !accepted; ++attempt) {
      Vec pZ;
      {
        Mat model = Br;
        model.diagonal().array() += beta;
        pZ = Eigen::LLT<Mat>(model).solve(-gr);
      }
      if (!pZ.allFinite()) {
        beta = std::max(10.0 * beta, 1e-6);
        continue;
      }
      const double npz = pZ.norm();
      if (npz > opts.reduced_step_cap) pZ *= opts.reduced_step_cap / npz;

      if (!feasible_path) {
        // --- global phase: coupled step on the l1 exact-penalty merit ---
        const Vec pY = qr.feasibility_coeff(c);
        const Vec d = qr.Q1() * pY + qr.Q2() * pZ;
        sigma = std::min(
            std::max(1.3 * lam.lpNorm<Eigen::Infinity>() + 1.0, 0.5 * sigma),
            opts.merit_penalty_max);
        const double nc1 = c.lpNorm<1>();
        const double f0 = p.objective(x);
        const double phi0 = f0 + sigma * nc1;
        const double dphi = g.dot(d) - sigma * nc1;
        if (dphi >= -1e-16) {
          beta = std::max(10.0 * beta, 1e-6);
          continue;
        }
        const double amax = detail::fraction_to_boundary(x, d, p.lower, p.upper);
        double alpha = amax;
        bool tried_soc = false;
        while (alpha > 1e-14) {
          Vec xt = detail::clip(x + alpha * d, p.lower, p.upper);
          Vec ct;
          try {
            ct = C(xt);
          } catch (const std::exception&) {
            alpha *= 0.5;
            continue;
          }
          if (ct.allFinite()) {
            const double phit = p.objective(xt) + sigma * ct.lpNorm<1>();
            if (phit <= phi0 + 1e-4 * alpha * dphi) {
              assert(phit <= phi0 + 1e-12 * std::abs(phi0) + 1e-12);
              x = std::move(xt);
              accepted = true;
              alpha_taken = alpha;
              merit_logged = phit;
              break;
            }
            if (!tried_soc && alpha == amax) {
              // second-order correction: feasibility Newton at the trial
              tried_soc = true;
              const Vec dsoc = qr.Q1() * qr.feasibility_coeff(ct);
              Vec xs = detail::clip(xt + dsoc, p.lower, p.upper);
              try {
                const Vec cs = C(xs);
                if (cs.allFinite()) {
                  const double phis = p.objective(xs) + sigma * cs.lpNorm<1>();
                  if (phis <= phi0 + 1e-4 * alpha * dphi) {
                    x = std::move(xs);
                    accepted = true;
                    alpha_taken = alpha;
                    merit_logged = phis;
                    break;
                  }
                }
              } catch (const std::exception&) {
              }
            }
          }
          alpha *= 0.5;
        }
      } else {
        // --- feasible-path phase: restore, then descend on f only ---
        const double dphi = gr.dot(pZ);
        if (dphi >= -1e-18) {
          beta = std::max(10.0 * beta, 1e-6);
          continue;
        }
        const double restore_target =
            std::max(0.3 * opts.tol_constraint,
                     std::min(1e-7, 0.3 * std::max(feas, opts.tol_constraint)));
        auto restore = [&](Vec xx) -> std::optional<std::pair<Vec, Vec>> {
          Vec cc;
          try {
            cc = C(xx);
          } catch (const std::exception&) {
            return std::nullopt;
          }
          for (int k = 0; k < 15; ++k) {
            if (!cc.allFinite()) return std::nullopt;
            if (cc.lpNorm<Eigen::Infinity>() <= restore_target)
              return std::make_pair(std::move(xx), std::move(cc));
            const Vec dxx = qr.Q1() * qr.feasibility_coeff(cc);
            const double n2 = cc.norm();
            double a = detail::fraction_to_boundary(xx, dxx, p.lower, p.upper);
            bool moved = false;
            for (int ls = 0; ls < 25 && !moved; ++ls) {
              Vec xxt = detail::clip(xx + a * dxx, p.lower, p.upper);
              try {
                Vec cct = C(xxt);
                if (cct.allFinite() && cct.norm() <= (1.0 - 0.25 * a) * n2) {
                  xx = std::move(xxt);
                  cc = std::move(cct);
                  moved = true;
                  break;
                }
              } catch (const std::exception&) {
              }
              a *= 0.5;
            }
            if (!moved) break;
          }
          if (cc.lpNorm<Eigen::Infinity>() <= restore_target)
            return std::make_pair(std::move(xx), std::move(cc));
          return std::nullopt;
        };
        const Vec dz = qr.Q2() * pZ;
        double alpha = detail::fraction_to_boundary(x, dz, p.lower, p.upper);
        const double f0 = p.objective(x);
        // near the tail, restoration round-off can mask the tiny predicted
        // decrease; allow an absolute slack there
        const double slack = kkt <= 1e-3 ? 1e-8 * std::max(1.0, std::abs(f0)) : 0.0;
        while (alpha > 1e-12) {
          Vec xt = detail::clip(x + alpha * dz, p.lower, p.upper);
          auto restored = restore(std::move(xt));
          if (restored) {
            const double ft = p.objective(restored->first);
            if (ft <= f0 + 1e-4 * alpha * dphi + slack) {
              assert(ft <= f0 + slack + 1e-12 * std::abs(f0) + 1e-12);
              x = std::move(restored->first);
              accepted = true;
              alpha_taken = alpha;
              merit_logged = ft;
              break;
            }
          }
          alpha *= 0.5;
        }
      }
      if (!accepted) {
        beta = std::max(10.0 * beta, 1e-6);
        if (beta > 1e10) break;
      }
    }

    if (!accepted)
      return fail("line search failed (stationarity " + std::to_string(kkt) +
                      ", feasibility " + std::to_string(feas) + ")",
                  lam, SolveStatus::numerical_failure);
    beta = beta > 1e-12 ? beta / 3.0 : 0.0;
    prev = std::make_pair(x_before, gr);
    if (opts.log) {
      (*opts.log) << it << ' ' << merit_logged << ' ' << feas << ' '
                  << alpha_taken << '\n';
    }
  }

  res.x = x;
  res.multipliers = lam;
  res.status = SolveStatus::max_iterations;
  res.message = "maximum major iterations reached";
  res.constraint_evaluations = evals;
  res.kkt = kkt_residuals(p, x, lam, opts.fd_step);
  return res;
}

}  // namespace pegs
