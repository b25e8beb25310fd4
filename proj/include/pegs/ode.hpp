#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pegs/types.hpp"

// Fixed-step RK4 and adaptive Dormand-Prince 5(4) integrators for small
// fixed-size systems. Dense output is produced by clipping steps to the
// requested sample times, so samples are hit exactly.

namespace pegs {

/// Thrown when a propagation leaves the admissible domain (e.g. r below the
/// radius floor). Carries the failure time.
class PropagationError : public std::runtime_error {
 public:
  PropagationError(const std::string& what, double t)
      : std::runtime_error(what + " at t = " + std::to_string(t)), time_(t) {}
  double time() const { return time_; }

 private:
  double time_;
};

struct IntegratorOptions {
  enum class Method { rk4, dopri45 };
  Method method = Method::dopri45;
  int rk4_steps = 4000;        ///< total fixed steps over the interval
  double rel_tol = 1e-10;
  double abs_tol = 1e-12;
  int dense_samples = 401;     ///< trajectory samples, endpoints included

  void validate() const {
    if (!(rel_tol > 0.0) || !(abs_tol > 0.0))
      throw std::invalid_argument("integrator tolerances must be > 0");
    if (rk4_steps < 1)
      throw std::invalid_argument("integrator.rk4_steps must be >= 1");
    if (dense_samples < 2)
      throw std::invalid_argument("integrator.dense_samples must be >= 2");
  }
};

template <int Dim, class Rhs>
VecN<Dim> rk4_step(Rhs&& f, double t, const VecN<Dim>& y, double h) {
  const VecN<Dim> k1 = f(t, y);
  const VecN<Dim> k2 = f(t + 0.5 * h, VecN<Dim>(y + 0.5 * h * k1));
  const VecN<Dim> k3 = f(t + 0.5 * h, VecN<Dim>(y + 0.5 * h * k2));
  const VecN<Dim> k4 = f(t + h, VecN<Dim>(y + h * k3));
  return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Integrates y' = f(t, y) from t0 to t1 with `steps` equal RK4 steps.
/// `sink(t, y)`, when provided, is called at every time in `samples`
/// (strictly increasing, within [t0, t1]); steps are split at sample times.
template <int Dim, class Rhs, class Sink>
VecN<Dim> integrate_rk4(Rhs&& f, double t0, double t1, VecN<Dim> y,
                        int steps, std::span<const double> samples,
                        Sink&& sink) {
  const double span = t1 - t0;
  std::size_t next = 0;
  while (next < samples.size() && samples[next] <= t0 + 1e-15 * std::abs(span)) {
    sink(t0, y);
    ++next;
  }
  const double h_nom = span / steps;
  double t = t0;
  while (t < t1 - 1e-15 * std::abs(span)) {
    double h = std::min(h_nom, t1 - t);
    bool hit = false;
    if (next < samples.size() && samples[next] < t + h - 1e-15 * std::abs(span)) {
      h = samples[next] - t;
      hit = true;
    } else if (next < samples.size() &&
               samples[next] <= t + h + 1e-15 * std::abs(span)) {
      hit = true;  // step lands on the sample
    }
    y = rk4_step<Dim>(f, t, y, h);
    t += h;
    if (hit) {
      sink(t, y);
      ++next;
    }
  }
  while (next < samples.size()) {  // samples at t1 within tolerance
    sink(t1, y);
    ++next;
  }
  return y;
}

template <int Dim, class Rhs>
VecN<Dim> integrate_rk4(Rhs&& f, double t0, double t1, VecN<Dim> y,
                        int steps) {
  return integrate_rk4<Dim>(f, t0, t1, std::move(y), steps,
                            std::span<const double>{}, [](double, auto&) {});
}

/// Adaptive Dormand-Prince 5(4) with PI-free standard step control.
/// Error is measured in the mixed norm with tolerances abs + rel*|y|.
template <int Dim, class Rhs, class Sink>
VecN<Dim> integrate_dopri45(Rhs&& f, double t0, double t1, VecN<Dim> y,
                            double rel_tol, double abs_tol,
                            std::span<const double> samples, Sink&& sink) {
  // clang-format off
  constexpr double c2 = 1.0/5.0, c3 = 3.0/10.0, c4 = 4.0/5.0, c5 = 8.0/9.0;
  constexpr double a21 = 1.0/5.0;
  constexpr double a31 = 3.0/40.0, a32 = 9.0/40.0;
  constexpr double a41 = 44.0/45.0, a42 = -56.0/15.0, a43 = 32.0/9.0;
  constexpr double a51 = 19372.0/6561.0, a52 = -25360.0/2187.0,
                   a53 = 64448.0/6561.0, a54 = -212.0/729.0;
  constexpr double a61 = 9017.0/3168.0, a62 = -355.0/33.0,
                   a63 = 46732.0/5247.0, a64 = 49.0/176.0,
                   a65 = -5103.0/18656.0;
  constexpr double b1 = 35.0/384.0, b3 = 500.0/1113.0, b4 = 125.0/192.0,
                   b5 = -2187.0/6784.0, b6 = 11.0/84.0;
  constexpr double e1 = 35.0/384.0 - 5179.0/57600.0,
                   e3 = 500.0/1113.0 - 7571.0/16695.0,
                   e4 = 125.0/192.0 - 393.0/640.0,
                   e5 = -2187.0/6784.0 + 92097.0/339200.0,
                   e6 = 11.0/84.0 - 187.0/2100.0,
                   e7 = -1.0/40.0;
  // clang-format on
  const double span = t1 - t0;
  if (!(span > 0.0)) throw std::invalid_argument("integrate_dopri45: t1 <= t0");
  const double tiny = 1e-15 * span;
  std::size_t next = 0;
  while (next < samples.size() && samples[next] <= t0 + tiny) {
    sink(t0, y);
    ++next;
  }
  double t = t0;
  double h = span / 100.0;
  VecN<Dim> k1 = f(t, y);
  int rejected_in_a_row = 0;
  while (t < t1 - tiny) {
    h = std::min(h, t1 - t);
    bool hit = false;
    if (next < samples.size()) {
      if (samples[next] < t + h - tiny) {
        h = samples[next] - t;
        hit = true;
      } else if (samples[next] <= t + h + tiny) {
        hit = true;
      }
    }
    if (h < 1e-14 * span)
      throw PropagationError("integrate_dopri45: step size underflow", t);
    const VecN<Dim> k2 = f(t + c2 * h, VecN<Dim>(y + h * (a21 * k1)));
    const VecN<Dim> k3 = f(t + c3 * h, VecN<Dim>(y + h * (a31 * k1 + a32 * k2)));
    const VecN<Dim> k4 =
        f(t + c4 * h, VecN<Dim>(y + h * (a41 * k1 + a42 * k2 + a43 * k3)));
    const VecN<Dim> k5 = f(
        t + c5 * h, VecN<Dim>(y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4)));
    const VecN<Dim> k6 =
        f(t + h, VecN<Dim>(y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 +
                                    a65 * k5)));
    const VecN<Dim> ynew =
        y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    const VecN<Dim> k7 = f(t + h, ynew);
    const VecN<Dim> err =
        h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    double norm2 = 0.0;
    for (int i = 0; i < Dim; ++i) {
      const double sc =
          abs_tol + rel_tol * std::max(std::abs(y[i]), std::abs(ynew[i]));
      const double q = err[i] / sc;
      norm2 += q * q;
    }
    const double err_norm = std::sqrt(norm2 / Dim);
    if (err_norm <= 1.0) {
      t += h;
      y = ynew;
      k1 = k7;  // first-same-as-last
      if (hit) {
        sink(t, y);
        ++next;
      }
      const double grow =
          err_norm == 0.0 ? 5.0 : 0.9 * std::pow(err_norm, -0.2);
      h *= std::clamp(grow, 0.2, 5.0);
      rejected_in_a_row = 0;
    } else {
      h *= std::max(0.2, 0.9 * std::pow(err_norm, -0.2));
      if (++rejected_in_a_row > 60)
        throw PropagationError("integrate_dopri45: repeated step rejection", t);
    }
  }
  while (next < samples.size()) {
    sink(t1, y);
    ++next;
  }
  return y;
}

template <int Dim, class Rhs>
VecN<Dim> integrate_dopri45(Rhs&& f, double t0, double t1, VecN<Dim> y,
                            double rel_tol, double abs_tol) {
  return integrate_dopri45<Dim>(f, t0, t1, std::move(y), rel_tol, abs_tol,
                                std::span<const double>{},
                                [](double, auto&) {});
}

/// Uniform sample grid over [t0, t1], endpoints included.
inline std::vector<double> uniform_samples(double t0, double t1, int count) {
  std::vector<double> ts(count);
  for (int i = 0; i < count; ++i)
    ts[i] = t0 + (t1 - t0) * static_cast<double>(i) / (count - 1);
  ts.back() = t1;
  return ts;
}

}  // namespace pegs
