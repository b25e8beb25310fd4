#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "pegs/ode.hpp"

using namespace pegs;

namespace {
VecN<1> scalar(double v) {
  VecN<1> x;
  x[0] = v;
  return x;
}
}  // namespace

TEST_CASE("rk4 reproduces the exponential flow at fourth order", "[ode]") {
  auto f = [](double, const VecN<1>& y) { return y; };
  const double exact = std::exp(1.0);
  const double e1 =
      std::abs(integrate_rk4<1>(f, 0.0, 1.0, scalar(1.0), 40)[0] - exact);
  const double e2 =
      std::abs(integrate_rk4<1>(f, 0.0, 1.0, scalar(1.0), 80)[0] - exact);
  CHECK(e1 / e2 == Catch::Approx(16.0).epsilon(0.05));
}

TEST_CASE("rk4 hits sample times exactly", "[ode]") {
  auto f = [](double t, const VecN<1>&) { return scalar(std::cos(t)); };
  std::vector<double> samples = {0.0, 0.31, 1.0, 2.2, 3.0};
  std::vector<double> got_t;
  std::vector<double> got_y;
  integrate_rk4<1>(f, 0.0, 3.0, scalar(0.0), 300, samples,
                   [&](double t, const VecN<1>& y) {
                     got_t.push_back(t);
                     got_y.push_back(y[0]);
                   });
  REQUIRE(got_t.size() == samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    CHECK(got_t[i] == Catch::Approx(samples[i]).margin(1e-14));
    CHECK(got_y[i] == Catch::Approx(std::sin(samples[i])).margin(1e-9));
  }
}

TEST_CASE("dopri45 meets tight tolerances on a stiff-ish oscillator", "[ode]") {
  auto f = [](double, const VecN<2>& y) {
    VecN<2> d;
    d[0] = y[1];
    d[1] = -25.0 * y[0];
    return d;
  };
  VecN<2> y0;
  y0 << 1.0, 0.0;
  const VecN<2> yf =
      integrate_dopri45<2>(f, 0.0, 2.0, y0, 1e-12, 1e-14);
  CHECK(yf[0] == Catch::Approx(std::cos(5.0 * 2.0)).margin(1e-9));
  CHECK(yf[1] == Catch::Approx(-5.0 * std::sin(5.0 * 2.0)).margin(1e-8));
}

TEST_CASE("dopri45 dense sampling matches the exact solution", "[ode]") {
  auto f = [](double t, const VecN<1>& y) { return scalar(-2.0 * t * y[0]); };
  const auto samples = uniform_samples(0.0, 2.0, 21);
  std::vector<double> ys;
  integrate_dopri45<1>(f, 0.0, 2.0, scalar(1.0), 1e-11, 1e-13, samples,
                       [&](double, const VecN<1>& y) { ys.push_back(y[0]); });
  REQUIRE(ys.size() == samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    CHECK(ys[i] ==
          Catch::Approx(std::exp(-samples[i] * samples[i])).margin(1e-9));
}

TEST_CASE("propagation errors carry the failure time", "[ode]") {
  auto f = [](double t, const VecN<1>& y) -> VecN<1> {
    if (t > 0.5) throw PropagationError("test guard", t);
    return y;
  };
  try {
    integrate_rk4<1>(f, 0.0, 1.0, scalar(1.0), 100);
    FAIL("expected PropagationError");
  } catch (const PropagationError& e) {
    CHECK(e.time() >= 0.5);
    CHECK(e.time() <= 0.52);
  }
}
