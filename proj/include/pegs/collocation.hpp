#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <stdexcept>

#include "pegs/types.hpp"

// Collocation defect rules on a single segment of length h, generic over
// Eigen vector types. A zero defect means the quadrature of the dynamics
// matches the node increment.

namespace pegs {

namespace detail {
template <class A, class B>
void require_same_size(const A& a, const B& b, const char* who) {
  if (a.size() != b.size())
    throw std::invalid_argument(std::string(who) + ": dimension mismatch");
}
}  // namespace detail

/// Hermite-interpolated midpoint state of a segment:
///   x_c = (x_k + x_k1)/2 + (h/8) (f_k - f_k1).
template <class D1, class D2, class D3, class D4>
auto hermite_simpson_midpoint(const Eigen::MatrixBase<D1>& x_k,
                              const Eigen::MatrixBase<D2>& x_k1,
                              const Eigen::MatrixBase<D3>& f_k,
                              const Eigen::MatrixBase<D4>& f_k1, double h) {
  detail::require_same_size(x_k, x_k1, "hermite_simpson_midpoint");
  detail::require_same_size(x_k, f_k, "hermite_simpson_midpoint");
  detail::require_same_size(x_k, f_k1, "hermite_simpson_midpoint");
  return (0.5 * (x_k + x_k1) + (h / 8.0) * (f_k - f_k1)).eval();
}

/// Hermite-Simpson defect:
///   x_k1 - x_k - (h/6) (f_k + 4 f_c + f_k1),
/// with f_c the dynamics at the Hermite midpoint. Exact for cubic
/// polynomial flows; O(h^5) local error otherwise.
template <class D1, class D2, class D3, class D4, class D5>
auto hermite_simpson_defect(const Eigen::MatrixBase<D1>& x_k,
                            const Eigen::MatrixBase<D2>& x_k1,
                            const Eigen::MatrixBase<D3>& f_k,
                            const Eigen::MatrixBase<D4>& f_k1,
                            const Eigen::MatrixBase<D5>& f_c, double h) {
  detail::require_same_size(x_k, x_k1, "hermite_simpson_defect");
  detail::require_same_size(x_k, f_k, "hermite_simpson_defect");
  detail::require_same_size(x_k, f_k1, "hermite_simpson_defect");
  detail::require_same_size(x_k, f_c, "hermite_simpson_defect");
  if (!(h > 0.0)) throw std::invalid_argument("hermite_simpson_defect: h <= 0");
  return (x_k1 - x_k - (h / 6.0) * (f_k + 4.0 * f_c + f_k1)).eval();
}

/// Fifth-degree Lobatto abscissae on [0, 1]:
/// {0, 1/2 - sqrt(21)/14, 1/2, 1/2 + sqrt(21)/14, 1}.
inline constexpr std::array<double, 5> kLobatto5Nodes = {
    0.0, 0.17267316464601142810085380, 0.5,
    1.0 - 0.17267316464601142810085380, 1.0};

/// Matching quadrature weights on [0, 1]: {1/20, 49/180, 16/45, 49/180, 1/20}.
inline constexpr std::array<double, 5> kLobatto5Weights = {
    1.0 / 20.0, 49.0 / 180.0, 16.0 / 45.0, 49.0 / 180.0, 1.0 / 20.0};

/// Quintic Hermite interpolant through (value, slope) data at the left end,
/// midpoint and right end of a segment of length h, evaluated at the
/// normalized position sigma in [0, 1]. Slopes are physical (dx/dt).
template <class D1, class D2, class D3, class D4, class D5, class D6>
auto quintic_hermite_value(const Eigen::MatrixBase<D1>& x0,
                           const Eigen::MatrixBase<D2>& f0,
                           const Eigen::MatrixBase<D3>& xc,
                           const Eigen::MatrixBase<D4>& fc,
                           const Eigen::MatrixBase<D5>& x1,
                           const Eigen::MatrixBase<D6>& f1, double h,
                           double sigma) {
  const double s = sigma;
  const double s2 = s * s, s3 = s2 * s, s4 = s3 * s, s5 = s4 * s;
  const double b_x0 = 24 * s5 - 68 * s4 + 66 * s3 - 23 * s2 + 1;
  const double b_d0 = 4 * s5 - 12 * s4 + 13 * s3 - 6 * s2 + s;
  const double b_xc = 16 * s4 - 32 * s3 + 16 * s2;
  const double b_dc = 16 * s5 - 40 * s4 + 32 * s3 - 8 * s2;
  const double b_x1 = -24 * s5 + 52 * s4 - 34 * s3 + 7 * s2;
  const double b_d1 = 4 * s5 - 8 * s4 + 5 * s3 - s2;
  return (b_x0 * x0 + b_xc * xc + b_x1 * x1 +
          h * (b_d0 * f0 + b_dc * fc + b_d1 * f1))
      .eval();
}

/// Fifth-degree Gauss-Lobatto quadrature defect:
///   x_right - x_left - h * sum_i w_i f_i,
/// where f holds the dynamics at the five Lobatto abscissae of the segment
/// (endpoints, midpoint and the two interior points). Exact for polynomial
/// integrands up to degree 7.
template <class D1, class D2, class DF>
auto gauss_lobatto5_defect(const Eigen::MatrixBase<D1>& x_left,
                           const Eigen::MatrixBase<D2>& x_right,
                           const std::array<DF, 5>& f, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("gauss_lobatto5_defect: h <= 0");
  detail::require_same_size(x_left, x_right, "gauss_lobatto5_defect");
  for (const auto& fi : f)
    detail::require_same_size(x_left, fi, "gauss_lobatto5_defect");
  auto quad = (kLobatto5Weights[0] * f[0]).eval();
  for (int i = 1; i < 5; ++i) quad += kLobatto5Weights[i] * f[i];
  return (x_right - x_left - h * quad).eval();
}

}  // namespace pegs
