#pragma once

#include <array>
#include <cmath>

#include "gakan/types.hpp"

namespace gakan {

// Uniform cubic B-spline grid over a fixed domain. Knots run k intervals
// past each end of [domain_lo, domain_hi] at the same spacing, so the
// interior spans carry exactly G + k basis functions.
struct SplineGrid {
  double domain_lo = -1.0;
  double domain_hi = 1.0;
  int intervals = 3;  // G
  int degree = 3;     // k
  Vector knots;       // G + 2k + 1, strictly increasing

  int basis_count() const { return intervals + degree; }
};

SplineGrid make_grid(double domain_lo, double domain_hi, int intervals,
                     int degree = 3);

// Non-zero window of the basis at one point: values[0..k] are
// B_{first..first+k,k}(x), every other basis function is zero there.
struct BasisBand {
  int first = 0;
  std::array<double, 4> values{};  // degree is fixed at 3
};

// Inputs outside the domain are clamped before evaluation.
BasisBand basis_band(const SplineGrid& grid, double x);
// d/dx of basis_band through the clamp: zero outside the domain.
BasisBand basis_deriv_band(const SplineGrid& grid, double x);

// Dense variants (length G + k).
Vector basis_eval(const SplineGrid& grid, double x);
Vector basis_deriv(const SplineGrid& grid, double x);

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double silu(double x) { return x * sigmoid(x); }

inline double silu_deriv(double x) {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

// phi(x) = w_b * silu(x) + w_s * sum_i c_i B_i(clamp(x)).
// The silu branch sees the raw input; only the spline is clamped.
double edge_activation(const SplineGrid& grid, const Vector& coeffs,
                       double w_b, double w_s, double x);

}  // namespace gakan
