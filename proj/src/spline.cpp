#include "gakan/spline.hpp"

#include <stdexcept>

namespace gakan {

SplineGrid make_grid(double domain_lo, double domain_hi, int intervals,
                     int degree) {
  if (!(domain_lo < domain_hi))
    throw std::invalid_argument("make_grid: domain_lo must be < domain_hi");
  if (intervals < 1) throw std::invalid_argument("make_grid: intervals < 1");
  if (degree < 1) throw std::invalid_argument("make_grid: degree < 1");

  SplineGrid g;
  g.domain_lo = domain_lo;
  g.domain_hi = domain_hi;
  g.intervals = intervals;
  g.degree = degree;
  const int n_knots = intervals + 2 * degree + 1;
  const double h = (domain_hi - domain_lo) / intervals;
  g.knots.resize(n_knots);
  for (int i = 0; i < n_knots; ++i)
    g.knots[i] = domain_lo + (i - degree) * h;
  return g;
}

namespace {

// Index of the interior span containing x; x == domain_hi maps into the
// last span so the partition of unity holds at the right endpoint.
int span_index(const SplineGrid& g, double x) {
  const double h = (g.domain_hi - g.domain_lo) / g.intervals;
  int s = g.degree + static_cast<int>(std::floor((x - g.domain_lo) / h));
  const int lo = g.degree;
  const int hi = g.intervals + g.degree - 1;
  return s < lo ? lo : (s > hi ? hi : s);
}

// Cox-de Boor triangle for the k+1 bases non-zero on span `span`,
// optionally stopping at degree k-1 (for the derivative formula).
void basis_triangle(const SplineGrid& g, int span, double x, int upto,
                    double* out) {
  const Vector& t = g.knots;
  double left[5], right[5];
  out[0] = 1.0;
  for (int r = 1; r <= upto; ++r) {
    left[r] = x - t[span + 1 - r];
    right[r] = t[span + r] - x;
    double saved = 0.0;
    for (int s = 0; s < r; ++s) {
      const double tmp = out[s] / (right[s + 1] + left[r - s]);
      out[s] = saved + right[s + 1] * tmp;
      saved = left[r - s] * tmp;
    }
    out[r] = saved;
  }
}

}  // namespace

BasisBand basis_band(const SplineGrid& grid, double x) {
  if (!std::isfinite(x))
    throw std::domain_error("basis_band: non-finite input");
  const double xc =
      x < grid.domain_lo ? grid.domain_lo
                         : (x > grid.domain_hi ? grid.domain_hi : x);
  const int span = span_index(grid, xc);
  BasisBand band;
  band.first = span - grid.degree;
  basis_triangle(grid, span, xc, grid.degree, band.values.data());
  return band;
}

BasisBand basis_deriv_band(const SplineGrid& grid, double x) {
  if (!std::isfinite(x))
    throw std::domain_error("basis_deriv_band: non-finite input");
  BasisBand band;
  if (x < grid.domain_lo || x > grid.domain_hi) {
    band.first = 0;
    return band;  // clamped input: derivative is zero by convention
  }
  const int k = grid.degree;
  const int span = span_index(grid, x);
  band.first = span - k;

  // Degree k-1 bases on the same span, then
  // B'_{i,k} = k * (B_{i,k-1}/(t_{i+k}-t_i) - B_{i+1,k-1}/(t_{i+k+1}-t_{i+1})).
  double lower[4];
  basis_triangle(grid, span, x, k - 1, lower);
  const Vector& t = grid.knots;
  for (int s = 0; s <= k; ++s) {
    const int i = band.first + s;
    // lower[j] holds B_{span-k+1+j, k-1}; terms outside [0, k-1] vanish.
    const double bl = (s >= 1) ? lower[s - 1] : 0.0;
    const double br = (s <= k - 1) ? lower[s] : 0.0;
    band.values[s] =
        k * (bl / (t[i + k] - t[i]) - br / (t[i + k + 1] - t[i + 1]));
  }
  return band;
}

Vector basis_eval(const SplineGrid& grid, double x) {
  const BasisBand band = basis_band(grid, x);
  Vector out = Vector::Zero(grid.basis_count());
  for (int s = 0; s <= grid.degree; ++s) out[band.first + s] = band.values[s];
  return out;
}

Vector basis_deriv(const SplineGrid& grid, double x) {
  if (!std::isfinite(x))
    throw std::domain_error("basis_deriv: non-finite input");
  Vector out = Vector::Zero(grid.basis_count());
  if (x < grid.domain_lo || x > grid.domain_hi) return out;
  const BasisBand band = basis_deriv_band(grid, x);
  for (int s = 0; s <= grid.degree; ++s) out[band.first + s] = band.values[s];
  return out;
}

double edge_activation(const SplineGrid& grid, const Vector& coeffs,
                       double w_b, double w_s, double x) {
  if (coeffs.size() != grid.basis_count())
    throw std::invalid_argument(
        "edge_activation: coeffs length must be G + k");
  const BasisBand band = basis_band(grid, x);
  double spline = 0.0;
  for (int s = 0; s <= grid.degree; ++s)
    spline += coeffs[band.first + s] * band.values[s];
  return w_b * silu(x) + w_s * spline;
}

}  // namespace gakan
