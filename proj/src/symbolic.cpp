#include "gakan/symbolic.hpp"

#include <cmath>
#include <limits>

namespace gakan {

namespace {

bool any_real(double) { return true; }
bool nonzero(double z) { return std::abs(z) > 1e-8; }
bool nonneg(double z) { return z >= 0.0; }
bool positive(double z) { return z > 1e-12; }

double f_x(double z) { return z; }
double d_x(double) { return 1.0; }
double f_sq(double z) { return z * z; }
double d_sq(double z) { return 2.0 * z; }
double f_cube(double z) { return z * z * z; }
double d_cube(double z) { return 3.0 * z * z; }
double f_quart(double z) { return z * z * z * z; }
double d_quart(double z) { return 4.0 * z * z * z; }
double f_recip(double z) { return 1.0 / z; }
double d_recip(double z) { return -1.0 / (z * z); }
double f_sqrt(double z) { return std::sqrt(z); }
double d_sqrt(double z) {
  return z > 0.0 ? 0.5 / std::sqrt(z) : std::numeric_limits<double>::infinity();
}
double f_exp(double z) { return std::exp(z); }
double f_log(double z) { return std::log(z); }
double d_log(double z) { return 1.0 / z; }
double f_sin(double z) { return std::sin(z); }
double d_sin(double z) { return std::cos(z); }
double f_tanh(double z) { return std::tanh(z); }
double d_tanh(double z) {
  const double t = std::tanh(z);
  return 1.0 - t * t;
}
double f_atan(double z) { return std::atan(z); }
double d_atan(double z) { return 1.0 / (1.0 + z * z); }
double f_abs(double z) { return std::abs(z); }
double d_abs(double z) { return z > 0.0 ? 1.0 : (z < 0.0 ? -1.0 : 0.0); }
double f_gauss(double z) { return std::exp(-z * z); }
double d_gauss(double z) { return -2.0 * z * std::exp(-z * z); }
double f_const(double) { return 1.0; }
double d_const(double) { return 0.0; }

}  // namespace

const std::vector<PrimitiveInfo>& symbolic_library() {
  static const std::vector<PrimitiveInfo> lib = {
      {Primitive::X, "x", f_x, d_x, any_real},
      {Primitive::Square, "x^2", f_sq, d_sq, any_real},
      {Primitive::Cube, "x^3", f_cube, d_cube, any_real},
      {Primitive::Quartic, "x^4", f_quart, d_quart, any_real},
      {Primitive::Reciprocal, "1/x", f_recip, d_recip, nonzero},
      {Primitive::Sqrt, "sqrt", f_sqrt, d_sqrt, nonneg},
      {Primitive::Exp, "exp", f_exp, f_exp, any_real},
      {Primitive::Log, "log", f_log, d_log, positive},
      {Primitive::Sin, "sin", f_sin, d_sin, any_real},
      {Primitive::Tanh, "tanh", f_tanh, d_tanh, any_real},
      {Primitive::Arctan, "arctan", f_atan, d_atan, any_real},
      {Primitive::Abs, "abs", f_abs, d_abs, any_real},
      {Primitive::Gaussian, "gaussian", f_gauss, d_gauss, any_real},
      {Primitive::Constant, "constant", f_const, d_const, any_real},
  };
  return lib;
}

const PrimitiveInfo& primitive_info(Primitive p) {
  return symbolic_library()[static_cast<std::size_t>(p)];
}

std::optional<Primitive> primitive_by_name(const std::string& name) {
  for (const auto& info : symbolic_library())
    if (name == info.name) return info.id;
  return std::nullopt;
}

}  // namespace gakan
