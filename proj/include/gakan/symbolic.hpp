#pragma once

#include <optional>
#include <string>
#include <vector>

namespace gakan {

// Primitive shapes an edge can be replaced with, fitted as c*f(a*x+b)+e.
// Order matters: ties in fit quality resolve to the earlier entry.
enum class Primitive {
  X,
  Square,
  Cube,
  Quartic,
  Reciprocal,
  Sqrt,
  Exp,
  Log,
  Sin,
  Tanh,
  Arctan,
  Abs,
  Gaussian,
  Constant,
};

struct PrimitiveInfo {
  Primitive id;
  const char* name;
  double (*eval)(double);
  double (*deriv)(double);
  bool (*in_domain)(double);
};

const std::vector<PrimitiveInfo>& symbolic_library();
const PrimitiveInfo& primitive_info(Primitive p);
std::optional<Primitive> primitive_by_name(const std::string& name);

}  // namespace gakan
