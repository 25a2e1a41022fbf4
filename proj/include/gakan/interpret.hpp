#pragma once

#include <array>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "gakan/network.hpp"
#include "gakan/symbolic.hpp"
#include "gakan/types.hpp"

namespace gakan {

// Best affine-composed primitive c*f(a*x+b)+e for one edge.
struct EdgeFit {
  int layer = 0, row = 0, col = 0;
  Primitive primitive = Primitive::Constant;
  double a = 1.0, b = 0.0, c = 1.0, e = 0.0;
  double r2 = -std::numeric_limits<double>::infinity();
  bool accepted = false;  // fit written into the model
};

// Normalized per-input attribution: output nodes start at 1/m, node scores
// flow backwards proportionally to mean |edge activation|.
Vector feature_scores(const KanModel& model, const Matrix& dataset);

struct SymbolicFitOptions {
  double r2_threshold = 0.9;
  bool force = false;  // adopt the best fit even below the threshold
};

// Fits every active edge against the library; edges at or above the r2
// threshold are replaced by their symbolic form, the rest stay splines and
// come back flagged (accepted = false).
std::vector<EdgeFit> auto_symbolic(KanModel& model, const Matrix& dataset,
                                   const SymbolicFitOptions& options = {});

// Best fit for a single edge; restricted to one primitive when given.
EdgeFit fit_edge(const KanModel& model, const Matrix& dataset, int layer,
                 int row, int col,
                 std::optional<Primitive> primitive = std::nullopt);

// Pins an edge to a primitive with trainable a, b, c, e (initially the
// identity placement 1,0,1,0); trainer.train fine-tunes them afterwards.
void fix_edge(KanModel& model, int layer, int row, int col, Primitive p);

std::vector<std::array<int, 3>> non_symbolic_edges(const KanModel& model);

struct Expr {
  enum class Kind { Var, Const, Sum, Prim };
  Kind kind = Kind::Const;
  int var_index = 0;       // Var
  double value = 0.0;      // Const
  std::vector<Expr> args;  // Sum: terms; Prim: single argument
  Primitive prim = Primitive::X;
  double a = 1.0, b = 0.0, c = 1.0, e = 0.0;  // Prim: c*f(a*z+b)+e
};

struct Formula {
  std::vector<Expr> outputs;  // one expression per output class
};

// Requires every active edge to be symbolic; throws listing offenders.
Formula extract_formula(const KanModel& model);

double eval_expr(const Expr& expr, const Vector& x);
std::string render_expr(const Expr& expr, int decimals = 2);
std::string formula_text(const Formula& formula, int decimals = 2);
std::string formula_json(const Formula& formula);  // full-precision trees

}  // namespace gakan
