#include "gakan/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace gakan {

Vector feature_scores(const KanModel& model, const Matrix& dataset) {
  if (dataset.rows() == 0)
    throw std::invalid_argument("feature_scores: empty dataset");
  ActivationTrace trace;
  forward(model, dataset, &trace);

  const auto& sizes = model.spec.layer_sizes;
  const int depth = model.spec.depth();
  std::vector<Vector> node_score(sizes.size());
  for (std::size_t l = 0; l < sizes.size(); ++l)
    node_score[l] = Vector::Zero(sizes[l]);
  node_score.back().setConstant(1.0 / static_cast<double>(sizes.back()));

  for (int l = depth - 1; l >= 0; --l) {
    const MaskMatrix& mask = model.spec.masks[static_cast<std::size_t>(l)];
    const Matrix& mag = trace.mean_abs[static_cast<std::size_t>(l)];
    for (Index j = 0; j < mask.rows(); ++j) {
      double total = 0.0;
      int active = 0;
      for (Index i = 0; i < mask.cols(); ++i) {
        if (!mask(j, i)) continue;
        total += mag(j, i);
        ++active;
      }
      if (active == 0) continue;
      const double score_j = node_score[static_cast<std::size_t>(l) + 1][j];
      for (Index i = 0; i < mask.cols(); ++i) {
        if (!mask(j, i)) continue;
        const double share = total > 0.0
                                 ? mag(j, i) / total
                                 : 1.0 / static_cast<double>(active);
        node_score[static_cast<std::size_t>(l)][i] += score_j * share;
      }
    }
  }

  Vector scores = node_score.front();
  const double sum = scores.sum();
  if (sum > 0.0) scores /= sum;
  return scores;
}

namespace {

struct FitData {
  std::vector<double> x, y;          // training portion of the pairs
  std::vector<double> x_ho, y_ho;    // held-out portion for r2
};

// Every 5th pair is held out, so the r2 never rewards interpolation alone.
FitData edge_pairs(const std::vector<Matrix>& acts, const KanModel& model,
                   const EdgeParams& e) {
  FitData d;
  const Matrix& layer_in = acts[static_cast<std::size_t>(e.layer)];
  const SplineGrid& grid = model.grid_for(e.layer, e.col);
  const Index n = layer_in.rows();
  for (Index r = 0; r < n; ++r) {
    const double x = layer_in(r, e.col);
    const double y = edge_activation(grid, e.coeffs, e.w_b, e.w_s, x);
    if (r % 5 == 4) {
      d.x_ho.push_back(x);
      d.y_ho.push_back(y);
    } else {
      d.x.push_back(x);
      d.y.push_back(y);
    }
  }
  return d;
}

struct AffineFit {
  double c = 0.0, e = 0.0;
  bool ok = false;
};

// Least squares of y on f-values with an intercept.
AffineFit solve_ce(const std::vector<double>& f, const std::vector<double>& y) {
  AffineFit fit;
  const std::size_t n = f.size();
  if (n < 2) return fit;
  double sf = 0, sy = 0, sff = 0, sfy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sf += f[i];
    sy += y[i];
    sff += f[i] * f[i];
    sfy += f[i] * y[i];
  }
  const double nn = static_cast<double>(n);
  const double det = nn * sff - sf * sf;
  if (std::abs(det) < 1e-12 * std::max(1.0, sff * nn)) {
    fit.c = 0.0;
    fit.e = sy / nn;
    fit.ok = true;
    return fit;
  }
  fit.c = (nn * sfy - sf * sy) / det;
  fit.e = (sy - fit.c * sf) / nn;
  fit.ok = std::isfinite(fit.c) && std::isfinite(fit.e);
  return fit;
}

constexpr double kInfinity() { return std::numeric_limits<double>::infinity(); }

// r2 with the zero-variance convention: fitting a constant target counts as
// 1 when the residual is equally negligible.
double r_squared(const std::vector<double>& pred,
                 const std::vector<double>& truth) {
  const std::size_t n = truth.size();
  double mean = 0;
  for (double v : truth) mean += v;
  mean /= static_cast<double>(n);
  double ss_res = 0, ss_tot = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ss_res += (pred[i] - truth[i]) * (pred[i] - truth[i]);
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
  }
  const double floor = 1e-18 * static_cast<double>(n) * std::max(1.0, mean * mean);
  if (ss_tot <= floor) return ss_res <= floor ? 1.0 : -kInfinity();
  return 1.0 - ss_res / ss_tot;
}

bool constant_target(const FitData& data) {
  if (data.y.empty()) return true;
  double mean = 0;
  for (double v : data.y) mean += v;
  mean /= static_cast<double>(data.y.size());
  double var = 0;
  for (double v : data.y) var += (v - mean) * (v - mean);
  var /= static_cast<double>(data.y.size());
  return var <= 1e-18 * std::max(1.0, mean * mean);
}

EdgeFit fit_one(const FitData& data, const EdgeParams& edge,
                const PrimitiveInfo& info) {
  EdgeFit best;
  best.layer = edge.layer;
  best.row = edge.row;
  best.col = edge.col;
  best.primitive = info.id;

  if (info.id == Primitive::Constant) {
    // c*1 + e degenerates; predict the training mean everywhere
    if (data.x.size() < 5 || data.y_ho.size() < 2) return best;
    double mean = 0;
    for (double v : data.y) mean += v;
    mean /= static_cast<double>(data.y.size());
    best.a = 1.0;
    best.b = 0.0;
    best.c = 0.0;
    best.e = mean;
    std::vector<double> pred(data.y_ho.size(), mean);
    best.r2 = r_squared(pred, data.y_ho);
    return best;
  }

  double x_lo = kInfinity(), x_hi = -kInfinity();
  for (double v : data.x) {
    x_lo = std::min(x_lo, v);
    x_hi = std::max(x_hi, v);
  }
  if (!(x_lo <= x_hi)) return best;

  // least squares of (c, e) on the in-domain training pairs
  auto train_fit = [&](double a, double b) -> AffineFit {
    std::vector<double> fx, yx;
    for (std::size_t i = 0; i < data.x.size(); ++i) {
      const double z = a * data.x[i] + b;
      if (!info.in_domain(z)) continue;
      const double f = info.eval(z);
      if (!std::isfinite(f)) continue;
      fx.push_back(f);
      yx.push_back(data.y[i]);
    }
    if (fx.size() < 5) return {};  // too few in-domain samples
    return solve_ce(fx, yx);
  };

  auto train_r2 = [&](double a, double b, const AffineFit& ce) {
    std::vector<double> pred, truth;
    for (std::size_t i = 0; i < data.x.size(); ++i) {
      const double z = a * data.x[i] + b;
      if (!info.in_domain(z)) continue;
      const double f = info.eval(z);
      if (!std::isfinite(f)) continue;
      pred.push_back(ce.c * f + ce.e);
      truth.push_back(data.y[i]);
    }
    if (pred.size() < 5) return -kInfinity();
    return r_squared(pred, truth);
  };

  // a candidate undefined on any held-out point is unusable as a
  // replacement function, not merely unmeasured there
  auto holdout_r2 = [&](double a, double b, const AffineFit& ce) {
    std::vector<double> pred;
    for (std::size_t i = 0; i < data.x_ho.size(); ++i) {
      const double z = a * data.x_ho[i] + b;
      if (!info.in_domain(z)) return -kInfinity();
      const double f = info.eval(z);
      if (!std::isfinite(f)) return -kInfinity();
      pred.push_back(ce.c * f + ce.e);
    }
    if (pred.size() < 2) return -kInfinity();
    return r_squared(pred, data.y_ho);
  };

  constexpr int kLogSteps = 21;
  const int shift_steps = x_hi > x_lo ? 21 : 1;
  const double shift_step =
      shift_steps > 1 ? (x_hi - x_lo) / (shift_steps - 1) : 1.0;
  for (int pa = 0; pa < kLogSteps; ++pa) {
    const double mag = std::pow(2.0, -2.0 + 4.0 * pa / (kLogSteps - 1));
    for (int sgn = 0; sgn < 2; ++sgn) {
      const double a = sgn ? -mag : mag;
      for (int pb = 0; pb < shift_steps; ++pb) {
        const double b = x_lo + shift_step * pb;
        const AffineFit ce = train_fit(a, b);
        if (!ce.ok) continue;
        const double r2 = holdout_r2(a, b, ce);
        if (r2 > best.r2) {
          best.a = a;
          best.b = b;
          best.c = ce.c;
          best.e = ce.e;
          best.r2 = r2;
        }
      }
    }
  }
  if (!std::isfinite(best.r2)) return best;

  // polish (a, b) inside the winning cell; the coarse log grid can sit a
  // few percent off the true scale, which costs shape-critical primitives
  // like exp more than flexible ones
  double a = best.a, b = best.b;
  const double a_span = std::pow(2.0, 4.0 / (kLogSteps - 1));
  for (int pass = 0; pass < 2; ++pass) {
    double lo = a / a_span, hi = a * a_span;
    for (int it = 0; it < 12; ++it) {
      const double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
      const AffineFit f1 = train_fit(m1, b), f2 = train_fit(m2, b);
      const double r1 = f1.ok ? train_r2(m1, b, f1) : -kInfinity();
      const double r2v = f2.ok ? train_r2(m2, b, f2) : -kInfinity();
      if (r1 >= r2v) hi = m2; else lo = m1;
    }
    a = 0.5 * (lo + hi);
    double blo = b - shift_step, bhi = b + shift_step;
    for (int it = 0; it < 12; ++it) {
      const double m1 = blo + (bhi - blo) / 3.0, m2 = bhi - (bhi - blo) / 3.0;
      const AffineFit f1 = train_fit(a, m1), f2 = train_fit(a, m2);
      const double r1 = f1.ok ? train_r2(a, m1, f1) : -kInfinity();
      const double r2v = f2.ok ? train_r2(a, m2, f2) : -kInfinity();
      if (r1 >= r2v) bhi = m2; else blo = m1;
    }
    b = 0.5 * (blo + bhi);
  }
  const AffineFit refined = train_fit(a, b);
  if (refined.ok) {
    const double r2 = holdout_r2(a, b, refined);
    if (r2 > best.r2) {
      best.a = a;
      best.b = b;
      best.c = refined.c;
      best.e = refined.e;
      best.r2 = r2;
    }
  }
  return best;
}

void write_fit(KanModel& model, const EdgeFit& fit) {
  const int idx = model.edge_index(fit.layer, fit.row, fit.col);
  if (idx < 0) throw std::invalid_argument("write_fit: inactive edge");
  EdgeParams& e = model.edges[static_cast<std::size_t>(idx)];
  e.symbolic = true;
  e.primitive = fit.primitive;
  e.sym_a = fit.a;
  e.sym_b = fit.b;
  e.sym_c = fit.c;
  e.sym_e = fit.e;
}

}  // namespace

EdgeFit fit_edge(const KanModel& model, const Matrix& dataset, int layer,
                 int row, int col, std::optional<Primitive> primitive) {
  const int idx = model.edge_index(layer, row, col);
  if (idx < 0) throw std::invalid_argument("fit_edge: inactive edge");
  const std::vector<Matrix> acts = forward_activations(model, dataset);
  const EdgeParams& e = model.edges[static_cast<std::size_t>(idx)];
  if (e.symbolic)
    throw std::invalid_argument("fit_edge: edge is already symbolic");
  const FitData data = edge_pairs(acts, model, e);

  EdgeFit best;
  best.layer = layer;
  best.row = row;
  best.col = col;
  // a flat edge is the constant primitive outright; any c=0 fit ties it
  const bool flat = !primitive && constant_target(data);
  for (const auto& info : symbolic_library()) {
    if (primitive && *primitive != info.id) continue;
    if (flat && info.id != Primitive::Constant) continue;
    const EdgeFit fit = fit_one(data, e, info);
    if (fit.r2 > best.r2) best = fit;  // strict: ties keep the earlier entry
  }
  return best;
}

std::vector<EdgeFit> auto_symbolic(KanModel& model, const Matrix& dataset,
                                   const SymbolicFitOptions& options) {
  if (dataset.rows() == 0)
    throw std::invalid_argument("auto_symbolic: empty dataset");
  const std::vector<Matrix> acts = forward_activations(model, dataset);

  std::vector<EdgeFit> fits;
  for (const auto& e : model.edges) {
    if (e.symbolic) continue;
    const FitData data = edge_pairs(acts, model, e);
    EdgeFit best;
    best.layer = e.layer;
    best.row = e.row;
    best.col = e.col;
    const bool flat = constant_target(data);
    for (const auto& info : symbolic_library()) {
      if (flat && info.id != Primitive::Constant) continue;
      const EdgeFit fit = fit_one(data, e, info);
      if (fit.r2 > best.r2) best = fit;
    }
    best.accepted = best.r2 >= options.r2_threshold ||
                    (options.force && std::isfinite(best.r2));
    fits.push_back(best);
  }
  for (const auto& fit : fits)
    if (fit.accepted) write_fit(model, fit);
  return fits;
}

void fix_edge(KanModel& model, int layer, int row, int col, Primitive p) {
  const int idx = model.edge_index(layer, row, col);
  if (idx < 0) throw std::invalid_argument("fix_edge: inactive edge");
  EdgeParams& e = model.edges[static_cast<std::size_t>(idx)];
  e.symbolic = true;
  e.primitive = p;
  e.sym_a = 1.0;
  e.sym_b = 0.0;
  e.sym_c = 1.0;
  e.sym_e = 0.0;
}

std::vector<std::array<int, 3>> non_symbolic_edges(const KanModel& model) {
  std::vector<std::array<int, 3>> out;
  for (const auto& e : model.edges)
    if (!e.symbolic) out.push_back({e.layer, e.row, e.col});
  return out;
}

namespace {

Expr make_const(double v) {
  Expr e;
  e.kind = Expr::Kind::Const;
  e.value = v;
  return e;
}

// c*f(a*z+b)+e over `child`, collapsing affine chains as it goes.
Expr apply_edge(const EdgeParams& edge, Expr child) {
  const auto& info = primitive_info(edge.primitive);
  double a = edge.sym_a, b = edge.sym_b, c = edge.sym_c, e = edge.sym_e;

  if (child.kind == Expr::Kind::Const)
    return make_const(c * info.eval(a * child.value + b) + e);

  if (edge.primitive == Primitive::Constant)
    return make_const(c + e);

  // canonical linear child (c_l * z + e_l) folds into a, b
  if (child.kind == Expr::Kind::Prim && child.prim == Primitive::X) {
    const double cl = child.c, el = child.e;
    b += a * el;
    a *= cl;
    Expr inner = std::move(child.args[0]);
    child = std::move(inner);
  }

  if (edge.primitive == Primitive::X) {
    // linear edge: canonical c' * z + e' with a=1, b=0
    const double c_lin = c * a;
    const double e_lin = c * b + e;
    if (child.kind == Expr::Kind::Prim) {
      child.c *= c_lin;
      child.e = child.e * c_lin + e_lin;
      return child;
    }
    Expr out;
    out.kind = Expr::Kind::Prim;
    out.prim = Primitive::X;
    out.a = 1.0;
    out.b = 0.0;
    out.c = c_lin;
    out.e = e_lin;
    out.args.push_back(std::move(child));
    return out;
  }

  Expr out;
  out.kind = Expr::Kind::Prim;
  out.prim = edge.primitive;
  out.a = a;
  out.b = b;
  out.c = c;
  out.e = e;
  out.args.push_back(std::move(child));
  return out;
}

Expr make_sum(std::vector<Expr> terms) {
  std::vector<Expr> flat;
  double constant = 0.0;
  bool has_const = false;
  for (auto& t : terms) {
    if (t.kind == Expr::Kind::Sum) {
      for (auto& sub : t.args) flat.push_back(std::move(sub));
    } else {
      flat.push_back(std::move(t));
    }
  }
  std::vector<Expr> kept;
  for (auto& t : flat) {
    if (t.kind == Expr::Kind::Const) {
      constant += t.value;
      has_const = true;
    } else if (t.kind == Expr::Kind::Prim && t.e != 0.0) {
      constant += t.e;  // hoist offsets into one trailing constant
      has_const = true;
      t.e = 0.0;
      kept.push_back(std::move(t));
    } else {
      kept.push_back(std::move(t));
    }
  }
  if (kept.empty()) return make_const(constant);
  if (has_const && constant != 0.0) kept.push_back(make_const(constant));
  if (kept.size() == 1) return std::move(kept.front());
  Expr out;
  out.kind = Expr::Kind::Sum;
  out.args = std::move(kept);
  return out;
}

}  // namespace

Formula extract_formula(const KanModel& model) {
  const auto offenders = non_symbolic_edges(model);
  if (!offenders.empty()) {
    std::ostringstream msg;
    msg << "extract_formula: non-symbolic edges remain:";
    for (const auto& e : offenders)
      msg << " (" << e[0] << ',' << e[1] << ',' << e[2] << ')';
    throw std::runtime_error(msg.str());
  }

  const auto& sizes = model.spec.layer_sizes;
  std::vector<std::vector<Expr>> node(sizes.size());
  node[0].resize(static_cast<std::size_t>(sizes[0]));
  for (int i = 0; i < sizes[0]; ++i) {
    Expr v;
    v.kind = Expr::Kind::Var;
    v.var_index = i;
    node[0][static_cast<std::size_t>(i)] = v;
  }

  for (int l = 0; l < model.spec.depth(); ++l) {
    const MaskMatrix& mask = model.spec.masks[static_cast<std::size_t>(l)];
    node[static_cast<std::size_t>(l) + 1].resize(
        static_cast<std::size_t>(sizes[static_cast<std::size_t>(l) + 1]));
    for (Index j = 0; j < mask.rows(); ++j) {
      std::vector<Expr> terms;
      for (Index i = 0; i < mask.cols(); ++i) {
        if (!mask(j, i)) continue;
        const int idx = model.edge_index(l, static_cast<int>(j),
                                         static_cast<int>(i));
        terms.push_back(apply_edge(model.edges[static_cast<std::size_t>(idx)],
                                   node[static_cast<std::size_t>(l)]
                                       [static_cast<std::size_t>(i)]));
      }
      node[static_cast<std::size_t>(l) + 1][static_cast<std::size_t>(j)] =
          terms.empty() ? make_const(0.0) : make_sum(std::move(terms));
    }
  }

  Formula formula;
  formula.outputs = node.back();
  return formula;
}

double eval_expr(const Expr& expr, const Vector& x) {
  switch (expr.kind) {
    case Expr::Kind::Var:
      return x[expr.var_index];
    case Expr::Kind::Const:
      return expr.value;
    case Expr::Kind::Sum: {
      double sum = 0.0;
      for (const auto& t : expr.args) sum += eval_expr(t, x);
      return sum;
    }
    case Expr::Kind::Prim: {
      const auto& info = primitive_info(expr.prim);
      return expr.c * info.eval(expr.a * eval_expr(expr.args[0], x) + expr.b) +
             expr.e;
    }
  }
  return 0.0;
}

namespace {

std::string fmt(double v, int decimals) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(decimals);
  out << v;
  std::string s = out.str();
  if (s == "-0.00" || s == "-0.0" || s == "-0") s = s.substr(1);
  return s;
}

// " + 1.50" or " - 1.50" depending on the sign
std::string signed_fmt(double v, int decimals) {
  return v < 0.0 ? " - " + fmt(-v, decimals) : " + " + fmt(v, decimals);
}

std::string render_term(const Expr& expr, int decimals);

std::string render_arg(const Expr& expr, int decimals) {
  if (expr.kind == Expr::Kind::Var)
    return "x_" + std::to_string(expr.var_index + 1);
  return "(" + render_term(expr, decimals) + ")";
}

std::string render_term(const Expr& expr, int decimals) {
  switch (expr.kind) {
    case Expr::Kind::Var:
      return "x_" + std::to_string(expr.var_index + 1);
    case Expr::Kind::Const:
      return fmt(expr.value, decimals);
    case Expr::Kind::Sum: {
      std::string out;
      for (std::size_t t = 0; t < expr.args.size(); ++t) {
        std::string term = render_term(expr.args[t], decimals);
        if (t == 0) {
          out = term;
        } else if (!term.empty() && term[0] == '-') {
          out += " - " + term.substr(1);
        } else {
          out += " + " + term;
        }
      }
      return out;
    }
    case Expr::Kind::Prim: {
      const auto& info = primitive_info(expr.prim);
      std::string inner;
      const Expr& child = expr.args[0];
      if (expr.prim == Primitive::X) {
        // canonical linear term c*z + e
        std::string body = render_arg(child, decimals);
        std::string out;
        if (expr.c == 0.0) {
          out = fmt(0.0, decimals);
        } else {
          out = fmt(expr.c, decimals) + "*" + body;
        }
        if (expr.e != 0.0) out += signed_fmt(expr.e, decimals);
        return out;
      }
      const std::string z =
          (expr.a == 1.0 && expr.b == 0.0)
              ? render_term(child, decimals)
              : fmt(expr.a, decimals) + "*" + render_arg(child, decimals) +
                    (expr.b == 0.0 ? "" : signed_fmt(expr.b, decimals));
      if (expr.prim == Primitive::Square || expr.prim == Primitive::Cube ||
          expr.prim == Primitive::Quartic) {
        const char* power = expr.prim == Primitive::Square
                                ? "2"
                                : (expr.prim == Primitive::Cube ? "3" : "4");
        inner = "(" + z + ")^" + power;
      } else if (expr.prim == Primitive::Reciprocal) {
        inner = "1/(" + z + ")";
      } else if (expr.prim == Primitive::Gaussian) {
        inner = "exp(-(" + z + ")^2)";
      } else {
        inner = std::string(info.name) + "(" + z + ")";
      }
      std::string out =
          expr.c == 1.0 ? inner : fmt(expr.c, decimals) + "*" + inner;
      if (expr.e != 0.0) out += signed_fmt(expr.e, decimals);
      return out;
    }
  }
  return "";
}

nlohmann::json expr_json(const Expr& expr) {
  nlohmann::json j;
  switch (expr.kind) {
    case Expr::Kind::Var:
      j["op"] = "var";
      j["index"] = expr.var_index;
      break;
    case Expr::Kind::Const:
      j["op"] = "const";
      j["value"] = expr.value;
      break;
    case Expr::Kind::Sum:
      j["op"] = "sum";
      j["args"] = nlohmann::json::array();
      for (const auto& t : expr.args) j["args"].push_back(expr_json(t));
      break;
    case Expr::Kind::Prim:
      j["op"] = primitive_info(expr.prim).name;
      j["args"] = nlohmann::json::array({expr_json(expr.args[0])});
      j["params"] = {{"a", expr.a}, {"b", expr.b}, {"c", expr.c}, {"e", expr.e}};
      break;
  }
  return j;
}

}  // namespace

std::string render_expr(const Expr& expr, int decimals) {
  return render_term(expr, decimals);
}

std::string formula_text(const Formula& formula, int decimals) {
  std::ostringstream out;
  for (std::size_t j = 0; j < formula.outputs.size(); ++j)
    out << "z_" << (j + 1) << " = "
        << render_expr(formula.outputs[j], decimals) << '\n';
  return out.str();
}

std::string formula_json(const Formula& formula) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : formula.outputs) j.push_back(expr_json(e));
  return j.dump(2);
}

}  // namespace gakan
