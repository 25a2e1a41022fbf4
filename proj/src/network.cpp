#include "gakan/network.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace gakan {

long KanSpec::active_edges() const {
  long total = 0;
  for (const auto& m : masks) total += m.sum();
  return total;
}

bool KanSpec::operator==(const KanSpec& o) const {
  if (layer_sizes != o.layer_sizes || grid != o.grid || valid != o.valid)
    return false;
  if (masks.size() != o.masks.size()) return false;
  for (std::size_t l = 0; l < masks.size(); ++l)
    if (masks[l] != o.masks[l]) return false;
  return true;
}

int KanModel::edge_index(int layer, int row, int col) const {
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const auto& e = edges[k];
    if (e.layer == layer && e.row == row && e.col == col)
      return static_cast<int>(k);
  }
  return -1;
}

namespace {

void check_spec(const KanSpec& spec) {
  if (spec.layer_sizes.size() < 2 || spec.masks.empty())
    throw std::invalid_argument("KanSpec: needs at least one layer");
  if (spec.masks.size() + 1 != spec.layer_sizes.size())
    throw std::invalid_argument("KanSpec: masks/layer_sizes mismatch");
  for (std::size_t l = 0; l < spec.masks.size(); ++l) {
    if (spec.masks[l].rows() != spec.layer_sizes[l + 1] ||
        spec.masks[l].cols() != spec.layer_sizes[l])
      throw std::invalid_argument("KanSpec: mask shape mismatch at layer " +
                                  std::to_string(l));
  }
  if (spec.grid < 1 || spec.grid > 64)
    throw std::invalid_argument("KanSpec: grid out of [1, 64]");
}

double symbolic_eval(const EdgeParams& e, double x) {
  const auto& info = primitive_info(e.primitive);
  return e.sym_c * info.eval(e.sym_a * x + e.sym_b) + e.sym_e;
}

}  // namespace

KanModel init_model(const KanSpec& spec, const Matrix& train_inputs,
                    std::uint64_t seed) {
  check_spec(spec);
  if (!spec.valid)
    throw std::invalid_argument("init_model: spec is not valid");
  if (train_inputs.rows() == 0)
    throw std::invalid_argument("init_model: empty training inputs");
  if (train_inputs.cols() != spec.inputs())
    throw std::invalid_argument("init_model: input column count mismatch");

  KanModel model;
  model.spec = spec;
  const int gk = spec.grid;

  for (Index c = 0; c < train_inputs.cols(); ++c) {
    const double lo = train_inputs.col(c).minCoeff();
    const double hi = train_inputs.col(c).maxCoeff();
    if (lo == hi) {
      model.input_grids.push_back(make_grid(lo - 1.0, hi + 1.0, gk));
    } else {
      const double margin = 0.01 * (hi - lo);
      model.input_grids.push_back(make_grid(lo - margin, hi + margin, gk));
    }
  }
  model.hidden_grid = make_grid(-2.0, 2.0, gk);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.1);
  const int n_basis = model.hidden_grid.basis_count();
  for (int l = 0; l < spec.depth(); ++l) {
    const MaskMatrix& mask = spec.masks[static_cast<std::size_t>(l)];
    for (Index j = 0; j < mask.rows(); ++j) {
      for (Index i = 0; i < mask.cols(); ++i) {
        if (mask(j, i) == 0) continue;
        EdgeParams e;
        e.layer = l;
        e.row = static_cast<int>(j);
        e.col = static_cast<int>(i);
        e.coeffs.resize(n_basis);
        for (int s = 0; s < n_basis; ++s) e.coeffs[s] = noise(rng);
        model.edges.push_back(std::move(e));
      }
    }
  }
  return model;
}

namespace {

// Edge pointers of one layer bucketed by source neuron.
std::vector<std::vector<const EdgeParams*>> bucket_by_source(
    const KanModel& model, int layer, int lower_size) {
  std::vector<std::vector<const EdgeParams*>> buckets(
      static_cast<std::size_t>(lower_size));
  for (const auto& e : model.edges)
    if (e.layer == layer)
      buckets[static_cast<std::size_t>(e.col)].push_back(&e);
  return buckets;
}

}  // namespace

Matrix forward(const KanModel& model, const Matrix& batch,
               ActivationTrace* trace) {
  if (batch.cols() != model.spec.inputs())
    throw std::invalid_argument("forward: batch column count mismatch");
  const Index n = batch.rows();
  const int depth = model.spec.depth();

  if (trace) {
    trace->mean_abs.clear();
    for (int l = 0; l < depth; ++l)
      trace->mean_abs.push_back(Matrix::Zero(
          model.spec.layer_sizes[static_cast<std::size_t>(l) + 1],
          model.spec.layer_sizes[static_cast<std::size_t>(l)]));
  }

  Matrix cur = batch;
  std::vector<BasisBand> bands(static_cast<std::size_t>(n));
  for (int l = 0; l < depth; ++l) {
    const int lower = model.spec.layer_sizes[static_cast<std::size_t>(l)];
    const int upper = model.spec.layer_sizes[static_cast<std::size_t>(l) + 1];
    Matrix next = Matrix::Zero(n, upper);
    const auto buckets = bucket_by_source(model, l, lower);

    for (int i = 0; i < lower; ++i) {
      const auto& group = buckets[static_cast<std::size_t>(i)];
      if (group.empty()) continue;
      const SplineGrid& grid = model.grid_for(l, i);
      bool need_bands = false;
      for (const auto* e : group) need_bands |= !e->symbolic;
      if (need_bands)
        for (Index r = 0; r < n; ++r) bands[static_cast<std::size_t>(r)] =
            basis_band(grid, cur(r, i));

      for (const auto* e : group) {
        double abs_sum = 0.0;
        for (Index r = 0; r < n; ++r) {
          const double x = cur(r, i);
          double phi;
          if (e->symbolic) {
            phi = symbolic_eval(*e, x);
          } else {
            const BasisBand& b = bands[static_cast<std::size_t>(r)];
            double spline = 0.0;
            for (int s = 0; s <= grid.degree; ++s)
              spline += e->coeffs[b.first + s] * b.values[s];
            phi = e->w_b * silu(x) + e->w_s * spline;
          }
          next(r, e->row) += phi;
          if (trace) abs_sum += std::abs(phi);
        }
        if (trace)
          trace->mean_abs[static_cast<std::size_t>(l)](e->row, e->col) =
              abs_sum / static_cast<double>(n);
      }
    }
    cur = std::move(next);
  }
  return cur;
}

std::vector<Matrix> forward_activations(const KanModel& model,
                                        const Matrix& batch) {
  if (batch.cols() != model.spec.inputs())
    throw std::invalid_argument("forward_activations: batch column mismatch");
  const Index n = batch.rows();
  std::vector<Matrix> acts;
  acts.reserve(static_cast<std::size_t>(model.spec.depth()) + 1);
  acts.push_back(batch);
  for (int l = 0; l < model.spec.depth(); ++l) {
    const int lower = model.spec.layer_sizes[static_cast<std::size_t>(l)];
    const int upper = model.spec.layer_sizes[static_cast<std::size_t>(l) + 1];
    Matrix next = Matrix::Zero(n, upper);
    const auto buckets = bucket_by_source(model, l, lower);
    for (int i = 0; i < lower; ++i) {
      for (const auto* e : buckets[static_cast<std::size_t>(i)]) {
        const SplineGrid& grid = model.grid_for(l, i);
        for (Index r = 0; r < n; ++r) {
          const double x = acts.back()(r, i);
          if (e->symbolic) {
            next(r, e->row) += symbolic_eval(*e, x);
          } else {
            const BasisBand b = basis_band(grid, x);
            double spline = 0.0;
            for (int s = 0; s <= grid.degree; ++s)
              spline += e->coeffs[b.first + s] * b.values[s];
            next(r, e->row) += e->w_b * silu(x) + e->w_s * spline;
          }
        }
      }
    }
    acts.push_back(std::move(next));
  }
  return acts;
}

namespace {

std::vector<int> parameter_offsets(const KanModel& model, int* total) {
  std::vector<int> offsets(model.edges.size());
  int off = 0;
  for (std::size_t k = 0; k < model.edges.size(); ++k) {
    offsets[k] = off;
    off += model.edges[k].param_count();
  }
  *total = off;
  return offsets;
}

GradientResult backward(const KanModel& model, const Matrix& batch,
                        const std::vector<Matrix>& acts,
                        const Matrix& loss_grad, double loss_value) {
  const Index n = batch.rows();
  const int depth = model.spec.depth();

  int total = 0;
  const std::vector<int> offsets = parameter_offsets(model, &total);
  GradientResult result;
  result.loss = loss_value;
  result.grad = Vector::Zero(total);

  // map edge pointer -> parameter offset
  std::vector<const EdgeParams*> by_index(model.edges.size());
  for (std::size_t k = 0; k < model.edges.size(); ++k)
    by_index[k] = &model.edges[k];

  Matrix delta = loss_grad;
  std::vector<BasisBand> bands(static_cast<std::size_t>(n));
  std::vector<BasisBand> dbands(static_cast<std::size_t>(n));
  for (int l = depth - 1; l >= 0; --l) {
    const int lower = model.spec.layer_sizes[static_cast<std::size_t>(l)];
    Matrix delta_prev = Matrix::Zero(n, lower);
    const Matrix& x_layer = acts[static_cast<std::size_t>(l)];

    for (std::size_t k = 0; k < model.edges.size(); ++k) {
      const EdgeParams& e = model.edges[k];
      if (e.layer != l) continue;
      const SplineGrid& grid = model.grid_for(l, e.col);
      const int off = offsets[k];

      if (e.symbolic) {
        const auto& info = primitive_info(e.primitive);
        double ga = 0, gb = 0, gc = 0, ge = 0;
        for (Index r = 0; r < n; ++r) {
          const double d = delta(r, e.row);
          const double x = x_layer(r, e.col);
          const double z = e.sym_a * x + e.sym_b;
          const double fz = info.eval(z);
          const double dfz = info.deriv(z);
          ga += d * e.sym_c * dfz * x;
          gb += d * e.sym_c * dfz;
          gc += d * fz;
          ge += d;
          delta_prev(r, e.col) += d * e.sym_c * dfz * e.sym_a;
        }
        result.grad[off + 0] = ga;
        result.grad[off + 1] = gb;
        result.grad[off + 2] = gc;
        result.grad[off + 3] = ge;
        continue;
      }

      for (Index r = 0; r < n; ++r) {
        const double x = x_layer(r, e.col);
        bands[static_cast<std::size_t>(r)] = basis_band(grid, x);
        dbands[static_cast<std::size_t>(r)] = basis_deriv_band(grid, x);
      }
      double gwb = 0, gws = 0;
      for (Index r = 0; r < n; ++r) {
        const double d = delta(r, e.row);
        const double x = x_layer(r, e.col);
        const BasisBand& b = bands[static_cast<std::size_t>(r)];
        const BasisBand& db = dbands[static_cast<std::size_t>(r)];
        double spline = 0.0, spline_dx = 0.0;
        for (int s = 0; s <= grid.degree; ++s) {
          const double c = e.coeffs[b.first + s];
          spline += c * b.values[s];
          result.grad[off + b.first + s] += d * e.w_s * b.values[s];
        }
        for (int s = 0; s <= grid.degree; ++s)
          spline_dx += e.coeffs[db.first + s] * db.values[s];
        gwb += d * silu(x);
        gws += d * spline;
        delta_prev(r, e.col) +=
            d * (e.w_b * silu_deriv(x) + e.w_s * spline_dx);
      }
      const int nb = grid.basis_count();
      result.grad[off + nb] = gwb;
      result.grad[off + nb + 1] = gws;
    }
    delta = std::move(delta_prev);
  }
  return result;
}

}  // namespace

GradientResult gradients(const KanModel& model, const Matrix& batch,
                         const IntVector& labels) {
  const std::vector<Matrix> acts = forward_activations(model, batch);
  const Matrix& scores = acts.back();
  return backward(model, batch, acts, cross_entropy_grad(scores, labels),
                  cross_entropy(scores, labels));
}

GradientResult gradients(const KanModel& model, const Matrix& batch,
                         const Matrix& targets) {
  const std::vector<Matrix> acts = forward_activations(model, batch);
  const Matrix& scores = acts.back();
  return backward(model, batch, acts, mean_squared_error_grad(scores, targets),
                  mean_squared_error(scores, targets));
}

Vector get_parameters(const KanModel& model) {
  int total = 0;
  const std::vector<int> offsets = parameter_offsets(model, &total);
  Vector params(total);
  for (std::size_t k = 0; k < model.edges.size(); ++k) {
    const EdgeParams& e = model.edges[k];
    int off = offsets[k];
    if (e.symbolic) {
      params[off + 0] = e.sym_a;
      params[off + 1] = e.sym_b;
      params[off + 2] = e.sym_c;
      params[off + 3] = e.sym_e;
    } else {
      params.segment(off, e.coeffs.size()) = e.coeffs;
      params[off + e.coeffs.size()] = e.w_b;
      params[off + e.coeffs.size() + 1] = e.w_s;
    }
  }
  return params;
}

void set_parameters(KanModel& model, const Vector& params) {
  int total = 0;
  const std::vector<int> offsets = parameter_offsets(model, &total);
  if (params.size() != total)
    throw std::invalid_argument("set_parameters: size mismatch");
  for (std::size_t k = 0; k < model.edges.size(); ++k) {
    EdgeParams& e = model.edges[k];
    int off = offsets[k];
    if (e.symbolic) {
      e.sym_a = params[off + 0];
      e.sym_b = params[off + 1];
      e.sym_c = params[off + 2];
      e.sym_e = params[off + 3];
    } else {
      e.coeffs = params.segment(off, e.coeffs.size());
      e.w_b = params[off + e.coeffs.size()];
      e.w_s = params[off + e.coeffs.size() + 1];
    }
  }
}

long param_count(const KanModel& model) {
  long total = 0;
  for (const auto& e : model.edges) total += e.param_count();
  return total;
}

namespace {

nlohmann::json mask_to_json(const MaskMatrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

MaskMatrix mask_from_json(const nlohmann::json& j, int rows, int cols) {
  MaskMatrix m(rows, cols);
  if (static_cast<int>(j.size()) != rows)
    throw std::runtime_error("model: mask row count mismatch");
  for (int r = 0; r < rows; ++r) {
    if (static_cast<int>(j[r].size()) != cols)
      throw std::runtime_error("model: mask column count mismatch");
    for (int c = 0; c < cols; ++c) {
      const int v = j[r][c].get<int>();
      if (v != 0 && v != 1)
        throw std::runtime_error("model: mask entries must be 0/1");
      m(r, c) = v;
    }
  }
  return m;
}

constexpr int kModelFormatVersion = 1;

}  // namespace

void save_model(const KanModel& model, const std::string& path) {
  nlohmann::json j;
  j["format_version"] = kModelFormatVersion;
  j["spec"]["layer_sizes"] = model.spec.layer_sizes;
  j["spec"]["grid"] = model.spec.grid;
  j["spec"]["valid"] = model.spec.valid;
  j["spec"]["masks"] = nlohmann::json::array();
  for (const auto& m : model.spec.masks)
    j["spec"]["masks"].push_back(mask_to_json(m));

  j["domains"]["inputs"] = nlohmann::json::array();
  for (const auto& g : model.input_grids)
    j["domains"]["inputs"].push_back({g.domain_lo, g.domain_hi});
  j["domains"]["hidden"] = {model.hidden_grid.domain_lo,
                            model.hidden_grid.domain_hi};

  j["edges"] = nlohmann::json::array();
  for (const auto& e : model.edges) {
    nlohmann::json je;
    je["l"] = e.layer;
    je["j"] = e.row;
    je["i"] = e.col;
    je["coeffs"] = std::vector<double>(e.coeffs.begin(), e.coeffs.end());
    je["w_b"] = e.w_b;
    je["w_s"] = e.w_s;
    if (e.symbolic) {
      je["symbolic"] = {{"primitive", primitive_info(e.primitive).name},
                        {"a", e.sym_a},
                        {"b", e.sym_b},
                        {"c", e.sym_c},
                        {"e", e.sym_e}};
    }
    j["edges"].push_back(std::move(je));
  }

  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_model: cannot open " + path);
  out << j.dump(2) << '\n';
}

KanModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_model: cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("load_model: parse error at byte " +
                             std::to_string(e.byte) + ": " + e.what());
  }

  try {
    const int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion)
      throw std::runtime_error("load_model: unsupported format_version " +
                               std::to_string(version));

    KanModel model;
    model.spec.layer_sizes = j.at("spec").at("layer_sizes").get<std::vector<int>>();
    model.spec.grid = j.at("spec").at("grid").get<int>();
    model.spec.valid = j.at("spec").value("valid", true);
    const auto& jm = j.at("spec").at("masks");
    for (std::size_t l = 0; l + 1 < model.spec.layer_sizes.size(); ++l) {
      if (l >= jm.size()) throw std::runtime_error("load_model: missing mask");
      model.spec.masks.push_back(mask_from_json(
          jm[l], model.spec.layer_sizes[l + 1], model.spec.layer_sizes[l]));
    }
    check_spec(model.spec);

    const auto& jd = j.at("domains");
    const auto& ji = jd.at("inputs");
    if (static_cast<int>(ji.size()) != model.spec.inputs())
      throw std::runtime_error("load_model: input domain count mismatch");
    for (const auto& d : ji)
      model.input_grids.push_back(
          make_grid(d[0].get<double>(), d[1].get<double>(), model.spec.grid));
    model.hidden_grid = make_grid(jd.at("hidden")[0].get<double>(),
                                  jd.at("hidden")[1].get<double>(),
                                  model.spec.grid);

    const int n_basis = model.hidden_grid.basis_count();
    for (const auto& je : j.at("edges")) {
      EdgeParams e;
      e.layer = je.at("l").get<int>();
      e.row = je.at("j").get<int>();
      e.col = je.at("i").get<int>();
      if (e.layer < 0 || e.layer >= model.spec.depth())
        throw std::runtime_error("load_model: edge layer out of range");
      const MaskMatrix& mask = model.spec.masks[static_cast<std::size_t>(e.layer)];
      if (e.row < 0 || e.row >= mask.rows() || e.col < 0 || e.col >= mask.cols() ||
          mask(e.row, e.col) != 1)
        throw std::runtime_error("load_model: edge not present in mask");
      const auto coeffs = je.at("coeffs").get<std::vector<double>>();
      if (static_cast<int>(coeffs.size()) != n_basis)
        throw std::runtime_error("load_model: coefficient count mismatch");
      e.coeffs = Eigen::Map<const Vector>(coeffs.data(),
                                          static_cast<Index>(coeffs.size()));
      e.w_b = je.at("w_b").get<double>();
      e.w_s = je.at("w_s").get<double>();
      if (je.contains("symbolic")) {
        const auto& js = je.at("symbolic");
        const auto prim = primitive_by_name(js.at("primitive").get<std::string>());
        if (!prim) throw std::runtime_error("load_model: unknown primitive");
        e.symbolic = true;
        e.primitive = *prim;
        e.sym_a = js.at("a").get<double>();
        e.sym_b = js.at("b").get<double>();
        e.sym_c = js.at("c").get<double>();
        e.sym_e = js.at("e").get<double>();
      }
      model.edges.push_back(std::move(e));
    }
    if (static_cast<long>(model.edges.size()) != model.spec.active_edges())
      throw std::runtime_error("load_model: edge list does not cover the masks");
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("load_model: malformed model file: ") +
                             e.what());
  }
}

std::string to_dot(const KanModel& model,
                   const std::vector<std::string>& feature_names) {
  const auto& sizes = model.spec.layer_sizes;
  const int depth = model.spec.depth();
  std::ostringstream out;
  out << "digraph kan {\n  rankdir=LR;\n  node [shape=circle];\n";

  auto node_name = [&](int layer, int idx) {
    if (layer == 0) return "x" + std::to_string(idx + 1);
    if (layer == depth) return "z" + std::to_string(idx + 1);
    return "h" + std::to_string(layer) + "_" + std::to_string(idx + 1);
  };

  for (int i = 0; i < sizes.front(); ++i) {
    out << "  " << node_name(0, i);
    if (static_cast<std::size_t>(i) < feature_names.size())
      out << " [label=\"" << feature_names[static_cast<std::size_t>(i)] << "\"]";
    out << ";\n";
  }
  for (const auto& e : model.edges) {
    out << "  " << node_name(e.layer, e.col) << " -> "
        << node_name(e.layer + 1, e.row);
    if (e.symbolic)
      out << " [label=\"" << primitive_info(e.primitive).name << "\"]";
    out << ";\n";
  }
  out << "}\n";
  return out.str();
}

}  // namespace gakan
