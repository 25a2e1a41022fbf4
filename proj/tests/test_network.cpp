#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "gakan/data.hpp"
#include "gakan/network.hpp"

using namespace gakan;

namespace {

KanSpec chain_spec(int grid) {
  KanSpec spec;
  spec.layer_sizes = {1, 1, 1};
  spec.masks = {MaskMatrix::Ones(1, 1), MaskMatrix::Ones(1, 1)};
  spec.grid = grid;
  return spec;
}

KanSpec random_spec(std::mt19937_64& rng, int n_in, int n_hidden, int n_out,
                    int grid) {
  KanSpec spec;
  spec.layer_sizes = {n_in, n_hidden, n_out};
  std::bernoulli_distribution coin(0.7);
  spec.masks.push_back(MaskMatrix::Zero(n_hidden, n_in));
  spec.masks.push_back(MaskMatrix::Zero(n_out, n_hidden));
  for (auto& m : spec.masks)
    for (Index j = 0; j < m.rows(); ++j)
      for (Index i = 0; i < m.cols(); ++i) m(j, i) = coin(rng) ? 1 : 0;
  // keep at least one full path alive
  spec.masks[0](0, 0) = 1;
  spec.masks[1](0, 0) = 1;
  spec.grid = grid;
  return spec;
}

Matrix random_batch(std::mt19937_64& rng, Index rows, Index cols,
                    double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> U(lo, hi);
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = U(rng);
  return m;
}

// Straight-line layer equation: each node sums edge activations of its
// active inputs, evaluated with the dense basis path.
Matrix naive_forward(const KanModel& model, const Matrix& batch) {
  Matrix cur = batch;
  for (int l = 0; l < model.spec.depth(); ++l) {
    const MaskMatrix& mask = model.spec.masks[l];
    Matrix next = Matrix::Zero(batch.rows(), mask.rows());
    for (Index r = 0; r < batch.rows(); ++r) {
      for (Index j = 0; j < mask.rows(); ++j) {
        double sum = 0.0;
        for (Index i = 0; i < mask.cols(); ++i) {
          if (!mask(j, i)) continue;
          const int idx = model.edge_index(l, j, i);
          REQUIRE(idx >= 0);
          const EdgeParams& e = model.edges[idx];
          const SplineGrid& g = model.grid_for(l, i);
          const double x = cur(r, i);
          const Vector basis = basis_eval(g, x);
          sum += e.w_b * silu(x) + e.w_s * basis.dot(e.coeffs);
        }
        next(r, j) = sum;
      }
    }
    cur = next;
  }
  return cur;
}

}  // namespace

TEST_CASE("init_model derives input domains from the data") {
  const Dataset iris = load_csv(DATA_DIR "/iris.csv", "class", true);
  KanSpec spec;
  spec.layer_sizes = {4, 3};
  spec.masks = {MaskMatrix::Ones(3, 4)};
  spec.grid = 5;
  const KanModel model = init_model(spec, iris.features, 1);
  CHECK(model.input_grids[0].domain_lo == doctest::Approx(4.264).epsilon(1e-12));
  CHECK(model.input_grids[0].domain_hi == doctest::Approx(7.936).epsilon(1e-12));
  CHECK(model.hidden_grid.domain_lo == -2.0);
  CHECK(model.hidden_grid.domain_hi == 2.0);
}

TEST_CASE("constant feature columns widen to [v-1, v+1]") {
  KanSpec spec;
  spec.layer_sizes = {1, 1};
  spec.masks = {MaskMatrix::Ones(1, 1)};
  spec.grid = 3;
  Matrix x(4, 1);
  x << 5, 5, 5, 5;
  const KanModel model = init_model(spec, x, 1);
  CHECK(model.input_grids[0].domain_lo == 4.0);
  CHECK(model.input_grids[0].domain_hi == 6.0);
}

TEST_CASE("same seed gives bit-identical parameters") {
  std::mt19937_64 rng(2);
  const KanSpec spec = random_spec(rng, 3, 4, 2, 7);
  const Matrix x = random_batch(rng, 20, 3);
  const KanModel a = init_model(spec, x, 99);
  const KanModel b = init_model(spec, x, 99);
  const Vector pa = get_parameters(a);
  const Vector pb = get_parameters(b);
  REQUIRE(pa.size() == pb.size());
  for (Index i = 0; i < pa.size(); ++i) CHECK(pa[i] == pb[i]);
  const KanModel c = init_model(spec, x, 100);
  CHECK(get_parameters(c) != pa);
}

TEST_CASE("init_model contract errors") {
  KanSpec spec;
  spec.layer_sizes = {2, 1};
  spec.masks = {MaskMatrix::Ones(1, 2)};
  spec.grid = 3;
  Matrix empty(0, 2);
  CHECK_THROWS_AS(init_model(spec, empty, 1), std::invalid_argument);
  Matrix wrong(5, 3);
  wrong.setZero();
  CHECK_THROWS_AS(init_model(spec, wrong, 1), std::invalid_argument);
  spec.valid = false;
  Matrix ok = Matrix::Zero(5, 2);
  CHECK_THROWS_AS(init_model(spec, ok, 1), std::invalid_argument);
}

TEST_CASE("a fully masked layer zeroes every output") {
  std::mt19937_64 rng(3);
  KanSpec spec;
  spec.layer_sizes = {2, 3, 2};
  spec.masks = {MaskMatrix::Ones(3, 2), MaskMatrix::Zero(2, 3)};
  spec.grid = 4;
  const Matrix x = random_batch(rng, 10, 2);
  const KanModel model = init_model(spec, x, 5);
  const Matrix out = forward(model, x);
  CHECK(out.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("constant spline chain composes to a constant") {
  KanSpec spec = chain_spec(6);
  Matrix x(5, 1);
  x << -0.9, -0.3, 0.0, 0.4, 0.8;
  KanModel model = init_model(spec, x, 7);
  for (auto& e : model.edges) {
    e.w_b = 0.0;
    e.w_s = 1.0;
    e.coeffs.setConstant(1.25);
  }
  const Matrix out = forward(model, x);
  for (Index r = 0; r < out.rows(); ++r)
    CHECK(out(r, 0) == doctest::Approx(1.25).epsilon(1e-12));
}

TEST_CASE("forward matches the naive layer-equation oracle") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const KanSpec spec = random_spec(rng, 2, 3, 1, 5 + trial);
    const Matrix x = random_batch(rng, 10, 2);
    const KanModel model = init_model(spec, x, 31 + trial);
    const Matrix fast = forward(model, x);
    const Matrix slow = naive_forward(model, x);
    REQUIRE(fast.rows() == slow.rows());
    for (Index r = 0; r < fast.rows(); ++r)
      for (Index c = 0; c < fast.cols(); ++c)
        CHECK(fast(r, c) == doctest::Approx(slow(r, c)).epsilon(1e-10));
  }
}

TEST_CASE("forward_activations agrees with forward") {
  std::mt19937_64 rng(13);
  const KanSpec spec = random_spec(rng, 3, 4, 2, 9);
  const Matrix x = random_batch(rng, 12, 3);
  const KanModel model = init_model(spec, x, 17);
  const auto acts = forward_activations(model, x);
  REQUIRE(acts.size() == 3);
  const Matrix out = forward(model, x);
  CHECK(acts.back() == out);
  CHECK(acts.front() == x);
}

namespace {

void gradient_check(const KanModel& model_in, const Matrix& x,
                    const IntVector* labels, const Matrix* targets) {
  KanModel model = model_in;
  const Vector theta0 = get_parameters(model);
  GradientResult res = labels ? gradients(model, x, *labels)
                              : gradients(model, x, *targets);
  const double h = 1e-4;
  for (Index p = 0; p < theta0.size(); ++p) {
    Vector theta = theta0;
    theta[p] += h;
    set_parameters(model, theta);
    const Matrix s_up = forward(model, x);
    const double f_up = labels ? cross_entropy(s_up, *labels)
                               : mean_squared_error(s_up, *targets);
    theta[p] = theta0[p] - h;
    set_parameters(model, theta);
    const Matrix s_dn = forward(model, x);
    const double f_dn = labels ? cross_entropy(s_dn, *labels)
                               : mean_squared_error(s_dn, *targets);
    const double fd = (f_up - f_dn) / (2 * h);
    const double scale = std::max({std::abs(fd), std::abs(res.grad[p]), 1e-4});
    CHECK(std::abs(res.grad[p] - fd) / scale <= 1e-4);
  }
  set_parameters(model, theta0);
}

}  // namespace

TEST_CASE("gradients match central finite differences (3x4x2, 8 samples)") {
  std::mt19937_64 rng(21);
  const KanSpec spec = random_spec(rng, 3, 4, 2, 5);
  const Matrix x = random_batch(rng, 8, 3);
  const KanModel model = init_model(spec, x, 77);

  IntVector labels(8);
  for (Index r = 0; r < 8; ++r) labels[r] = static_cast<int>(r % 2);
  gradient_check(model, x, &labels, nullptr);

  const Matrix targets = random_batch(rng, 8, 2);
  gradient_check(model, x, nullptr, &targets);
}

TEST_CASE("gradient check across grid extremes G in {1, 8, 64}") {
  std::mt19937_64 rng(33);
  int done = 0;
  for (int G : {1, 8, 64}) {
    for (int trial = 0; trial < 7; ++trial) {
      if (done >= 20) break;
      const KanSpec spec = random_spec(rng, 2, 3, 2, G);
      const Matrix x = random_batch(rng, 6, 2);
      const KanModel model = init_model(spec, x, 1000 + done);
      IntVector labels(6);
      for (Index r = 0; r < 6; ++r) labels[r] = static_cast<int>(r % 2);
      gradient_check(model, x, &labels, nullptr);
      ++done;
    }
  }
  CHECK(done >= 20);
}

TEST_CASE("gradient of the symbolic-edge parameters") {
  std::mt19937_64 rng(41);
  KanSpec spec = chain_spec(4);
  Matrix x = random_batch(rng, 9, 1);
  KanModel model = init_model(spec, x, 3);
  model.edges[0].symbolic = true;
  model.edges[0].primitive = Primitive::Sin;
  model.edges[0].sym_a = 1.3;
  model.edges[0].sym_b = -0.2;
  model.edges[0].sym_c = 0.8;
  model.edges[0].sym_e = 0.1;
  const Matrix targets = random_batch(rng, 9, 1);
  gradient_check(model, x, nullptr, &targets);
}

TEST_CASE("zero-weight model at zero targets has a zero MSE gradient") {
  std::mt19937_64 rng(51);
  KanSpec spec = random_spec(rng, 2, 2, 1, 3);
  const Matrix x = random_batch(rng, 5, 2);
  KanModel model = init_model(spec, x, 8);
  for (auto& e : model.edges) {
    e.w_b = 0.0;
    e.w_s = 0.0;
    e.coeffs.setZero();
  }
  const Matrix targets = Matrix::Zero(5, 1);
  const GradientResult res = gradients(model, x, targets);
  CHECK(res.loss == 0.0);
  CHECK(res.grad.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gradients follow the full-batch mean convention") {
  std::mt19937_64 rng(61);
  const KanSpec spec = random_spec(rng, 2, 3, 2, 5);
  const Matrix base = random_batch(rng, 4, 2);
  const KanModel model = init_model(spec, base, 9);
  IntVector labels(4);
  labels << 0, 1, 1, 0;

  // one extra copy of sample 0: grad = (N*grad_base + grad_s) / (N+1)
  Matrix extended(5, 2);
  extended.topRows(4) = base;
  extended.row(4) = base.row(0);
  IntVector labels_ext(5);
  labels_ext << 0, 1, 1, 0, 0;

  Matrix single = base.row(0);
  IntVector label_single(1);
  label_single << 0;

  const Vector g_base = gradients(model, base, labels).grad;
  const Vector g_ext = gradients(model, extended, labels_ext).grad;
  const Vector g_single = gradients(model, single, label_single).grad;
  const Vector expect = (4.0 * g_base + g_single) / 5.0;
  for (Index i = 0; i < g_ext.size(); ++i)
    CHECK(g_ext[i] == doctest::Approx(expect[i]).epsilon(1e-10));
}

TEST_CASE("parameter counting") {
  SUBCASE("single edge, G=5, k=3") {
    KanSpec spec;
    spec.layer_sizes = {1, 1};
    spec.masks = {MaskMatrix::Ones(1, 1)};
    spec.grid = 5;
    std::mt19937_64 rng(1);
    Matrix x = random_batch(rng, 3, 1);
    const KanModel model = init_model(spec, x, 1);
    CHECK(param_count(model) == 10);
  }
  SUBCASE("fully connected [4,5,3] at G=5") {
    KanSpec spec;
    spec.layer_sizes = {4, 5, 3};
    spec.masks = {MaskMatrix::Ones(5, 4), MaskMatrix::Ones(3, 5)};
    spec.grid = 5;
    std::mt19937_64 rng(2);
    Matrix x = random_batch(rng, 3, 4);
    const KanModel model = init_model(spec, x, 1);
    CHECK(param_count(model) == 350);
  }
}

TEST_CASE("masked edges own no parameter slots") {
  std::mt19937_64 rng(71);
  const KanSpec spec = random_spec(rng, 3, 4, 2, 6);
  const Matrix x = random_batch(rng, 5, 3);
  const KanModel model = init_model(spec, x, 4);
  CHECK(static_cast<long>(model.edges.size()) == spec.active_edges());
  CHECK(get_parameters(model).size() ==
        spec.active_edges() * (spec.grid + 3 + 2));
  for (const auto& e : model.edges)
    CHECK(spec.masks[e.layer](e.row, e.col) == 1);
  // an edge that is masked off is not addressable
  bool found_inactive = false;
  for (Index j = 0; j < spec.masks[0].rows() && !found_inactive; ++j)
    for (Index i = 0; i < spec.masks[0].cols() && !found_inactive; ++i)
      if (!spec.masks[0](j, i)) {
        CHECK(model.edge_index(0, static_cast<int>(j), static_cast<int>(i)) == -1);
        found_inactive = true;
      }
}

TEST_CASE("model save/load round trip preserves forward bit-for-bit") {
  std::mt19937_64 rng(81);
  const KanSpec spec = random_spec(rng, 3, 5, 2, 11);
  const Matrix x = random_batch(rng, 15, 3);
  KanModel model = init_model(spec, x, 6);
  model.edges[0].symbolic = true;
  model.edges[0].primitive = Primitive::Tanh;
  model.edges[0].sym_a = 0.31;
  model.edges[0].sym_b = -1.7;
  model.edges[0].sym_c = 2.0;
  model.edges[0].sym_e = 0.25;

  const std::string path = "gakan_test_model.json";
  save_model(model, path);
  const KanModel back = load_model(path);
  const Matrix a = forward(model, x);
  const Matrix b = forward(back, x);
  for (Index r = 0; r < a.rows(); ++r)
    for (Index c = 0; c < a.cols(); ++c) CHECK(a(r, c) == b(r, c));
  CHECK(back.spec == model.spec);
  std::remove(path.c_str());
}

TEST_CASE("truncated model files fail to parse, with no partial model") {
  std::mt19937_64 rng(91);
  const KanSpec spec = random_spec(rng, 2, 2, 1, 3);
  const Matrix x = random_batch(rng, 5, 2);
  const KanModel model = init_model(spec, x, 2);
  const std::string path = "gakan_test_trunc.json";
  save_model(model, path);
  std::ifstream in(path);
  std::string content((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  in.close();
  std::ofstream out(path);
  out << content.substr(0, content.size() / 2);
  out.close();
  CHECK_THROWS_WITH_AS(load_model(path), doctest::Contains("parse error"),
                       std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("unsupported format versions are rejected explicitly") {
  const std::string path = "gakan_test_version.json";
  std::ofstream out(path);
  out << "{\"format_version\": 999}";
  out.close();
  CHECK_THROWS_WITH_AS(load_model(path),
                       doctest::Contains("unsupported format_version"),
                       std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("dot export lists active edges only") {
  KanSpec spec;
  spec.layer_sizes = {2, 1};
  spec.masks = {MaskMatrix::Zero(1, 2)};
  spec.masks[0](0, 1) = 1;
  spec.grid = 3;
  std::mt19937_64 rng(5);
  const Matrix x = random_batch(rng, 4, 2);
  const KanModel model = init_model(spec, x, 3);
  const std::string dot = to_dot(model, {"alpha", "beta"});
  CHECK(dot.find("x2 -> z1") != std::string::npos);
  CHECK(dot.find("x1 -> z1") == std::string::npos);
  CHECK(dot.find("alpha") != std::string::npos);
}
