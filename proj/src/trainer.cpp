#include "gakan/trainer.hpp"

#include <cmath>
#include <deque>
#include <ostream>
#include <stdexcept>

#include "json.hpp"

namespace gakan {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

GradientResult eval_grad(const KanModel& model, const Dataset& ds,
                         LossKind kind) {
  if (kind == LossKind::CrossEntropy) return gradients(model, ds.features, ds.labels);
  return gradients(model, ds.features, ds.targets);
}

void check_dataset(const KanModel& model, const Dataset& ds, LossKind kind,
                   const char* which) {
  if (ds.rows() == 0)
    throw std::invalid_argument(std::string("train: empty ") + which + " set");
  if (ds.cols() != model.spec.inputs())
    throw std::invalid_argument(std::string("train: ") + which +
                                " set column count mismatch");
  if (kind == LossKind::CrossEntropy && !ds.is_classification())
    throw std::invalid_argument("train: cross-entropy needs class labels");
  if (kind == LossKind::MeanSquaredError && ds.targets.size() == 0)
    throw std::invalid_argument("train: MSE needs regression targets");
}

struct Correction {
  Vector s, y;
  double rho;
};

Vector lbfgs_direction(const Vector& g, const std::deque<Correction>& hist) {
  if (hist.empty()) return -g;
  Vector q = g;
  std::vector<double> alpha(hist.size());
  for (std::size_t i = hist.size(); i-- > 0;) {
    alpha[i] = hist[i].rho * hist[i].s.dot(q);
    q -= alpha[i] * hist[i].y;
  }
  const Correction& last = hist.back();
  const double gamma = last.s.dot(last.y) / last.y.dot(last.y);
  Vector r = gamma * q;
  for (std::size_t i = 0; i < hist.size(); ++i) {
    const double beta = hist[i].rho * hist[i].y.dot(r);
    r += hist[i].s * (alpha[i] - beta);
  }
  return -r;
}

struct LineSearchResult {
  bool ok = false;
  double alpha = 0.0;
  double f = kInf;
  Vector g;
};

// Strong-Wolfe search along d: bracketing with doubling, then bisection.
// Every objective evaluation counts against the bisection budget.
LineSearchResult wolfe_search(const KanModel& model, const Dataset& train_set,
                              LossKind kind, KanModel& scratch,
                              const Vector& theta, const Vector& d, double f0,
                              double dg0, double alpha0,
                              const WolfeParams& wp) {
  LineSearchResult res;
  int budget = wp.max_bisections;

  auto eval = [&](double alpha, double& f, Vector& g, double& dg) {
    set_parameters(scratch, theta + alpha * d);
    GradientResult gr = eval_grad(scratch, train_set, kind);
    f = gr.loss;
    g = std::move(gr.grad);
    dg = std::isfinite(f) ? g.dot(d) : kInf;
    --budget;
  };

  double lo = 0.0, f_lo = f0, dg_lo = dg0;
  double hi = -1.0, f_hi = kInf;  // hi < 0 means no upper bracket yet
  double alpha = alpha0;
  double f_a, dg_a;
  Vector g_a;

  while (budget > 0) {
    eval(alpha, f_a, g_a, dg_a);
    if (!std::isfinite(f_a) || f_a > f0 + wp.c1 * alpha * dg0 ||
        (hi < 0.0 && f_a >= f_lo && lo > 0.0)) {
      hi = alpha;
      f_hi = f_a;
    } else if (std::abs(dg_a) <= -wp.c2 * dg0) {
      res.ok = true;
      res.alpha = alpha;
      res.f = f_a;
      res.g = std::move(g_a);
      return res;
    } else if (dg_a >= 0.0) {
      hi = lo;
      f_hi = f_lo;
      lo = alpha;
      f_lo = f_a;
      dg_lo = dg_a;
    } else {
      lo = alpha;
      f_lo = f_a;
      dg_lo = dg_a;
    }
    alpha = (hi < 0.0) ? alpha * 2.0 : 0.5 * (lo + hi);
    if (hi >= 0.0 && std::abs(hi - lo) < 1e-16) break;
  }
  (void)f_hi;
  (void)dg_lo;
  return res;
}

}  // namespace

double evaluate_loss(const KanModel& model, const Dataset& ds, LossKind kind) {
  const Matrix scores = forward(model, ds.features);
  if (kind == LossKind::CrossEntropy) return cross_entropy(scores, ds.labels);
  return mean_squared_error(scores, ds.targets);
}

TrainReport train(KanModel& model, const Dataset& train_set,
                  const Dataset& val_set, const TrainConfig& config) {
  if (config.steps < 1) throw std::invalid_argument("train: steps must be >= 1");
  if (!model.spec.valid) throw std::invalid_argument("train: invalid model spec");
  check_dataset(model, train_set, config.loss, "train");
  check_dataset(model, val_set, config.loss, "validation");

  TrainReport report;
  Vector theta = get_parameters(model);
  Vector theta_finite = theta;  // last parameter vector with finite loss
  KanModel scratch = model;

  GradientResult cur = eval_grad(model, train_set, config.loss);
  std::deque<Correction> hist;

  for (int step = 1; step <= config.steps; ++step) {
    if (!std::isfinite(cur.loss)) {
      // diverged: give this step +inf, restart from the last finite point
      report.train_loss.push_back(kInf);
      report.val_loss.push_back(kInf);
      theta = theta_finite;
      set_parameters(scratch, theta);
      cur = eval_grad(scratch, train_set, config.loss);
      hist.clear();
      continue;
    }

    Vector d = lbfgs_direction(cur.grad, hist);
    double dg0 = d.dot(cur.grad);
    if (!(dg0 < 0.0)) {  // not a descent direction; fall back to steepest
      d = -cur.grad;
      dg0 = d.dot(cur.grad);
      hist.clear();
    }

    const double gnorm = cur.grad.norm();
    const double alpha0 = hist.empty() && gnorm > 1.0 ? 1.0 / gnorm : 1.0;
    LineSearchResult ls =
        wolfe_search(model, train_set, config.loss, scratch, theta, d,
                     cur.loss, dg0, alpha0, config.wolfe);

    Vector theta_new;
    GradientResult next;
    if (ls.ok) {
      theta_new = theta + ls.alpha * d;
      next.loss = ls.f;
      next.grad = std::move(ls.g);
    } else {
      theta_new = theta - config.fallback_step * cur.grad;
      set_parameters(scratch, theta_new);
      next = eval_grad(scratch, train_set, config.loss);
    }

    if (std::isfinite(next.loss)) {
      Vector s = theta_new - theta;
      Vector y = next.grad - cur.grad;
      const double sy = s.dot(y);
      if (sy > 1e-12) {
        hist.push_back({std::move(s), std::move(y), 1.0 / sy});
        if (static_cast<int>(hist.size()) > config.history_size)
          hist.pop_front();
      }
    }

    theta = std::move(theta_new);
    cur = std::move(next);

    if (!std::isfinite(cur.loss)) {
      report.train_loss.push_back(kInf);
      report.val_loss.push_back(kInf);
      theta = theta_finite;
      set_parameters(scratch, theta);
      cur = eval_grad(scratch, train_set, config.loss);
      hist.clear();
      continue;
    }
    theta_finite = theta;

    set_parameters(scratch, theta);
    const double val = evaluate_loss(scratch, val_set, config.loss);
    report.train_loss.push_back(cur.loss);
    report.val_loss.push_back(std::isfinite(val) ? val : kInf);
    if (val < report.min_val_loss) {
      report.min_val_loss = val;
      report.best_step = step;
      report.best_parameters = theta;
    }
  }

  if (report.best_step > 0) {
    set_parameters(model, report.best_parameters);
  } else {
    set_parameters(model, theta_finite);
  }
  return report;
}

namespace {

nlohmann::json finite_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

}  // namespace

std::string train_report_json(const TrainReport& report) {
  nlohmann::json j;
  j["min_val_loss"] = finite_or_null(report.min_val_loss);
  j["best_step"] = report.best_step;
  j["steps"] = nlohmann::json::array();
  for (std::size_t i = 0; i < report.train_loss.size(); ++i) {
    j["steps"].push_back({{"step", i + 1},
                          {"train_loss", finite_or_null(report.train_loss[i])},
                          {"val_loss", finite_or_null(report.val_loss[i])}});
  }
  return j.dump(2);
}

void write_train_report_csv(const TrainReport& report, std::ostream& out) {
  out << "step,train_loss,val_loss\n";
  for (std::size_t i = 0; i < report.train_loss.size(); ++i)
    out << (i + 1) << ',' << report.train_loss[i] << ','
        << report.val_loss[i] << '\n';
}

}  // namespace gakan
