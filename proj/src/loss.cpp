#include "gakan/loss.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace gakan {

namespace {

void check_labels(const Matrix& scores, const IntVector& labels) {
  if (labels.size() != scores.rows())
    throw std::invalid_argument("loss: labels/scores row mismatch");
  for (Index r = 0; r < labels.size(); ++r)
    if (labels[r] < 0 || labels[r] >= scores.cols())
      throw std::invalid_argument("loss: label out of range");
}

}  // namespace

Matrix softmax_rows(const Matrix& scores) {
  Matrix p(scores.rows(), scores.cols());
  for (Index r = 0; r < scores.rows(); ++r) {
    const double mx = scores.row(r).maxCoeff();
    p.row(r) = (scores.row(r).array() - mx).exp();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

double cross_entropy(const Matrix& scores, const IntVector& labels) {
  check_labels(scores, labels);
  double total = 0.0;
  for (Index r = 0; r < scores.rows(); ++r) {
    const double mx = scores.row(r).maxCoeff();
    const double lse = mx + std::log((scores.row(r).array() - mx).exp().sum());
    total += lse - scores(r, labels[r]);
  }
  return total / static_cast<double>(scores.rows());
}

Matrix cross_entropy_grad(const Matrix& scores, const IntVector& labels) {
  check_labels(scores, labels);
  Matrix g = softmax_rows(scores);
  for (Index r = 0; r < scores.rows(); ++r) g(r, labels[r]) -= 1.0;
  return g / static_cast<double>(scores.rows());
}

double mean_squared_error(const Matrix& scores, const Matrix& targets) {
  if (scores.rows() != targets.rows() || scores.cols() != targets.cols())
    throw std::invalid_argument("loss: scores/targets shape mismatch");
  return (scores - targets).array().square().sum() /
         static_cast<double>(scores.size());
}

Matrix mean_squared_error_grad(const Matrix& scores, const Matrix& targets) {
  if (scores.rows() != targets.rows() || scores.cols() != targets.cols())
    throw std::invalid_argument("loss: scores/targets shape mismatch");
  return 2.0 * (scores - targets) / static_cast<double>(scores.size());
}

Metrics metrics(const Matrix& scores, const IntVector& labels) {
  check_labels(scores, labels);
  const Index n = scores.rows();
  Metrics m;

  long correct = 0;
  for (Index r = 0; r < n; ++r) {
    Index best = 0;
    for (Index c = 1; c < scores.cols(); ++c)
      if (scores(r, c) > scores(r, best)) best = c;  // ties keep lowest index
    if (best == labels[r]) ++correct;
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(n);

  if (scores.cols() == 2) {
    const Matrix p = softmax_rows(scores);
    long pos = 0, neg = 0;
    for (Index r = 0; r < n; ++r) (labels[r] == 1 ? pos : neg)++;
    if (pos > 0 && neg > 0) {
      // midpoint ranks over p(class 1)
      std::vector<Index> order(static_cast<std::size_t>(n));
      std::iota(order.begin(), order.end(), Index{0});
      std::sort(order.begin(), order.end(),
                [&](Index a, Index b) { return p(a, 1) < p(b, 1); });
      double rank_sum_pos = 0.0;
      Index i = 0;
      while (i < n) {
        Index j = i;
        while (j + 1 < n && p(order[j + 1], 1) == p(order[i], 1)) ++j;
        const double mid_rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (Index t = i; t <= j; ++t)
          if (labels[order[t]] == 1) rank_sum_pos += mid_rank;
        i = j + 1;
      }
      const double pos_d = static_cast<double>(pos);
      const double neg_d = static_cast<double>(neg);
      m.auc = (rank_sum_pos - pos_d * (pos_d + 1.0) / 2.0) / (pos_d * neg_d);
    }
  }
  return m;
}

}  // namespace gakan
