#pragma once

#include <optional>

#include "gakan/types.hpp"

namespace gakan {

enum class LossKind { CrossEntropy, MeanSquaredError };

// Mean over samples of -log softmax(z)[label].
double cross_entropy(const Matrix& scores, const IntVector& labels);
// Mean over all entries of (z - t)^2.
double mean_squared_error(const Matrix& scores, const Matrix& targets);

// dLoss/dScores, same shape as scores.
Matrix cross_entropy_grad(const Matrix& scores, const IntVector& labels);
Matrix mean_squared_error_grad(const Matrix& scores, const Matrix& targets);

Matrix softmax_rows(const Matrix& scores);

struct Metrics {
  double accuracy = 0.0;
  std::optional<double> auc;  // binary problems only
};

// Accuracy via argmax (ties to the lowest class index); AUC for C=2 as the
// rank-based ROC area over softmax probability of class 1, midpoint ties.
Metrics metrics(const Matrix& scores, const IntVector& labels);

}  // namespace gakan
