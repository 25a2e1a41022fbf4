#pragma once

#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "gakan/data.hpp"
#include "gakan/loss.hpp"
#include "gakan/network.hpp"

namespace gakan {

struct WolfeParams {
  double c1 = 1e-4;
  double c2 = 0.9;
  int max_bisections = 20;
};

struct TrainConfig {
  int steps = 20;
  int history_size = 10;      // LBFGS memory
  WolfeParams wolfe;
  double fallback_step = 1e-2;  // plain gradient step when line search fails
  LossKind loss = LossKind::CrossEntropy;
};

struct TrainReport {
  std::vector<double> train_loss;  // one entry per optimizer step
  std::vector<double> val_loss;
  double min_val_loss = std::numeric_limits<double>::infinity();
  int best_step = -1;  // 1-based; -1 when no finite validation loss was seen
  Vector best_parameters;
};

// Full-batch loss of the model on a dataset.
double evaluate_loss(const KanModel& model, const Dataset& ds, LossKind kind);

// Runs exactly config.steps LBFGS steps on the training set, measuring the
// validation loss after each; restores the best parameters on return.
TrainReport train(KanModel& model, const Dataset& train_set,
                  const Dataset& val_set, const TrainConfig& config);

std::string train_report_json(const TrainReport& report);
void write_train_report_csv(const TrainReport& report, std::ostream& out);

}  // namespace gakan
