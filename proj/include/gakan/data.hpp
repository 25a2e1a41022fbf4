#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gakan/types.hpp"

namespace gakan {

// Rows of raw features plus either integer class labels or regression
// targets. Features are kept as loaded; no scaling is applied anywhere.
struct Dataset {
  Matrix features;  // rows x n
  IntVector labels;         // classification labels in [0, C); empty if regression
  Matrix targets;           // regression targets (rows x m); 0x0 if classification
  std::vector<std::string> feature_names;
  std::vector<std::string> class_names;  // class id -> original label text

  bool is_classification() const { return labels.size() > 0; }
  Index rows() const { return features.rows(); }
  Index cols() const { return features.cols(); }
  int num_classes() const { return static_cast<int>(class_names.size()); }

  Dataset take(const std::vector<Index>& idx) const;
};

struct SplitSpec {
  double train_fraction = 0.8;
  double val_fraction = 0.1;
  double test_fraction = 0.1;
  bool stratified = true;
  std::uint64_t seed = 0;
};

struct SplitResult {
  Dataset train, val, test;
  std::vector<Index> train_idx, val_idx, test_idx;
  bool stratified_used = false;  // false also when the fallback triggered
};

// label_column is a header name, or a 0-based column index when the file has
// no header (or the name is numeric and no header matches). With
// numeric_label the label column holds regression targets instead of classes.
Dataset load_csv(const std::string& path, const std::string& label_column,
                 bool header, bool numeric_label = false);

void save_csv(const Dataset& ds, const std::string& path);

// Sidecar JSON snapshot: {feature_names, class_mapping, split_indices}.
void save_snapshot(const Dataset& ds, const SplitResult& split,
                   const std::string& csv_path,
                   const std::string& sidecar_path);

// Deterministic stratified split; sizes are the rounded fractions with the
// remainder assigned to train. Falls back to unstratified when some class
// has fewer samples than there are split parts.
SplitResult split(const Dataset& ds, const SplitSpec& spec);

enum class ToyFormula { Eq6a, Eq6b };  // e^{sin(pi x) + y^2} and x*y

double toy_target(ToyFormula formula, double x, double y);

// Uniform samples on [-1,1]^2; one RNG stream yields train then val.
std::pair<Dataset, Dataset> toy_generate(ToyFormula formula, int n_train,
                                         int n_val, std::uint64_t seed);

}  // namespace gakan
