#include "gakan/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace gakan {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& s, double& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  char* end = nullptr;
  out = std::strtod(t.c_str(), &end);
  return end == t.c_str() + t.size();
}

}  // namespace

Dataset Dataset::take(const std::vector<Index>& idx) const {
  Dataset out;
  out.feature_names = feature_names;
  out.class_names = class_names;
  out.features.resize(static_cast<Index>(idx.size()), features.cols());
  if (is_classification()) out.labels.resize(static_cast<Index>(idx.size()));
  if (targets.size() > 0)
    out.targets.resize(static_cast<Index>(idx.size()), targets.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    out.features.row(static_cast<Index>(r)) = features.row(idx[r]);
    if (is_classification()) out.labels[static_cast<Index>(r)] = labels[idx[r]];
    if (targets.size() > 0)
      out.targets.row(static_cast<Index>(r)) = targets.row(idx[r]);
  }
  return out;
}

Dataset load_csv(const std::string& path, const std::string& label_column,
                 bool header, bool numeric_label) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open " + path);

  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    rows.push_back(split_line(line));
  }
  if (rows.empty()) throw std::runtime_error("load_csv: empty file " + path);

  std::vector<std::string> names;
  std::size_t first_data = 0;
  if (header) {
    for (auto& c : rows[0]) names.push_back(trim(c));
    first_data = 1;
  }
  const std::size_t n_cols = rows[first_data == 1 ? (rows.size() > 1 ? 1 : 0)
                                                  : 0].size();
  if (header && rows.size() < 2)
    throw std::runtime_error("load_csv: header but no data rows in " + path);

  // Resolve the label column: header name first, then numeric index.
  std::size_t label_idx = n_cols;
  if (header) {
    auto it = std::find(names.begin(), names.end(), trim(label_column));
    if (it != names.end()) label_idx = static_cast<std::size_t>(it - names.begin());
  }
  if (label_idx == n_cols) {
    double v;
    if (parse_double(label_column, v) && v >= 0 && v < static_cast<double>(n_cols) &&
        v == std::floor(v)) {
      label_idx = static_cast<std::size_t>(v);
    } else {
      throw std::runtime_error("load_csv: unknown label column '" +
                               label_column + "'");
    }
  }

  Dataset ds;
  if (header) {
    for (std::size_t c = 0; c < names.size(); ++c)
      if (c != label_idx) ds.feature_names.push_back(names[c]);
  } else {
    for (std::size_t c = 0; c < n_cols; ++c)
      if (c != label_idx)
        ds.feature_names.push_back("x" + std::to_string(ds.feature_names.size() + 1));
  }

  const std::size_t n_rows = rows.size() - first_data;
  const std::size_t n_feat = n_cols - 1;
  ds.features.resize(static_cast<Index>(n_rows), static_cast<Index>(n_feat));
  std::vector<int> label_ids;
  std::vector<double> target_vals;
  label_ids.reserve(n_rows);

  for (std::size_t r = 0; r < n_rows; ++r) {
    const auto& cells = rows[r + first_data];
    if (cells.size() != n_cols) {
      throw std::runtime_error("load_csv: row " + std::to_string(r + 1) +
                               " has " + std::to_string(cells.size()) +
                               " cells, expected " + std::to_string(n_cols));
    }
    std::size_t f = 0;
    for (std::size_t c = 0; c < n_cols; ++c) {
      if (c == label_idx) {
        const std::string cell = trim(cells[c]);
        if (cell.empty())
          throw std::runtime_error("load_csv: missing label at row " +
                                   std::to_string(r + 1) + ", column " +
                                   std::to_string(c + 1));
        if (numeric_label) {
          double v;
          if (!parse_double(cell, v))
            throw std::runtime_error("load_csv: non-numeric target at row " +
                                     std::to_string(r + 1) + ", column " +
                                     std::to_string(c + 1));
          target_vals.push_back(v);
        } else {
          // first-appearance order defines the class id mapping
          auto it = std::find(ds.class_names.begin(), ds.class_names.end(), cell);
          if (it == ds.class_names.end()) {
            ds.class_names.push_back(cell);
            label_ids.push_back(static_cast<int>(ds.class_names.size()) - 1);
          } else {
            label_ids.push_back(static_cast<int>(it - ds.class_names.begin()));
          }
        }
        continue;
      }
      double v;
      if (!parse_double(cells[c], v))
        throw std::runtime_error("load_csv: missing or non-numeric cell at row " +
                                 std::to_string(r + 1) + ", column " +
                                 std::to_string(c + 1));
      ds.features(static_cast<Index>(r), static_cast<Index>(f++)) = v;
    }
  }

  if (numeric_label) {
    ds.targets.resize(static_cast<Index>(n_rows), 1);
    for (std::size_t r = 0; r < n_rows; ++r)
      ds.targets(static_cast<Index>(r), 0) = target_vals[r];
  } else {
    ds.labels.resize(static_cast<Index>(n_rows));
    for (std::size_t r = 0; r < n_rows; ++r)
      ds.labels[static_cast<Index>(r)] = label_ids[r];
  }
  return ds;
}

void save_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_csv: cannot open " + path);
  char buf[40];
  for (const auto& n : ds.feature_names) out << n << ',';
  out << (ds.is_classification() ? "class" : "target") << '\n';
  for (Index r = 0; r < ds.rows(); ++r) {
    for (Index c = 0; c < ds.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", ds.features(r, c));
      out << buf << ',';
    }
    if (ds.is_classification()) {
      out << ds.class_names[static_cast<std::size_t>(ds.labels[r])];
    } else {
      std::snprintf(buf, sizeof buf, "%.17g", ds.targets(r, 0));
      out << buf;
    }
    out << '\n';
  }
}

void save_snapshot(const Dataset& ds, const SplitResult& split,
                   const std::string& csv_path,
                   const std::string& sidecar_path) {
  save_csv(ds, csv_path);
  nlohmann::json j;
  j["feature_names"] = ds.feature_names;
  j["class_mapping"] = nlohmann::json::object();
  for (std::size_t i = 0; i < ds.class_names.size(); ++i)
    j["class_mapping"][ds.class_names[i]] = i;
  j["split_indices"] = {{"train", split.train_idx},
                        {"val", split.val_idx},
                        {"test", split.test_idx}};
  std::ofstream out(sidecar_path);
  if (!out) throw std::runtime_error("save_snapshot: cannot open " + sidecar_path);
  out << j.dump(2) << '\n';
}

namespace {

// test first, then val; remainder goes to train
void allocate(std::vector<Index>& pool, std::mt19937_64& rng,
              long test_n, long val_n, SplitResult& out) {
  std::shuffle(pool.begin(), pool.end(), rng);
  long i = 0;
  for (; i < test_n; ++i) out.test_idx.push_back(pool[static_cast<std::size_t>(i)]);
  for (; i < test_n + val_n; ++i) out.val_idx.push_back(pool[static_cast<std::size_t>(i)]);
  for (; i < static_cast<long>(pool.size()); ++i)
    out.train_idx.push_back(pool[static_cast<std::size_t>(i)]);
}

}  // namespace

SplitResult split(const Dataset& ds, const SplitSpec& spec) {
  const double sum =
      spec.train_fraction + spec.val_fraction + spec.test_fraction;
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("split: fractions must sum to 1");
  if (spec.train_fraction < 0 || spec.val_fraction < 0 || spec.test_fraction < 0)
    throw std::invalid_argument("split: fractions must be non-negative");

  const Index n = ds.rows();
  std::mt19937_64 rng(spec.seed);
  SplitResult out;

  int parts = 0;
  for (double f : {spec.train_fraction, spec.val_fraction, spec.test_fraction})
    if (f > 0) ++parts;

  bool stratify = spec.stratified && ds.is_classification();
  std::vector<std::vector<Index>> by_class;
  if (stratify) {
    by_class.resize(static_cast<std::size_t>(ds.num_classes()));
    for (Index r = 0; r < n; ++r)
      by_class[static_cast<std::size_t>(ds.labels[r])].push_back(r);
    for (const auto& c : by_class)
      if (static_cast<int>(c.size()) < parts) stratify = false;
  }

  if (stratify) {
    for (auto& pool : by_class) {
      const double n_c = static_cast<double>(pool.size());
      const long test_c = std::llround(spec.test_fraction * n_c);
      const long val_c = std::llround(spec.val_fraction * n_c);
      allocate(pool, rng, test_c, val_c, out);
    }
    out.stratified_used = true;
  } else {
    std::vector<Index> pool(static_cast<std::size_t>(n));
    std::iota(pool.begin(), pool.end(), Index{0});
    const long test_n = std::llround(spec.test_fraction * static_cast<double>(n));
    const long val_n = std::llround(spec.val_fraction * static_cast<double>(n));
    allocate(pool, rng, test_n, val_n, out);
    out.stratified_used = false;
  }

  std::sort(out.train_idx.begin(), out.train_idx.end());
  std::sort(out.val_idx.begin(), out.val_idx.end());
  std::sort(out.test_idx.begin(), out.test_idx.end());
  out.train = ds.take(out.train_idx);
  out.val = ds.take(out.val_idx);
  out.test = ds.take(out.test_idx);
  return out;
}

double toy_target(ToyFormula formula, double x, double y) {
  switch (formula) {
    case ToyFormula::Eq6a:
      return std::exp(std::sin(M_PI * x) + y * y);
    case ToyFormula::Eq6b:
      return x * y;
  }
  throw std::invalid_argument("toy_target: unknown formula");
}

std::pair<Dataset, Dataset> toy_generate(ToyFormula formula, int n_train,
                                         int n_val, std::uint64_t seed) {
  if (n_train < 1 || n_val < 1)
    throw std::invalid_argument("toy_generate: sample counts must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  auto make = [&](int count) {
    Dataset ds;
    ds.feature_names = {"x1", "x2"};
    ds.features.resize(count, 2);
    ds.targets.resize(count, 1);
    for (int r = 0; r < count; ++r) {
      const double x = unit(rng);
      const double y = unit(rng);
      ds.features(r, 0) = x;
      ds.features(r, 1) = y;
      ds.targets(r, 0) = toy_target(formula, x, y);
    }
    return ds;
  };

  Dataset train = make(n_train);
  Dataset val = make(n_val);
  return {std::move(train), std::move(val)};
}

}  // namespace gakan
