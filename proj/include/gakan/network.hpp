#pragma once

#include <string>
#include <vector>

#include "gakan/loss.hpp"
#include "gakan/spline.hpp"
#include "gakan/symbolic.hpp"
#include "gakan/types.hpp"

namespace gakan {

// Decoded architecture: layer widths, one 0/1 mask per layer
// (rows = upper-layer neurons, cols = lower-layer neurons), grid value.
struct KanSpec {
  std::vector<int> layer_sizes;    // [n_0 .. n_L]
  std::vector<MaskMatrix> masks;   // L entries, masks[l] is n_{l+1} x n_l
  int grid = 3;                    // G in [1, 64]
  bool valid = true;               // reachability verdict from decode

  int depth() const { return static_cast<int>(masks.size()); }
  int inputs() const { return layer_sizes.front(); }
  int outputs() const { return layer_sizes.back(); }
  long active_edges() const;
  bool operator==(const KanSpec& o) const;
};

// Trainable state of one active edge. Spline mode carries G+k coefficients
// plus w_b, w_s; symbolic mode carries the affine parameters of c*f(a*x+b)+e.
struct EdgeParams {
  int layer = 0, row = 0, col = 0;  // (l, j, i)
  Vector coeffs;
  double w_b = 1.0, w_s = 1.0;
  bool symbolic = false;
  Primitive primitive = Primitive::X;
  double sym_a = 1.0, sym_b = 0.0, sym_c = 1.0, sym_e = 0.0;

  int param_count() const {
    return symbolic ? 4 : static_cast<int>(coeffs.size()) + 2;
  }
};

struct KanModel {
  KanSpec spec;
  std::vector<SplineGrid> input_grids;  // one per input feature
  SplineGrid hidden_grid;               // shared by hidden/output inputs
  std::vector<EdgeParams> edges;        // active edges, ordered by (l, j, i)

  const SplineGrid& grid_for(int layer, int source) const {
    return layer == 0 ? input_grids[static_cast<std::size_t>(source)]
                      : hidden_grid;
  }
  // Index into edges, or -1 when the edge is masked off.
  int edge_index(int layer, int row, int col) const;
};

// Mean |activation| per active edge over a batch, shaped like the masks.
struct ActivationTrace {
  std::vector<Matrix> mean_abs;
};

// Spline domains from raw feature ranges (1% margin; constant columns get
// [v-1, v+1]), hidden domain [-2, 2], coeffs ~ N(0, 0.1), w_b = w_s = 1.
KanModel init_model(const KanSpec& spec, const Matrix& train_inputs,
                    std::uint64_t seed);

// Raw class scores; nodes sum their active incoming edge activations.
Matrix forward(const KanModel& model, const Matrix& batch,
               ActivationTrace* trace = nullptr);

// Node values per layer: result[0] is the batch, result[L] the scores.
std::vector<Matrix> forward_activations(const KanModel& model,
                                        const Matrix& batch);

struct GradientResult {
  double loss = 0.0;
  Vector grad;  // same layout as get_parameters()
};

GradientResult gradients(const KanModel& model, const Matrix& batch,
                         const IntVector& labels);   // cross-entropy
GradientResult gradients(const KanModel& model, const Matrix& batch,
                         const Matrix& targets);     // mean squared error

// Flat parameter vector, edges in order; spline edges contribute
// [coeffs..., w_b, w_s], symbolic edges [a, b, c, e].
Vector get_parameters(const KanModel& model);
void set_parameters(KanModel& model, const Vector& params);

long param_count(const KanModel& model);

void save_model(const KanModel& model, const std::string& path);
KanModel load_model(const std::string& path);

// GraphViz export; inactive edges are omitted.
std::string to_dot(const KanModel& model,
                   const std::vector<std::string>& feature_names = {});

}  // namespace gakan
