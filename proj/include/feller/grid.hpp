#pragma once

#include <memory>
#include <optional>
#include <ostream>
#include <vector>

#include "feller/ou_model.hpp"
#include "feller/types.hpp"

namespace feller {

/// Tensor grid of cells on a box in R^m, m ∈ {1, 2}. Nodes are cell centers in
/// row-major order (axis 0 slowest).
class Grid {
 public:
  /// Throws BadBounds unless lo < hi and counts >= 8 on every axis.
  Grid(std::vector<double> lo, std::vector<double> hi, std::vector<int> counts);

  int dim() const { return static_cast<int>(lo_.size()); }
  int size() const { return size_; }
  double lo(int d) const { return lo_[d]; }
  double hi(int d) const { return hi_[d]; }
  int count(int d) const { return counts_[d]; }
  double spacing(int d) const { return (hi_[d] - lo_[d]) / counts_[d]; }
  double cell_volume() const;

  /// Node coordinates; column i is node i.
  const Mat& nodes() const { return nodes_; }
  Vec node(int i) const { return nodes_.col(i); }

  int flat_index(const std::vector<int>& multi) const;
  std::vector<int> multi_index(int flat) const;

  /// Cell containing x; a point on a shared face goes to the lower index.
  /// Empty when x lies outside the closed box.
  std::optional<int> locate(const Vec& x) const;

  /// Node nearest to x (clamped into the box).
  int nearest_node(const Vec& x) const;

  bool operator==(const Grid& other) const;

 private:
  std::vector<double> lo_, hi_;
  std::vector<int> counts_;
  int size_ = 0;
  Mat nodes_;
};

using GridPtr = std::shared_ptr<const Grid>;

GridPtr build_grid(std::vector<double> lo, std::vector<double> hi, std::vector<int> counts);

/// Bounded function sampled at grid nodes; zero outside the box.
struct GridFunction {
  GridPtr grid;
  Vec values;
  double sup_bound = 0.0;

  static GridFunction sample(GridPtr grid, const ScalarField& f);
  static GridFunction constant(GridPtr grid, double c);

  /// Multilinear interpolation between nodes, clamped at the outermost nodes.
  double interpolate(const Vec& x) const;
};

/// Kernel operator on the grid: weights(i, j) is the (possibly signed) mass
/// that the kernel started at node i puts on cell j. Mass leaving the box is
/// kept in row_leak and never renormalized away. The outside of the box is an
/// absorbing state carrying `cemetery` times its mass under the kernel (1 for
/// Markovian kernels, 0 for derivative kernels that annihilate constants).
struct KernelOp {
  GridPtr grid;
  RowMat weights;
  Vec row_leak;     // signed mass outside the box
  Vec row_tv_leak;  // total-variation mass outside the box
  double cemetery = 1.0;
  bool is_signed = false;

  Vec row_tv() const;
  double max_row_tv() const { return row_tv().maxCoeff(); }
};

struct KernelOptions {
  /// ExcessLeak threshold, checked on rows whose node lies in the inner half
  /// of the box (edge rows leak by construction).
  double leak_tol = 1e-3;
};

/// Cell masses of N(S(t)x_i, Q_t) for every node x_i. 1-D: Gaussian CDF
/// differences. 2-D: exact marginal CDF differences along axis 0 combined
/// with exact conditional CDF differences along axis 1 at Gauss–Legendre
/// nodes inside each axis-0 cell. Rows satisfy row sum + leak = 1.
/// Throws DegenerateCovariance if Q_t is numerically singular, ExcessLeak.
KernelOp build_ou_kernel(const OUModel& model, double t, GridPtr grid,
                         const KernelOptions& opts = {});

/// Cell masses of N(mean, cov) on the grid (one row).
void gaussian_cell_masses(const Grid& grid, const Vec& mean, const Mat& cov,
                          Eigen::Ref<Eigen::RowVectorXd> row, double& leak);

/// Identity kernel: every node keeps its own cell.
KernelOp dirac_kernel(GridPtr grid);

/// Kernel sending node i to the cell containing points[i] (nearest-cell
/// assignment, lower index on ties).
KernelOp dirac_kernel(GridPtr grid, const std::vector<Vec>& points);

GridFunction apply(const KernelOp& k, const GridFunction& f);
KernelOp compose(const KernelOp& k1, const KernelOp& k2);

/// Σ_cells |K[i] − K[j]| + |leak_i − leak_j|.
double tv_row_distance(const KernelOp& k, int i, int j);

/// Box [c − w, c + w]^m with w = 6σ∞ + drift shift; σ∞² the largest
/// eigenvalue of the stationary covariance (of Q_horizon if unstable).
struct Box {
  std::vector<double> lo, hi;
};
Box default_box(const OUModel& model, double drift_sup, double horizon = 1.0);

/// CSV dump: a '#' metadata line, a header line, then one row per node with
/// the cell weights followed by the leak.
void export_csv(const KernelOp& k, std::ostream& os);

void require_same_grid(const Grid& a, const Grid& b);

}  // namespace feller
