#include "feller/grid.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <string>

#include "feller/errors.hpp"
#include "feller/gaussian.hpp"
#include "denormals.hpp"
#include "feller/quadrature.hpp"

namespace feller {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double lower_tail(double z) { return 0.5 * std::erfc(-z * kInvSqrt2); }
double upper_tail(double z) { return 0.5 * std::erfc(z * kInvSqrt2); }

// Masses of N(mu, sigma^2) on the cells of one axis, accumulated with factor
// `scale` into out[offset + stride * j]. Returns the mass outside [lo, hi].
double axis_masses(double lo, double h, int n, double mu, double sigma, double scale,
                   double* out, int stride) {
  // Tail probabilities at every cell boundary; differences are taken on the
  // side of the mean that avoids cancellation.
  double z_prev = (lo - mu) / sigma;
  double low_prev = lower_tail(z_prev);
  double up_prev = upper_tail(z_prev);
  const double leak_lo = low_prev;
  for (int j = 0; j < n; ++j) {
    const double z = (lo + (j + 1) * h - mu) / sigma;
    const double low = lower_tail(z);
    const double up = upper_tail(z);
    double m;
    if (z_prev >= 0.0) {
      m = up_prev - up;
    } else if (z <= 0.0) {
      m = low - low_prev;
    } else {
      m = 1.0 - low_prev - up;
    }
    out[stride * j] += scale * m;
    z_prev = z;
    low_prev = low;
    up_prev = up;
  }
  return leak_lo + up_prev;
}

bool in_inner_half(const Grid& g, const Vec& x) {
  for (int d = 0; d < g.dim(); ++d) {
    const double c = 0.5 * (g.lo(d) + g.hi(d));
    const double w = 0.5 * (g.hi(d) - g.lo(d));
    if (std::abs(x[d] - c) > 0.5 * w) return false;
  }
  return true;
}

}  // namespace

Grid::Grid(std::vector<double> lo, std::vector<double> hi, std::vector<int> counts)
    : lo_(std::move(lo)), hi_(std::move(hi)), counts_(std::move(counts)) {
  const auto m = lo_.size();
  if (m < 1 || m > 2 || hi_.size() != m || counts_.size() != m) {
    throw BadBounds("grid dimension must be 1 or 2 with matching lo/hi/counts");
  }
  size_ = 1;
  for (std::size_t d = 0; d < m; ++d) {
    if (!(std::isfinite(lo_[d]) && std::isfinite(hi_[d]) && lo_[d] < hi_[d])) {
      throw BadBounds("need lo < hi on axis " + std::to_string(d));
    }
    if (counts_[d] < 8) throw BadBounds("need at least 8 cells per axis");
    size_ *= counts_[d];
  }
  nodes_.resize(static_cast<Eigen::Index>(m), size_);
  for (int i = 0; i < size_; ++i) {
    const auto mi = multi_index(i);
    for (std::size_t d = 0; d < m; ++d) {
      nodes_(static_cast<Eigen::Index>(d), i) =
          lo_[d] + (mi[d] + 0.5) * spacing(static_cast<int>(d));
    }
  }
}

double Grid::cell_volume() const {
  double v = 1.0;
  for (int d = 0; d < dim(); ++d) v *= spacing(d);
  return v;
}

int Grid::flat_index(const std::vector<int>& multi) const {
  int idx = 0;
  for (int d = 0; d < dim(); ++d) idx = idx * counts_[d] + multi[d];
  return idx;
}

std::vector<int> Grid::multi_index(int flat) const {
  std::vector<int> out(dim());
  for (int d = dim() - 1; d >= 0; --d) {
    out[d] = flat % counts_[d];
    flat /= counts_[d];
  }
  return out;
}

std::optional<int> Grid::locate(const Vec& x) const {
  std::vector<int> mi(dim());
  for (int d = 0; d < dim(); ++d) {
    if (x[d] < lo_[d] || x[d] > hi_[d]) return std::nullopt;
    const double r = (x[d] - lo_[d]) / spacing(d);
    // ceil(r) - 1 puts a point on a face into the lower cell.
    int j = static_cast<int>(std::ceil(r)) - 1;
    mi[d] = std::clamp(j, 0, counts_[d] - 1);
  }
  return flat_index(mi);
}

int Grid::nearest_node(const Vec& x) const {
  Vec y = x;
  for (int d = 0; d < dim(); ++d) y[d] = std::clamp(y[d], lo_[d], hi_[d]);
  return *locate(y);
}

bool Grid::operator==(const Grid& other) const {
  return lo_ == other.lo_ && hi_ == other.hi_ && counts_ == other.counts_;
}

GridPtr build_grid(std::vector<double> lo, std::vector<double> hi, std::vector<int> counts) {
  return std::make_shared<const Grid>(std::move(lo), std::move(hi), std::move(counts));
}

void require_same_grid(const Grid& a, const Grid& b) {
  if (!(a == b)) throw GridMismatch("operands live on different grids");
}

GridFunction GridFunction::sample(GridPtr grid, const ScalarField& f) {
  GridFunction out{grid, Vec(grid->size()), 0.0};
  for (int i = 0; i < grid->size(); ++i) out.values[i] = f(grid->node(i));
  out.sup_bound = out.values.cwiseAbs().maxCoeff();
  return out;
}

GridFunction GridFunction::constant(GridPtr grid, double c) {
  const int n = grid->size();
  return {std::move(grid), Vec::Constant(n, c), std::abs(c)};
}

double GridFunction::interpolate(const Vec& x) const {
  const Grid& g = *grid;
  // Per axis: lower node index and weight of the upper node.
  std::vector<int> base(g.dim());
  std::vector<double> frac(g.dim());
  for (int d = 0; d < g.dim(); ++d) {
    const double h = g.spacing(d);
    double r = (x[d] - g.lo(d)) / h - 0.5;
    r = std::clamp(r, 0.0, static_cast<double>(g.count(d) - 1));
    int j = std::min(static_cast<int>(std::floor(r)), g.count(d) - 2);
    base[d] = j;
    frac[d] = r - j;
  }
  double acc = 0.0;
  const int corners = 1 << g.dim();
  std::vector<int> mi(g.dim());
  for (int c = 0; c < corners; ++c) {
    double w = 1.0;
    for (int d = 0; d < g.dim(); ++d) {
      const bool up = (c >> d) & 1;
      mi[d] = base[d] + (up ? 1 : 0);
      w *= up ? frac[d] : 1.0 - frac[d];
    }
    if (w != 0.0) acc += w * values[g.flat_index(mi)];
  }
  return acc;
}

Vec KernelOp::row_tv() const { return weights.cwiseAbs().rowwise().sum() + row_tv_leak; }

void gaussian_cell_masses(const Grid& grid, const Vec& mean, const Mat& cov,
                          Eigen::Ref<Eigen::RowVectorXd> row, double& leak) {
  row.setZero();
  if (grid.dim() == 1) {
    leak = axis_masses(grid.lo(0), grid.spacing(0), grid.count(0), mean[0],
                       std::sqrt(cov(0, 0)), 1.0, row.data(), 1);
    return;
  }
  const double s1 = std::sqrt(cov(0, 0));
  const double beta = cov(0, 1) / cov(0, 0);
  const double sc = std::sqrt(std::max(cov(1, 1) - cov(0, 1) * beta, 0.0));
  const int n0 = grid.count(0), n1 = grid.count(1);
  const double h0 = grid.spacing(0);
  Vec marginal = Vec::Zero(n0);
  leak = axis_masses(grid.lo(0), h0, n0, mean[0], s1, 1.0, marginal.data(), 1);
  const int ng = std::clamp(static_cast<int>(std::ceil(4.0 * h0 / s1)), 2, 48);
  for (int c = 0; c < n0; ++c) {
    if (marginal[c] < 1e-300) continue;
    const double a = grid.lo(0) + c * h0;
    const Rule gl = gauss_legendre(ng, a, a + h0);
    std::vector<double> w(ng);
    double total = 0.0;
    for (int g = 0; g < ng; ++g) {
      const double z = (gl.nodes[g] - mean[0]) / s1;
      w[g] = gl.weights[g] * std::exp(-0.5 * z * z);
      total += w[g];
    }
    std::vector<double> xs = gl.nodes;
    if (!(total > 0.0)) {
      // Density underflows inside the cell: all mass at the point nearest the mean.
      xs.assign(1, std::clamp(mean[0], a, a + h0));
      w.assign(1, 1.0);
      total = 1.0;
    }
    for (std::size_t g = 0; g < xs.size(); ++g) {
      const double wg = w[g] * marginal[c] / total;
      const double mc = mean[1] + beta * (xs[g] - mean[0]);
      leak += axis_masses(grid.lo(1), grid.spacing(1), n1, mc, sc, wg,
                          row.data() + static_cast<std::ptrdiff_t>(c) * n1, 1) *
              wg;
    }
  }
}

namespace {

void check_leak(const KernelOp& k, const KernelOptions& opts) {
  const Grid& g = *k.grid;
  for (int i = 0; i < g.size(); ++i) {
    if (k.row_tv_leak[i] > opts.leak_tol && in_inner_half(g, g.node(i))) {
      throw ExcessLeak("row " + std::to_string(i) + " leaks " +
                       std::to_string(k.row_tv_leak[i]));
    }
  }
}

}  // namespace

KernelOp build_ou_kernel(const OUModel& model, double t, GridPtr grid,
                         const KernelOptions& opts) {
  if (!(t > 0.0)) throw InvalidArgument("build_ou_kernel needs t > 0");
  if (model.dim() != grid->dim()) throw GridMismatch("model and grid dimensions differ");
  const Mat s = flow(model, t);
  const Mat q = gramian(model, t);
  const CameronMartin cm(q);
  if (cm.rank() < cm.dim()) {
    throw DegenerateCovariance("Q_t is numerically singular at t = " + std::to_string(t));
  }
  const int n = grid->size();
  KernelOp k{grid, RowMat(n, n), Vec(n), Vec(n), 1.0, false};
  for (int i = 0; i < n; ++i) {
    double leak = 0.0;
    gaussian_cell_masses(*grid, s * grid->node(i), q, k.weights.row(i), leak);
    k.row_leak[i] = leak;
  }
  k.row_tv_leak = k.row_leak;
  check_leak(k, opts);
  return k;
}

KernelOp dirac_kernel(GridPtr grid) {
  const int n = grid->size();
  return {grid, RowMat::Identity(n, n), Vec::Zero(n), Vec::Zero(n), 1.0, false};
}

KernelOp dirac_kernel(GridPtr grid, const std::vector<Vec>& points) {
  const int n = grid->size();
  if (static_cast<int>(points.size()) != n) throw InvalidArgument("one point per node required");
  KernelOp k{grid, RowMat::Zero(n, n), Vec::Zero(n), Vec::Zero(n), 1.0, false};
  for (int i = 0; i < n; ++i) {
    if (auto cell = grid->locate(points[i])) {
      k.weights(i, *cell) = 1.0;
    } else {
      k.row_leak[i] = k.row_tv_leak[i] = 1.0;
    }
  }
  return k;
}

GridFunction apply(const KernelOp& k, const GridFunction& f) {
  require_same_grid(*k.grid, *f.grid);
  GridFunction out{k.grid, k.weights * f.values, 0.0};
  out.sup_bound = k.max_row_tv() * f.sup_bound;
  return out;
}

KernelOp compose(const KernelOp& k1, const KernelOp& k2) {
  detail::FlushDenormals guard;
  require_same_grid(*k1.grid, *k2.grid);
  KernelOp out;
  out.grid = k1.grid;
  out.weights.noalias() = k1.weights * k2.weights;
  out.row_leak = k1.weights * k2.row_leak + k2.cemetery * k1.row_leak;
  out.row_tv_leak =
      k1.weights.cwiseAbs() * k2.row_tv_leak + std::abs(k2.cemetery) * k1.row_tv_leak;
  out.cemetery = k1.cemetery * k2.cemetery;
  out.is_signed = k1.is_signed || k2.is_signed;
  return out;
}

double tv_row_distance(const KernelOp& k, int i, int j) {
  return (k.weights.row(i) - k.weights.row(j)).cwiseAbs().sum() +
         std::abs(k.row_leak[i] - k.row_leak[j]);
}

Box default_box(const OUModel& model, double drift_sup, double horizon) {
  double var = 0.0;
  double shift = 0.0;
  if (is_stable(model)) {
    var = CameronMartin(stationary_covariance(model)).eigvals()[0];
    shift = model.A.inverse().operatorNorm() * drift_sup;
  } else {
    var = CameronMartin(gramian(model, horizon)).eigvals()[0];
    shift = horizon * drift_sup;
  }
  const double w = 6.0 * std::sqrt(var) + shift;
  return {std::vector<double>(model.dim(), -w), std::vector<double>(model.dim(), w)};
}

void export_csv(const KernelOp& k, std::ostream& os) {
  const Grid& g = *k.grid;
  os << "# dim=" << g.dim();
  for (int d = 0; d < g.dim(); ++d) {
    os << " lo" << d << "=" << g.lo(d) << " hi" << d << "=" << g.hi(d) << " counts" << d
       << "=" << g.count(d);
  }
  os << " signed=" << (k.is_signed ? 1 : 0) << "\n";
  for (int j = 0; j < g.size(); ++j) os << "c" << j << ",";
  os << "leak\n";
  os << std::setprecision(17);
  for (int i = 0; i < g.size(); ++i) {
    for (int j = 0; j < g.size(); ++j) os << k.weights(i, j) << ",";
    os << k.row_leak[i] << "\n";
  }
}

}  // namespace feller
