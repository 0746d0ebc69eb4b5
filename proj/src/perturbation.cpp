#include "feller/perturbation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "feller/errors.hpp"
#include "feller/gaussian.hpp"
#include "denormals.hpp"

namespace feller {

namespace {

KernelOp zero_kernel(GridPtr grid, double cemetery, bool is_signed) {
  const int n = grid->size();
  return {std::move(grid), RowMat::Zero(n, n), Vec::Zero(n), Vec::Zero(n), cemetery, is_signed};
}

// acc += w · k
void axpy(KernelOp& acc, double w, const KernelOp& k) {
  acc.weights += w * k.weights;
  acc.row_leak += w * k.row_leak;
  acc.row_tv_leak += std::abs(w) * k.row_tv_leak;
  acc.cemetery += w * k.cemetery;
  acc.is_signed = acc.is_signed || k.is_signed || w < 0.0;
}

KernelOp sum(const KernelOp& a, const KernelOp& b) {
  KernelOp out = a;
  axpy(out, 1.0, b);
  return out;
}

// Operator ∞-norm of a − b on B_b, including the outside state.
double op_distance(const KernelOp& a, const KernelOp& b) {
  return ((a.weights - b.weights).cwiseAbs().rowwise().sum() +
          (a.row_leak - b.row_leak).cwiseAbs())
      .maxCoeff();
}

double sup_abs(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

double normal_pdf(double y, double mu, double sigma) {
  const double z = (y - mu) / sigma;
  return 0.39894228040143267794 / sigma * std::exp(-0.5 * z * z);
}

KernelOp bt_cell_averaged(const Mat& s, const Mat& q, const DriftField& drift, GridPtr grid) {
  const Grid& g = *grid;
  const int n = g.size();
  KernelOp k = zero_kernel(grid, 0.0, true);
  Eigen::RowVectorXd plus(n), minus(n);
  for (int i = 0; i < n; ++i) {
    const Vec x = g.node(i);
    const Vec f = drift(x);
    for (int d = 0; d < g.dim(); ++d) {
      if (f[d] == 0.0) continue;
      const double h = g.spacing(d);
      Vec shift = Vec::Zero(g.dim());
      shift[d] = 0.5 * h;
      double lp = 0.0, lm = 0.0;
      gaussian_cell_masses(g, s * (x + shift), q, plus, lp);
      gaussian_cell_masses(g, s * (x - shift), q, minus, lm);
      const double c = f[d] / h;
      k.weights.row(i) += c * (plus - minus);
      k.row_leak[i] += c * (lp - lm);
      k.row_tv_leak[i] += std::abs(c) * (lp + lm);
    }
  }
  return k;
}

KernelOp bt_nodal(const Mat& s, const Mat& q, const DriftField& drift, GridPtr grid) {
  const Grid& g = *grid;
  if (g.dim() != 1) throw UnsupportedDim("nodal Paley–Wiener rule is implemented for 1-D grids");
  const int n = g.size();
  KernelOp k = zero_kernel(grid, 0.0, true);
  const double sigma = std::sqrt(q(0, 0));
  const double h = g.spacing(0);
  for (int i = 0; i < n; ++i) {
    const double x = g.node(i)[0];
    const double shift = s(0, 0) * drift(g.node(i))[0];
    if (shift == 0.0) continue;
    const double mu = s(0, 0) * x;
    double p_prev = normal_pdf(g.lo(0), mu, sigma);
    const double p_lo = p_prev;
    for (int j = 0; j < n; ++j) {
      const double p = normal_pdf(g.lo(0) + (j + 1) * h, mu, sigma);
      k.weights(i, j) = shift * (p_prev - p);
      p_prev = p;
    }
    k.row_leak[i] = shift * (p_prev - p_lo);
    k.row_tv_leak[i] = std::abs(shift) * (p_prev + p_lo);
  }
  return k;
}

double phi_integral_impl(const OUModel& model, double sup, double t, int q) {
  const Rule rule = sqrt_substituted(q, t);
  return sup * rule.integrate([&](double s) { return phi_bound(model, s); });
}

T0Choice choose_t0_for_sup(const OUModel& model, double sup, double target_rho, int q,
                           double t_max) {
  if (!(target_rho > 0.0 && target_rho < 1.0)) {
    throw InvalidArgument("target rho must lie in (0, 1)");
  }
  if (sup == 0.0) return {t_max, 0.0, volterra_nodes(t_max, q)};
  (void)sf_norm(model, t_max);  // a model that is not strong Feller at all propagates
  for (double t = t_max; t >= 1e-6; t *= 0.5) {
    double coarse = 0.0, fine = 0.0;
    try {
      coarse = phi_integral_impl(model, sup, t, q);
      fine = phi_integral_impl(model, sup, t, 2 * q);
    } catch (const NotStrongFeller&) {
      // Q_s loses numerical rank near 0: φ blows up too fast to integrate.
      continue;
    }
    const bool converged = std::abs(fine - coarse) <= 1e-8 * std::max(fine, 1e-300);
    if (converged && fine <= target_rho) return {t, fine, volterra_nodes(t, q)};
  }
  throw NoContraction("no t0 >= 1e-6 with converged integral of phi below target; "
                      "phi is not locally integrable");
}

}  // namespace

// ---------------------------------------------------------------------------

DriftField::DriftField(Fn fn, double sup, std::string label)
    : fn_(std::move(fn)), sup_(sup), label_(std::move(label)) {
  if (!(sup_ >= 0.0) || !std::isfinite(sup_)) throw InvalidArgument("drift bound must be finite");
}

void DriftField::check_on(const Grid& grid) const {
  for (int i = 0; i < grid.size(); ++i) {
    const Vec v = fn_(grid.node(i));
    if (v.size() != grid.dim()) throw GridMismatch("drift dimension differs from grid");
    if (v.norm() > sup_ * (1.0 + 1e-12) + 1e-300) {
      throw InvalidArgument("drift '" + label_ + "' exceeds its declared bound at node " +
                            std::to_string(i));
    }
  }
}

DriftField DriftField::zero(int dim) {
  return {[dim](const Vec&) { return Vec::Zero(dim); }, 0.0, "zero"};
}

DriftField DriftField::constant(Vec c) {
  const double sup = c.norm();
  return {[c](const Vec&) { return c; }, sup, "constant"};
}

DriftField DriftField::clipped_linear(Mat k, double clip) {
  if (!(clip > 0.0)) throw InvalidArgument("clip must be positive");
  const double sup = clip * std::sqrt(static_cast<double>(k.rows()));
  return {[k, clip](const Vec& x) -> Vec { return (k * x).cwiseMax(-clip).cwiseMin(clip); },
          sup, "clipped-linear"};
}

DriftField DriftField::sign(double scale, int dim) {
  const double sup = std::abs(scale) * std::sqrt(static_cast<double>(dim));
  return {[scale](const Vec& x) -> Vec {
            return x.unaryExpr([scale](double v) {
              return v > 0.0 ? scale : (v < 0.0 ? -scale : 0.0);
            });
          },
          sup, "sign"};
}

DriftField DriftField::mollified_sign(double n, double scale, int dim) {
  const double sup = std::abs(scale) * std::sqrt(static_cast<double>(dim));
  return {[n, scale](const Vec& x) -> Vec {
            return x.unaryExpr([n, scale](double v) { return scale * std::tanh(n * v); });
          },
          sup, "tanh(" + std::to_string(static_cast<int>(n)) + "x)"};
}

// ---------------------------------------------------------------------------

double phi_bound(const OUModel& model, double s) { return sf_norm(model, s); }

KernelOp bt_kernel(const OUModel& model, const DriftField& drift, double s, GridPtr grid,
                   BtRule rule, const KernelOptions& opts) {
  if (!(s > 0.0)) throw InvalidArgument("bt_kernel needs s > 0");
  if (model.dim() != grid->dim()) throw GridMismatch("model and grid dimensions differ");
  if (drift.is_zero()) return zero_kernel(grid, 0.0, true);
  (void)phi_bound(model, s);  // NotStrongFeller on range failure
  const Mat sm = flow(model, s);
  const Mat q = gramian(model, s);
  KernelOp k = rule == BtRule::kCellAveraged ? bt_cell_averaged(sm, q, drift, grid)
                                             : bt_nodal(sm, q, drift, grid);
  const Grid& g = *grid;
  for (int i = 0; i < g.size(); ++i) {
    bool inner = true;
    const Vec x = g.node(i);
    for (int d = 0; d < g.dim(); ++d) {
      const double c = 0.5 * (g.lo(d) + g.hi(d));
      inner = inner && std::abs(x[d] - c) <= 0.25 * (g.hi(d) - g.lo(d));
    }
    if (inner && k.row_tv_leak[i] > opts.leak_tol) {
      throw ExcessLeak("signed row " + std::to_string(i) + " leaks " +
                       std::to_string(k.row_tv_leak[i]));
    }
  }
  return k;
}

VolterraNodes volterra_nodes(double t0, int q) {
  if (!(t0 > 0.0) || q < 2) throw InvalidArgument("volterra nodes need t0 > 0, q >= 2");
  const Rule gl = gauss_legendre(q, 0.0, std::sqrt(t0));
  VolterraNodes v;
  v.t0 = t0;
  v.u = gl.nodes;
  for (int j = 0; j < q; ++j) {
    v.s.push_back(gl.nodes[j] * gl.nodes[j]);
    v.weights.push_back(2.0 * gl.nodes[j] * gl.weights[j]);
  }
  return v;
}

double phi_integral(const OUModel& model, double drift_sup, double t, int q) {
  if (!(t > 0.0)) return 0.0;
  return phi_integral_impl(model, drift_sup, t, q);
}

T0Choice choose_t0(const OUModel& model, const DriftField& drift, double target_rho, int q,
                   double t_max) {
  return choose_t0_for_sup(model, drift.sup(), target_rho, q, t_max);
}

// ---------------------------------------------------------------------------

VolterraOperator::VolterraOperator(VolterraNodes nodes, std::vector<KernelOp> bt)
    : nodes_(std::move(nodes)), bt_(std::move(bt)) {
  const int q = nodes_.size();
  if (static_cast<int>(bt_.size()) != q) throw InvalidArgument("one B T kernel per node");
  const auto& u = nodes_.u;
  // Interpolation cells for the family: [0, u_0/2) is the identity.
  edges_.resize(q);
  edges_[0] = 0.5 * u[0];
  for (int j = 1; j < q; ++j) edges_[j] = 0.5 * (u[j - 1] + u[j]);
  // Integration cells in u for the product rule.
  std::vector<double> cells(q + 1);
  cells[0] = 0.0;
  for (int j = 1; j < q; ++j) cells[j] = 0.5 * (u[j - 1] + u[j]);
  cells[q] = std::sqrt(nodes_.t0);

  groups_.resize(q + 1);
  for (int target = 0; target <= q; ++target) {
    std::map<int, std::vector<std::pair<int, double>>> by_index;
    const double s = target < q ? nodes_.s[target] : nodes_.t0;
    const int last = target < q ? target : q - 1;
    for (int j = 0; j <= last; ++j) {
      double w;
      if (target == q) {
        w = nodes_.weights[j];
      } else if (j < target) {
        w = cells[j + 1] * cells[j + 1] - cells[j] * cells[j];
      } else {
        w = u[j] * u[j] - cells[j] * cells[j];
      }
      const double lag = std::sqrt(std::max(s - nodes_.s[j], 0.0));
      by_index[interp_index(lag)].emplace_back(j, w);
    }
    for (auto& [idx, terms] : by_index) groups_[target].push_back({idx, std::move(terms)});
  }
}

int VolterraOperator::interp_index(double u) const {
  if (u < edges_[0]) return -1;
  return static_cast<int>(std::upper_bound(edges_.begin(), edges_.end(), u) - edges_.begin()) -
         1;
}

std::vector<KernelOp> VolterraOperator::apply(const std::vector<KernelOp>& family) const {
  detail::FlushDenormals guard;
  if (static_cast<int>(family.size()) != targets()) {
    throw InvalidArgument("family needs one kernel per target");
  }
  const GridPtr& grid = family.front().grid;
  std::vector<KernelOp> out;
  out.reserve(targets());
  for (int target = 0; target < targets(); ++target) {
    KernelOp acc = zero_kernel(grid, 0.0, true);
    for (const auto& group : groups_[target]) {
      KernelOp bsum = zero_kernel(grid, 0.0, true);
      for (const auto& [j, w] : group.terms) axpy(bsum, w, bt_[j]);
      if (group.family_index < 0) {
        axpy(acc, 1.0, bsum);
      } else {
        axpy(acc, 1.0, compose(family[group.family_index], bsum));
      }
    }
    out.push_back(std::move(acc));
  }
  return out;
}

Vec VolterraOperator::apply_to(const std::vector<KernelOp>& family, int target,
                               const Vec& f) const {
  Vec acc = Vec::Zero(f.size());
  for (const auto& group : groups_[target]) {
    Vec bf = Vec::Zero(f.size());
    for (const auto& [j, w] : group.terms) bf += w * (bt_[j].weights * f);
    acc += group.family_index < 0 ? bf : Vec(family[group.family_index].weights * bf);
  }
  return acc;
}

double VolterraOperator::weighted_sum(const std::vector<double>& per_node) const {
  double best = 0.0;
  for (const auto& target : groups_) {
    double acc = 0.0;
    for (const auto& group : target) {
      for (const auto& [j, w] : group.terms) acc += w * per_node[j];
    }
    best = std::max(best, acc);
  }
  return best;
}

// ---------------------------------------------------------------------------

PerturbedSemigroup::PerturbedSemigroup(OUModel model, DriftField drift, GridPtr grid,
                                       VolterraOperator volterra, std::vector<KernelOp> ou,
                                       std::vector<KernelOp> family, IterationReport report)
    : model_(std::move(model)),
      drift_(std::move(drift)),
      grid_(std::move(grid)),
      volterra_(std::move(volterra)),
      ou_(std::move(ou)),
      family_(std::move(family)),
      report_(std::move(report)) {}

PerturbedSemigroup::Split PerturbedSemigroup::split(double t) const {
  if (t < 0.0) throw InvalidArgument("P(t) needs t >= 0");
  const double t0 = this->t0();
  int k = static_cast<int>(std::floor(t / t0));
  double rest = t - k * t0;
  if (rest >= t0 * (1.0 - 1e-12)) {
    ++k;
    rest = 0.0;
  }
  if (rest <= 1e-12 * t0) rest = 0.0;
  return {k, rest};
}

Vec PerturbedSemigroup::apply_short(double t1, const Vec& f) const {
  if (t1 == 0.0) return f;
  const auto& s = nodes().s;
  const auto it = std::upper_bound(s.begin(), s.end(), t1 * (1.0 + 1e-12));
  if (it == s.begin()) return build_ou_kernel(model_, t1, grid_).weights * f;
  const int j = static_cast<int>(it - s.begin()) - 1;
  const double remainder = t1 - s[j];
  if (remainder <= 1e-12 * t1) return family_[j].weights * f;
  const Vec tf = build_ou_kernel(model_, remainder, grid_).weights * f;
  return family_[j].weights * tf;
}

Vec PerturbedSemigroup::leak_short(double t1) const {
  const int n = grid_->size();
  if (t1 == 0.0) return Vec::Zero(n);
  const auto& s = nodes().s;
  const auto it = std::upper_bound(s.begin(), s.end(), t1 * (1.0 + 1e-12));
  if (it == s.begin()) return build_ou_kernel(model_, t1, grid_).row_leak;
  const int j = static_cast<int>(it - s.begin()) - 1;
  const double remainder = t1 - s[j];
  if (remainder <= 1e-12 * t1) return family_[j].row_leak;
  const KernelOp tk = build_ou_kernel(model_, remainder, grid_);
  return family_[j].weights * tk.row_leak + tk.cemetery * family_[j].row_leak;
}

GridFunction PerturbedSemigroup::apply(double t, const GridFunction& f) const {
  detail::FlushDenormals guard;
  require_same_grid(*grid_, *f.grid);
  const Split sp = split(t);
  Vec g = apply_short(sp.rest, f.values);
  const KernelOp& p0 = at_t0();
  double bound = f.sup_bound;
  if (sp.rest > 0.0) bound *= std::max(1.0, family_.front().max_row_tv());
  const double tv0 = p0.max_row_tv();
  for (int k = 0; k < sp.periods; ++k) {
    g = p0.weights * g;
    bound *= tv0;
  }
  return {grid_, std::move(g), std::max(bound, 0.0)};
}

Vec PerturbedSemigroup::leak(double t) const {
  detail::FlushDenormals guard;
  const Split sp = split(t);
  Vec l = leak_short(sp.rest);
  const KernelOp& p0 = at_t0();
  for (int k = 0; k < sp.periods; ++k) l = p0.weights * l + p0.row_leak;
  return l;
}

std::vector<double> PerturbedSemigroup::residual(const GridFunction& f) const {
  detail::FlushDenormals guard;
  require_same_grid(*grid_, *f.grid);
  const double scale = std::max(sup_abs(f.values), 1e-300);
  std::vector<double> out;
  for (int target = 0; target < volterra_.targets(); ++target) {
    const Vec r = family_[target].weights * f.values - ou_[target].weights * f.values -
                  volterra_.apply_to(family_, target, f.values);
    out.push_back(sup_abs(r) / scale);
  }
  return out;
}

double PerturbedSemigroup::max_residual() const {
  double worst = 0.0;
  for (const auto& [name, fn] : default_test_family(grid_->dim())) {
    const auto r = residual(GridFunction::sample(grid_, fn));
    worst = std::max(worst, *std::max_element(r.begin(), r.end()));
  }
  return worst;
}

std::vector<std::pair<std::string, ScalarField>> default_test_family(int dim) {
  (void)dim;
  return {
      {"one", [](const Vec&) { return 1.0; }},
      {"coordinate", [](const Vec& y) { return y[0]; }},
      {"indicator_positive", [](const Vec& y) { return y[0] > 0.0 ? 1.0 : 0.0; }},
      {"gaussian_bump", [](const Vec& y) { return std::exp(-y.squaredNorm()); }},
      {"cosine", [](const Vec& y) { return std::cos(y[0]); }},
  };
}

PerturbedSemigroup solve_perturbed(const OUModel& model, const DriftField& drift, GridPtr grid,
                                   double t0, const SolveOptions& opts) {
  if (model.dim() != grid->dim()) throw GridMismatch("model and grid dimensions differ");
  drift.check_on(*grid);
  VolterraNodes nodes = volterra_nodes(t0, opts.nodes);
  const int q = nodes.size();

  std::vector<KernelOp> ou;
  ou.reserve(q + 1);
  for (int j = 0; j < q; ++j) ou.push_back(build_ou_kernel(model, nodes.s[j], grid, opts.kernel));
  ou.push_back(build_ou_kernel(model, t0, grid, opts.kernel));

  std::vector<KernelOp> bt;
  std::vector<double> phi;
  bt.reserve(q);
  for (int j = 0; j < q; ++j) {
    bt.push_back(bt_kernel(model, drift, nodes.s[j], grid, opts.rule, opts.kernel));
    phi.push_back(drift.is_zero() ? 0.0 : phi_bound(model, nodes.s[j]) * drift.sup());
  }
  VolterraOperator volterra(std::move(nodes), std::move(bt));

  IterationReport report;
  report.rho = volterra.weighted_sum(phi);
  if (report.rho >= 1.0) {
    throw NoContraction("discrete contraction bound rho = " + std::to_string(report.rho));
  }

  std::vector<KernelOp> family = ou;
  bool converged = false;
  for (int iter = 1; iter <= opts.max_iter; ++iter) {
    std::vector<KernelOp> vf = volterra.apply(family);
    double change = 0.0, scale = 0.0;
    for (int target = 0; target <= q; ++target) {
      KernelOp next = sum(ou[target], vf[target]);
      next.is_signed = false;
      change = std::max(change, op_distance(next, family[target]));
      scale = std::max(scale, next.max_row_tv());
      family[target] = std::move(next);
    }
    report.change_history.push_back(change);
    report.iterations = iter;
    report.final_change = change;
    if (change <= opts.tol * std::max(scale, 1.0)) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw NotConverged("Picard iteration did not reach tol " + std::to_string(opts.tol),
                       report.iterations);
  }
  PerturbedSemigroup ps(model, drift, std::move(grid), std::move(volterra), std::move(ou),
                        std::move(family), report);
  IterationReport final_report = report;
  final_report.residual = ps.max_residual();
  return PerturbedSemigroup(ps.model(), ps.drift(), ps.grid(), ps.volterra(), ps.ou_kernels(),
                            ps.family(), final_report);
}

GridFunction pt_apply(const PerturbedSemigroup& ps, double t, const GridFunction& f) {
  return ps.apply(t, f);
}

// ---------------------------------------------------------------------------

LaplaceKernel br_lambda(const OUModel& model, const DriftField& drift, double lambda,
                        GridPtr grid, int per_panel, int panels, BtRule rule) {
  detail::FlushDenormals guard;
  const Rule lr = laplace_rule(lambda, per_panel, panels);
  LaplaceKernel out{zero_kernel(grid, 0.0, true), 0.0, 0.0, true};
  if (drift.is_zero()) return out;
  for (std::size_t i = 0; i < lr.size(); ++i) {
    axpy(out.kernel, lr.weights[i], bt_kernel(model, drift, lr.nodes[i], grid, rule));
    out.phi_bound += lr.weights[i] * phi_bound(model, lr.nodes[i]) * drift.sup();
  }
  out.norm = out.kernel.max_row_tv();
  out.contraction = out.norm < 1.0;
  return out;
}

KernelOp ou_resolvent(const OUModel& model, double lambda, GridPtr grid, int per_panel,
                      int panels) {
  detail::FlushDenormals guard;
  const Rule lr = laplace_rule(lambda, per_panel, panels);
  KernelOp acc = zero_kernel(grid, 0.0, false);
  for (std::size_t i = 0; i < lr.size(); ++i) {
    axpy(acc, lr.weights[i], build_ou_kernel(model, lr.nodes[i], grid));
  }
  acc.is_signed = false;
  return acc;
}

std::vector<int> core_nodes(const Grid& grid) {
  std::vector<int> out;
  for (int i = 0; i < grid.size(); ++i) {
    const Vec x = grid.node(i);
    bool inner = true;
    for (int d = 0; d < grid.dim(); ++d) {
      const double c = 0.5 * (grid.lo(d) + grid.hi(d));
      inner = inner && std::abs(x[d] - c) <= 0.25 * (grid.hi(d) - grid.lo(d));
    }
    if (inner) out.push_back(i);
  }
  return out;
}

double core_sup_diff(const Grid& grid, const Vec& a, const Vec& b) {
  double worst = 0.0;
  for (int i : core_nodes(grid)) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

ResolventCheck resolvent_check(const PerturbedSemigroup& ps, double lambda,
                               const GridFunction& f, int per_panel, int panels) {
  detail::FlushDenormals guard;
  const GridPtr& grid = ps.grid();
  require_same_grid(*grid, *f.grid);
  ResolventCheck out;

  // Left side: one period by the node rule, then the geometric sum over
  // periods, i.e. quadrature at t = k t0 + s_j.
  const auto& nodes = ps.nodes();
  Vec period = Vec::Zero(grid->size());
  for (int j = 0; j < nodes.size(); ++j) {
    period += nodes.weights[j] * std::exp(-lambda * nodes.s[j]) *
              (ps.family()[j].weights * f.values);
  }
  Vec lhs = period;
  Vec term = period;
  const double decay = std::exp(-lambda * ps.t0());
  double factor = 1.0;
  while (factor > 1e-16) {
    term = ps.at_t0().weights * term;
    factor *= decay;
    lhs += factor * term;
  }
  out.lhs = lhs;

  const LaplaceKernel br = br_lambda(ps.model(), ps.drift(), lambda, grid, per_panel, panels);
  out.br_norm = br.norm;
  Vec g = f.values;
  bool converged = false;
  for (int k = 1; k <= 2000; ++k) {
    Vec next = f.values + br.kernel.weights * g;
    const double change = sup_abs(next - g);
    g = std::move(next);
    out.neumann_terms = k;
    if (change <= 1e-15 * std::max(sup_abs(g), 1e-300)) {
      converged = true;
      break;
    }
  }
  if (!converged) throw NoContraction("Neumann series for (I - BR(lambda))^{-1} diverges");
  out.rhs = ou_resolvent(ps.model(), lambda, grid, per_panel, panels).weights * g;
  out.residual = core_sup_diff(*grid, out.lhs, out.rhs);
  return out;
}

std::vector<StabilityRow> drift_stability(const OUModel& model,
                                          const std::vector<DriftField>& seq,
                                          const DriftField& limit, GridPtr grid, double t,
                                          const ScalarField& f, const SolveOptions& opts) {
  double sup = limit.sup();
  for (const auto& d : seq) sup = std::max(sup, d.sup());
  const T0Choice choice = choose_t0_for_sup(model, sup, 0.5, opts.nodes, 1.0);
  const GridFunction fg = GridFunction::sample(grid, f);
  const Vec reference =
      solve_perturbed(model, limit, grid, choice.t0, opts).apply(t, fg).values;
  std::vector<StabilityRow> rows;
  for (const auto& d : seq) {
    const Vec v = solve_perturbed(model, d, grid, choice.t0, opts).apply(t, fg).values;
    rows.push_back({d.label(), sup_abs(v - reference)});
  }
  return rows;
}

}  // namespace feller
