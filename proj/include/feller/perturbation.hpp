#pragma once

#include <functional>
#include <string>
#include <vector>

#include "feller/grid.hpp"
#include "feller/ou_model.hpp"
#include "feller/quadrature.hpp"

namespace feller {

/// Bounded measurable drift F : R^m -> R^m with a declared bound on ‖F(x)‖.
class DriftField {
 public:
  using Fn = std::function<Vec(const Vec&)>;

  DriftField(Fn fn, double sup, std::string label);

  Vec operator()(const Vec& x) const { return fn_(x); }
  double sup() const { return sup_; }
  const std::string& label() const { return label_; }
  bool is_zero() const { return sup_ == 0.0; }

  /// Throws InvalidArgument if ‖F(x)‖ exceeds the declared bound at a node.
  void check_on(const Grid& grid) const;

  static DriftField zero(int dim);
  static DriftField constant(Vec c);
  /// x ↦ Kx clipped componentwise to [-clip, clip].
  static DriftField clipped_linear(Mat k, double clip);
  /// x ↦ scale · sign(x) componentwise (sign(0) = 0).
  static DriftField sign(double scale, int dim = 1);
  /// x ↦ scale · tanh(n x) componentwise; converges pointwise to sign.
  static DriftField mollified_sign(double n, double scale, int dim = 1);

 private:
  Fn fn_;
  double sup_;
  std::string label_;
};

enum class BtRule {
  /// Row i is the start-cell average of the Paley–Wiener weighted cell
  /// masses, i.e. F(x_i)·(M(x_i + h/2) − M(x_i − h/2))/h per axis, where M(x)
  /// are the cell masses of N(S(s)x, Q_s). Consistent for all s > 0.
  kCellAveraged,
  /// Row i integrates φ_{S(s)F(x_i)}(y − S(s)x_i) against N(S(s)x_i, Q_s) on
  /// each cell, in closed form (1-D only). Loses the drift once the kernel
  /// width drops below the cell size.
  kNodalWeight,
};

/// Signed kernel of B T_ou(s), Bf = ⟨F, Df⟩. Rows sum (with leak) to zero.
/// Throws NotStrongFeller, ExcessLeak.
KernelOp bt_kernel(const OUModel& model, const DriftField& drift, double s, GridPtr grid,
                   BtRule rule = BtRule::kCellAveraged, const KernelOptions& opts = {});

/// φ(s) bounding ‖B T_ou(s)‖ per unit ‖F‖_∞.
double phi_bound(const OUModel& model, double s);

/// Time nodes of the Volterra family on (0, t0]: u Gauss–Legendre on
/// [0, sqrt(t0)], s = u². The family is piecewise constant in u.
struct VolterraNodes {
  double t0 = 0.0;
  std::vector<double> u;
  std::vector<double> s;
  std::vector<double> weights;  // ∫_0^{t0} g ≈ Σ w_j g(s_j); Σ w_j = t0

  int size() const { return static_cast<int>(s.size()); }
};

VolterraNodes volterra_nodes(double t0, int q);

/// ∫_0^t φ(s) ds · sup with the square-root substitution (q nodes).
double phi_integral(const OUModel& model, double drift_sup, double t, int q);

struct T0Choice {
  double t0 = 0.0;
  double rho = 0.0;  // ∫_0^{t0} φ ‖F‖_∞
  VolterraNodes nodes;
};

/// Largest dyadic t0 = t_max 2^{-j} with ∫_0^{t0} φ ‖F‖_∞ ≤ target_rho, the
/// integral converged under node doubling. Throws NoContraction below 1e-6.
T0Choice choose_t0(const OUModel& model, const DriftField& drift, double target_rho = 0.5,
                   int q = 16, double t_max = 1.0);

/// The Volterra operator [𝔙𝓕](s) = ∫_0^s 𝓕(s − r) B T(r) dr on the node set.
/// Targets 0..q−1 are the nodes s_j (piecewise-constant product rule in u);
/// target q is t0 itself (full Gauss–Legendre rule). 𝓕(s − r) is taken from
/// the node whose u-cell contains sqrt(s − r); the cell around u = 0 maps to
/// the identity.
class VolterraOperator {
 public:
  VolterraOperator(VolterraNodes nodes, std::vector<KernelOp> bt);

  int targets() const { return nodes_.size() + 1; }
  const VolterraNodes& nodes() const { return nodes_; }
  const std::vector<KernelOp>& bt() const { return bt_; }

  /// 𝔙 applied to a family with one kernel per target.
  std::vector<KernelOp> apply(const std::vector<KernelOp>& family) const;

  /// ([𝔙𝓕](s_target)) f.
  Vec apply_to(const std::vector<KernelOp>& family, int target, const Vec& f) const;

  /// max over targets of Σ_j w_j(target) · bound_j.
  double weighted_sum(const std::vector<double>& per_node) const;

  /// Per target: (family index, [(bt index, weight)]); index −1 is identity.
  struct Group {
    int family_index;
    std::vector<std::pair<int, double>> terms;
  };
  const std::vector<std::vector<Group>>& groups() const { return groups_; }

 private:
  int interp_index(double u) const;

  VolterraNodes nodes_;
  std::vector<KernelOp> bt_;
  std::vector<double> edges_;
  std::vector<std::vector<Group>> groups_;
};

struct SolveOptions {
  double tol = 1e-10;
  int max_iter = 200;
  int nodes = 16;
  BtRule rule = BtRule::kCellAveraged;
  KernelOptions kernel;
};

struct IterationReport {
  double rho = 0.0;
  int iterations = 0;
  double final_change = 0.0;
  double residual = 0.0;  // fixed-point residual on the default test family
  std::vector<double> change_history;
};

/// Fixed point P of P(s) = T(s) + [𝔙P](s) on (0, t0], extended to all t ≥ 0
/// by P(k t0 + t1) = P(t0)^k P(t1).
class PerturbedSemigroup {
 public:
  PerturbedSemigroup(OUModel model, DriftField drift, GridPtr grid, VolterraOperator volterra,
                     std::vector<KernelOp> ou, std::vector<KernelOp> family,
                     IterationReport report);

  const OUModel& model() const { return model_; }
  const DriftField& drift() const { return drift_; }
  const GridPtr& grid() const { return grid_; }
  double t0() const { return volterra_.nodes().t0; }
  const VolterraNodes& nodes() const { return volterra_.nodes(); }
  const VolterraOperator& volterra() const { return volterra_; }
  const IterationReport& report() const { return report_; }

  /// Kernels at targets 0..q (q is t0).
  const std::vector<KernelOp>& family() const { return family_; }
  const std::vector<KernelOp>& ou_kernels() const { return ou_; }
  const KernelOp& at_t0() const { return family_.back(); }

  /// P(t) f.
  GridFunction apply(double t, const GridFunction& f) const;

  /// Tracked mass outside the box for P(t), row by row.
  Vec leak(double t) const;

  /// Per target: sup |P f − T f − [𝔙P] f| / max(sup|f|, 1e-300).
  std::vector<double> residual(const GridFunction& f) const;

  /// Max over targets and the default test family.
  double max_residual() const;

 private:
  struct Split {
    int periods;
    double rest;
  };
  Split split(double t) const;
  Vec apply_short(double t1, const Vec& f) const;
  Vec leak_short(double t1) const;

  OUModel model_;
  DriftField drift_;
  GridPtr grid_;
  VolterraOperator volterra_;
  std::vector<KernelOp> ou_;
  std::vector<KernelOp> family_;
  IterationReport report_;
};

/// The five bounded test functions used for residual checks.
std::vector<std::pair<std::string, ScalarField>> default_test_family(int dim);

/// Throws NoContraction (ρ ≥ 1), NotConverged.
PerturbedSemigroup solve_perturbed(const OUModel& model, const DriftField& drift, GridPtr grid,
                                   double t0, const SolveOptions& opts = {});

GridFunction pt_apply(const PerturbedSemigroup& ps, double t, const GridFunction& f);

struct LaplaceKernel {
  KernelOp kernel;
  double norm = 0.0;        // max row TV
  double phi_bound = 0.0;   // ∫ e^{−λt} φ(t) dt ‖F‖_∞ by the same rule
  bool contraction = true;  // norm < 1
};

/// B R(λ) = ∫_0^∞ e^{−λt} B T(t) dt by the Laplace rule.
LaplaceKernel br_lambda(const OUModel& model, const DriftField& drift, double lambda,
                        GridPtr grid, int per_panel = 8, int panels = 10,
                        BtRule rule = BtRule::kCellAveraged);

/// R_ou(λ) = ∫_0^∞ e^{−λt} T_ou(t) dt by the Laplace rule.
KernelOp ou_resolvent(const OUModel& model, double lambda, GridPtr grid, int per_panel = 8,
                      int panels = 10);

struct ResolventCheck {
  double residual = 0.0;  // sup over the inner half of the box
  Vec lhs;                // ∫ e^{−λt} P(t) f dt
  Vec rhs;                // R(λ)(I − BR(λ))^{-1} f
  double br_norm = 0.0;
  int neumann_terms = 0;
};

/// Compares the Laplace transform of P with R(λ)(I − BR(λ))^{-1} f.
ResolventCheck resolvent_check(const PerturbedSemigroup& ps, double lambda,
                               const GridFunction& f, int per_panel = 8, int panels = 10);

/// Nodes in the inner half of the box, where truncation effects are negligible.
std::vector<int> core_nodes(const Grid& grid);

/// sup over the core nodes of |a − b|.
double core_sup_diff(const Grid& grid, const Vec& a, const Vec& b);

struct StabilityRow {
  std::string label;
  double gap = 0.0;
};

/// Solves P_n for each drift and reports max_nodes |P_n(t) f − P(t) f|, all
/// solves sharing one t0 chosen for the largest bound.
std::vector<StabilityRow> drift_stability(const OUModel& model,
                                          const std::vector<DriftField>& seq,
                                          const DriftField& limit, GridPtr grid, double t,
                                          const ScalarField& f, const SolveOptions& opts = {});

}  // namespace feller
