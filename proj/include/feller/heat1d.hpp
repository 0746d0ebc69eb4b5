#pragma once

#include <functional>
#include <string>
#include <vector>

#include "feller/rng.hpp"
#include "feller/sde_mc.hpp"
#include "feller/types.hpp"

namespace feller {

/// du = (a u_xx + g(u)) dt + A^{-alpha} dW on (0, 1) with Dirichlet ends, in
/// the sine basis e_k(x) = sqrt(2) sin(kπx), k = 1..N.
struct SpectralHeatModel {
  int N = 64;
  double a = 1.0;
  double alpha = 0.0;

  /// Throws InvalidArgument unless N >= 1, a > 0, alpha >= 0.
  SpectralHeatModel(int n, double a = 1.0, double alpha = 0.0);

  /// λ_k = a (kπ)², k = 1..N.
  double lambda(int k) const;
  Vec eigenvalues() const;
};

using SpectralState = Vec;

/// sup_k e^{-λ_k t} λ_k^α sqrt(2λ_k / (1 − e^{-2λ_k t})).
double heat_sf_norm(const SpectralHeatModel& model, double t);

struct HypCheck {
  double i1 = 0.0;          // ∫_0^T heat_sf_norm
  double i2 = 0.0;          // ∫_0^T e^{-2λ_1 t}
  double i1_doubled = 0.0;  // I1 with 2N modes
  bool stable_under_n = false;
  int nodes = 0;            // Gauss–Legendre nodes in u = sqrt(t)
};

/// Both integrals with the s = u² substitution, nodes doubled until they agree
/// to 1e-12 relative. Throws QuadratureDiverged past 4096 nodes.
HypCheck hyp_check(const SpectralHeatModel& model, double horizon);

/// Type-I sine pair on M interior points x_j = j/(M+1):
/// synthesis v_j = Σ_k u_k sqrt(2) sin(kπx_j), analysis its inverse for N <= M.
class SineTransform {
 public:
  SineTransform(int modes, int points);

  int modes() const { return static_cast<int>(basis_.cols()); }
  int points() const { return static_cast<int>(basis_.rows()); }
  Vec synthesis(const Vec& u) const { return basis_ * u; }
  Vec analysis(const Vec& v) const { return basis_.transpose() * v / (points() + 1.0); }
  Vec grid() const;

 private:
  Mat basis_;
};

/// Bounded scalar nonlinearity for the Nemytskii drift u ↦ g(u(·)).
struct ScalarDrift {
  std::function<double(double)> g;
  double sup = 0.0;
  std::string label;

  bool is_zero() const { return sup == 0.0; }

  static ScalarDrift zero();
  static ScalarDrift constant(double c);
  static ScalarDrift sign(double scale = 1.0);
  static ScalarDrift mollified_sign(double n, double scale = 1.0);
};

/// Exponential Euler per mode. The drift is projected through synthesis on
/// phys_n points, pointwise g, and analysis.
class HeatStepper {
 public:
  HeatStepper(const SpectralHeatModel& model, double dt, int phys_n);

  /// True when phys_n < 2N (aliasing of g∘u is likely).
  bool alias_risk() const { return alias_risk_; }
  const SineTransform& transform() const { return transform_; }

  void step(const ScalarDrift& g, SpectralState& u, Rng& rng) const;
  /// Same step with a caller-supplied standard normal vector.
  void step(const ScalarDrift& g, SpectralState& u, const Vec& xi) const;

  /// Mode-wise drift contribution ((1 − e^{-λdt})/λ) (g∘u)_k.
  Vec drift_increment(const ScalarDrift& g, const SpectralState& u) const;

 private:
  double dt_;
  Vec decay_;
  Vec drift_factor_;
  Vec noise_std_;
  SineTransform transform_;
  bool alias_risk_;
};

/// One step; writes an AliasRisk warning to std::clog when phys_n < 2N.
SpectralState heat_step(const SpectralHeatModel& model, const ScalarDrift& g,
                        const SpectralState& u, double dt, Rng& rng, int phys_n);

/// Diagonal of Q_∞: λ_k^{-2α} / (2λ_k).
Vec heat_invariant(const SpectralHeatModel& model);

struct HeatStationary {
  Vec mean;
  Vec mean_err;
  Mat cov;
  Mat cov_err;  // batch-means errors
  std::size_t samples = 0;
};

/// Time average of one path started at 0, after burn_in, with 20 batches.
HeatStationary heat_stationary(const SpectralHeatModel& model, const ScalarDrift& g,
                               const MCConfig& cfg, double burn_in, double horizon,
                               int phys_n = 0, int batches = 20);

/// Scalar observable of the state.
using HeatObservable = std::function<double(const SpectralState&)>;

struct HeatGapRow {
  std::string label;
  double estimate = 0.0;   // E f(u_n(t))
  double gap = 0.0;        // |E f(u_n(t)) − E f(u(t))|
  double gap_err = 0.0;    // standard error of the paired difference
};

/// Common random numbers: path p uses stream p for every drift.
std::vector<HeatGapRow> heat_drift_stability(const SpectralHeatModel& model,
                                             const std::vector<ScalarDrift>& seq,
                                             const ScalarDrift& limit, const HeatObservable& f,
                                             const SpectralState& u0, double t,
                                             const MCConfig& cfg, int phys_n = 0);

}  // namespace feller
