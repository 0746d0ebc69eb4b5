#pragma once

#include <map>
#include <mutex>
#include <span>
#include <vector>

#include "feller/gaussian.hpp"
#include "feller/types.hpp"

namespace feller {

/// The linear equation dX = AX dt + G dW on R^m with noise in R^n.
struct OUModel {
  Mat A;  // m x m
  Mat G;  // m x n

  OUModel() = default;
  OUModel(Mat a, Mat g);

  int dim() const { return static_cast<int>(A.rows()); }
  int noise_dim() const { return static_cast<int>(G.cols()); }

  static OUModel scalar(double a, double g);
};

/// S(t) = exp(tA). Scaling and squaring with a Padé core; S(0) = I exactly.
/// Throws Overflow for ‖tA‖ > 700.
Mat flow(const OUModel& model, double t);

/// M(t) = ∫_0^t S(r) dr, used by the exponential Euler scheme.
Mat flow_integral(const OUModel& model, double t);

enum class GramianRule { kGaussLegendre, kLyapunovOde };

struct GramianOptions {
  GramianRule rule = GramianRule::kGaussLegendre;
  int nodes = 8;        // initial Gauss–Legendre nodes per panel
  double step = 1e-3;   // RK4 step for the Lyapunov ODE route
};

/// Q_t = ∫_0^t S(s) G Gᵀ S(s)ᵀ ds. Gauss–Legendre with adaptive doubling on
/// panels of length ≤ 1/‖A‖, or RK4 on dQ/dt = AQ + QAᵀ + GGᵀ.
/// Throws QuadratureDiverged if refinement levels disagree by > 1e-8.
Mat gramian(const OUModel& model, double t, const GramianOptions& opts = {});

/// Memoizing t -> Q_t.
class GramianCurve {
 public:
  explicit GramianCurve(OUModel model, GramianOptions opts = {})
      : model_(std::move(model)), opts_(opts) {}

  Mat at(double t) const;
  const OUModel& model() const { return model_; }

 private:
  OUModel model_;
  GramianOptions opts_;
  mutable std::mutex mu_;
  mutable std::map<double, Mat> cache_;
};

/// T_ou(t) f(x) = E f(S(t)x + Z), Z ~ N(0, Q_t).
Estimate ou_expect(const OUModel& model, double t, const ScalarField& f,
                   const Vec& x, const ExpectMethod& method);

/// ⟨y, D T_ou(t) f(x)⟩ = E[f(S(t)x + Z) φ_{S(t)y}(Z)].
/// Throws NotInCameronMartin when S(t)y leaves the range of Q_t.
Estimate ou_gradient(const OUModel& model, double t, const ScalarField& f,
                     const Vec& x, const Vec& y, const ExpectMethod& method);

/// φ(t) = ‖S(t)‖_{L(E, H_{Q_t})} with Euclidean E: the largest singular value
/// of Q_t^{-1/2} S(t) on the retained eigenspace. Throws NotStrongFeller with
/// the offending column of S(t).
double sf_norm(const OUModel& model, double t, double tol = kRankTol);

/// ‖Q_t^{-1/2}‖ = 1/sqrt(smallest eigenvalue); throws NotStrongFeller when
/// Q_t is numerically singular.
double q_inv_sqrt_norm(const OUModel& model, double t, double tol = kRankTol);

/// Smallest j with rank[G, AG, ..., A^j G] = m. Throws NotControllable.
int kalman_index(const OUModel& model, double tol = kRankTol);

struct ScalingFit {
  int kalman_index = 0;
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::vector<double> times;
  std::vector<double> norms;  // ‖Q_t^{-1/2}‖
};

/// Least-squares slope of log ‖Q_t^{-1/2}‖ against log t; ≈ −(k + 1/2).
ScalingFit sf_scaling_fit(const OUModel& model, std::span<const double> t_grid);

std::vector<double> log_spaced(double lo, double hi, int n);

bool is_stable(const OUModel& model);

/// Q_∞ solving AQ + QAᵀ + GGᵀ = 0. Throws Unstable.
Mat stationary_covariance(const OUModel& model);

}  // namespace feller
