#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "feller/perturbation.hpp"
#include "feller/rng.hpp"

namespace feller {

struct MCConfig {
  double dt = 1e-3;
  std::size_t n_paths = 100000;
  std::uint64_t seed = 0;

  /// Throws InvalidArgument unless dt > 0 and n_paths >= 1000.
  void validate() const;
};

struct MCEstimate {
  double mean = 0.0;
  double std_error = 0.0;  // sample std / sqrt(n)
  std::size_t n_paths = 0;
};

/// Exponential Euler for dX = (AX + F(X))dt + G dW:
/// x' = S(dt)x + M(dt)F(x) + Z, Z ~ N(0, Q_dt). Exact in law when F ≡ 0.
class ExpEuler {
 public:
  ExpEuler(const OUModel& model, double dt);

  double dt() const { return dt_; }
  /// Advances x in place.
  void step(const DriftField& drift, Vec& x, Rng& rng) const;

 private:
  double dt_;
  Mat s_;
  Mat m_;
  Mat noise_;  // L with L Lᵀ = Q_dt
};

Vec euler_step(const OUModel& model, const DriftField& drift, const Vec& x, double dt, Rng& rng);

/// E f_k(X_t^x) for every f_k over the same paths; path p uses stream p.
std::vector<MCEstimate> mc_transition(const OUModel& model, const DriftField& drift,
                                      const Vec& x, double t,
                                      const std::vector<ScalarField>& fs, const MCConfig& cfg);

MCEstimate mc_transition(const OUModel& model, const DriftField& drift, const Vec& x, double t,
                         const ScalarField& f, const MCConfig& cfg);

struct ZRow {
  Vec point;
  std::string f_label;
  double mc_mean = 0.0;
  double mc_std_error = 0.0;
  double grid_value = 0.0;
  double budget = 0.0;    // |P_h f − P_{2h} f| at the point
  double z = 0.0;         // (mc − grid)/stderr
  double z_budget = 0.0;  // max(|mc − grid| − budget, 0)/stderr
};

/// Compares mc_transition with P(t)f at each point. The budget comes from a
/// second solve on a grid with half the counts and half the Volterra nodes.
std::vector<ZRow> mc_vs_semigroup(const PerturbedSemigroup& ps, const std::vector<Vec>& points,
                                  double t,
                                  const std::vector<std::pair<std::string, ScalarField>>& fs,
                                  const MCConfig& cfg, const SolveOptions& opts = {});

struct InvariantEstimate {
  Vec mean;
  Vec mean_err;  // batch-means standard errors
  Mat cov;
  Mat cov_err;
  std::size_t samples = 0;
  int batches = 0;
  GridPtr grid;                         // histogram support, may be null
  Vec histogram;                        // cell probabilities, pooled
  std::vector<Vec> batch_histograms;    // per batch
  double outside = 0.0;                 // pooled mass outside the grid
};

/// Long-run time average of one path after burn_in, sampled every step, with
/// 20 batch means. Throws Unstable unless every eigenvalue of A has negative
/// real part.
InvariantEstimate invariant_estimate(const OUModel& model, const DriftField& drift,
                                     const MCConfig& cfg, double burn_in, double horizon,
                                     GridPtr grid = nullptr, int batches = 20);

struct InvarianceCheck {
  double lhs = 0.0;  // ∫ P(t)f dμ̂
  double rhs = 0.0;  // ∫ f dμ̂
  double diff = 0.0;
  double batch_err = 0.0;  // batch-means error of the difference
};

/// Invariance identity on the histogram of an InvariantEstimate over ps' grid.
InvarianceCheck invariance_identity(const PerturbedSemigroup& ps, const InvariantEstimate& est,
                                    double t, const ScalarField& f);

struct MixingRow {
  double t = 0.0;
  double gap = 0.0;
};

/// |P(t)f(x1) − P(t)f(x2)| by multilinear interpolation.
std::vector<MixingRow> mixing_check(const PerturbedSemigroup& ps, const ScalarField& f,
                                    const Vec& x1, const Vec& x2,
                                    const std::vector<double>& t_grid);

}  // namespace feller
