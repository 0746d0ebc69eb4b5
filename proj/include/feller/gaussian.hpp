#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "feller/rng.hpp"
#include "feller/types.hpp"

namespace feller {

/// Default relative cutoff for the numerical rank of a covariance.
inline constexpr double kRankTol = 1e-10;

/// Residual threshold (relative to ‖h‖) beyond which a vector is declared
/// outside the numerical Cameron–Martin space.
inline constexpr double kRangeTol = 1e-8;

struct GaussianMeasure {
  Vec mean;
  Mat cov;
};

/// Spectral realization of the Cameron–Martin space of a covariance Q:
/// Q = U diag(s) Uᵀ with s sorted descending. Only eigenpairs with
/// s_i > tol · s_max are retained.
class CameronMartin {
 public:
  /// Throws NotSymmetric / NotPSD.
  CameronMartin(const Mat& cov, double tol = kRankTol);

  int dim() const { return static_cast<int>(eigvals_.size()); }
  int rank() const { return rank_; }
  double tol() const { return tol_; }
  const Vec& eigvals() const { return eigvals_; }
  const Mat& eigvecs() const { return eigvecs_; }
  const Mat& cov() const { return cov_; }

  Mat reconstruct() const;

  /// U_r diag(sqrt(s_r)) over the retained eigenpairs; Z = L ξ has covariance Q.
  Mat sqrt_factor() const;

  /// Component of h outside the retained eigenspace (Euclidean norm).
  double range_residual(const Vec& h) const;

  /// ‖Q^{-1/2} h‖. Throws NotInCameronMartin.
  double norm(const Vec& h) const;

  /// Vector v with φ_h(z) = ⟨v, z⟩, i.e. v = Q^+ h. Throws NotInCameronMartin.
  Vec pw_vector(const Vec& h) const;

  /// Paley–Wiener functional φ_h evaluated at z.
  double paley_wiener(const Vec& h, const Vec& z) const;

 private:
  void require_in_range(const Vec& h) const;

  Mat cov_;
  Vec eigvals_;
  Mat eigvecs_;
  int rank_ = 0;
  double tol_ = kRankTol;
};

CameronMartin psd_factor(const Mat& q, double tol = kRankTol);
double cm_norm(const CameronMartin& cm, const Vec& h);
double paley_wiener(const CameronMartin& cm, const Vec& h, const Vec& z);

/// n samples mean + Q^{1/2} ξ.
std::vector<Vec> gauss_sample(const GaussianMeasure& gm, Rng& rng, std::size_t n);

/// Value with a Monte Carlo standard error (zero for deterministic rules).
struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
};

struct Hermite {
  int order = 20;
};
struct MonteCarlo {
  std::size_t n = 100000;
  std::uint64_t seed = 0;
};
using ExpectMethod = std::variant<Hermite, MonteCarlo>;

/// ∫ f dN(mean, cov). Hermite: tensor Gauss–Hermite in the principal axes
/// of the retained eigenspace (dimension ≤ 3, otherwise UnsupportedDim).
Estimate gauss_expect(const GaussianMeasure& gm, const ScalarField& f,
                      const ExpectMethod& method);

}  // namespace feller
