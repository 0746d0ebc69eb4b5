#include "feller/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "feller/errors.hpp"
#include "feller/quadrature.hpp"

namespace feller {

// Symmetry is checked against a fixed relative bound; `tol` governs rank and
// the PSD rejection threshold.
CameronMartin::CameronMartin(const Mat& cov, double tol) : tol_(tol) {
  if (cov.rows() != cov.cols() || cov.rows() < 1) {
    throw InvalidArgument("covariance must be square and non-empty");
  }
  if (!cov.allFinite()) throw InvalidArgument("covariance has non-finite entries");
  const double scale = cov.cwiseAbs().maxCoeff();
  const double asym = (cov - cov.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * scale) {
    throw NotSymmetric("asymmetry " + std::to_string(asym) + " exceeds 1e-12 relative");
  }
  cov_ = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> eig(cov_);
  const Eigen::Index m = cov_.rows();
  // Eigen returns ascending order; reverse to descending.
  eigvals_ = eig.eigenvalues().reverse();
  eigvecs_ = eig.eigenvectors().rowwise().reverse();

  const double norm = std::max(eigvals_.cwiseAbs().maxCoeff(), 0.0);
  const double neg_floor = -std::max(tol, kRankTol) * norm;
  if (eigvals_[m - 1] < neg_floor) {
    throw NotPSD("eigenvalue " + std::to_string(eigvals_[m - 1]) +
                 " below -tol*||Q||");
  }
  for (Eigen::Index i = 0; i < m; ++i) eigvals_[i] = std::max(eigvals_[i], 0.0);
  const double smax = eigvals_[0];
  rank_ = 0;
  if (smax > 0.0) {
    for (Eigen::Index i = 0; i < m; ++i) {
      if (eigvals_[i] > tol * smax) ++rank_;
    }
  }
}

Mat CameronMartin::reconstruct() const {
  return eigvecs_ * eigvals_.asDiagonal() * eigvecs_.transpose();
}

Mat CameronMartin::sqrt_factor() const {
  const Mat u = eigvecs_.leftCols(rank_);
  return u * eigvals_.head(rank_).cwiseSqrt().asDiagonal();
}

double CameronMartin::range_residual(const Vec& h) const {
  const Mat u = eigvecs_.leftCols(rank_);
  return (h - u * (u.transpose() * h)).norm();
}

void CameronMartin::require_in_range(const Vec& h) const {
  if (h.size() != dim()) throw InvalidArgument("dimension mismatch");
  const double res = range_residual(h);
  if (res > kRangeTol * h.norm()) {
    throw NotInCameronMartin("residual " + std::to_string(res) +
                             " outside the retained eigenspace");
  }
}

double CameronMartin::norm(const Vec& h) const {
  require_in_range(h);
  double acc = 0.0;
  for (int i = 0; i < rank_; ++i) {
    const double c = eigvecs_.col(i).dot(h);
    acc += c * c / eigvals_[i];
  }
  return std::sqrt(acc);
}

Vec CameronMartin::pw_vector(const Vec& h) const {
  require_in_range(h);
  Vec v = Vec::Zero(dim());
  for (int i = 0; i < rank_; ++i) {
    v += (eigvecs_.col(i).dot(h) / eigvals_[i]) * eigvecs_.col(i);
  }
  return v;
}

double CameronMartin::paley_wiener(const Vec& h, const Vec& z) const {
  require_in_range(h);
  double acc = 0.0;
  for (int i = 0; i < rank_; ++i) {
    acc += eigvecs_.col(i).dot(h) * eigvecs_.col(i).dot(z) / eigvals_[i];
  }
  return acc;
}

CameronMartin psd_factor(const Mat& q, double tol) { return CameronMartin(q, tol); }

double cm_norm(const CameronMartin& cm, const Vec& h) { return cm.norm(h); }

double paley_wiener(const CameronMartin& cm, const Vec& h, const Vec& z) {
  return cm.paley_wiener(h, z);
}

std::vector<Vec> gauss_sample(const GaussianMeasure& gm, Rng& rng, std::size_t n) {
  const CameronMartin cm(gm.cov);
  const Mat l = cm.sqrt_factor();
  std::vector<Vec> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    if (cm.rank() == 0) {
      out.push_back(gm.mean);
    } else {
      out.push_back(gm.mean + l * standard_normal(rng, cm.rank()));
    }
  }
  return out;
}

namespace {

Estimate expect_hermite(const GaussianMeasure& gm, const ScalarField& f, int order) {
  const CameronMartin cm(gm.cov);
  const int r = cm.rank();
  if (gm.mean.size() > 3) {
    throw UnsupportedDim("hermite quadrature supports dimension <= 3");
  }
  if (r == 0) return {f(gm.mean), 0.0, 1};
  const Rule gh = gauss_hermite(order);
  const Mat l = cm.sqrt_factor();
  std::vector<int> idx(r, 0);
  Vec xi(r);
  double acc = 0.0;
  std::size_t count = 0;
  while (true) {
    double w = 1.0;
    for (int d = 0; d < r; ++d) {
      xi[d] = gh.nodes[idx[d]];
      w *= gh.weights[idx[d]];
    }
    acc += w * f(gm.mean + l * xi);
    ++count;
    int d = 0;
    while (d < r && ++idx[d] == order) idx[d++] = 0;
    if (d == r) break;
  }
  return {acc, 0.0, count};
}

Estimate expect_mc(const GaussianMeasure& gm, const ScalarField& f, const MonteCarlo& mc) {
  if (mc.n < 2) throw InvalidArgument("monte carlo needs n >= 2");
  Rng rng = make_stream(mc.seed, 0);
  const auto samples = gauss_sample(gm, rng, mc.n);
  // Welford; exact zero variance for constant integrands.
  double mean = 0.0, m2 = 0.0;
  std::size_t k = 0;
  for (const auto& z : samples) {
    const double v = f(z);
    ++k;
    const double delta = v - mean;
    mean += delta / static_cast<double>(k);
    m2 += delta * (v - mean);
  }
  const double var = m2 / static_cast<double>(k - 1);
  return {mean, std::sqrt(var / static_cast<double>(k)), k};
}

}  // namespace

Estimate gauss_expect(const GaussianMeasure& gm, const ScalarField& f,
                      const ExpectMethod& method) {
  if (const auto* h = std::get_if<Hermite>(&method)) {
    if (h->order < 1) throw InvalidArgument("hermite order must be >= 1");
    return expect_hermite(gm, f, h->order);
  }
  return expect_mc(gm, f, std::get<MonteCarlo>(method));
}

}  // namespace feller
